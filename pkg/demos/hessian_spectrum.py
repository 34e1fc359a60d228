"""The Hessian of a mixed spin glass on a sphere of radius sqrt(q) looks like a scaled GOE.

Compares empirical trace moments of Hess H / n with the Catalan targets
C_j nu''(q)^j for a few radii.
"""
from hessascent.mixture import MixtureSpec, nu
from hessascent.spectral import wigner_check

spec = MixtureSpec.from_degrees({2: 1.0, 4: 1.0})
for q in (0.1, 0.5, 1.0):
    rep = wigner_check(spec, 200, q, p_max=4, replicas=10, seed=7)
    print(f"q={q:.1f} nu''={nu(spec, q, 2):.2f}")
    for order, mean, se, target in zip(rep.orders, rep.means, rep.std_errors, rep.targets):
        print(f"  order {order}: {mean:10.4f} +- {se:.4f}   target {target:10.4f}")
    print(f"  top eigenvalue {rep.edge_mean:.3f} vs edge {rep.edge_target:.3f}")
