"""Walk a mixed 2+4 spin glass uphill with randomized and deterministic Hessian ascent.

Prints the energy density after every few steps next to the cumulative
per-step targets and the algorithmic threshold. Takes about a minute.
"""
import numpy as np

from hessascent.ascent import deterministic_ascent, randomized_ascent
from hessascent.hamiltonian import sample_instance
from hessascent.mixture import MixtureSpec, alg_threshold

spec = MixtureSpec.from_degrees({2: 1.0, 4: 1.0})
n, k = 300, 30
alg = alg_threshold(spec).alg_value
print(f"n={n} k={k} ALG={alg:.4f}")

rnd = randomized_ascent(sample_instance(n, spec, 1, "lazy"), k, 0.05, seed=1)
det = deterministic_ascent(sample_instance(n, spec, 1, "lazy"), k, eps=0.1, seed=1)
target = np.concatenate([[0.0], np.cumsum(rnd.targets)])

print(f"{'step':>4} {'||s||^2':>8} {'random':>8} {'determ':>8} {'target':>8}")
for i in range(0, k + 1, 5):
    print(f"{i:4d} {rnd.sq_norms()[i]:8.3f} {rnd.energies[i]:8.4f} {det.energies[i]:8.4f} {target[i]:8.4f}")
print(f"final / ALG: randomized {rnd.final_energy / alg:.3f}, deterministic {det.final_energy / alg:.3f}")
print(f"orthogonality residual {rnd.orthogonality_residual():.1e}")
