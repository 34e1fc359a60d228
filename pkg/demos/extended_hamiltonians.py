"""Raw Hessian ascent can be misled by anisotropy that a low-degree extension removes.

Degree scaling: the degree-2 part is switched off near the origin by
||sigma||^100, so raw ascent only sees the quartic part early on. Direct sum:
the quadratic block dominates the raw Hessian at small radius and traps the
raw ascent in its subspace. Takes a few minutes.
"""
import numpy as np

from hessascent.ensembles import build_ensemble, compare_ascent

seeds = list(range(5))
rec = compare_ascent(build_ensemble("degree_scaling", {"alpha2": 3.0}, 120, 0), 20, 0.05, seeds)
print("degree_scaling, energies on the raw Hamiltonian")
for s, a, b in zip(rec.seeds, rec.raw_energies, rec.extended_energies):
    print(f"  seed {s}: raw {a:.3f}  extended {b:.3f}")
print(f"  mean difference {rec.mean_difference:.3f}, 95% CI [{rec.ci_low:.3f}, {rec.ci_high:.3f}]")

rec = compare_ascent(build_ensemble("direct_sum", None, 120, 0), 20, 0.05, seeds)
raw = np.mean(rec.raw_occupancy, axis=0)
ext = np.mean(rec.extended_occupancy, axis=0)
print("direct_sum, fraction of ||sigma_i||^2 inside the quadratic block")
for i in (0, 4, 9, 19):
    print(f"  step {i + 1:2d}: raw {raw[i]:.2f}  extended {ext[i]:.2f}")
