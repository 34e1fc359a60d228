"""Eigendecompositions, Schatten norms and the Hessian trace-moment check."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._parallel import ordered_map, child_seeds
from .hamiltonian import sample_instance
from .mixture import MixtureSpec, catalan, nu

__all__ = [
    "ConvergenceError",
    "EigenDecomposition",
    "WignerReport",
    "eigh",
    "schatten",
    "sphere_point",
    "wigner_check",
]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    def top(self, d: int) -> np.ndarray:
        return self.eigenvectors[:, :d]

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def _symmetrize(M, tol=1e-10):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def eigh(M) -> EigenDecomposition:
    """Full symmetric eigendecomposition, eigenvalues in descending order."""
    S = _symmetrize(M)
    try:
        w, Q = scipy.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    return EigenDecomposition(w[::-1].copy(), Q[:, ::-1].copy())


def schatten(M, p: int) -> float:
    """Tr[M^p] for even p."""
    if int(p) != p or p <= 0 or p % 2:
        raise ValueError("p must be a positive even integer")
    w = scipy.linalg.eigvalsh(_symmetrize(M))
    return float(np.sum(w ** int(p)))


def sphere_point(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(n)
    return radius * x / np.linalg.norm(x)


@dataclass
class WignerReport:
    q: float
    n: int
    orders: list
    means: list
    std_errors: list
    targets: list
    edge_mean: float
    edge_target: float
    replicas: int
    per_replica: list = field(default_factory=list, repr=False)

    @property
    def ratios(self) -> list:
        return [m / t if t else float("nan") for m, t in zip(self.means, self.targets)]

    def moment(self, order: int) -> float:
        return self.means[self.orders.index(order)]

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "replicas": self.replicas,
            "orders": self.orders,
            "means": self.means,
            "std_errors": self.std_errors,
            "targets": self.targets,
            "ratios": self.ratios,
            "edge_mean": self.edge_mean,
            "edge_target": self.edge_target,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _wigner_replica(args):
    mixture, n, q, p_max, seed, storage = args
    rng = np.random.default_rng(seed)
    inst_seed = int(rng.integers(0, 2 ** 63))
    inst = sample_instance(n, mixture, inst_seed, storage)
    sigma = sphere_point(n, math.sqrt(q), rng)
    w = scipy.linalg.eigvalsh(inst.hessian(sigma) / n)
    return [float(np.mean(w ** j)) for j in range(1, p_max + 1)] + [float(w.max())]


def wigner_check(mixture: MixtureSpec, n: int, q: float, p_max: int = 4, replicas: int = 20,
                 seed: int = 0, storage: str = "lazy", workers: int = 1) -> WignerReport:
    """Trace moments (1/n) Tr[(Hess H / n)^j], j <= p_max, against semicircle targets.

    Every replica draws a fresh instance and a fresh point uniform on the
    sphere of radius sqrt(q). Even orders 2j are compared with
    C_j nu''(q)^j, odd orders with 0.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    if not (0 < q <= 1):
        raise ValueError("radius q must lie in (0, 1]")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    seeds = child_seeds(seed, replicas)
    rows = np.array(ordered_map(_wigner_replica,
                                [(mixture, n, q, p_max, s, storage) for s in seeds], workers))
    v2 = nu(mixture, q, 2)
    orders = list(range(1, p_max + 1))
    targets = [float(catalan(j // 2) * v2 ** (j // 2)) if j % 2 == 0 else 0.0 for j in orders]
    means = rows[:, :p_max].mean(axis=0)
    ses = rows[:, :p_max].std(axis=0, ddof=1) / math.sqrt(replicas)
    return WignerReport(q=q, n=n, orders=orders, means=[float(x) for x in means],
                        std_errors=[float(x) for x in ses], targets=targets,
                        edge_mean=float(rows[:, -1].mean()), edge_target=2.0 * math.sqrt(v2),
                        replicas=replicas, per_replica=rows.tolist())
