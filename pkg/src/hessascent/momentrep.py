"""Matrix representations of homogeneous polynomials and Gaussian moments.

A representation with row arity a and column arity b over R^n is a dense
n^a x n^b matrix whose row index is the flattened tuple (i_1..i_a) and
column index (j_1..j_b), both in C order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .hermite import DegreeCapError, gaussian_moment, perfect_matchings

__all__ = [
    "MatrixRep",
    "canonical_rep",
    "mode_symmetrize",
    "gaussian_moment_rep",
    "gaussian_moment_matrix",
    "nuclear_norm",
    "op_norm",
    "pairing",
    "polynomial_expectation",
    "HolderBound",
    "holder_moment_bound",
    "nuclear_bound",
    "strong_convexity_check",
    "strong_convexity_slack",
    "random_form",
]

MAX_ENTRIES = 10_000_000
MAX_MODES = 8


@dataclass(frozen=True)
class MatrixRep:
    data: np.ndarray
    row_arity: int
    col_arity: int
    n: int
    mode_symmetric: bool = False
    fully_symmetric: bool = False

    def __post_init__(self):
        if self.data.shape != (self.n ** self.row_arity, self.n ** self.col_arity):
            raise ValueError("data shape does not match arities")

    def tensor(self) -> np.ndarray:
        return self.data.reshape((self.n,) * (self.row_arity + self.col_arity))

    def entry(self, rows: tuple, cols: tuple) -> float:
        return float(self.tensor()[tuple(rows) + tuple(cols)])


def _budget(n, modes):
    if modes > MAX_MODES:
        raise DegreeCapError(f"{modes} modes exceed {MAX_MODES}")
    if n ** modes > MAX_ENTRIES:
        raise MemoryError(f"n^{modes} = {n ** modes} entries exceed {MAX_ENTRIES}")


def _to_labels(key, n):
    key = tuple(int(x) for x in key)
    if len(key) != n:
        raise ValueError(f"exponent tuple {key} does not have length {n}")
    return tuple(i for i, a in enumerate(key) for _ in range(a))


def canonical_rep(poly: dict, d: int, n: int) -> MatrixRep:
    """Square-most mode-symmetric representation of a degree-d form.

    ``poly`` maps exponent tuples (length n) to coefficients. Each
    coefficient is split evenly over the d!/alpha! cells whose index
    multiset equals alpha.
    """
    _budget(n, d)
    a, b = d // 2, d - d // 2
    T = np.zeros((n,) * d)
    for key, c in poly.items():
        lab = _to_labels(key, n)
        if len(lab) != d:
            raise ValueError(f"monomial {key} is not of degree {d}")
        cells = set(itertools.permutations(lab))
        share = float(c) / len(cells)
        for cell in cells:
            T[cell] += share
    return MatrixRep(T.reshape(n ** a, n ** b), a, b, n, mode_symmetric=True, fully_symmetric=True)


def mode_symmetrize(rep: MatrixRep) -> MatrixRep:
    """Average over all permutations of the a+b tensor modes."""
    m = rep.row_arity + rep.col_arity
    if m > MAX_MODES:
        raise DegreeCapError(f"{m} modes exceed {MAX_MODES}")
    T = rep.tensor()
    acc = np.zeros_like(T)
    perms = list(itertools.permutations(range(m)))
    for p in perms:
        acc += np.transpose(T, p)
    acc /= len(perms)
    return replace(rep, data=acc.reshape(rep.data.shape), mode_symmetric=True, fully_symmetric=True)


def _dfact(m):
    return math.prod(range(m, 0, -2)) if m > 0 else 1


def gaussian_moment_rep(Sigma, eta: int) -> MatrixRep:
    """(eta-1)!! (Phi Phi^T)^{(x) floor(eta/4)} (x) Sigma^{(x) (eta/2 - 2 floor(eta/4))}.

    Phi is the n^2 vector reshaping of Sigma. Its mode symmetrization is the
    degree-eta moment matrix of N(0, Sigma).
    """
    if eta % 2 or eta < 2 or eta > 8:
        raise DegreeCapError("eta must be even and in [2, 8]")
    S = np.asarray(Sigma, dtype=float)
    n = S.shape[0]
    _budget(n, eta)
    Phi = S.reshape(-1, 1)
    P = Phi @ Phi.T
    out = np.ones((1, 1))
    for _ in range(eta // 4):
        out = np.kron(out, P)
    if eta // 2 - 2 * (eta // 4):
        out = np.kron(out, S)
    return MatrixRep(_dfact(eta - 1) * out, eta // 2, eta // 2, n)


def gaussian_moment_matrix(Sigma, eta: int) -> MatrixRep:
    """Exact E[x^{(x) eta/2} (x^{(x) eta/2})^T] for x ~ N(0, Sigma) by Isserlis."""
    if eta % 2:
        raise ValueError("eta must be even")
    S = np.asarray(Sigma, dtype=float)
    n = S.shape[0]
    _budget(n, eta)
    grids = np.indices((n,) * eta).reshape(eta, -1)
    total = np.zeros(grids.shape[1])
    for m in perfect_matchings(tuple(range(eta))):
        term = np.ones(grids.shape[1])
        for p, q in m:
            term *= S[grids[p], grids[q]]
        total += term
    half = eta // 2
    return MatrixRep(total.reshape(n ** half, n ** half), half, half, n,
                     mode_symmetric=True, fully_symmetric=True)


def nuclear_norm(rep) -> float:
    M = rep.data if isinstance(rep, MatrixRep) else np.asarray(rep, dtype=float)
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def op_norm(rep) -> float:
    M = rep.data if isinstance(rep, MatrixRep) else np.asarray(rep, dtype=float)
    return float(np.linalg.svd(M, compute_uv=False)[0]) if M.size else 0.0


def pairing(A: MatrixRep, B: MatrixRep) -> float:
    """Hilbert-Schmidt inner product of two same-shape representations."""
    if A.data.shape != B.data.shape:
        raise ValueError("shape mismatch")
    return float(np.sum(A.data * B.data))


def polynomial_expectation(poly: dict, Sigma) -> float:
    """E p(x) for x ~ N(0, Sigma), exactly by Isserlis on each monomial."""
    S = np.asarray(Sigma, dtype=float)
    return float(sum(c * gaussian_moment(key, S) for key, c in poly.items()))


@dataclass(frozen=True)
class HolderBound:
    lhs: float
    op: float
    nuclear: float

    @property
    def rhs(self) -> float:
        return self.op * self.nuclear

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-10


def holder_moment_bound(poly: dict, Sigma, eta: int, strict: bool = False) -> HolderBound:
    """E p <= ||mat(p)||_op * ||V||_1 with V the low-nuclear-norm moment representation."""
    S = np.asarray(Sigma, dtype=float)
    n = S.shape[0]
    if eta % 2 or eta > 6:
        raise DegreeCapError("eta must be even and <= 6")
    if n > 10:
        raise DegreeCapError("n must be <= 10")
    M = canonical_rep(poly, eta, n)
    V = gaussian_moment_rep(S, eta)
    rec = HolderBound(polynomial_expectation(poly, S), op_norm(M), nuclear_norm(V))
    if strict and not rec.holds:
        raise AssertionError(f"Holder bound violated: {rec.lhs} > {rec.rhs}")
    return rec


def nuclear_bound(etas, nus, d: int, n: int) -> float:
    """2^{d k^2/2} eta^{eta/2 + 2k} nu^{1/2} n^{floor(eta/2 + 1)/2} with nu = prod nu_i^{eta_i}."""
    k = len(etas)
    eta = sum(etas)
    nu = math.prod(v ** e for v, e in zip(nus, etas))
    return 2.0 ** (d * k * k / 2.0) * eta ** (eta / 2.0 + 2 * k) * math.sqrt(nu) * n ** (math.floor(eta / 2 + 1) / 2.0)


def random_form(n: int, d: int, rng) -> dict:
    """Degree-d form with independent unit-variance coefficients on each monomial."""
    out = {}
    for combo in itertools.combinations_with_replacement(range(n), d):
        e = [0] * n
        for i in combo:
            e[i] += 1
        out[tuple(e)] = float(rng.standard_normal())
    return out


def strong_convexity_slack(k: int, delta_n: float, grid: int = 50) -> float:
    """Minimum over grid pairs of y^q - x^q - q (y-x) x^{q-1} - C (y-x)^2.

    q = 2^k/(2^k - 1), p = 2^k, C = (q-1)/((p-1) delta_n^{q-2}), x, y in [0, 1/delta_n].
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    p = 2 ** k
    q = p / (p - 1)
    C = (q - 1.0) / ((p - 1.0) * delta_n ** (q - 2.0))
    t = np.linspace(0.0, 1.0 / delta_n, grid)
    x, y = np.meshgrid(t, t, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        xq1 = np.where(x > 0, x ** (q - 1.0), 0.0)
    lhs = y ** q - x ** q
    rhs = q * (y - x) * xq1 + C * (y - x) ** 2
    return float(np.min(lhs - rhs))


def strong_convexity_check(k: int, delta_n: float, grid: int = 50, tol: float = 1e-12) -> bool:
    scale = (1.0 / delta_n) ** (2 ** k / (2 ** k - 1))
    return strong_convexity_slack(k, delta_n, grid) >= -tol * scale
