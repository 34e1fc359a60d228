"""Multivariate Hermite polynomials, Gaussian/sphere moments and cumulants.

A multi-index is an exponent tuple (alpha_1, ..., alpha_n). Several routines
work with its label list L(alpha): each coordinate i repeated alpha_i times.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "DegreeCapError",
    "IllConditionedError",
    "MultiIndex",
    "labels",
    "hermite",
    "hermite_inner",
    "perfect_matchings",
    "gaussian_moment",
    "set_partitions",
    "cumulant_from_moments",
    "moment_from_cumulants",
    "sphere_moment",
    "multi_indices",
    "HermiteFit",
    "wiener_hermite_fit",
]

INNER_CAP = 6
MOMENT_CAP = 12
PARTITION_CAP = 8


class DegreeCapError(ValueError):
    pass


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True)
class MultiIndex:
    exps: tuple

    def __post_init__(self):
        e = tuple(int(x) for x in self.exps)
        if any(x < 0 for x in e):
            raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "exps", e)

    @classmethod
    def from_labels(cls, labs: Iterable[int], n: int) -> "MultiIndex":
        e = [0] * n
        for i in labs:
            e[i] += 1
        return cls(tuple(e))

    @property
    def degree(self) -> int:
        return sum(self.exps)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(a) for a in self.exps)

    @property
    def double_factorial(self) -> int:
        return math.prod(_dfact(a) for a in self.exps)

    @property
    def sup(self) -> int:
        return max(self.exps, default=0)

    def labels(self) -> tuple:
        return tuple(i for i, a in enumerate(self.exps) for _ in range(a))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in itertools.zip_longest(self.exps, other.exps, fillvalue=0)))


def _dfact(m: int) -> int:
    return math.prod(range(m, 0, -2)) if m > 0 else 1


def labels(alpha) -> tuple:
    if isinstance(alpha, MultiIndex):
        return alpha.labels()
    return MultiIndex(tuple(alpha)).labels()


# --- Hermite polynomials -------------------------------------------------------


def hermite(alpha, x, C) -> float | np.ndarray:
    """He_alpha(x | C) by the three-term recurrence in the label list.

    ``x`` may be a vector (n,) or a batch (N, n).
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n = X.shape[1]
    if C.shape != (n, n):
        raise ValueError("covariance shape does not match x")
    L = labels(alpha)
    if len(L) and max(L) >= n:
        raise ValueError("multi-index longer than x")

    @lru_cache(maxsize=None)
    def he(lab: tuple) -> np.ndarray:
        if not lab:
            return np.ones(X.shape[0])
        last = lab[-1]
        head = lab[:-1]
        out = X[:, last] * he(head)
        for j in range(len(head)):
            c = C[head[j], last]
            if c != 0.0:
                out = out - c * he(head[:j] + head[j + 1:])
        return out

    val = he(L)
    return float(val[0]) if single else val


def hermite_inner(alpha, beta, C) -> float:
    """sum over permutations pi of prod_i C[L(alpha)_i, L(beta)_pi(i)]."""
    La, Lb = labels(alpha), labels(beta)
    if len(La) != len(Lb):
        return 0.0
    if len(La) > INNER_CAP:
        raise DegreeCapError(f"degree {len(La)} exceeds {INNER_CAP}")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    total = 0.0
    for perm in itertools.permutations(range(len(Lb))):
        total += math.prod(C[La[i], Lb[perm[i]]] for i in range(len(La)))
    return float(total)


# --- Gaussian moments ----------------------------------------------------------


def perfect_matchings(items: tuple):
    """Yield perfect matchings of ``items`` as lists of pairs."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for j in range(len(rest)):
        pair = (first, rest[j])
        for m in perfect_matchings(rest[:j] + rest[j + 1:]):
            yield [pair] + m


def _entry(C, i, j):
    return C[i][j]


def gaussian_moment(alpha, C):
    """E[x^alpha] for x ~ N(0, C) by Isserlis' matching sum.

    With ``C`` given as nested lists of ints or Fractions the result is exact.
    """
    L = labels(alpha)
    if len(L) > MOMENT_CAP:
        raise DegreeCapError(f"degree {len(L)} exceeds {MOMENT_CAP}")
    if len(L) % 2:
        return 0
    if isinstance(C, np.ndarray):
        C = np.atleast_2d(C)
        total = 0.0
        for m in perfect_matchings(L):
            total += math.prod(float(C[i, j]) for i, j in m)
        return total
    total = 0
    for m in perfect_matchings(L):
        total += math.prod(_entry(C, i, j) for i, j in m)
    return total


def sphere_moment(alpha, n: int) -> Fraction:
    """E[v^alpha] for v uniform on the unit sphere in R^n, exactly."""
    L = labels(alpha)
    if len(L) > MOMENT_CAP:
        raise DegreeCapError(f"degree {len(L)} exceeds {MOMENT_CAP}")
    if len(L) and max(L) >= n:
        raise ValueError("multi-index longer than n")
    if len(L) % 2:
        return Fraction(0)
    eye = [[int(i == j) for j in range(n)] for i in range(n)]
    num = gaussian_moment(alpha, eye)
    q = len(L) // 2
    den = math.prod(n + 2 * j for j in range(q))
    return Fraction(num, den)


# --- cumulants -----------------------------------------------------------------


def set_partitions(items: list):
    """Yield all set partitions of ``items`` as lists of blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for b in range(len(part)):
            yield part[:b] + [[first] + part[b]] + part[b + 1:]


def _check_len(idx):
    if len(idx) > PARTITION_CAP:
        raise DegreeCapError(f"tuple length {len(idx)} exceeds {PARTITION_CAP}")


def _sum(terms):
    # exact for rational oracles; compensated for floats (alternating sums cancel heavily)
    if all(isinstance(t, (int, Fraction)) for t in terms):
        return sum(terms, Fraction(0))
    return math.fsum(terms)


def cumulant_from_moments(moment: Callable[[tuple], float], idx: tuple) -> float:
    """Joint cumulant of X_{idx_1}, ..., X_{idx_m} from a moment oracle.

    ``moment(t)`` must return E[prod_{i in t} X_i] for a tuple of indices.
    """
    idx = tuple(idx)
    _check_len(idx)
    terms = []
    for part in set_partitions(list(range(len(idx)))):
        b = len(part)
        term = math.factorial(b - 1) * (-1) ** (b - 1)
        for block in part:
            term *= moment(tuple(idx[p] for p in block))
        terms.append(term)
    return _sum(terms)


def moment_from_cumulants(cumulant: Callable[[tuple], float], idx: tuple) -> float:
    idx = tuple(idx)
    _check_len(idx)
    terms = []
    for part in set_partitions(list(range(len(idx)))):
        term = 1
        for block in part:
            term *= cumulant(tuple(idx[p] for p in block))
        terms.append(term)
    return _sum(terms)


# --- Wiener-Hermite fit -------------------------------------------------------


def multi_indices(n: int, max_degree: int) -> list:
    """Exponent tuples with total degree <= max_degree, by degree then lexicographic."""
    out = []
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            out.append(MultiIndex.from_labels(combo, n).exps)
    return out


@dataclass
class HermiteFit:
    coefficients: dict
    bessel_residual: float  # empirical E f^2 minus projected energy
    condition: float
    basis: list

    def coefficient(self, alpha) -> float:
        return self.coefficients.get(tuple(alpha), 0.0)


def wiener_hermite_fit(X, y, max_degree: int, C, cond_cap: float = 1e10) -> HermiteFit:
    """Least-squares expansion of y in He_alpha(x | C), |alpha| <= max_degree.

    Solves the Gram normal equations against the empirical measure.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    N, n = X.shape
    basis = multi_indices(n, max_degree)
    if N < 10 * len(basis):
        raise ValueError(f"need at least {10 * len(basis)} samples for {len(basis)} basis functions")
    Phi = np.column_stack([hermite(a, X, C) for a in basis])
    G = Phi.T @ Phi / N
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > cond_cap:
        raise IllConditionedError(f"Gram condition number {cond:.3g} exceeds {cond_cap:.1g}")
    coef = np.linalg.solve(G, Phi.T @ y / N)
    fitted = Phi @ coef
    resid = float(np.mean(y * y) - np.mean(fitted * fitted))
    return HermiteFit({a: float(c) for a, c in zip(basis, coef)}, resid, cond, basis)
