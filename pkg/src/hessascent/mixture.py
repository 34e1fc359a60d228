"""Scalar analytics of the mixture polynomial nu(q) = sum_k gamma_k^2 q^k.

Also holds the Catalan / Dyck-path / semicircle utilities and the
Lambert-W based Holder exponent, since all of them are cheap closed forms
consumed by the spectral and bernstein modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy import integrate, special

__all__ = [
    "DomainError",
    "DegenerateError",
    "BranchError",
    "MixtureSpec",
    "ThresholdResult",
    "EnergyTargets",
    "nu",
    "frsb_check",
    "alg_threshold",
    "energy_targets",
    "catalan",
    "dyck_paths",
    "instantiation_count",
    "semicircle",
    "semicircle_cdf",
    "semicircle_partial_first_moment",
    "semicircle_even_moment",
    "lambert_w0",
    "holder_exponent",
    "holder_exponent_raw",
    "holder_exponent_series",
]

MAX_DEGREE = 8
CATALAN_MAX = 5000


class DomainError(ValueError):
    """Argument outside the mathematical domain of the function."""


class DegenerateError(ValueError):
    """Input makes the requested quantity undefined."""


class BranchError(ValueError):
    """Lambert-W argument below -1/e."""


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture weights gamma_k for degrees k = 2..d_H.

    ``gammas[0]`` is gamma_2. Trailing zeros are stripped so that ``d_H`` is
    the largest degree carrying weight.
    """

    gammas: tuple

    def __post_init__(self):
        g = [float(x) for x in self.gammas]
        if not g:
            raise ValueError("mixture needs at least one degree")
        if any((not math.isfinite(x)) or x < 0 for x in g):
            raise ValueError("mixture weights must be finite and non-negative")
        while g and g[-1] == 0.0:
            g.pop()
        if not g:
            raise ValueError("mixture needs at least one positive weight")
        object.__setattr__(self, "gammas", tuple(g))

    @classmethod
    def from_degrees(cls, weights: Mapping[int, float]) -> "MixtureSpec":
        """Build from a ``{degree: gamma}`` mapping, e.g. ``{2: 1.0, 4: 1.0}``."""
        if not weights:
            raise ValueError("mixture needs at least one degree")
        for k in weights:
            if int(k) != k or k < 2:
                raise ValueError(f"degree {k} not supported; degrees start at 2")
        top = max(int(k) for k in weights)
        g = [0.0] * (top - 1)
        for k, v in weights.items():
            g[int(k) - 2] = float(v)
        return cls(tuple(g))

    @property
    def d_h(self) -> int:
        return len(self.gammas) + 1

    def degrees(self):
        """Degrees with nonzero weight, ascending."""
        return [k for k, g in self.items()]

    def items(self):
        return [(k + 2, g) for k, g in enumerate(self.gammas) if g > 0]

    def gamma(self, k: int) -> float:
        if 2 <= k <= self.d_h:
            return self.gammas[k - 2]
        return 0.0

    def poly_coeffs(self) -> np.ndarray:
        """Coefficients of nu in increasing powers of q."""
        c = np.zeros(self.d_h + 1)
        for k, g in self.items():
            c[k] = g * g
        return c

    def to_dict(self):
        return {str(k): g for k, g in self.items()}


def _nu_poly(spec: MixtureSpec, order: int) -> np.polynomial.Polynomial:
    p = np.polynomial.Polynomial(spec.poly_coeffs())
    return p.deriv(order) if order else p


def nu(spec: MixtureSpec, q, order: int = 0):
    """nu(q), nu'(q) or nu''(q).

    Parameters
    ----------
    spec : MixtureSpec
    q : float or array in [0, 1]
    order : {0, 1, 2}
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    qa = np.asarray(q, dtype=float)
    if np.any(qa < 0) or np.any(qa > 1) or np.any(np.isnan(qa)):
        raise DomainError("q must lie in [0, 1]")
    out = _nu_poly(spec, order)(qa)
    return float(out) if np.ndim(out) == 0 else out


def _nu_unchecked(spec, q, order):
    return _nu_poly(spec, order)(q)


def frsb_check(spec: MixtureSpec, grid_size: int = 1024, tol: float = 1e-9) -> bool:
    """Discrete concavity test of q -> nu''(q)^(-1/2) on (0, 1]."""
    if grid_size < 3:
        raise ValueError("grid_size must be >= 3")
    q = np.arange(1, grid_size + 1) / grid_size
    v2 = _nu_unchecked(spec, q, 2)
    if np.any(v2 <= 0):
        raise DegenerateError("nu'' vanishes on the grid")
    f = v2 ** -0.5
    d2 = f[:-2] - 2.0 * f[1:-1] + f[2:]
    return bool(np.all(d2 <= tol * np.max(np.abs(f))))


@dataclass(frozen=True)
class ThresholdResult:
    q1: float
    alg_value: float
    frsb: bool
    degenerate: bool = False
    quad_error: float = 0.0

    def to_dict(self):
        return {
            "q1": self.q1,
            "alg_value": self.alg_value,
            "frsb": self.frsb,
            "degenerate": self.degenerate,
            "quad_error": self.quad_error,
        }


def _q1(spec: MixtureSpec) -> tuple[float, bool]:
    """Root of g(q) = nu'(q) - q nu''(q) on [0, 1), with q1 = 0 when g <= 0 or g == 0."""
    g = _nu_poly(spec, 1) - np.polynomial.Polynomial([0.0, 1.0]) * _nu_poly(spec, 2)
    degenerate = bool(np.all(np.abs(g.coef) <= 1e-15 * max(1.0, np.abs(spec.poly_coeffs()).max())))
    if degenerate:
        return 0.0, True
    hi = 1.0 - 1e-9
    grid = np.linspace(0.0, hi, 4097)
    vals = g(grid)
    if np.all(vals <= 0):
        return 0.0, False
    # first sign change from positive to non-positive
    idx = np.nonzero((vals[:-1] > 0) & (vals[1:] <= 0))[0]
    if idx.size == 0:
        return 0.0, False
    lo, up = grid[idx[0]], grid[idx[0] + 1]
    for _ in range(200):
        mid = 0.5 * (lo + up)
        if g(mid) > 0:
            lo = mid
        else:
            up = mid
        if up - lo < 1e-15:
            break
    return 0.5 * (lo + up), False


def alg_threshold(spec: MixtureSpec, quad_tol: float = 1e-10) -> ThresholdResult:
    """Algorithmic threshold q1*sqrt(nu''(q1)) + int_{q1}^1 sqrt(nu''(q)) dq."""
    if quad_tol <= 0:
        raise ValueError("quad_tol must be positive")
    q1, degenerate = _q1(spec)
    p2 = _nu_poly(spec, 2)

    def integrand(q):
        return math.sqrt(max(p2(q), 0.0))

    val, err = integrate.quad(integrand, q1, 1.0, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    alg = q1 * math.sqrt(max(p2(q1), 0.0)) + val
    try:
        frsb = frsb_check(spec)
    except DegenerateError:
        frsb = False
    return ThresholdResult(q1=q1, alg_value=alg, frsb=frsb, degenerate=degenerate, quad_error=err)


@dataclass(frozen=True)
class EnergyTargets:
    per_step: np.ndarray
    cumulative: np.ndarray
    integral: float
    riemann_gap: float

    @property
    def overestimate(self) -> bool:
        return self.riemann_gap > 0


def energy_targets(spec: MixtureSpec, k: int) -> EnergyTargets:
    """Right-endpoint per-step targets sqrt(nu''(i/k))/k and their partial sums."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.arange(1, k + 1) / k
    per = np.sqrt(np.maximum(_nu_unchecked(spec, q, 2), 0.0)) / k
    cum = np.cumsum(per)
    p2 = _nu_poly(spec, 2)
    integral, _ = integrate.quad(lambda t: math.sqrt(max(p2(t), 0.0)), 0.0, 1.0, epsabs=1e-12, limit=200)
    return EnergyTargets(per_step=per, cumulative=cum, integral=integral, riemann_gap=float(cum[-1] - integral))


# --- Catalan / Dyck ---------------------------------------------------------


def catalan(q: int) -> int:
    if int(q) != q or q < 0:
        raise ValueError("q must be a non-negative integer")
    q = int(q)
    if q > CATALAN_MAX:
        raise OverflowError(f"catalan capped at q={CATALAN_MAX}")
    return math.comb(2 * q, q) // (q + 1)


def dyck_paths(q: int) -> list[tuple[int, ...]]:
    """All closed non-negative +-1 walks of length 2q, as height sequences."""
    if q < 1:
        raise ValueError("q must be >= 1")
    out = []

    def rec(path, h):
        steps_left = 2 * q - (len(path) - 1)
        if steps_left == 0:
            if h == 0:
                out.append(tuple(path))
            return
        if h + 1 <= steps_left - 1:
            path.append(h + 1)
            rec(path, h + 1)
            path.pop()
        if h > 0:
            path.append(h - 1)
            rec(path, h - 1)
            path.pop()

    rec([0], 0)
    return out


def instantiation_count(q: int, n: int) -> int:
    """Number of label assignments of a q-Dyck path on n vertices: n (n-1)^q."""
    if q < 1 or n < 2:
        raise ValueError("need q >= 1 and n >= 2")
    return n * (n - 1) ** q


# --- semicircle on [-1, 1] with density (2/pi) sqrt(1 - x^2) ----------------


def _check_unit(x):
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -1) or np.any(xa > 1) or np.any(np.isnan(xa)):
        raise DomainError("x must lie in [-1, 1]")
    return xa


def semicircle_cdf(x):
    xa = _check_unit(x)
    out = xa * np.sqrt(1.0 - xa * xa) / np.pi + np.arcsin(xa) / np.pi + 0.5
    return float(out) if out.ndim == 0 else out


def semicircle_partial_first_moment(x):
    """int_x^1 t dmu_sc(t) = (2/(3 pi)) (1 - x^2)^(3/2)."""
    xa = _check_unit(x)
    out = 2.0 / (3.0 * np.pi) * (1.0 - xa * xa) ** 1.5
    return float(out) if out.ndim == 0 else out


def semicircle_even_moment(q: int, exact: bool = False):
    """E x^(2q) = C_q / 4^q."""
    if int(q) != q or q < 0:
        raise ValueError("q must be a non-negative integer")
    fr = Fraction(catalan(int(q)), 4 ** int(q))
    return fr if exact else float(fr)


def semicircle(kind: str, x_or_q):
    """Dispatch on ``kind`` in {'cdf', 'partial_first_moment', 'even_moment'}."""
    if kind == "cdf":
        return semicircle_cdf(x_or_q)
    if kind == "partial_first_moment":
        return semicircle_partial_first_moment(x_or_q)
    if kind == "even_moment":
        return semicircle_even_moment(x_or_q)
    raise ValueError(f"unknown semicircle quantity {kind!r}")


# --- Lambert W and the Holder exponent --------------------------------------

_INV_E = math.exp(-1.0)


def lambert_w0(x: float) -> float:
    """Principal branch of Lambert W, polished with Halley steps."""
    x = float(x)
    if x < -_INV_E:
        # allow rounding right at the branch point
        if x < -_INV_E - 1e-15:
            raise BranchError(f"lambert_w0 argument {x} < -1/e")
        return -1.0
    if x == 0.0:
        return 0.0
    w = float(np.real(special.lambertw(x, 0)))
    for _ in range(8):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - step
        if abs(w_new - w) <= 1e-16 * max(1.0, abs(w)):
            w = w_new
            break
        w = w_new
    return w


_HOLDER_CONST = 4.0 / (3.0 * math.pi ** (1.0 / 3.0))


def holder_exponent_raw(eps: float, delta: float) -> float:
    """p(eps, delta) = -3 W(-(4/(3 pi^(1/3))) eps / delta^(2/3)) / (2 eps), unrounded."""
    if not (0 < eps < 1) or not (0 < delta < 1):
        raise DomainError("eps and delta must lie in (0, 1)")
    z = -_HOLDER_CONST * eps / delta ** (2.0 / 3.0)
    if z < -_INV_E:
        raise BranchError("eps too large for delta: Lambert argument below -1/e")
    return -3.0 * lambert_w0(z) / (2.0 * eps)


def holder_exponent_series(delta: float) -> float:
    """First-order small-eps value 2 / (pi^(1/3) delta^(2/3))."""
    return 2.0 / (math.pi ** (1.0 / 3.0) * delta ** (2.0 / 3.0))


def holder_exponent(eps: float, delta: float) -> int:
    """Holder exponent rounded up to an even integer >= 2."""
    p = holder_exponent_raw(eps, delta)
    m = max(2, math.ceil(p - 1e-12))
    return m + (m % 2)
