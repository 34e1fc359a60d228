"""Bernstein approximations of a linear ramp, scalar and eigenwise on matrices.

Two ramp parameterizations are supported and never mixed:

* ``ramp_form(a, b, alpha, gamma, d)``: 0 below alpha-gamma, 1 above
  alpha+gamma, linear in between, on an arbitrary interval [a, b].
* ``phi_form(phi, d)``: on [-1, 1], 0 below 1-phi, slope 1/phi^2 up to
  1-phi+phi^2, then 1.

For the ramp the Bernstein sum has a closed form in binomial CDFs, which
keeps degrees in the billions cheap and exact up to rounding.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.stats import binom

from .mixture import semicircle_cdf

__all__ = [
    "SpectrumOverflowError",
    "BernsteinSpec",
    "ramp",
    "bernstein_basis",
    "bernstein_scalar",
    "matrix_bernstein",
    "ProjectorGap",
    "projector_gap",
    "ScMassCorrelation",
    "sc_mass_and_correlation",
]

WINDOW_SIGMAS = 15.0
MAX_WINDOW = 5_000_000


class SpectrumOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class BernsteinSpec:
    a: float
    b: float
    degree: int
    form: str  # "ramp" | "phi"
    alpha: float = float("nan")
    gamma: float = float("nan")
    phi: float = float("nan")

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")
        if self.form == "ramp":
            if not (self.gamma > 0 and self.alpha - self.gamma > self.a and self.alpha + self.gamma < self.b):
                raise ValueError("need a < alpha - gamma and alpha + gamma < b with gamma > 0")
        elif self.form == "phi":
            if not (0 < self.phi < 0.25):
                raise ValueError("phi must lie in (0, 1/4)")
            if (self.a, self.b) != (-1.0, 1.0):
                raise ValueError("phi form lives on [-1, 1]")
        else:
            raise ValueError(f"unknown ramp form {self.form!r}")

    @classmethod
    def ramp_form(cls, a, b, alpha, gamma, degree) -> "BernsteinSpec":
        return cls(float(a), float(b), int(degree), "ramp", alpha=float(alpha), gamma=float(gamma))

    @classmethod
    def phi_form(cls, phi, degree) -> "BernsteinSpec":
        return cls(-1.0, 1.0, int(degree), "phi", phi=float(phi))

    @staticmethod
    def lipschitz_degree(lipschitz: float, width: float, eps: float) -> int:
        """ceil(C (b-a)^3 / (2 eps^3)) for a C-Lipschitz target."""
        return int(math.ceil(lipschitz * width ** 3 / (2.0 * eps ** 3)))

    @property
    def breakpoints(self) -> tuple[float, float]:
        if self.form == "ramp":
            return self.alpha - self.gamma, self.alpha + self.gamma
        return 1.0 - self.phi, 1.0 - self.phi + self.phi ** 2

    @property
    def lipschitz(self) -> float:
        lo, hi = self.breakpoints
        return 1.0 / (hi - lo)

    def with_degree(self, degree: int) -> "BernsteinSpec":
        return BernsteinSpec(self.a, self.b, int(degree), self.form, self.alpha, self.gamma, self.phi)


def _check_interval(spec, x, slack=0.0):
    xa = np.asarray(x, dtype=float)
    tol = 1e-12 * (spec.b - spec.a) + slack
    if np.any(xa < spec.a - tol) or np.any(xa > spec.b + tol) or np.any(np.isnan(xa)):
        raise ValueError(f"x outside [{spec.a}, {spec.b}]")
    return np.clip(xa, spec.a, spec.b)


def ramp(spec: BernsteinSpec, x):
    xa = _check_interval(spec, x)
    lo, hi = spec.breakpoints
    out = np.clip((xa - lo) / (hi - lo), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def bernstein_basis(d: int, t) -> np.ndarray:
    """All d+1 basis values binom(d,i) t^i (1-t)^(d-i), shape (..., d+1)."""
    t = np.asarray(t, dtype=float)[..., None]
    i = np.arange(d + 1)
    return binom.pmf(i, d, t)


def _ramp_bernstein(spec, xa):
    d = spec.degree
    a, b = spec.a, spec.b
    lo, hi = spec.breakpoints
    h = (b - a) / d
    t = (xa - a) / (b - a)
    i1 = int(math.floor((lo - a) / h)) + 1
    i2 = int(math.ceil((hi - a) / h)) - 1
    i1, i2 = max(i1, 0), min(i2, d)
    top = binom.sf(i2, d, t)
    if i1 > i2:
        return top
    pm = binom.cdf(i2, d, t) - binom.cdf(i1 - 1, d, t)
    if d > 1:
        pm1 = binom.cdf(i2 - 1, d - 1, t) - binom.cdf(i1 - 2, d - 1, t)
    else:
        pm1 = np.where((i1 <= 1) & (1 <= i2), 1.0, 0.0) * np.ones_like(t)
    mid = ((a - lo) * pm + h * d * t * pm1) / (hi - lo)
    return top + mid


def _generic_bernstein(f, spec, xa):
    d = spec.degree
    a, b = spec.a, spec.b
    flat = np.atleast_1d(xa).ravel()
    out = np.empty(flat.size)
    for j, x in enumerate(flat):
        t = (x - a) / (b - a)
        mu = d * t
        sd = math.sqrt(d * t * (1.0 - t))
        i0 = max(0, int(math.floor(mu - WINDOW_SIGMAS * sd - 10)))
        i1 = min(d, int(math.ceil(mu + WINDOW_SIGMAS * sd + 10)))
        if i1 - i0 + 1 > MAX_WINDOW:
            raise ValueError("Bernstein degree too large for a generic target")
        i = np.arange(i0, i1 + 1)
        w = np.exp(binom.logpmf(i, d, t))
        out[j] = float(np.dot(np.asarray(f(a + i * (b - a) / d), dtype=float) * np.ones_like(w), w))
    return out.reshape(np.shape(xa))


def bernstein_scalar(f, spec: BernsteinSpec, x):
    """Degree-d Bernstein polynomial of f on [a, b] evaluated at x.

    ``f=None`` selects the ramp of ``spec`` and uses the closed form.
    """
    xa = _check_interval(spec, x)
    out = _ramp_bernstein(spec, xa) if f is None else _generic_bernstein(f, spec, xa)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _clamped_eigh(M, spec, buffer):
    S = np.asarray(M, dtype=float)
    S = 0.5 * (S + S.T)
    n = S.shape[0]
    w, Q = scipy.linalg.eigh(S)
    if buffer is None:
        buffer = 10.0 * n ** (-2.0 / 3.0) * (spec.b - spec.a)
    if w[0] < spec.a - buffer or w[-1] > spec.b + buffer:
        raise SpectrumOverflowError(
            f"spectrum [{w[0]:.4g}, {w[-1]:.4g}] exceeds [{spec.a:.4g}, {spec.b:.4g}] by more than {buffer:.3g}")
    return np.clip(w, spec.a, spec.b), Q, w


def matrix_bernstein(M, spec: BernsteinSpec, f=None, buffer: float | None = None) -> np.ndarray:
    """Bernstein polynomial applied eigenwise; eigenvalues slightly outside [a, b] are clamped."""
    w, Q, _ = _clamped_eigh(M, spec, buffer)
    vals = np.asarray(bernstein_scalar(f, spec, w), dtype=float)
    out = (Q * vals) @ Q.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ProjectorGap:
    gap: float
    bound: float
    delta: float
    delta_prime: float
    delta_second: float
    delta_third: float
    eps: float

    @property
    def within_bound(self) -> bool:
        return self.gap <= self.bound

    def to_dict(self):
        return dict(gap=self.gap, bound=self.bound, delta=self.delta, delta_prime=self.delta_prime,
                    delta_second=self.delta_second, delta_third=self.delta_third, eps=self.eps,
                    within_bound=self.within_bound)


def projector_gap(M, spec: BernsteinSpec, delta_prime: float | None = None,
                  buffer: float | None = None) -> ProjectorGap:
    """Frobenius distance of B(M)/(delta' n) to Pi/(delta' n) and its bound.

    Pi projects on eigenvalues >= alpha + gamma. With eps = 3 gamma, delta,
    delta', delta'' are the eigenvalue fractions above alpha - gamma, alpha,
    alpha + gamma; the bound is sqrt(2 delta''' / delta'^2) / sqrt(n) with
    delta''' = max(eps^2, 3/4 (delta - delta'')).
    """
    if spec.form != "ramp":
        raise ValueError("projector_gap needs the (alpha, gamma) ramp form")
    w, Q, raw = _clamped_eigh(M, spec, buffer)
    n = w.size
    lo, hi = spec.breakpoints
    eps = 3.0 * spec.gamma
    delta = float(np.mean(raw >= lo))
    dprime = float(np.mean(raw >= spec.alpha)) if delta_prime is None else float(delta_prime)
    dsecond = float(np.mean(raw >= hi))
    if dprime <= 0:
        raise ValueError("delta' is zero: no eigenvalue above alpha")
    vals = np.asarray(bernstein_scalar(None, spec, w), dtype=float)
    proj = (raw >= hi).astype(float)
    # the eigenbasis is shared, so the Frobenius norm is over eigenvalue differences
    gap = float(np.linalg.norm(vals - proj)) / (dprime * n)
    dthird = max(eps ** 2, 0.75 * (delta - dsecond))
    bound = math.sqrt(2.0 * dthird / dprime ** 2) / math.sqrt(n)
    return ProjectorGap(gap, bound, delta, dprime, dsecond, dthird, eps)


@dataclass(frozen=True)
class ScMassCorrelation:
    phi: float
    eps: float
    degree: int
    mass_lower: float
    mass_lower_unexpanded: float
    mass_upper: float
    correlation_lower: float
    correlation_upper: float
    quadrature_mass: float
    quadrature_correlation: float
    ramp_mass: float
    ratio_lower: float

    @property
    def ratio(self) -> float:
        return self.quadrature_correlation / self.quadrature_mass

    def checks(self) -> dict:
        return {
            "mass_upper": self.quadrature_mass <= self.mass_upper,
            "mass_lower": self.quadrature_mass >= self.mass_lower,
            "correlation_lower": self.quadrature_correlation >= self.correlation_lower,
            "correlation_upper": self.quadrature_correlation <= self.correlation_upper,
            "ratio": self.ratio >= self.ratio_lower,
        }

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ratio"] = self.ratio
        d["checks"] = self.checks()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _sc_density(x):
    return 2.0 / math.pi * math.sqrt(max(0.0, 1.0 - x * x))


def sc_mass_and_correlation(spec: BernsteinSpec, eps: float, lift_degree: bool = True) -> ScMassCorrelation:
    """Semicircle averages of B(x) and x B(x) for the phi-form ramp, with the closed-form bounds.

    When ``spec.degree`` is below the Lipschitz degree for accuracy eps, the
    Lipschitz degree ceil((1/phi^2) 2^3 / (2 eps^3)) is used instead, unless
    ``lift_degree`` is False.
    """
    if spec.form != "phi":
        raise ValueError("need the phi-form spec")
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    phi = spec.phi
    need = BernsteinSpec.lipschitz_degree(1.0 / phi ** 2, 2.0, eps)
    sp = spec if (spec.degree >= need or not lift_degree) else spec.with_degree(need)
    lo, hi = sp.breakpoints

    def b(x):
        return float(_ramp_bernstein(sp, np.asarray(x)))

    pts = [lo, hi]
    opts = dict(points=pts, limit=500, epsabs=1e-12, epsrel=1e-10)
    mass = integrate.quad(lambda x: b(x) * _sc_density(x), -1.0, 1.0, **opts)[0]
    corr = integrate.quad(lambda x: x * b(x) * _sc_density(x), -1.0, 1.0, **opts)[0]
    ramp_mass = integrate.quad(lambda x: min(max((x - lo) / (hi - lo), 0.0), 1.0) * _sc_density(x),
                               -1.0, 1.0, **opts)[0]

    c = 4.0 * math.sqrt(2.0) / (3.0 * math.pi)
    mass_upper = 1.0 + eps - semicircle_cdf(1.0 - phi)
    mass_lower = (1.0 + 2.0 * eps) * c * phi ** 1.5 + eps
    mass_lower_unexpanded = 1.0 - semicircle_cdf(hi) + 2.0 * eps * (semicircle_cdf(1.0 - phi) - 0.5)
    corr_lower = 2.0 / (3.0 * math.pi) * ((1.0 - hi ** 2) ** 1.5 - 2.0 * eps * phi ** 1.5 * (2.0 - phi) ** 1.5)
    corr_upper = 2.0 / (3.0 * math.pi) * (phi * (2.0 - phi)) ** 1.5
    return ScMassCorrelation(phi=phi, eps=eps, degree=sp.degree, mass_lower=mass_lower,
                             mass_lower_unexpanded=mass_lower_unexpanded, mass_upper=mass_upper,
                             correlation_lower=corr_lower, correlation_upper=corr_upper,
                             quadrature_mass=mass, quadrature_correlation=corr, ramp_mass=ramp_mass,
                             ratio_lower=1.0 - 20.0 * phi - 2.0 * eps)
