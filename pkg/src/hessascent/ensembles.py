"""Anisotropic modified ensembles with raw and extended Hamiltonians.

Each ensemble is built from independent pure-degree components. The raw
Hamiltonian H and its extension H~ agree on the unit sphere but differ
inside the ball, which changes what Hessian ascent sees along the way.

Subspace kinds split R^n into range(Pi) = first n/2 coordinates and its
complement. Components living on one half are pure-degree instances of
dimension n/2 rescaled by sqrt(2), so their prefactor is sqrt(n) like the
full-dimensional ones.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._parallel import child_seeds, ordered_map
from .ascent import randomized_ascent
from .hamiltonian import SpinGlassInstance, _alpha_factorial, _poly_block, hashed_normals, multisets
from .mixture import MixtureSpec

__all__ = [
    "ENSEMBLE_KINDS",
    "DEFAULT_PARAMS",
    "AnisotropicEnsemble",
    "Evaluator",
    "build_ensemble",
    "ComparisonRecord",
    "compare_ascent",
]

ENSEMBLE_KINDS = ("degree_scaling", "direct_sum", "shared_sum")

# direct_sum alpha4 is a pilot-chosen constant: it balances the top Hessian
# edges of the two blocks for the extension at ||Pi^perp sigma||^2 = ||sigma||^2 / 2.
DEFAULT_PARAMS = {
    "degree_scaling": {"alpha2": 3.0, "power": 100.0},
    "direct_sum": {"alpha2": 1.0, "alpha4": 2.0 * math.sqrt(2.0) / math.sqrt(12.0)},
    "shared_sum": {"alpha4": 1.0, "alpha6": 1.0, "alpha8": 1.0},
}
DEFAULT_STORAGE = {"degree_scaling": "lazy", "direct_sum": "lazy", "shared_sum": "dense"}
SHARED_SUM_MAX_N = 40  # bipartite degree-6 form is stored densely


# --- components ----------------------------------------------------------------


class _Embedded:
    """Component acting on a coordinate slice of R^n with a constant prefactor."""

    def __init__(self, inner, n: int, sl: slice, scale: float):
        self.inner, self.n, self.sl, self.scale = inner, n, sl, scale

    def evaluate(self, x, want_grad=True, want_hess=True):
        e, g, h = self.inner.evaluate(np.ascontiguousarray(x[self.sl]), want_grad, want_hess)
        G = H = None
        if want_grad:
            G = np.zeros(self.n)
            G[self.sl] = self.scale * g
        if want_hess:
            H = np.zeros((self.n, self.n))
            H[self.sl, self.sl] = self.scale * h
        return self.scale * e, G, H


class _BipartiteForm:
    """sqrt(n) <g, rho^{(x)2} (x) tau^{(x)4}> with rho, tau the two coordinate halves.

    Stored as multiset rows (2 labels in the first half, 4 in the second).
    The grouped coefficient of a row has variance (2!/a!) (4!/b!).
    """

    def __init__(self, n: int, seed: int):
        m = n // 2
        a = multisets(m, 2)
        b = multisets(m, 4) + m
        idx = np.empty((a.shape[0] * b.shape[0], 6), dtype=np.int64)
        idx[:, :2] = np.repeat(a, b.shape[0], axis=0)
        idx[:, 2:] = np.tile(b, (a.shape[0], 1))
        mult = (2.0 / np.where(a[:, 0] == a[:, 1], 2.0, 1.0))
        mult = np.repeat(mult, b.shape[0]) * np.tile(24.0 / _alpha_factorial(b), a.shape[0])
        self.n = n
        self.idx = idx
        self.coef = hashed_normals(seed, 6, idx) * np.sqrt(mult)

    def evaluate(self, x, want_grad=True, want_hess=True):
        e, g, h = _poly_block(self.idx, self.coef, x, self.n, want_grad, want_hess)
        s = math.sqrt(self.n)
        return s * e, (s * g if want_grad else None), (0.5 * s * (h + h.T) if want_hess else None)


def _pure(n, k, seed, storage):
    return SpinGlassInstance(n, MixtureSpec.from_degrees({k: 1.0}), seed, storage)


# --- norm weights ----------------------------------------------------------


def _norm_weight(r2: float, power: float, coef: float):
    """w = coef ||x||^power with grad w = w1 x and Hess w = w1 I + w2 x x^T.

    Powers of ||x||^2 are taken in log space; an exponent of zero gives 1
    and a positive exponent at the origin gives 0.
    """

    def pw(e):
        if e == 0:
            return 1.0
        if r2 <= 0.0:
            return 0.0 if e > 0 else math.inf
        return math.exp(e * math.log(r2))

    w = coef * pw(power / 2.0)
    w1 = coef * power * pw(power / 2.0 - 1.0) if power != 0 else 0.0
    w2 = coef * power * (power - 2.0) * pw(power / 2.0 - 2.0) if power not in (0, 2) else 0.0
    return w, w1, w2


def _weighted(x, comp, power, coef, want_grad, want_hess):
    """coef ||x||^power * comp(x) with exact derivatives."""
    if coef == 0.0:
        n = x.shape[0]
        return 0.0, (np.zeros(n) if want_grad else None), (np.zeros((n, n)) if want_hess else None)
    need_g = want_grad or want_hess
    e, g, h = comp.evaluate(x, need_g, want_hess)
    r2 = float(x @ x)
    w, w1, w2 = _norm_weight(r2, power, coef)
    E = w * e
    G = H = None
    if want_grad:
        G = w * g + (e * w1) * x
    if want_hess:
        H = w * h + w1 * (np.outer(x, g) + np.outer(g, x))
        H[np.diag_indices_from(H)] += e * w1
        if w2:
            H += (e * w2) * np.outer(x, x)
    return E, G, H


@dataclass
class Evaluator:
    """Sum of norm-weighted components, exposing the instance interface used by ascent."""

    n: int
    mixture: MixtureSpec  # nominal mixture, used only for reporting targets
    terms: list  # (component, power, coef)

    def evaluate(self, sigma, want_grad=True, want_hess=True):
        x = np.asarray(sigma, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"sigma must have shape ({self.n},)")
        e = 0.0
        g = np.zeros(self.n) if want_grad else None
        h = np.zeros((self.n, self.n)) if want_hess else None
        for comp, power, coef in self.terms:
            ei, gi, hi = _weighted(x, comp, power, coef, want_grad, want_hess)
            e += ei
            if want_grad:
                g += gi
            if want_hess:
                h += hi
        if want_hess:
            h = 0.5 * (h + h.T)
        return e, g, h

    def energy(self, sigma) -> float:
        return self.evaluate(sigma, False, False)[0]

    def gradient(self, sigma) -> np.ndarray:
        return self.evaluate(sigma, True, False)[1]

    def hessian(self, sigma) -> np.ndarray:
        return self.evaluate(sigma, False, True)[2]


@dataclass
class AnisotropicEnsemble:
    kind: str
    params: dict
    n: int
    seed: int
    storage: str
    projector: np.ndarray | None
    components: dict
    raw: Evaluator
    extended: Evaluator

    def descriptor(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "n": self.n,
                "seed": self.seed, "storage": self.storage}


def _check_params(kind, params):
    allowed = DEFAULT_PARAMS[kind]
    out = dict(allowed)
    for key, val in (params or {}).items():
        if key not in allowed:
            raise ValueError(f"parameter {key!r} is not defined for ensemble kind {kind!r}")
        val = float(val)
        if not math.isfinite(val) or val < 0:
            raise ValueError(f"parameter {key!r} must be a finite non-negative number")
        out[key] = val
    return out


def build_ensemble(kind: str, params: dict | None, n: int, seed: int,
                   storage: str | None = None) -> AnisotropicEnsemble:
    if kind not in ENSEMBLE_KINDS:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    if n % 2:
        raise ValueError("n must be even: the default half/half split is undefined for odd n")
    if n < 8:
        raise ValueError("n must be >= 8")
    p = _check_params(kind, params)
    storage = storage or DEFAULT_STORAGE[kind]
    s = child_seeds(seed, 3)
    m = n // 2
    lo, hi = slice(0, m), slice(m, n)
    root2 = math.sqrt(2.0)
    proj = None
    if kind == "degree_scaling":
        H2, H4 = _pure(n, 2, s[0], storage), _pure(n, 4, s[1], storage)
        comps = {"H2": H2, "H4": H4}
        nominal = MixtureSpec.from_degrees({2: p["alpha2"], 4: 1.0})
        raw = [(H2, p["power"], p["alpha2"]), (H4, 0.0, 1.0)]
        ext = [(H2, 0.0, p["alpha2"]), (H4, 0.0, 1.0)]
    elif kind == "direct_sum":
        H2 = _Embedded(_pure(m, 2, s[0], storage), n, lo, root2)
        H4 = _Embedded(_pure(m, 4, s[1], storage), n, hi, root2)
        comps = {"H2": H2, "H4": H4}
        nominal = MixtureSpec.from_degrees({2: p["alpha2"], 4: p["alpha4"]})
        raw = [(H2, 0.0, p["alpha2"]), (H4, 0.0, p["alpha4"])]
        ext = [(H2, 2.0, p["alpha2"]), (H4, 0.0, p["alpha4"])]
    else:
        if n > SHARED_SUM_MAX_N:
            raise ValueError(f"shared_sum supports n <= {SHARED_SUM_MAX_N}")
        H4 = _Embedded(_pure(m, 4, s[0], storage), n, lo, root2)
        H8 = _Embedded(_pure(m, 8, s[1], storage), n, hi, root2)
        H6 = _BipartiteForm(n, s[2])
        comps = {"H4": H4, "H6": H6, "H8": H8}
        nominal = MixtureSpec.from_degrees({4: p["alpha4"], 6: p["alpha6"], 8: p["alpha8"]})
        raw = [(H4, 0.0, p["alpha4"]), (H6, 0.0, p["alpha6"]), (H8, 0.0, p["alpha8"])]
        ext = [(H4, 4.0, p["alpha4"]), (H6, 2.0, p["alpha6"]), (H8, 0.0, p["alpha8"])]
    if kind != "degree_scaling":
        proj = np.zeros((n, n))
        proj[lo, lo] = np.eye(m)
    return AnisotropicEnsemble(kind, p, n, int(seed), storage, proj, comps,
                               Evaluator(n, nominal, raw), Evaluator(n, nominal, ext))


# --- comparison experiment ---------------------------------------------------


@dataclass
class ComparisonRecord:
    kind: str
    params: dict
    n: int
    k: int
    delta: float
    seeds: list
    raw_energies: list  # final H(sigma_k)/n of raw ascent, on raw H
    extended_energies: list  # final point of extended ascent, on raw H
    raw_occupancy: list  # per seed, per step ||Pi sigma_i||^2 / ||sigma_i||^2
    extended_occupancy: list
    ci_low: float
    ci_high: float
    identical: list = field(default_factory=list)  # per seed, trajectories bitwise equal

    @property
    def differences(self) -> np.ndarray:
        return np.asarray(self.extended_energies) - np.asarray(self.raw_energies)

    @property
    def mean_difference(self) -> float:
        return float(np.mean(self.differences))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "raw_energy", "extended_energy", "difference"])
        for s, a, b in zip(self.seeds, self.raw_energies, self.extended_energies):
            w.writerow([s, f"{a:.17g}", f"{b:.17g}", f"{b - a:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"kind": self.kind, "params": self.params, "n": self.n, "k": self.k,
                "delta": self.delta, "seeds": list(self.seeds),
                "mean_difference": self.mean_difference, "ci95": [self.ci_low, self.ci_high],
                "mean_raw_occupancy": np.mean(self.raw_occupancy, axis=0).tolist() if self.raw_occupancy else None,
                "mean_extended_occupancy": np.mean(self.extended_occupancy, axis=0).tolist() if self.extended_occupancy else None,
                "identical": list(self.identical)}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def _occupancy(iterates, proj):
    if proj is None:
        return []
    P = np.diag(proj)
    tot = np.einsum("ij,ij->i", iterates[1:], iterates[1:])
    inside = np.einsum("ij,ij,j->i", iterates[1:], iterates[1:], P)
    return (inside / tot).tolist()


def _one_seed(job):
    kind, params, n, storage, k, delta, seed = job
    ens = build_ensemble(kind, params, n, seed, storage)
    step_seed = child_seeds(seed, 1)[0]
    tr = randomized_ascent(ens.raw, k, delta, step_seed)
    te = randomized_ascent(ens.extended, k, delta, step_seed)
    er = ens.raw.energy(tr.iterates[-1]) / n
    ee = ens.raw.energy(te.iterates[-1]) / n
    same = bool(np.array_equal(tr.iterates, te.iterates))
    return er, ee, _occupancy(tr.iterates, ens.projector), _occupancy(te.iterates, ens.projector), same


def compare_ascent(ensemble: AnisotropicEnsemble, k: int, delta: float, seeds,
                   workers: int | None = 1, ci_resamples: int = 9999) -> ComparisonRecord:
    """Raw versus extended randomized ascent on one realization per seed.

    The ensemble is rebuilt with each seed (its own seed included); both
    ascents of a pair share components and step randomness, and both end
    points are scored on the raw Hamiltonian.
    """
    seeds = [int(s) for s in seeds]
    if len(seeds) < 5:
        raise ValueError("compare_ascent needs at least 5 seeds")
    jobs = [(ensemble.kind, ensemble.params, ensemble.n, ensemble.storage, k, delta, s) for s in seeds]
    res = ordered_map(_one_seed, jobs, workers)
    raw = [r[0] for r in res]
    ext = [r[1] for r in res]
    diff = np.asarray(ext) - np.asarray(raw)
    if np.ptp(diff) == 0.0:
        lo = hi = float(diff[0])
    else:
        bs = stats.bootstrap((diff,), np.mean, confidence_level=0.95, n_resamples=ci_resamples,
                             method="percentile", random_state=np.random.default_rng(seeds[0]))
        lo, hi = float(bs.confidence_interval.low), float(bs.confidence_interval.high)
    return ComparisonRecord(ensemble.kind, dict(ensemble.params), ensemble.n, k, delta, seeds,
                            raw, ext, [r[2] for r in res], [r[3] for r in res], lo, hi,
                            [r[4] for r in res])
