"""Command-line harness: typed configs, deterministic runs, atomic outputs.

Each subcommand turns an ExperimentConfig into a JSON payload, an optional
CSV table and a dict of named pass/fail checks. Outputs are named
``{subcommand}_seed{seed}.{json,csv}`` plus a ``.manifest.json`` carrying the
config, its hash, the library version, wall-clock time and the checks.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import itertools
import json
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from . import __version__
from ._parallel import WORKERS_ENV, child_seeds, default_workers
from .ascent import deterministic_ascent, randomized_ascent, verify_hes
from .bernstein import BernsteinSpec, bernstein_scalar, matrix_bernstein, projector_gap, ramp, sc_mass_and_correlation
from .ensembles import DEFAULT_PARAMS, build_ensemble, compare_ascent
from .hamiltonian import STORAGE_MODES, sample_instance
from .hermite import (MultiIndex, cumulant_from_moments, gaussian_moment, hermite, hermite_inner,
                      moment_from_cumulants, multi_indices, sphere_moment)
from .mixture import (MixtureSpec, alg_threshold, catalan, dyck_paths, holder_exponent_raw,
                      holder_exponent_series, lambert_w0)
from .momentrep import (canonical_rep, gaussian_moment_matrix, gaussian_moment_rep, holder_moment_bound,
                        mode_symmetrize, nuclear_norm, pairing, polynomial_expectation, random_form,
                        strong_convexity_check)
from .spectral import wigner_check

__all__ = [
    "SUBCOMMANDS",
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "run",
    "main",
    "identity_suite",
    "moment_suite",
    "bernstein_suite",
    "analytic_suite",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# --- typed fields --------------------------------------------------------------

_INT = re.compile(r"^[+-]?\d+$")
_FLOAT = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _p_int(name, text):
    if not _INT.match(text):
        raise ConfigError(f"field {name!r}: {text!r} is not an integer")
    return int(text)


def _p_float(name, text):
    if not _FLOAT.match(text):
        raise ConfigError(f"field {name!r}: {text!r} is not a decimal number")
    return float(text)


def _p_mixture(name, text):
    """'2:1.0, 4:1' -> {2: 1.0, 4: 1.0}."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ":" not in part:
            raise ConfigError(f"field {name!r}: entry {part!r} is not degree:gamma")
        k, g = (s.strip() for s in part.split(":", 1))
        out[_p_int(name, k)] = _p_float(name, g)
    if not out:
        raise ConfigError(f"field {name!r}: empty mixture")
    try:
        MixtureSpec.from_degrees(out)
    except ValueError as exc:
        raise ConfigError(f"field {name!r}: {exc}") from None
    return out


def _f_mixture(v):
    return ", ".join(f"{k}:{float(g)!r}" for k, g in sorted(v.items()))


def _choice(*opts):
    def parse(name, text):
        if text not in opts:
            raise ConfigError(f"field {name!r}: {text!r} not in {list(opts)}")
        return text
    return parse


_FMT = {int: str, float: lambda v: repr(float(v)), "mixture": _f_mixture, "choice": str}
_PARSE = {int: _p_int, float: _p_float, "mixture": _p_mixture}


def _ptype(t):
    return t if t in (int, float, "mixture") else "choice"


# per subcommand: name -> (type or choice parser, default, check(value) -> error or None)
def _pos(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def _unit(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


_STORAGE = _choice(*STORAGE_MODES)
SCHEMAS = {
    "alg-threshold": {
        "mixture": ("mixture", {4: 1.0}, None),
        "quad_tol": (float, 1e-10, _pos),
    },
    "ascend": {
        "n": (int, 400, _pos),
        "mixture": ("mixture", {2: 1.0, 4: 1.0}, None),
        "k": (int, 40, _pos),
        "delta": (float, 0.05, _unit),
        "method": (_choice("randomized", "deterministic"), "randomized", None),
        "eps": (float, 0.1, _pos),
        "storage": (_STORAGE, "lazy", None),
    },
    "verify-hes": {
        "n": (int, 200, _pos),
        "mixture": ("mixture", {2: 1.0, 4: 1.0}, None),
        "k": (int, 5, _pos),
        "delta": (float, 0.1, _unit),
        "replicas": (int, 200, _pos),
        "projections": (int, 20, _pos),
        "opnorm_factor": (float, 1.3, _pos),
        "z_max": (float, 5.0, _pos),
        "storage": (_STORAGE, "lazy", None),
    },
    "wigner-check": {
        "n": (int, 300, _pos),
        "mixture": ("mixture", {2: 1.0, 4: 1.0}, None),
        "q": (float, 0.5, _unit),
        "p_max": (int, 4, _pos),
        "replicas": (int, 20, _pos),
        "storage": (_STORAGE, "lazy", None),
    },
    "bernstein-check": {
        "n": (int, 300, _pos),
        "alpha": (float, 0.5, None),
        "gamma": (float, 0.1, _pos),
        "eps": (float, 0.05, _pos),
        "grid": (int, 10000, _pos),
        "phi": (float, 0.05, _pos),
        "sc_eps": (float, 0.01, _pos),
    },
    "moment-check": {
        "n": (int, 3, _pos),
        "holder_n": (int, 8, _pos),
        "holder_trials": (int, 50, _pos),
    },
    "ensemble-compare": {
        "kind": (_choice("degree_scaling", "direct_sum", "shared_sum"), "degree_scaling", None),
        "n": (int, 200, _pos),
        "k": (int, 30, _pos),
        "delta": (float, 0.05, _unit),
        "replicates": (int, 20, _pos),
        "alpha2": (float, -1.0, None),
        "alpha4": (float, -1.0, None),
        "alpha6": (float, -1.0, None),
        "alpha8": (float, -1.0, None),
        "power": (float, -1.0, None),
    },
    "identities": {
        "max_degree": (int, 6, _pos),
        "max_n": (int, 8, _pos),
        "mc_samples": (int, 1_000_000, _pos),
        "dyck_max": (int, 8, _pos),
    },
}
SUBCOMMANDS = tuple(SCHEMAS)


@dataclass
class ExperimentConfig:
    """Subcommand, master seed and typed parameters; fully determines a run."""

    subcommand: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SCHEMAS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError("field 'seed': must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        schema = SCHEMAS[self.subcommand]
        full = {name: spec[1] for name, spec in schema.items()}
        for name, val in self.params.items():
            if name not in schema:
                raise ConfigError(f"field {name!r}: unknown for subcommand {self.subcommand!r}")
            full[name] = val
        for name, (typ, _, check) in schema.items():
            v = full[name]
            if typ is int and not (isinstance(v, (int, np.integer)) and not isinstance(v, bool)):
                raise ConfigError(f"field {name!r}: expected an integer")
            if typ is float:
                if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                    raise ConfigError(f"field {name!r}: expected a finite number")
                v = full[name] = float(v)
            if check is not None:
                err = check(v)
                if err:
                    raise ConfigError(f"field {name!r}: {err}")
        self.params = full

    @classmethod
    def from_sections(cls, subcommand: str, sections: dict, seed: int | None = None) -> "ExperimentConfig":
        if subcommand not in SCHEMAS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        run_sec = sections.get("run", {})
        for key in run_sec:
            if key not in ("seed",):
                raise ConfigError(f"field {key!r}: unknown in section [run]")
        s = seed if seed is not None else _p_int("seed", run_sec["seed"]) if "seed" in run_sec else 0
        schema = SCHEMAS[subcommand]
        params = {}
        for key, text in sections.get(subcommand, {}).items():
            if key not in schema:
                raise ConfigError(f"field {key!r}: unknown for subcommand {subcommand!r}")
            typ = schema[key][0]
            params[key] = _PARSE[typ](key, text.strip()) if typ in _PARSE else typ(key, text.strip())
        return cls(subcommand, s, params)

    @classmethod
    def from_text(cls, text: str, subcommand: str | None = None, seed: int | None = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config syntax: {exc}") from None
        sections = {s: dict(cp[s]) for s in cp.sections()}
        for s in sections:
            if s != "run" and s not in SCHEMAS:
                raise ConfigError(f"unknown section [{s}]")
        if subcommand is None:
            subs = [s for s in sections if s != "run"]
            if len(subs) != 1:
                raise ConfigError("config must name exactly one subcommand section")
            subcommand = subs[0]
        return cls.from_sections(subcommand, sections, seed)

    def to_text(self) -> str:
        lines = ["[run]", f"seed = {self.seed}", "", f"[{self.subcommand}]"]
        for name, (typ, _, _) in SCHEMAS[self.subcommand].items():
            lines.append(f"{name} = {_FMT[_ptype(typ)](self.params[name])}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


# --- suites shared with the acceptance tests -------------------------------------


def _all_alphas(n, deg):
    for d in range(deg + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            yield MultiIndex.from_labels(combo, n).exps


def identity_suite(seed: int, max_degree: int = 6, max_n: int = 8, mc_samples: int = 1_000_000,
                   dyck_max: int = 8) -> tuple[dict, dict]:
    """Exact sphere/Gaussian, moment/cumulant, Isserlis-vs-Monte-Carlo and Dyck identities."""
    payload, checks = {}, {}
    # sphere moment times n(n+2)...(n+2q-2) equals the standard Gaussian moment, in rationals
    bad = 0
    count = 0
    for n in range(1, max_n + 1):
        eye = [[int(i == j) for j in range(n)] for i in range(n)]
        for alpha in _all_alphas(n, max_degree):
            q = sum(alpha) // 2
            lhs = sphere_moment(alpha, n) * math.prod(n + 2 * j for j in range(q))
            rhs = Fraction(gaussian_moment(alpha, eye)) if sum(alpha) % 2 == 0 else Fraction(0)
            bad += lhs != rhs
            count += 1
    payload["sphere_gaussian_cases"] = count
    payload["sphere_gaussian_mismatches"] = bad
    checks["sphere_gaussian_exact"] = bad == 0
    # moment <-> cumulant round trip for a correlated Gaussian with a shift
    rng = np.random.default_rng(child_seeds(seed, 1)[0])
    A = rng.standard_normal((3, 3))
    C = A @ A.T / 3.0 + 0.5 * np.eye(3)
    mu = rng.standard_normal(3)

    def moment(t):
        # E prod (mu_i + x_i) by expansion over subsets
        total = 0.0
        for r in range(len(t) + 1):
            for sub in itertools.combinations(range(len(t)), r):
                rest = [t[i] for i in range(len(t)) if i not in sub]
                total += math.prod(mu[t[i]] for i in sub) * gaussian_moment(
                    MultiIndex.from_labels(rest, 3).exps, C)
        return total

    worst = 0.0
    for length in range(1, 7):
        for idx in itertools.combinations_with_replacement(range(3), length):
            back = moment_from_cumulants(lambda t: cumulant_from_moments(moment, t), idx)
            worst = max(worst, abs(back - moment(idx)) / max(1.0, abs(moment(idx))))
    payload["cumulant_roundtrip_max_rel_error"] = worst
    checks["cumulant_roundtrip"] = worst <= 1e-12
    # Gaussian cumulants of order >= 3 vanish
    k3 = max(abs(cumulant_from_moments(moment, idx)) for idx in itertools.combinations_with_replacement(range(3), 3))
    payload["gaussian_third_cumulant_max"] = k3
    # Isserlis against Monte Carlo
    zs = []
    for n in range(1, 5):
        B = rng.standard_normal((n, n))
        Cn = B @ B.T / n + 0.5 * np.eye(n)
        X = rng.multivariate_normal(np.zeros(n), Cn, size=mc_samples, method="cholesky")
        for alpha in _all_alphas(n, max_degree):
            if sum(alpha) == 0:
                continue
            vals = np.prod(X ** np.asarray(alpha), axis=1)
            se = vals.std(ddof=1) / math.sqrt(mc_samples)
            exact = float(gaussian_moment(alpha, Cn))
            if se > 0:
                zs.append(float(abs(vals.mean() - exact) / se))
    payload["isserlis_mc_max_z"] = max(zs)
    payload["isserlis_mc_cases"] = len(zs)
    payload["isserlis_mc_over_3sigma"] = int(sum(z > 3.0 for z in zs))
    checks["isserlis_mc_3sigma"] = max(zs) <= 3.0
    # Dyck paths
    counts = [len(dyck_paths(q)) for q in range(1, dyck_max + 1)]
    payload["dyck_counts"] = counts
    checks["dyck_catalan"] = counts == [catalan(q) for q in range(1, dyck_max + 1)]
    # Hermite orthogonality on a small case: E[He_a He_b] equals the matching sum
    Ch = np.array([[1.0, 0.4], [0.4, 2.0]])
    Xh = rng.multivariate_normal(np.zeros(2), Ch, size=200_000, method="cholesky")
    worst_h = 0.0
    basis = multi_indices(2, 2)
    for a, b in itertools.product(basis, basis):
        prod = hermite(a, Xh, Ch) * hermite(b, Xh, Ch)
        se = prod.std(ddof=1) / math.sqrt(Xh.shape[0])
        if se > 0:
            worst_h = max(worst_h, abs(prod.mean() - hermite_inner(a, b, Ch)) / se)
    payload["hermite_inner_mc_max_z"] = worst_h
    checks["hermite_inner_mc"] = worst_h <= 5.0
    return payload, checks


def moment_suite(seed: int, n: int = 3, holder_n: int = 8, holder_trials: int = 50) -> tuple[dict, dict]:
    rng = np.random.default_rng(child_seeds(seed, 1)[0])
    A = rng.standard_normal((n, n))
    S = A @ A.T / n + 0.2 * np.eye(n)
    V = gaussian_moment_rep(S, 4)
    exact = gaussian_moment_matrix(S, 4)
    err = float(np.max(np.abs(mode_symmetrize(V).data - exact.data)))
    nuc = nuclear_norm(V)
    nuc_target = 3.0 * float(np.linalg.norm(S, "fro")) ** 2
    # pairing of the canonical rep with the exact moment matrix equals E p
    p = random_form(n, 4, rng)
    M = canonical_rep(p, 4, n)
    pair_err = abs(pairing(M, exact) - polynomial_expectation(p, S))
    slacks = []
    for _ in range(holder_trials):
        B = rng.standard_normal((holder_n, holder_n))
        Sh = B @ B.T / holder_n
        slacks.append(holder_moment_bound(random_form(holder_n, 4, rng), Sh, 4).slack)
    payload = {"sym_rep_max_error": err, "nuclear_norm": nuc, "nuclear_target": nuc_target,
               "pairing_error": pair_err, "holder_min_slack": float(min(slacks)), "holder_slacks": slacks}
    checks = {"sym_rep_matches_moments": err <= 1e-12,
              "nuclear_norm_identity": abs(nuc - nuc_target) <= 1e-10 * max(1.0, nuc_target),
              "canonical_pairing": pair_err <= 1e-9 * max(1.0, abs(polynomial_expectation(p, S))),
              "holder_direction": min(slacks) >= -1e-10}
    return payload, checks


def scaled_goe(n: int, rng) -> np.ndarray:
    """GOE with semicircle edge at +-1."""
    G = rng.standard_normal((n, n))
    return (G + G.T) / (2.0 * math.sqrt(2.0 * n))


def bernstein_suite(seed: int, n: int = 300, alpha: float = 0.5, gamma: float = 0.1, eps: float = 0.05,
                    grid: int = 10000, phi: float = 0.05, sc_eps: float = 0.01) -> tuple[dict, dict]:
    rng = np.random.default_rng(child_seeds(seed, 1)[0])
    M = scaled_goe(n, rng)
    a, b = -1.0, 1.0
    deg = BernsteinSpec.lipschitz_degree(1.0 / (2.0 * gamma), b - a, eps)
    spec = BernsteinSpec.ramp_form(a, b, alpha, gamma, deg)
    Bm = matrix_bernstein(M, spec)
    w = scipy.linalg.eigvalsh(Bm)
    gap = projector_gap(M, spec)
    xs = np.linspace(a, b, grid)
    sup = float(np.max(np.abs(bernstein_scalar(None, spec, xs) - ramp(spec, xs))))
    sc = sc_mass_and_correlation(BernsteinSpec.phi_form(phi, 1), sc_eps)
    payload = {"degree": deg, "min_eig": float(w[0]), "op_norm": float(np.max(np.abs(w))),
               "projector_gap": gap.to_dict(), "scalar_sup_error": sup, "semicircle": sc.to_dict()}
    checks = {"psd": float(w[0]) >= -1e-8, "contraction": float(np.max(np.abs(w))) <= 1 + 1e-8,
              "projector_gap_bound": gap.within_bound, "scalar_sup_error": sup <= eps}
    checks.update({f"semicircle_{k}": v for k, v in sc.checks().items()})
    return payload, checks


def analytic_suite() -> tuple[dict, dict]:
    """Lambert W residuals, exponent series agreement and the strong-convexity grid."""
    xs = np.concatenate([-np.exp(-1) + np.logspace(-12, -1, 12), np.linspace(-0.3, 10.0, 200), np.logspace(1, 6, 20)])
    res = max(abs(lambert_w0(x) * math.exp(lambert_w0(x)) - x) / max(1.0, abs(x)) for x in xs)
    raw = holder_exponent_raw(1e-3, 0.1)
    series = holder_exponent_series(0.1)
    conv = {f"k{k}_dn{dn}": strong_convexity_check(k, float(dn), 50) for k in (1, 2, 3) for dn in (10, 100)}
    payload = {"lambert_max_residual": res, "holder_raw": raw, "holder_series": series,
               "holder_rel_gap": abs(raw - series) / series, "strong_convexity": conv}
    checks = {"lambert_residual": res <= 1e-12, "holder_series": abs(raw - series) / series <= 0.02,
              "strong_convexity": all(conv.values())}
    return payload, checks


# --- subcommands ---------------------------------------------------------------


@dataclass
class RunResult:
    payload: dict
    table: str | None
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _mixture(p):
    return MixtureSpec.from_degrees(p["mixture"])


def _cmd_alg(cfg, workers):
    p = cfg.params
    r = alg_threshold(_mixture(p), p["quad_tol"])
    return RunResult(r.to_dict(), None, {"finite": math.isfinite(r.alg_value)})


def _cmd_ascend(cfg, workers):
    p = cfg.params
    s_inst, s_run = child_seeds(cfg.seed, 2)
    inst = sample_instance(p["n"], _mixture(p), s_inst, p["storage"])
    if p["method"] == "randomized":
        tr = randomized_ascent(inst, p["k"], p["delta"], s_run)
    else:
        tr = deterministic_ascent(inst, p["k"], p["eps"], s_run, p["delta"])
    alg = alg_threshold(_mixture(p)).alg_value
    payload = {"final_energy": tr.final_energy, "alg_value": alg, "ratio": tr.final_energy / alg,
               "sq_norm_residual": tr.sq_norm_residual(), "orthogonality_residual": tr.orthogonality_residual(),
               "norm_residual": tr.norm_residual(), "params": tr.params}
    if tr.flags is not None:
        payload["flag_fraction"] = float(np.mean(tr.flags))
    checks = {"sq_norms": tr.sq_norm_residual() <= 1e-10, "orthogonality": tr.orthogonality_residual() <= 1e-10}
    return RunResult(payload, tr.to_csv(), checks)


def _cmd_hes(cfg, workers):
    p = cfg.params
    s_inst, s_run = child_seeds(cfg.seed, 2)
    inst = sample_instance(p["n"], _mixture(p), s_inst, p["storage"])
    rep = verify_hes(inst, p["k"], p["delta"], p["replicas"], s_run, p["projections"])
    lim = p["opnorm_factor"] / (p["delta"] * p["n"])
    payload = rep.to_dict()
    payload["opnorm_limit"] = lim
    checks = {"step_norms": rep.norm_residual <= 1e-12, "orthogonality": rep.orthogonality_residual <= 1e-10,
              "cov_opnorm": max(rep.cov_opnorm) <= lim, "third_cumulants": rep.max_third_z() <= p["z_max"]}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "cov_opnorm", "cov_opnorm_split", "cov_trace", "ldp_residual"])
    for i in range(rep.k):
        w.writerow([i + 1, f"{rep.cov_opnorm[i]:.17g}", f"{rep.cov_opnorm_split[i]:.17g}",
                    f"{rep.cov_trace[i]:.17g}", f"{rep.ldp_residual[i]:.17g}"])
    return RunResult(payload, buf.getvalue(), checks)


def _cmd_wigner(cfg, workers):
    p = cfg.params
    rep = wigner_check(_mixture(p), p["n"], p["q"], p["p_max"], p["replicas"], cfg.seed, p["storage"], workers)
    r = rep.ratios
    checks = {}
    if p["p_max"] >= 2:
        checks["second_moment_10pct"] = abs(r[1] - 1.0) <= 0.10
    if p["p_max"] >= 3:
        checks["third_moment_small"] = abs(rep.means[2]) <= 0.1 * rep.targets[1] ** 1.5
    if p["p_max"] >= 4:
        checks["fourth_moment_20pct"] = abs(r[3] - 1.0) <= 0.20
    return RunResult(rep.to_dict(), None, checks)


def _cmd_bernstein(cfg, workers):
    p = cfg.params
    payload, checks = bernstein_suite(cfg.seed, p["n"], p["alpha"], p["gamma"], p["eps"], p["grid"],
                                      p["phi"], p["sc_eps"])
    return RunResult(payload, None, checks)


def _cmd_moment(cfg, workers):
    p = cfg.params
    payload, checks = moment_suite(cfg.seed, p["n"], p["holder_n"], p["holder_trials"])
    return RunResult(payload, None, checks)


def _cmd_ensemble(cfg, workers):
    p = cfg.params
    kind = p["kind"]
    params = {k: p[k] for k in DEFAULT_PARAMS[kind] if p.get(k, -1.0) >= 0}
    for k in ("alpha2", "alpha4", "alpha6", "alpha8", "power"):
        if p[k] >= 0 and k not in DEFAULT_PARAMS[kind]:
            raise ConfigError(f"field {k!r}: not a parameter of ensemble kind {kind!r}")
    seeds = child_seeds(cfg.seed, p["replicates"])
    ens = build_ensemble(kind, params, p["n"], seeds[0])
    rec = compare_ascent(ens, p["k"], p["delta"], seeds, workers)
    return RunResult(rec.summary(), rec.to_csv(), {"ci_above_zero": rec.ci_low > 0})


def _cmd_identities(cfg, workers):
    p = cfg.params
    payload, checks = identity_suite(cfg.seed, p["max_degree"], p["max_n"], p["mc_samples"], p["dyck_max"])
    a_payload, a_checks = analytic_suite()
    payload["analytic"] = a_payload
    checks.update({f"analytic_{k}": v for k, v in a_checks.items()})
    return RunResult(payload, None, checks)


_COMMANDS = {
    "alg-threshold": _cmd_alg,
    "ascend": _cmd_ascend,
    "verify-hes": _cmd_hes,
    "wigner-check": _cmd_wigner,
    "bernstein-check": _cmd_bernstein,
    "moment-check": _cmd_moment,
    "ensemble-compare": _cmd_ensemble,
    "identities": _cmd_identities,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def run(cfg: ExperimentConfig, out_dir: str, workers: int | None = None) -> tuple[RunResult, dict]:
    """Execute one subcommand and write its outputs atomically.

    Returns the result and a map from output kind to path. Nothing is left
    in ``out_dir`` if the run raises.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("field 'workers': must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise ConfigError(f"output directory {out_dir!r} is not writable")
    t0 = time.perf_counter()
    res = _COMMANDS[cfg.subcommand](cfg, workers)
    wall = time.perf_counter() - t0
    stem = os.path.join(out_dir, f"{cfg.subcommand}_seed{cfg.seed}")
    files = {"json": (stem + ".json", _dumps({"schema_version": SCHEMA_VERSION, "subcommand": cfg.subcommand,
                                               "seed": cfg.seed, "result": res.payload, "checks": res.checks}))}
    if res.table is not None:
        files["csv"] = (stem + ".csv", res.table)
    manifest = {"schema_version": SCHEMA_VERSION, "library_version": __version__, "subcommand": cfg.subcommand,
                "seed": cfg.seed, "config": cfg.to_text(), "config_sha256": cfg.digest(),
                "wall_clock_seconds": wall, "workers": workers, "checks": res.checks, "passed": res.passed,
                "outputs": {k: os.path.basename(v[0]) for k, v in files.items()}}
    files["manifest"] = (stem + ".manifest.json", _dumps(manifest))
    temps = []
    try:
        for kind, (path, text) in files.items():
            fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=out_dir)
            temps.append(tmp)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, (path, _) in zip(temps, files.values()):
            os.replace(tmp, path)
    except BaseException:
        for tmp in temps:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    return res, {k: v[0] for k, v in files.items()}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hessascent", description="Hessian ascent experiments and checks.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", metavar="PATH", help="key = value config with [run] and [<subcommand>] sections")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    ap.add_argument("--out", default="results", metavar="DIR", help="output directory")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one subcommand field; repeatable")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        sections = {s: dict(cp[s]) for s in cp.sections()}
        for s in sections:
            if s != "run" and s not in SCHEMAS:
                raise ConfigError(f"unknown section [{s}]")
        sub = dict(sections.get(args.subcommand, {}))
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
            k, v = item.split("=", 1)
            sub[k.strip()] = v.strip()
        sections[args.subcommand] = sub
        if args.seed is not None and args.seed < 0:
            raise ConfigError("field 'seed': must be an unsigned 64-bit integer")
        cfg = ExperimentConfig.from_sections(args.subcommand, sections, args.seed)
        res, paths = run(cfg, args.out, args.workers)
    except (ConfigError, configparser.Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    for name, ok in res.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if res.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
