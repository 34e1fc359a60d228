"""Hessian ascent processes and the step-constraint verifier.

Both processes take k orthogonal unit steps v_1..v_k and move along
sigma_i = (v_1 + ... + v_i) / sqrt(k), so ||sigma_i||^2 = i/k.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bernstein import BernsteinSpec, matrix_bernstein
from .mixture import nu, semicircle_cdf

__all__ = [
    "Trajectory",
    "HesReport",
    "top_eigenspace",
    "randomized_ascent",
    "deterministic_ascent",
    "verify_hes",
    "ramp_epsilon_for_fraction",
]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


@dataclass
class Trajectory:
    steps: np.ndarray  # (k, n)
    iterates: np.ndarray  # (k+1, n), row 0 is the origin
    energies: np.ndarray  # (k+1,) H(sigma_i)/n
    quad_forms: np.ndarray  # (k,) v_i . (Hess_perp H(sigma_{i-1})/n) v_i
    params: dict
    targets: np.ndarray | None = None
    flags: np.ndarray | None = None  # per-step quadratic-form test (deterministic ascent)
    grad_terms: np.ndarray | None = None  # (k,) grad H(sigma_{i-1}) . v_i / (n sqrt(k))

    @property
    def k(self) -> int:
        return self.steps.shape[0]

    @property
    def final_energy(self) -> float:
        return float(self.energies[-1])

    def sq_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.iterates, self.iterates)

    def norm_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.steps, axis=1) - 1.0)))

    def orthogonality_residual(self) -> float:
        G = self.steps @ self.steps.T
        np.fill_diagonal(G, 0.0)
        return float(np.max(np.abs(G))) if G.size else 0.0

    def sq_norm_residual(self) -> float:
        k = self.k
        return float(np.max(np.abs(self.sq_norms() - np.arange(k + 1) / k)))

    def taylor_remainders(self, include_gradient: bool = False) -> np.ndarray:
        """H(sigma_i)/n - H(sigma_{i-1})/n - quad_form_i / (2k) [- gradient term]."""
        r = np.diff(self.energies) - self.quad_forms / (2.0 * self.k)
        if include_gradient and self.grad_terms is not None:
            r = r - self.grad_terms
        return r

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "sq_norm", "energy_density", "quadratic_form", "target"])
        sq = self.sq_norms()
        tg = self.targets if self.targets is not None else np.full(self.k, np.nan)
        for i in range(1, self.k + 1):
            w.writerow([i, f"{sq[i]:.17g}", f"{self.energies[i]:.17g}",
                        f"{self.quad_forms[i - 1]:.17g}", f"{tg[i - 1]:.17g}"])
        return buf.getvalue()


def _complement(past: list, n: int) -> np.ndarray:
    if not past:
        return np.eye(n)
    return scipy.linalg.null_space(np.vstack(past))


def top_eigenspace(H: np.ndarray, past: list, d: int):
    """Orthonormal basis (n x d) of the top-d eigenspace of H restricted off span(past).

    Also returns the restricted eigenvalues (descending) and the complement basis.
    """
    n = H.shape[0]
    Qc = _complement(past, n)
    B = Qc.T @ H @ Qc
    B = 0.5 * (B + B.T)
    w, U = scipy.linalg.eigh(B)
    w, U = w[::-1], U[:, ::-1]
    W = Qc @ U[:, :d]
    # fix eigenvector signs: largest-magnitude component positive
    piv = np.argmax(np.abs(W), axis=0)
    W = W * np.where(W[piv, np.arange(W.shape[1])] < 0, -1.0, 1.0)
    return W, w, Qc


def _check(instance, k, delta):
    n = instance.n
    d = int(math.floor(delta * n))
    if k < 2:
        raise ValueError("k must be >= 2")
    if not (0 < delta <= 0.5):
        raise ValueError("delta must lie in (0, 0.5]")
    if d < 2:
        raise ValueError("floor(delta n) must be >= 2")
    if k + d > n:
        raise ValueError("k + floor(delta n) must not exceed n")
    return n, d


def _uniform_in(W: np.ndarray, rng) -> np.ndarray:
    z = rng.standard_normal(W.shape[1])
    v = W @ (z / np.linalg.norm(z))
    return v / np.linalg.norm(v)


def _targets(instance, k):
    q = np.arange(1, k + 1) / k
    return np.sqrt(np.maximum(nu(instance.mixture, q, 2), 0.0)) / k


def _step_basis(instance, sigma, past, d, rng):
    """Basis of the law of the next randomized step, plus the Hessian/n and gradient used."""
    e, g, H = instance.evaluate(sigma, True, True)
    H = H / instance.n
    if not np.any(H):
        # zero Hessian: the whole complement is the top eigenspace
        W = _complement(past, instance.n)
    else:
        W, _, _ = top_eigenspace(H, past, d)
    return W, H, g / instance.n


def randomized_ascent(instance, k: int, delta: float, seed: int) -> "Trajectory":
    """Steps uniform on the unit sphere of the top floor(delta n) eigenspace of the projected Hessian."""
    n, d = _check(instance, k, delta)
    rng = np.random.default_rng(seed)
    sigma = np.zeros(n)
    past: list = []
    steps, its, quads, grads = [], [sigma.copy()], [], []
    energies = [instance.energy(sigma) / n]
    rk = math.sqrt(k)
    for _ in range(k):
        W, H, g = _step_basis(instance, sigma, past, d, rng)
        v = _uniform_in(W, rng)
        quads.append(float(v @ H @ v))
        grads.append(float(g @ v) / rk)
        sigma = sigma + v / rk
        past.append(v)
        steps.append(v)
        its.append(sigma.copy())
        energies.append(instance.energy(sigma) / n)
    return Trajectory(np.array(steps), np.array(its), np.array(energies), np.array(quads),
                      {"k": k, "delta": delta, "seed": seed, "kind": "randomized"},
                      targets=_targets(instance, k), grad_terms=np.array(grads))


def _third_directional(instance, sigma, x, scale):
    """Third derivative of t -> H(sigma + t x) at 0, from an exact polynomial fit."""
    deg = instance.mixture.d_h
    ts = np.linspace(-scale, scale, deg + 1)
    vals = np.array([instance.energy(sigma + t * x) for t in ts])
    coef = np.linalg.solve(np.vander(ts / scale, deg + 1, increasing=True), vals)
    return 6.0 * coef[3] / scale ** 3 if deg >= 3 else 0.0, float(np.max(np.abs(vals)))


def deterministic_ascent(instance, k: int, eps: float, seed: int, delta: float = 0.05) -> "Trajectory":
    """Top eigenvector of the Hessian projected off the past steps and the projected gradient.

    Sign makes the third directional derivative non-negative; exact ties go to
    a positive first nonzero coordinate. ``flags[i]`` records whether
    v.(Hess/n)v >= (1 - eps) 2 sqrt(nu''(||sigma||^2)).
    """
    n = instance.n
    if k < 2:
        raise ValueError("k must be >= 2")
    if k + 2 > n:
        raise ValueError("k too large for n")
    rng = np.random.default_rng(seed)
    sigma = np.zeros(n)
    past: list = []
    steps, its, quads, flags, grads = [], [sigma.copy()], [], [], []
    energies = [instance.energy(sigma) / n]
    rk = math.sqrt(k)
    for i in range(k):
        _, g, H = instance.evaluate(sigma, True, True)
        H = H / n
        excl = list(past)
        if past:
            P = np.vstack(past)
            gp = g - P.T @ (P @ g)
        else:
            gp = g.copy()
        gn = np.linalg.norm(gp)
        if gn > 1e-12 * max(1.0, np.linalg.norm(g)):
            excl.append(gp / gn)
        if np.any(H):
            W, _, _ = top_eigenspace(H, excl, 1)
            x = W[:, 0]
        else:
            x = _uniform_in(_complement(excl, n), rng)
        third, scale = _third_directional(instance, sigma, x, 1.0 / rk)
        if abs(third) > 1e-9 * max(1.0, scale) * k ** 1.5:
            if third < 0:
                x = -x
        else:
            nz = np.flatnonzero(np.abs(x) > 1e-14)
            if nz.size and x[nz[0]] < 0:
                x = -x
        qf = float(x @ H @ x)
        quads.append(qf)
        q = float(sigma @ sigma)
        flags.append(qf >= (1.0 - eps) * 2.0 * math.sqrt(nu(instance.mixture, min(q, 1.0), 2)))
        grads.append(float(g @ x) / (n * rk))
        sigma = sigma + x / rk
        past.append(x)
        steps.append(x)
        its.append(sigma.copy())
        energies.append(instance.energy(sigma) / n)
    return Trajectory(np.array(steps), np.array(its), np.array(energies), np.array(quads),
                      {"k": k, "eps": eps, "seed": seed, "kind": "deterministic"},
                      targets=_targets(instance, k), flags=np.array(flags), grad_terms=np.array(grads))


# --- step-constraint verifier ------------------------------------------------


def ramp_epsilon_for_fraction(v2: float, delta: float) -> float:
    """Ramp width eps such that a semicircle of edge 2 sqrt(v2) puts mass delta above edge - eps."""
    from scipy.optimize import brentq

    phi = brentq(lambda p: 1.0 - semicircle_cdf(1.0 - p) - delta, 1e-12, 2.0 - 1e-12)
    return 2.0 * math.sqrt(v2) * phi


@dataclass
class HesReport:
    n: int
    k: int
    delta: float
    replicas: int
    dim: int
    cov_opnorm: list  # plug-in lambda_max of the replica covariance
    cov_opnorm_split: list  # cross-fitted estimate of lambda_max of the true covariance
    cov_opnorm_se: list
    cov_trace: list
    cov_frobenius_to_exact: list  # ||E_hat - Pi/d||_F
    third_cumulants: list  # per step: list of (kappa3, se)
    fourth_cumulants: list
    orthogonality_residual: float
    norm_residual: float
    ldp_residual: list  # ||d E_hat - B/||B||_op||_F
    ramp_eps: list
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def max_third_z(self) -> float:
        z = [abs(c) / s for step in self.third_cumulants for c, s in step if s > 0]
        return max(z) if z else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "delta": self.delta, "replicas": self.replicas, "dim": self.dim,
            "seed": self.seed,
            "cov_opnorm": self.cov_opnorm, "cov_opnorm_split": self.cov_opnorm_split,
            "cov_opnorm_se": self.cov_opnorm_se, "cov_trace": self.cov_trace,
            "cov_frobenius_to_exact": self.cov_frobenius_to_exact,
            "third_cumulants": self.third_cumulants, "fourth_cumulants": self.fourth_cumulants,
            "orthogonality_residual": self.orthogonality_residual, "norm_residual": self.norm_residual,
            "ldp_residual": self.ldp_residual, "ramp_eps": self.ramp_eps,
            "max_third_z": self.max_third_z(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _kstats(x):
    """Third and fourth sample cumulants with delta-method-free standard errors."""
    r = x.size
    c = x - x.mean()
    m2, m3, m4 = np.mean(c ** 2), np.mean(c ** 3), np.mean(c ** 4)
    k3 = m3
    k4 = m4 - 3.0 * m2 * m2
    se3 = float(np.std(c ** 3 - 3.0 * m2 * c, ddof=1) / math.sqrt(r))
    se4 = float(np.std(c ** 4 - 6.0 * m2 * c ** 2, ddof=1) / math.sqrt(r))
    return float(k3), se3, float(k4), se4


def verify_hes(instance, k: int, delta: float, replicas: int, seed: int,
               projections: int = 20, bernstein_degree: int | None = None) -> HesReport:
    """Resample each step of one common prefix and measure the step constraints.

    For each step i the prefix v_1..v_{i-1} is fixed (taken from one
    randomized trajectory) and v_i is redrawn ``replicas`` times from its
    conditional law.
    """
    if replicas < 50:
        raise ValueError("replicas must be >= 50")
    n, d = _check(instance, k, delta)
    rng = np.random.default_rng(seed)
    prng = np.random.default_rng([seed, 1])
    sigma = np.zeros(n)
    past: list = []
    rk = math.sqrt(k)
    out = {key: [] for key in ("op", "split", "opse", "tr", "fro", "k3", "k4", "ldp", "eps")}
    orth = 0.0
    nres = 0.0
    for i in range(k):
        W, H, _ = _step_basis(instance, sigma, past, d, rng)
        Z = rng.standard_normal((replicas, W.shape[1]))
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        Vs = Z @ W.T  # replicas x n
        Vs /= np.linalg.norm(Vs, axis=1, keepdims=True)
        nres = max(nres, float(np.max(np.abs(np.linalg.norm(Vs, axis=1) - 1.0))))
        if past:
            orth = max(orth, float(np.max(np.abs(Vs @ np.vstack(past).T))))
        E = Vs.T @ Vs / replicas
        out["op"].append(float(scipy.linalg.eigvalsh(E)[-1]))
        half = replicas // 2
        A, B = Vs[:half], Vs[half:]
        proj_sq = []
        for P1, P2 in ((A, B), (B, A)):
            # top eigenvector from one fold, Rayleigh quotient on the other
            Z1 = P1 @ W
            _, U1 = np.linalg.eigh(Z1.T @ Z1)
            u = W @ U1[:, -1]
            proj_sq.append((P2 @ u) ** 2)
        out["split"].append(float(np.mean([p.mean() for p in proj_sq])))
        ps = np.concatenate(proj_sq)
        out["opse"].append(float(np.std(ps, ddof=1) / math.sqrt(ps.size)))
        out["tr"].append(float(np.trace(E)))
        Pi = W @ W.T / W.shape[1]
        out["fro"].append(float(np.linalg.norm(E - Pi)))
        k3s, k4s = [], []
        for _ in range(projections):
            u = prng.standard_normal(n)
            u /= np.linalg.norm(u)
            a3, s3, a4, s4 = _kstats(Vs @ u)
            k3s.append((a3, s3))
            k4s.append((a4, s4))
        out["k3"].append(k3s)
        out["k4"].append(k4s)
        # low-degree surrogate: Bernstein ramp of the projected Hessian
        Qc = _complement(past, n)
        Hp = Qc @ (Qc.T @ H @ Qc) @ Qc.T
        Hp = 0.5 * (Hp + Hp.T)
        q = min(float(sigma @ sigma), 1.0)
        v2 = nu(instance.mixture, q, 2)
        edge = 2.0 * math.sqrt(v2)
        eps = ramp_epsilon_for_fraction(v2, delta)
        out["eps"].append(eps)
        try:
            spec = BernsteinSpec.ramp_form(-edge, edge, edge - 2.0 * eps / 3.0, eps / 3.0,
                                           bernstein_degree or BernsteinSpec.lipschitz_degree(
                                               1.0 / (2.0 * eps / 3.0), 2.0 * edge, min(eps, 0.5)))
            Bm = matrix_bernstein(Hp, spec)
            opB = float(scipy.linalg.eigvalsh(Bm)[-1])
            out["ldp"].append(float(np.linalg.norm(d * E - Bm / opB)) if opB > 0 else float("nan"))
        except (ValueError, ArithmeticError):
            out["ldp"].append(float("nan"))
        # advance the common prefix
        v = Vs[0]
        sigma = sigma + v / rk
        past.append(v)
    return HesReport(n=n, k=k, delta=delta, replicas=replicas, dim=d,
                     cov_opnorm=out["op"], cov_opnorm_split=out["split"], cov_opnorm_se=out["opse"],
                     cov_trace=out["tr"], cov_frobenius_to_exact=out["fro"],
                     third_cumulants=out["k3"], fourth_cumulants=out["k4"],
                     orthogonality_residual=orth, norm_residual=nres,
                     ldp_residual=out["ldp"], ramp_eps=out["eps"], seed=seed)
