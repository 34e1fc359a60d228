"""Mixed spherical p-spin Hamiltonians and their derivatives.

H(sigma) = sum_k gamma_k sqrt(n) sum_{i_1..i_k} g_{i_1..i_k} sigma_{i_1}...sigma_{i_k}

Three storage modes are available:

``dense``
    One coefficient per sorted multi-index alpha with |alpha| = k, drawn as
    N(0, k!/alpha!) so the law matches the raw tuple sum. Memory C(n+k-1, k).
``streamed``
    Same coefficients, regenerated block by block from a counter-based hash
    of (seed, degree, sorted index tuple). Nothing is stored.
``lazy``
    The symmetrized coefficient tensor is a standard Gaussian on Sym^k and
    hence rotation invariant. Only the components needed to evaluate H, its
    gradient and its Hessian on the span of the points queried so far are
    materialized, sampled from the exact conditional law as that span grows.
    Cost is polynomial in n for fixed degree. Values depend on query order,
    so two lazy instances with the same seed agree only if queried in the
    same order.
"""
from __future__ import annotations

import itertools
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mixture import MAX_DEGREE, MixtureSpec

__all__ = [
    "STORAGE_MODES",
    "MemoryBudgetError",
    "UnsupportedDegreeError",
    "RankDeficiencyError",
    "Configuration",
    "SpinGlassInstance",
    "sample_instance",
    "energy",
    "gradient",
    "hessian",
    "projected_hessian",
    "complement_basis",
    "hashed_normals",
    "multisets",
]

STORAGE_MODES = ("dense", "streamed", "lazy")
DEFAULT_MEMORY_BUDGET = 20_000_000  # coefficients per degree in dense mode
STREAM_BLOCK = 2_000_000
LAZY_CACHE_BYTES = 256 * 2 ** 20  # memory for cached evaluations per lazy instance


class MemoryBudgetError(MemoryError):
    pass


class UnsupportedDegreeError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class Configuration:
    coords: np.ndarray
    sq_norm: float

    @classmethod
    def of(cls, coords) -> "Configuration":
        x = np.array(coords, dtype=float)
        x.setflags(write=False)
        return cls(x, float(x @ x))


# --- counter-based Gaussian oracle ------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_TWO53 = 2.0 ** -53


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hashed_normals(seed: int, degree: int, idx: np.ndarray) -> np.ndarray:
    """Standard normals keyed by (seed, degree, row of ``idx``).

    Rows are hashed position by position, so callers must pass sorted rows
    to get a function of the multiset.
    """
    idx = np.atleast_2d(np.asarray(idx))
    m = idx.shape[0]
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
        base = _mix(base ^ np.uint64(degree))
        h = np.repeat(base, m)
        for p in range(idx.shape[1]):
            h = _mix(h ^ idx[:, p].astype(np.uint64))
        u1 = ((_mix(h ^ np.uint64(1)) >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53
        u2 = (_mix(h ^ np.uint64(2)) >> np.uint64(11)).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# --- multiset bookkeeping ---------------------------------------------------


@lru_cache(maxsize=16)
def _colex_table(n: int, r: int) -> np.ndarray:
    """Sorted r-multisets of range(n), ordered by their largest element.

    Multisets with maximum < m form the prefix of length C(m+r-1, r).
    """
    if r == 0:
        t = np.zeros((1, 0), dtype=np.int64)
    else:
        prev = _colex_table(n, r - 1)
        blocks = []
        for last in range(n):
            cnt = math.comb(last + r - 1, r - 1)
            b = np.empty((cnt, r), dtype=np.int64)
            b[:, :-1] = prev[:cnt]
            b[:, -1] = last
            blocks.append(b)
        t = np.concatenate(blocks, axis=0)
    t.setflags(write=False)
    return t


def multisets(n: int, k: int) -> np.ndarray:
    """All sorted k-multisets of range(n), one per row."""
    return _colex_table(n, k)


def _alpha_factorial(idx: np.ndarray) -> np.ndarray:
    """alpha! for sorted rows."""
    m, k = idx.shape
    out = np.ones(m)
    run = np.ones(m)
    for p in range(1, k):
        same = idx[:, p] == idx[:, p - 1]
        run = np.where(same, run + 1.0, 1.0)
        out *= run
    return out


def _multiset_coeffs(seed: int, k: int, idx: np.ndarray) -> np.ndarray:
    return hashed_normals(seed, k, idx) * np.sqrt(math.factorial(k) / _alpha_factorial(idx))


def _poly_block(idx, coef, x, n, want_grad, want_hess):
    """Energy, gradient and Hessian of sum_rows coef * prod x[idx] (sorted or not)."""
    k = idx.shape[1]
    V = x[idx]
    e = float(coef @ np.prod(V, axis=1)) if k else float(coef.sum())
    g = h = None
    cols = list(range(k))
    if want_grad:
        g = np.zeros(n)
        for p in cols:
            w = coef * np.prod(V[:, cols[:p] + cols[p + 1:]], axis=1)
            g += np.bincount(idx[:, p], weights=w, minlength=n)
    if want_hess:
        h = np.zeros(n * n)
        for p, q in itertools.combinations(cols, 2):
            rest = [c for c in cols if c != p and c != q]
            w = coef * np.prod(V[:, rest], axis=1)
            h += np.bincount(idx[:, p] * n + idx[:, q], weights=w, minlength=n * n)
        h = h.reshape(n, n)
        h = h + h.T
    return e, g, h


# --- lazy isotropic storage --------------------------------------------------


@lru_cache(maxsize=1 << 16)
def _mfact(lam: tuple) -> float:
    out = 1
    for _, grp in itertools.groupby(lam):
        out *= math.factorial(len(list(grp)))
    return float(out)


class _Frame:
    """Growing orthonormal frame shared by all degrees of a lazy instance."""

    def __init__(self, n: int):
        self.n = n
        self.vectors: list[np.ndarray] = []
        self._F = np.zeros((n, 0))

    @property
    def F(self) -> np.ndarray:
        return self._F

    def project_out(self, x: np.ndarray) -> np.ndarray:
        F = self._F
        if F.shape[1] == 0:
            return x.copy()
        if x.ndim == 1:
            return x - F @ (F.T @ x)
        return x - F @ (F.T @ x)

    def project_both(self, A: np.ndarray) -> np.ndarray:
        """P A P for symmetric A."""
        F = self._F
        if F.shape[1] == 0:
            return A.copy()
        AF = A @ F
        FtAF = F.T @ AF
        return A - F @ AF.T - AF @ F.T + F @ FtAF @ F.T

    def append(self, f: np.ndarray) -> None:
        self.vectors.append(f)
        self._F = np.column_stack(self.vectors)


class _LazyDegree:
    """Components of one symmetric Gaussian tensor relative to the frame.

    ``scal`` entries for |lam| = k, ``vec[lam]`` (n-vector, complement part
    is what matters) for |lam| = k-1 and ``mat[mu]`` (n x n, likewise) for
    |mu| = k-2, where lam, mu are sorted tuples of frame labels. Scalars are
    kept only as append-only monomial tables since nothing reads them back.
    """

    def __init__(self, n: int, k: int, rng: np.random.Generator):
        self.n, self.k, self.rng = n, k, rng
        self.kfact = float(math.factorial(k))
        self.vec: dict[tuple, np.ndarray] = {}
        self.mat: dict[tuple, np.ndarray] = {}
        self._s_idx: list[np.ndarray] = []
        self._s_coef: list[np.ndarray] = []
        self._cache = None
        if k == 2:
            G = rng.standard_normal((n, n))
            self.mat[()] = (G + G.T) / 2.0

    def _fresh_mat(self, lam):
        G = self.rng.standard_normal((self.n, self.n))
        A = (G + G.T) / math.sqrt(2.0)
        # no projection here: every use projects with the current frame, which
        # contains the frame at creation
        return math.sqrt(_mfact(lam) / self.kfact) * A

    def add_label(self, t: int, f: np.ndarray, frame: _Frame) -> None:
        """Materialize every multiset containing the new label t (frame already extended)."""
        k = self.k
        s_keys, s_vals = [], []
        for size in (k, k - 1, k - 2):
            if size < 1:
                continue
            r = k - size
            for j in range(1, size + 1):
                for base in itertools.combinations_with_replacement(range(t), size - j):
                    lam = base + (t,) * j
                    rr = r + j
                    if r == 0:
                        if rr == 1:
                            val = float(self.vec[base] @ f)
                        elif rr == 2:
                            val = float(f @ self.mat[base] @ f)
                        else:
                            val = float(self.rng.standard_normal()) * math.sqrt(_mfact(lam) / self.kfact)
                        s_keys.append(lam)
                        s_vals.append(self.kfact / _mfact(lam) * val)
                    elif r == 1:
                        if rr == 2:
                            self.vec[lam] = frame.project_out(self.mat[base] @ f)
                        else:
                            g = self.rng.standard_normal(self.n)
                            self.vec[lam] = math.sqrt(_mfact(lam) / self.kfact) * frame.project_out(g)
                    else:
                        self.mat[lam] = self._fresh_mat(lam)
        if s_keys:
            self._s_idx.append(np.array(s_keys, dtype=np.int64).reshape(len(s_keys), k))
            self._s_coef.append(np.array(s_vals))
        self._cache = None

    def _arrays(self):
        if self._cache is None:
            k = self.k
            if self._s_idx:
                s_idx = np.concatenate(self._s_idx)
                s_coef = np.concatenate(self._s_coef)
                self._s_idx, self._s_coef = [s_idx], [s_coef]
            else:
                s_idx, s_coef = np.zeros((0, k), dtype=np.int64), np.zeros(0)
            vk = list(self.vec)
            v_idx = np.array(vk, dtype=np.int64).reshape(len(vk), k - 1)
            vfact = float(math.factorial(k - 1))
            v_w = np.array([k * vfact / _mfact(l) for l in vk])
            v_stack = np.array([self.vec[l] for l in vk]).reshape(len(vk), self.n)
            mk = list(self.mat)
            m_idx = np.array(mk, dtype=np.int64).reshape(len(mk), max(k - 2, 0))
            mfact = float(math.factorial(k - 2))
            m_w = np.array([k * (k - 1) * mfact / _mfact(l) for l in mk])
            self._cache = (s_idx, s_coef, v_idx, v_w, v_stack, mk, m_idx, m_w)
        return self._cache

    def evaluate(self, c, frame, want_grad, want_hess):
        n, m = self.n, c.size
        s_idx, s_coef, v_idx, v_w, v_stack, mk, m_idx, m_w = self._arrays()
        e, gc, hc = _poly_block(s_idx, s_coef, c, m, want_grad, want_hess)
        grad = hess = None
        F = frame.F
        if want_grad:
            mono = np.prod(c[v_idx], axis=1) if v_idx.shape[0] else np.zeros(0)
            comp = (v_w * mono) @ v_stack if v_stack.shape[0] else np.zeros(n)
            grad = F @ gc + frame.project_out(comp)
        if want_hess:
            hess = F @ hc @ F.T if m else np.zeros((n, n))
            if v_stack.shape[0] and m:
                # J[:, a] = d/dc_a of the complement gradient
                J = np.zeros((n, m))
                V = c[v_idx]
                cols = list(range(self.k - 1))
                for p in cols:
                    w = v_w * np.prod(V[:, cols[:p] + cols[p + 1:]], axis=1)
                    W = np.zeros((v_idx.shape[0], m))
                    W[np.arange(v_idx.shape[0]), v_idx[:, p]] = w
                    J += v_stack.T @ W
                J = frame.project_out(J)
                cross = J @ F.T
                hess += cross + cross.T
            if mk:
                weights = m_w * (np.prod(c[m_idx], axis=1) if m_idx.shape[1] else 1.0)
                M = np.zeros((n, n))
                for w, key in zip(weights, mk):
                    if w != 0.0:
                        M += w * self.mat[key]
                hess += frame.project_both(M)
        return e, grad, hess


def _entry_bytes(entry) -> int:
    return 8 + sum(a.nbytes for a in entry[1:] if a is not None)


class _LazyState:
    def __init__(self, n, mixture, seed):
        self.frame = _Frame(n)
        self.lock = threading.RLock()
        self.cache = OrderedDict()
        self.cache_bytes = 0
        self.parts = {}
        for k, _ in mixture.items():
            ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, k, 0x1A2F])
            self.parts[k] = _LazyDegree(n, k, np.random.default_rng(ss))

    def coords(self, x: np.ndarray) -> np.ndarray:
        fr = self.frame
        scale = float(np.linalg.norm(x))
        if scale == 0.0:
            return np.zeros(fr.F.shape[1])
        r = fr.project_out(x)
        r = fr.project_out(r)
        rn = float(np.linalg.norm(r))
        if rn > 1e-11 * scale:
            f = r / rn
            f = fr.project_out(f)
            f /= np.linalg.norm(f)
            fr.append(f)
            t = len(fr.vectors) - 1
            for part in self.parts.values():
                part.add_label(t, f, fr)
        return fr.F.T @ x


# --- instance ----------------------------------------------------------------


class SpinGlassInstance:
    """Seeded mixed p-spin Hamiltonian on R^n."""

    def __init__(self, n: int, mixture: MixtureSpec, seed: int, storage: str = "dense",
                 memory_budget: int = DEFAULT_MEMORY_BUDGET, max_degree: int = MAX_DEGREE):
        if n < 2:
            raise ValueError("n must be >= 2")
        if storage not in STORAGE_MODES:
            raise ValueError(f"unknown storage mode {storage!r}")
        if mixture.d_h > max_degree:
            raise UnsupportedDegreeError(f"degree {mixture.d_h} exceeds max {max_degree}")
        self.n = int(n)
        self.mixture = mixture
        self.seed = int(seed)
        self.storage = storage
        self.memory_budget = int(memory_budget)
        self._dense = {}
        self._lazy = None
        self.explicit = False
        if storage == "dense":
            for k, _ in mixture.items():
                size = math.comb(n + k - 1, k)
                if size > memory_budget:
                    raise MemoryBudgetError(
                        f"dense degree-{k} storage needs {size} coefficients > budget {memory_budget}")
            for k, _ in mixture.items():
                idx = multisets(n, k)
                self._dense[k] = (idx, _multiset_coeffs(self.seed, k, idx))
        elif storage == "lazy":
            self._lazy = _LazyState(self.n, mixture, self.seed)

    @classmethod
    def from_coefficients(cls, n: int, mixture: MixtureSpec, coeffs: dict) -> "SpinGlassInstance":
        """Dense instance with given multiset coefficients ``{k: (idx, c)}``; missing degrees are zero."""
        inst = cls(n, mixture, 0, "streamed")
        inst.storage = "dense"
        inst.explicit = True
        for k, _ in mixture.items():
            idx, c = coeffs.get(k, (np.zeros((0, k), dtype=np.int64), np.zeros(0)))
            idx = np.sort(np.atleast_2d(np.asarray(idx, dtype=np.int64)).reshape(-1, k), axis=1)
            c = np.asarray(c, dtype=float).reshape(-1)
            if idx.shape[0] != c.size or (idx.size and (idx.min() < 0 or idx.max() >= n)):
                raise ValueError(f"bad coefficient table for degree {k}")
            inst._dense[k] = (idx, c)
        return inst

    # metadata
    def descriptor(self) -> dict:
        return {"n": self.n, "mixture": self.mixture.to_dict(), "seed": self.seed, "storage": self.storage}

    def to_json(self) -> str:
        if self.explicit:
            raise ValueError("explicit-coefficient instances are not described by a seed")
        return json.dumps(self.descriptor(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpinGlassInstance":
        d = json.loads(text)
        mix = MixtureSpec.from_degrees({int(k): v for k, v in d["mixture"].items()})
        return cls(d["n"], mix, d["seed"], d["storage"])

    def coefficients(self, k: int, idx=None):
        """Multiset coefficients c_alpha of degree k (without the gamma sqrt(n) factor)."""
        if self.storage == "lazy":
            raise NotImplementedError("lazy storage has no fixed coordinate coefficients")
        if idx is None:
            idx = multisets(self.n, k)
        idx = np.sort(np.atleast_2d(np.asarray(idx, dtype=np.int64)), axis=1)
        if self.explicit:
            table = {tuple(r): c for r, c in zip(self._dense[k][0].tolist(), self._dense[k][1])} if k in self._dense else {}
            return np.array([table.get(tuple(r), 0.0) for r in idx.tolist()])
        return _multiset_coeffs(self.seed, k, idx)

    def _blocks(self, k):
        if self.storage == "dense":
            yield self._dense[k]
            return
        n = self.n
        if k == 1:
            idx = np.arange(n)[:, None]
            yield idx, _multiset_coeffs(self.seed, k, idx)
            return
        table = _colex_table(n, k - 1)
        for i0 in range(n):
            cnt = math.comb(n - i0 + k - 2, k - 1)
            rest = table[:cnt] + i0
            for s in range(0, cnt, STREAM_BLOCK):
                r = rest[s:s + STREAM_BLOCK]
                idx = np.empty((r.shape[0], k), dtype=np.int64)
                idx[:, 0] = i0
                idx[:, 1:] = r
                yield idx, _multiset_coeffs(self.seed, k, idx)

    def evaluate(self, sigma, want_grad=True, want_hess=True):
        """Return (H, grad H, Hess H) at sigma; unrequested parts are None."""
        x = np.asarray(sigma.coords if isinstance(sigma, Configuration) else sigma, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"sigma must have shape ({self.n},), got {x.shape}")
        n = self.n
        e = 0.0
        g = np.zeros(n) if want_grad else None
        h = np.zeros((n, n)) if want_hess else None
        sqn = math.sqrt(n)
        if self.storage == "lazy":
            st = self._lazy
            key = x.tobytes()
            with st.lock:
                hit = st.cache.get(key)
                if hit is not None and (hit[1] is not None or not want_grad) and (hit[2] is not None or not want_hess):
                    st.cache.move_to_end(key)
                    return (hit[0], None if not want_grad else hit[1].copy(),
                            None if not want_hess else hit[2].copy())
                c = st.coords(x)
                for k, gam in self.mixture.items():
                    ek, gk, hk = st.parts[k].evaluate(c, st.frame, want_grad, want_hess)
                    s = gam * sqn
                    e += s * ek
                    if want_grad:
                        g += s * gk
                    if want_hess:
                        h += s * hk
                if want_hess:
                    h = 0.5 * (h + h.T)
                # repeated queries at the same point must be bitwise stable
                old = st.cache.pop(key, None)
                if old is not None:
                    st.cache_bytes -= _entry_bytes(old)
                entry = (e, None if g is None else g.copy(), None if h is None else h.copy())
                st.cache[key] = entry
                st.cache_bytes += _entry_bytes(entry)
                while st.cache_bytes > LAZY_CACHE_BYTES and len(st.cache) > 1:
                    st.cache_bytes -= _entry_bytes(st.cache.popitem(last=False)[1])
            return e, g, h
        else:
            for k, gam in self.mixture.items():
                s = gam * sqn
                for idx, coef in self._blocks(k):
                    ek, gk, hk = _poly_block(idx, coef, x, n, want_grad, want_hess)
                    e += s * ek
                    if want_grad:
                        g += s * gk
                    if want_hess:
                        h += s * hk
        if want_hess:
            h = 0.5 * (h + h.T)
        return e, g, h

    def energy(self, sigma) -> float:
        return self.evaluate(sigma, False, False)[0]

    def gradient(self, sigma) -> np.ndarray:
        return self.evaluate(sigma, True, False)[1]

    def hessian(self, sigma) -> np.ndarray:
        return self.evaluate(sigma, False, True)[2]

    def __repr__(self):
        return f"SpinGlassInstance(n={self.n}, mixture={self.mixture.to_dict()}, seed={self.seed}, storage={self.storage!r})"


def sample_instance(n: int, mixture: MixtureSpec, seed: int, storage: str = "dense", **kw) -> SpinGlassInstance:
    return SpinGlassInstance(n, mixture, seed, storage, **kw)


def energy(instance, sigma) -> float:
    return instance.energy(sigma)


def gradient(instance, sigma) -> np.ndarray:
    return instance.gradient(sigma)


def hessian(instance, sigma) -> np.ndarray:
    return instance.hessian(sigma)


def complement_basis(exclusions, n: int, gram_tol: float = 1e-12) -> np.ndarray | None:
    """Orthonormal basis of the exclusions' span, or None if empty.

    Raises RankDeficiencyError when the normalized Gram determinant is below ``gram_tol``.
    """
    ex = [np.asarray(v, dtype=float) for v in exclusions]
    if not ex:
        return None
    E = np.column_stack(ex)
    if E.shape[0] != n:
        raise ValueError("exclusion vectors have the wrong length")
    norms = np.linalg.norm(E, axis=0)
    if np.any(norms == 0):
        raise RankDeficiencyError("zero exclusion vector")
    En = E / norms
    if np.linalg.det(En.T @ En) < gram_tol:
        raise RankDeficiencyError("exclusion vectors are numerically dependent")
    Q, _ = np.linalg.qr(En)
    return Q


def projected_hessian(instance, sigma, basis_exclusions=()) -> np.ndarray:
    """P Hess H(sigma) P with P projecting off span(basis_exclusions)."""
    H = instance.hessian(sigma)
    Q = complement_basis(basis_exclusions, instance.n)
    if Q is None:
        return H
    HQ = H @ Q
    out = H - Q @ HQ.T - HQ @ Q.T + Q @ (Q.T @ HQ) @ Q.T
    return 0.5 * (out + out.T)
