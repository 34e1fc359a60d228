import math

import numpy as np
import pytest

from hessascent.hermite import DegreeCapError
from hessascent.momentrep import (
    MatrixRep, canonical_rep, gaussian_moment_matrix, gaussian_moment_rep, holder_moment_bound,
    mode_symmetrize, nuclear_bound, nuclear_norm, op_norm, pairing, polynomial_expectation, random_form,
    strong_convexity_check, strong_convexity_slack,
)


def _psd(n, rng):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + 0.1 * np.eye(n)


def _sq_norm_poly(n, power=1):
    # (x_1^2 + ... + x_n^2)^power as an exponent map
    from itertools import combinations_with_replacement
    from math import factorial
    out = {}
    for combo in combinations_with_replacement(range(n), power):
        e = [0] * n
        for i in combo:
            e[i] += 2
        mult = factorial(power) // math.prod(factorial(combo.count(i)) for i in set(combo))
        out[tuple(e)] = out.get(tuple(e), 0.0) + mult
    return out


def test_canonical_examples():
    np.testing.assert_allclose(canonical_rep(_sq_norm_poly(3), 2, 3).data, np.eye(3))
    np.testing.assert_allclose(canonical_rep({(1, 1): 1.0}, 2, 2).data, [[0, 0.5], [0.5, 0]])
    rep = canonical_rep({(3, 0): 1.0}, 3, 2)
    assert (rep.row_arity, rep.col_arity) == (1, 2)
    with pytest.raises(ValueError):
        canonical_rep({(2, 1): 1.0}, 2, 2)
    with pytest.raises(MemoryError):
        canonical_rep({}, 6, 20)


@pytest.mark.parametrize("eta", [2, 4, 6])
def test_pairing_contract(eta):
    rng = np.random.default_rng(eta)
    n = 3
    S = _psd(n, rng)
    p = random_form(n, eta, rng)
    M = canonical_rep(p, eta, n)
    want = polynomial_expectation(p, S)
    assert pairing(M, gaussian_moment_matrix(S, eta)) == pytest.approx(want, abs=1e-10 * max(1, abs(want)))
    assert pairing(M, gaussian_moment_rep(S, eta)) == pytest.approx(want, abs=1e-10 * max(1, abs(want)))


def test_mode_symmetrize():
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    A = mode_symmetrize(MatrixRep(np.outer(u, v), 1, 1, 4))
    B = mode_symmetrize(MatrixRep(np.outer(v, u), 1, 1, 4))
    np.testing.assert_allclose(A.data, (np.outer(u, v) + np.outer(v, u)) / 2, atol=1e-15)
    np.testing.assert_allclose(A.data, B.data, atol=1e-15)
    T = MatrixRep(rng.standard_normal((9, 9)), 2, 2, 3)
    U = MatrixRep(rng.standard_normal((9, 9)), 2, 2, 3)
    sT = mode_symmetrize(T)
    np.testing.assert_allclose(mode_symmetrize(sT).data, sT.data, atol=1e-12)
    assert pairing(sT, U) == pytest.approx(pairing(T, mode_symmetrize(U)), abs=1e-12)
    t = sT.tensor()
    for p in [(1, 0, 3, 2), (3, 2, 1, 0), (2, 0, 1, 3)]:
        np.testing.assert_allclose(np.transpose(t, p), t, atol=1e-12)
    with pytest.raises(DegreeCapError):
        mode_symmetrize(MatrixRep(np.zeros((2 ** 5, 2 ** 4)), 5, 4, 2))


def test_gaussian_moment_rep():
    rng = np.random.default_rng(2)
    S = _psd(3, rng)
    V2 = gaussian_moment_rep(S, 2)
    np.testing.assert_allclose(V2.data, S)
    assert nuclear_norm(V2) == pytest.approx(np.trace(S))
    V4 = gaussian_moment_rep(S, 4)
    assert nuclear_norm(V4) == pytest.approx(3 * np.sum(S * S))
    assert np.abs(mode_symmetrize(V4).data - gaussian_moment_matrix(S, 4).data).max() <= 1e-12
    V6 = gaussian_moment_rep(S, 6)
    assert nuclear_norm(V6) == pytest.approx(15 * np.sum(S * S) * np.trace(S))
    assert nuclear_norm(gaussian_moment_rep(2.5 * S, 4)) == pytest.approx(2.5 ** 2 * nuclear_norm(V4))
    n = 4
    nn = nuclear_norm(gaussian_moment_rep(np.eye(n) / n, 4))
    assert nn == pytest.approx(3 / n)
    assert nn <= nuclear_bound([4], [1.0], 4, n)
    with pytest.raises(DegreeCapError):
        gaussian_moment_rep(S, 10)


def test_norms():
    assert nuclear_norm(np.eye(5)) == pytest.approx(5) and op_norm(np.eye(5)) == pytest.approx(1)
    rng = np.random.default_rng(3)
    u, v = rng.standard_normal(6), rng.standard_normal(4)
    r1 = np.outer(u, v)
    assert nuclear_norm(r1) == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    assert op_norm(r1) == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    M = rng.standard_normal((20, 20))
    assert nuclear_norm(M) >= op_norm(M) and nuclear_norm(M) >= np.linalg.norm(M)


def test_holder_bound():
    rng = np.random.default_rng(4)
    S = _psd(4, rng)
    r = holder_moment_bound(_sq_norm_poly(4), S, 2)
    assert r.lhs == pytest.approx(np.trace(S)) and r.op == pytest.approx(1.0)
    assert r.slack == pytest.approx(0.0, abs=1e-12) and r.holds
    n = 8
    r = holder_moment_bound(random_form(n, 4, rng), np.eye(n) / n, 4, strict=True)
    assert r.holds and r.slack >= 0
    r = holder_moment_bound(_sq_norm_poly(n, 2), np.eye(n) / n, 4)
    assert r.lhs == pytest.approx(1 + 2 / n, abs=1e-12)
    assert r.holds
    with pytest.raises(DegreeCapError):
        holder_moment_bound({}, np.eye(11), 2)


def test_two_step_nuclear_sanity():
    # sigma = v1 + v2, v1 ~ N(0, S1), v2 | v1 ~ N(0, S2(v1)) with S2 quadratic in v1
    rng = np.random.default_rng(5)
    n, d = 3, 2
    S1 = np.eye(n) / n
    A = rng.standard_normal((n, n)) * 0.3
    # E[sigma sigma^T] = S1 + E[S2(v1)] with S2(v1) = (A v1)(A v1)^T + I/n
    cov = S1 + A @ S1 @ A.T + np.eye(n) / n
    V = gaussian_moment_rep(cov, 2)
    X = rng.multivariate_normal(np.zeros(n), S1, size=200_000)
    Y = X @ A.T
    exact = S1 + Y.T @ Y / X.shape[0] + np.eye(n) / n
    assert np.abs(exact - V.data).max() <= 5e-3
    single = nuclear_bound([2], [1.0], d, n)
    assert nuclear_norm(V) <= 2 ** d * 2 ** 3 * n ** 0.5 * single


def test_strong_convexity():
    assert strong_convexity_slack(1, 10.0) == pytest.approx(0.0, abs=1e-9)
    assert strong_convexity_check(1, 10.0)
    assert strong_convexity_check(2, 10.0, 50)
    assert strong_convexity_check(3, 100.0, 50)
    with pytest.raises(ValueError):
        strong_convexity_slack(0, 10.0)
