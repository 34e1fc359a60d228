import math

import numpy as np
import pytest

from hessascent.hamiltonian import (
    Configuration, MemoryBudgetError, RankDeficiencyError, SpinGlassInstance, UnsupportedDegreeError,
    energy, gradient, hashed_normals, hessian, multisets, projected_hessian, sample_instance,
)
from hessascent.mixture import MixtureSpec, nu

MIX = MixtureSpec.from_degrees({2: 1.0, 3: 0.7, 4: 0.5})


def _sphere(rng, n, r=1.0):
    x = rng.standard_normal(n)
    return r * x / np.linalg.norm(x)


def test_dense_coefficient_count():
    inst = sample_instance(3, MixtureSpec.from_degrees({2: 1.0}), 0, "dense")
    idx, c = inst._dense[2]
    assert idx.shape == (6, 2) and c.shape == (6,)
    assert len(multisets(3, 2)) == math.comb(4, 2)


def test_coefficients_deterministic():
    a = sample_instance(5, MIX, 11, "dense")
    b = sample_instance(5, MIX, 11, "streamed")
    for k in (2, 3, 4):
        np.testing.assert_array_equal(a.coefficients(k), b.coefficients(k))
        np.testing.assert_array_equal(a.coefficients(k), a.coefficients(k))
    idx = np.array([[0, 1, 2]])
    assert a.coefficients(3, idx)[0] == a.coefficients(3, np.array([[2, 0, 1]]))[0]
    assert not np.array_equal(hashed_normals(1, 3, idx), hashed_normals(2, 3, idx))


def test_storage_modes_agree():
    rng = np.random.default_rng(0)
    n = 7
    dense = sample_instance(n, MIX, 3, "dense")
    streamed = sample_instance(n, MIX, 3, "streamed")
    for _ in range(100):
        x = rng.standard_normal(n)
        e1, g1, h1 = dense.evaluate(x)
        e2, g2, h2 = streamed.evaluate(x)
        scale = max(1.0, abs(e1))
        assert abs(e1 - e2) <= 1e-12 * scale
        np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-12 * max(1.0, np.abs(g1).max()))
        np.testing.assert_allclose(h1, h2, rtol=0, atol=1e-12 * max(1.0, np.abs(h1).max()))


def test_variance_oracle():
    # E_g H(e1)^2 = n nu(1) = n sum gamma_k^2
    n, reps = 3, 10_000
    e1 = np.eye(n)[0]
    vals = np.array([sample_instance(n, MIX, s, "dense").energy(e1) for s in range(reps)])
    target = n * sum(g * g for _, g in MIX.items())
    var = vals.var()
    se = np.sqrt(np.mean((vals ** 2 - np.mean(vals ** 2)) ** 2) / reps)
    assert abs(var - target) <= 5 * se
    assert abs(vals.mean()) <= 5 * vals.std() / np.sqrt(reps)


def test_second_moment_off_axis():
    n, reps = 3, 4000
    rng = np.random.default_rng(5)
    x = _sphere(rng, n, math.sqrt(0.6))
    vals = np.array([sample_instance(n, MIX, 100 + s, "dense").energy(x) for s in range(reps)])
    se = np.std(vals ** 2) / np.sqrt(reps)
    assert abs(np.mean(vals ** 2) - n * nu(MIX, 0.6)) <= 3 * se


def test_energy_at_origin_and_explicit_instance():
    for storage in ("dense", "streamed", "lazy"):
        assert sample_instance(6, MIX, 1, storage).energy(np.zeros(6)) == 0.0
    inst = SpinGlassInstance.from_coefficients(2, MixtureSpec.from_degrees({2: 1.0}),
                                               {2: (np.array([[0, 1]]), np.array([1.0]))})
    x = np.array([0.3, -0.8])
    assert inst.energy(x) == pytest.approx(math.sqrt(2) * 0.3 * -0.8, abs=1e-15)
    H = inst.hessian(x)
    assert H[0, 1] == pytest.approx(math.sqrt(2), abs=1e-15)
    assert H[0, 0] == 0.0 and H[1, 1] == 0.0
    with pytest.raises(ValueError):
        inst.to_json()


@pytest.mark.parametrize("storage", ["dense", "lazy"])
def test_gradient_finite_differences(storage):
    rng = np.random.default_rng(2)
    n, h = 8, 1e-5
    inst = sample_instance(n, MIX, 9, storage)
    worst = 0.0
    for _ in range(20):
        x = _sphere(rng, n)
        g = inst.gradient(x)
        fd = np.array([(inst.energy(x + h * e) - inst.energy(x - h * e)) / (2 * h) for e in np.eye(n)])
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    assert worst <= 1e-6


def test_hessian_finite_differences():
    rng = np.random.default_rng(3)
    n, h = 6, 1e-5
    inst = sample_instance(n, MIX, 4, "dense")
    x = _sphere(rng, n)
    H = inst.hessian(x)
    fd = np.column_stack([(inst.gradient(x + h * e) - inst.gradient(x - h * e)) / (2 * h) for e in np.eye(n)])
    assert np.abs(fd - H).max() <= 1e-6 * np.abs(H).max()
    assert np.abs(H - H.T).max() <= 1e-12 * np.abs(H).max()


@pytest.mark.parametrize("k", [2, 3, 5])
def test_homogeneity_and_euler(k):
    rng = np.random.default_rng(k)
    inst = sample_instance(6, MixtureSpec.from_degrees({k: 1.3}), 21, "dense")
    x = rng.standard_normal(6)
    e = inst.energy(x)
    assert inst.energy(2.0 * x) == pytest.approx(2.0 ** k * e, rel=1e-12)
    assert x @ inst.gradient(x) == pytest.approx(k * e, rel=1e-10)


def test_lazy_queries_are_stable():
    rng = np.random.default_rng(8)
    inst = sample_instance(40, MIX, 5, "lazy")
    xs = [_sphere(rng, 40) for _ in range(4)]
    first = [inst.evaluate(x) for x in xs]
    again = [inst.evaluate(x) for x in xs]
    for (e1, g1, h1), (e2, g2, h2) in zip(first, again):
        assert e1 == e2
        np.testing.assert_array_equal(g1, g2)
        np.testing.assert_array_equal(h1, h2)
    with pytest.raises(NotImplementedError):
        inst.coefficients(2)


def test_module_functions_and_errors():
    inst = sample_instance(4, MIX, 0)
    x = np.array([0.5, 0.5, 0.5, 0.5])
    assert energy(inst, x) == inst.energy(x)
    np.testing.assert_array_equal(gradient(inst, x), inst.gradient(x))
    np.testing.assert_array_equal(hessian(inst, x), inst.hessian(x))
    with pytest.raises(ValueError):
        inst.energy(np.ones(3))
    with pytest.raises(MemoryBudgetError):
        sample_instance(200, MixtureSpec.from_degrees({4: 1.0}), 0, "dense")
    with pytest.raises(UnsupportedDegreeError):
        sample_instance(4, MixtureSpec.from_degrees({9: 1.0}), 0)
    with pytest.raises(ValueError):
        sample_instance(1, MIX, 0)
    back = SpinGlassInstance.from_json(inst.to_json())
    assert back.energy(x) == inst.energy(x)
    c = Configuration.of(x)
    assert c.sq_norm == pytest.approx(float(x @ x), rel=1e-12)


def test_projected_hessian():
    rng = np.random.default_rng(4)
    n = 6
    inst = sample_instance(n, MIX, 2)
    s = _sphere(rng, n)
    np.testing.assert_array_equal(projected_hessian(inst, s, []), inst.hessian(s))
    e1 = np.eye(n)[0]
    P1 = projected_hessian(inst, s, [e1])
    assert np.abs(P1[0]).max() <= 1e-12 and np.abs(P1[:, 0]).max() <= 1e-12
    ex = [rng.standard_normal(n), rng.standard_normal(n)]
    PH = projected_hessian(inst, s, ex)
    Q, _ = np.linalg.qr(np.column_stack(ex))
    P = np.eye(n) - Q @ Q.T
    H = inst.hessian(s)
    for _ in range(5):
        x = rng.standard_normal(n)
        assert x @ PH @ x == pytest.approx((P @ x) @ H @ (P @ x), rel=1e-10, abs=1e-12)
    with pytest.raises(RankDeficiencyError):
        projected_hessian(inst, s, [e1, 2 * e1])
