import numpy as np
import pytest

from hessascent.ensembles import build_ensemble, compare_ascent


def _unit(rng, n):
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


@pytest.mark.parametrize("kind,n", [("degree_scaling", 16), ("direct_sum", 16), ("shared_sum", 12)])
def test_sphere_agreement(kind, n):
    ens = build_ensemble(kind, None, n, 3)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = _unit(rng, n)
        a, b = ens.raw.energy(x), ens.extended.energy(x)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


@pytest.mark.parametrize("kind,n", [("degree_scaling", 10), ("direct_sum", 10), ("shared_sum", 10)])
def test_derivatives_finite_differences(kind, n):
    ens = build_ensemble(kind, {"power": 6} if kind == "degree_scaling" else None, n, 1, "dense")
    rng = np.random.default_rng(1)
    h = 1e-5
    for ev in (ens.raw, ens.extended):
        x = 0.9 * _unit(rng, n)
        g, H = ev.gradient(x), ev.hessian(x)
        fd = np.array([(ev.energy(x + h * e) - ev.energy(x - h * e)) / (2 * h) for e in np.eye(n)])
        assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)
        fdh = np.column_stack([(ev.gradient(x + h * e) - ev.gradient(x - h * e)) / (2 * h) for e in np.eye(n)])
        assert np.abs(fdh - H).max() <= 1e-6 * np.abs(H).max()


def test_alpha2_zero_control():
    ens = build_ensemble("degree_scaling", {"alpha2": 0.0}, 16, 0)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.standard_normal(16)
        assert ens.raw.energy(x) == ens.extended.energy(x)
        np.testing.assert_array_equal(ens.raw.hessian(x), ens.extended.hessian(x))


def test_degree_scaling_small_sigma():
    # the raw degree-2 contribution carries ||sigma||^power and vanishes against its extension
    ens = build_ensemble("degree_scaling", {"alpha2": 3.0}, 16, 4)
    H4 = ens.components["H4"]
    rng = np.random.default_rng(3)
    for r2 in (0.1, 0.05, 0.01):
        x = np.sqrt(r2) * _unit(rng, 16)
        h4 = H4.evaluate(x)[2]
        raw2 = ens.raw.hessian(x) - h4
        ext2 = ens.extended.hessian(x) - h4
        assert np.linalg.norm(raw2, 2) <= np.sqrt(r2) ** 50 * np.linalg.norm(ext2, 2)


def test_projector_and_direct_sum_blocks():
    n = 16
    ens = build_ensemble("direct_sum", None, n, 5)
    P = ens.projector
    np.testing.assert_array_equal(P @ P, P)
    np.testing.assert_array_equal(P, P.T)
    assert np.trace(P) == n // 2
    rng = np.random.default_rng(4)
    x = P @ rng.standard_normal(n)
    H2 = ens.components["H2"]
    assert ens.raw.energy(x) == pytest.approx(ens.params["alpha2"] * H2.evaluate(x)[0], rel=1e-12)
    y = rng.standard_normal(n)
    H = ens.raw.hessian(y)
    Pp = np.eye(n) - P
    assert np.linalg.norm(P @ H @ Pp) <= 1e-10 * np.linalg.norm(H)
    assert build_ensemble("degree_scaling", None, n, 0).projector is None


def test_build_errors_and_determinism():
    with pytest.raises(ValueError):
        build_ensemble("direct_sum", None, 15, 0)
    with pytest.raises(ValueError):
        build_ensemble("direct_sum", {"alpha6": 1.0}, 16, 0)
    with pytest.raises(ValueError):
        build_ensemble("degree_scaling", {"alpha2": -1.0}, 16, 0)
    with pytest.raises(ValueError):
        build_ensemble("nope", None, 16, 0)
    with pytest.raises(ValueError):
        build_ensemble("shared_sum", None, 60, 0)
    x = np.random.default_rng(5).standard_normal(16)
    assert build_ensemble("direct_sum", None, 16, 9).raw.energy(x) == build_ensemble("direct_sum", None, 16, 9).raw.energy(x)
    assert build_ensemble("direct_sum", None, 16, 9).raw.energy(x) != build_ensemble("direct_sum", None, 16, 10).raw.energy(x)


def test_compare_ascent_small():
    ens = build_ensemble("degree_scaling", {"alpha2": 0.0}, 40, 0)
    rec = compare_ascent(ens, 5, 0.1, range(5))
    assert all(rec.identical)
    assert rec.ci_low == rec.ci_high == 0.0
    ens = build_ensemble("direct_sum", None, 40, 0)
    a = compare_ascent(ens, 5, 0.1, range(5))
    b = compare_ascent(ens, 5, 0.1, range(5))
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert len(a.raw_occupancy) == 5 and len(a.raw_occupancy[0]) == 5
    assert a.to_csv().count("\n") == 6
    with pytest.raises(ValueError):
        compare_ascent(ens, 5, 0.1, range(4))
