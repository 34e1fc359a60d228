import math

import numpy as np
import pytest
import scipy.linalg
from scipy.special import comb

from hessascent.bernstein import (
    BernsteinSpec, SpectrumOverflowError, bernstein_basis, bernstein_scalar, matrix_bernstein,
    projector_gap, ramp, sc_mass_and_correlation,
)
from hessascent.harness import scaled_goe

RAMP = BernsteinSpec.ramp_form(-1.0, 1.0, 0.5, 0.1, 500)


def test_spec_validation():
    with pytest.raises(ValueError):
        BernsteinSpec.ramp_form(0, 1, 0.05, 0.1, 10)
    with pytest.raises(ValueError):
        BernsteinSpec.phi_form(0.3, 10)
    with pytest.raises(ValueError):
        BernsteinSpec.ramp_form(0, 1, 0.5, 0.1, 0)
    assert BernsteinSpec.lipschitz_degree(5.0, 2.0, 0.05) == math.ceil(5 * 8 / (2 * 0.05 ** 3))


def test_partition_of_unity_and_endpoints():
    t = np.linspace(0, 1, 1000)
    for d in (1, 7, 400):
        assert np.abs(bernstein_basis(d, t).sum(axis=-1) - 1).max() <= 1e-12
    xs = np.linspace(-1, 1, 1000)
    assert np.abs(bernstein_scalar(lambda x: np.ones_like(x), RAMP, xs) - 1).max() <= 1e-12
    f = lambda x: np.cos(3 * x)
    assert bernstein_scalar(f, RAMP, -1.0) == pytest.approx(math.cos(-3), abs=1e-14)
    assert bernstein_scalar(None, RAMP, 1.0) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        bernstein_scalar(None, RAMP, 1.5)


def test_generic_matches_direct_sum():
    spec = BernsteinSpec.ramp_form(0.0, 2.0, 1.0, 0.3, 12)
    f = lambda x: np.sin(x) + x ** 2
    for x in (0.0, 0.4, 1.3, 2.0):
        t = x / 2.0
        direct = sum(f(2.0 * i / 12) * comb(12, i) * t ** i * (1 - t) ** (12 - i) for i in range(13))
        assert bernstein_scalar(f, spec, x) == pytest.approx(direct, abs=1e-13)
    # closed-form ramp path equals the generic weighted sum
    xs = np.linspace(0, 2, 37)
    np.testing.assert_allclose(bernstein_scalar(None, spec, xs),
                               bernstein_scalar(lambda x: ramp(spec, x), spec, xs), atol=1e-13)


def test_ramp_pieces():
    assert ramp(RAMP, 0.3) == 0.0 and ramp(RAMP, -1.0) == 0.0
    assert ramp(RAMP, 0.6) == 1.0 and ramp(RAMP, 1.0) == 1.0
    assert ramp(RAMP, 0.5) == pytest.approx(0.5)
    phi = 0.1
    ps = BernsteinSpec.phi_form(phi, 10)
    assert ramp(ps, 1 - phi + phi ** 2 / 2) == pytest.approx(0.5, abs=1e-12)
    assert ps.lipschitz == pytest.approx(1 / phi ** 2)


def test_lipschitz_degree_sup_error():
    eps = 0.05
    deg = BernsteinSpec.lipschitz_degree(1 / (2 * 0.1), 2.0, eps)
    spec = BernsteinSpec.ramp_form(-1, 1, 0.5, 0.1, deg)
    xs = np.linspace(-1, 1, 10_000)
    err = np.abs(bernstein_scalar(None, spec, xs) - ramp(spec, xs))
    assert err.max() <= eps
    # monotone target stays monotone up to eps
    b = bernstein_scalar(None, spec, xs)
    assert np.min(np.diff(b)) >= -eps


def test_matrix_bernstein_eigenwise():
    lam = np.array([-0.9, 0.1, 0.45, 0.55, 0.8])
    B = matrix_bernstein(np.diag(lam), RAMP)
    np.testing.assert_allclose(np.diag(B), bernstein_scalar(None, RAMP, lam), atol=1e-13)
    assert np.abs(B - np.diag(np.diag(B))).max() <= 1e-13
    np.testing.assert_allclose(matrix_bernstein(np.eye(4), RAMP), np.eye(4), atol=1e-10)
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    np.testing.assert_allclose(matrix_bernstein(Q @ np.diag(lam) @ Q.T, RAMP), Q @ B @ Q.T, atol=1e-9)
    with pytest.raises(SpectrumOverflowError):
        matrix_bernstein(np.diag([0.0, 1.2]), RAMP, buffer=0.1)


def test_goe_psd_and_contraction():
    M = scaled_goe(300, np.random.default_rng(1))
    deg = BernsteinSpec.lipschitz_degree(1 / (2 * 0.1), 2.0, 0.05)
    spec = BernsteinSpec.ramp_form(-1, 1, 0.5, 0.1, deg)
    w = scipy.linalg.eigvalsh(matrix_bernstein(M, spec))
    assert w[0] >= -1e-8 and np.abs(w).max() <= 1 + 1e-8
    gap = projector_gap(M, spec)
    assert gap.within_bound


def test_projector_gap_constructed():
    n = 50
    eps = 0.05
    deg = BernsteinSpec.lipschitz_degree(1 / (2 * 0.1), 2.0, eps)
    spec = BernsteinSpec.ramp_form(-1, 1, 0.5, 0.1, deg)
    # all eigenvalues in the ramp = 1 region
    lam = np.linspace(0.62, 0.95, n)
    g = projector_gap(np.diag(lam), spec)
    assert g.gap <= eps * math.sqrt(n) / (g.delta_prime * n)
    # a spectral gap straddling (alpha - gamma, alpha + gamma)
    lam = np.concatenate([np.linspace(-0.9, 0.2, 40), np.linspace(0.75, 0.95, 10)])
    g = projector_gap(np.diag(lam), spec)
    assert g.delta_prime == pytest.approx(0.2)
    assert g.gap <= g.bound
    with pytest.raises(ValueError):
        projector_gap(np.diag(np.linspace(-0.9, 0.2, 10)), spec)


def test_sc_mass_limits_and_bounds():
    eps = 0.01
    # fixed degree, phi -> 0: the ramp support vanishes, only a smoothing residual below eps remains
    masses = [sc_mass_and_correlation(BernsteinSpec.phi_form(p, 200), eps, lift_degree=False) for p in (1e-2, 1e-3, 1e-4)]
    assert masses[-1].ramp_mass < 1e-6
    assert all(m.quadrature_mass <= eps for m in masses)
    assert abs(masses[-1].quadrature_mass - masses[-2].quadrature_mass) <= 1e-10
    r = sc_mass_and_correlation(BernsteinSpec.phi_form(0.05, 1), eps)
    assert r.degree == BernsteinSpec.lipschitz_degree(1 / 0.05 ** 2, 2.0, eps)
    assert r.quadrature_mass <= r.mass_upper
    assert r.correlation_lower <= r.quadrature_correlation <= r.correlation_upper
    assert r.ratio >= 1 - 20 * 0.05 - 2 * eps
    with pytest.raises(ValueError):
        sc_mass_and_correlation(RAMP, eps)
