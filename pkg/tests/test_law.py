import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_limits.engine import sample_stationary
from affine_limits.errors import RegimeError
from affine_limits.groups import BlockStructure
from affine_limits.law import (C_2plus, C_alpha_direct, C_alpha_via_delta, Regime, _restricted_covariance,
                               build_limit_law, centering_schedule, classify_regime, covariance_q,
                               exponent_2plus, phi, stability_check, via_delta_factor, xi)
from affine_limits.measure import mu_from_dict, scalar_atoms
from conftest import SEED, spec


@pytest.mark.parametrize("alpha,regime", [(0.5, Regime.ALPHA_LT1), (1.0, Regime.ALPHA_EQ1),
                                          (1.5, Regime.ALPHA_1TO2), (2.0, Regime.ALPHA_EQ2),
                                          (3.0, Regime.ALPHA_GT2)])
def test_regime_classification(alpha, regime):
    assert classify_regime(alpha, BlockStructure()) is regime


def test_mixed_regime_and_boundary():
    assert classify_regime(3.0, BlockStructure((1.0, 2.0), (1, 1))) is Regime.MIXED_T3
    with pytest.raises(RegimeError):
        classify_regime(3.0, BlockStructure((1.0, 1.5), (1, 1)))


def test_normal_exponent_closed_form():
    q, z = np.array([[6.0]]), np.array([[2 / 3]])
    assert exponent_2plus(np.array([1.0]), q, z) == pytest.approx(-15.0, abs=1e-12)
    assert C_2plus(np.array([1.0]), q, z, np.array([3.0])) == pytest.approx(-19.5, abs=1e-12)


def test_alpha3_law_is_exact(alpha3_law):
    assert alpha3_law.regime is Regime.ALPHA_GT2
    assert alpha3_law.q[0, 0] == pytest.approx(6.0, abs=1e-12)
    assert phi(np.array([1.0]), alpha3_law) == pytest.approx(math.exp(-15.0), rel=1e-12)
    with pytest.raises(RegimeError):
        C_alpha_direct(np.array([1.0]), alpha3_law)


def test_empirical_covariance():
    R = sample_stationary(spec("alpha3_lattice"), 10**5, seed=SEED, alpha=3.0)
    q, se = covariance_q(R)
    assert abs(q[0, 0] - 6.0) <= 3 * se[0, 0]


def test_centering_alpha3(alpha3_law):
    sch = centering_schedule(alpha3_law, [100, 2000])
    assert np.allclose(sch.factors[:, 0], [0.1, 1 / math.sqrt(2000)])
    assert np.allclose(sch.shift[:, 0], [30.0, 3 * math.sqrt(2000)])


def test_centering_half_lattice(half_law):
    sch = centering_schedule(half_law, [4, 5, 8, 11, 16, 22, 7])
    assert np.allclose(sch.scale[:6], 2.0 ** -np.arange(4, 10))
    assert list(sch.exact) == [True] * 6 + [False]
    assert np.all(sch.shift == 0)


def test_centering_alpha2_rounds_to_lattice(alpha2_law):
    sch = centering_schedule(alpha2_law, [256])
    k = -math.log2(sch.scale[0])
    assert k == round(k) and not sch.exact[0]
    assert sch.shift[0, 0] == pytest.approx(sch.scale[0] * 256 * 5.0)


def test_hermitian_symmetry(half_law):
    for v in (0.7, 1.0, 3.0):
        a = C_alpha_direct(np.array([v]), half_law).value
        b = C_alpha_direct(np.array([-v]), half_law).value
        assert a == np.conj(b)


def test_nondegenerate_real_part(half_law):
    for v in (-4.0, -0.5, 0.25, 1.0, 6.0):
        assert C_alpha_direct(np.array([v]), half_law).value.real < 0


def test_lattice_homogeneity(half_law):
    c1 = C_alpha_direct(np.array([1.0]), half_law)
    c4 = C_alpha_direct(np.array([4.0]), half_law)
    assert abs(c4.value - 2.0 * c1.value) <= 0.10 * abs(c4.value)


def test_semistability_along_half(half_law):
    rep = stability_check(half_law, 0.5, np.array([[-2.0], [-1.0], [0.5], [1.0], [2.0]]))
    assert rep.residual < 0.10


def test_via_delta_matches_direct_half(half_law):
    for v in (1.0, -2.0):
        a = C_alpha_direct(np.array([v]), half_law)
        b = C_alpha_via_delta(np.array([v]), half_law)
        assert abs(a.value - b.value) <= 0.10 * abs(b.value)


def test_via_delta_factor_lattice(half_law):
    p = 2.0
    assert via_delta_factor(half_law) == pytest.approx(half_law.m_alpha * (1 - p ** -0.5) / math.log(p))


def test_alpha2_closed_form_and_quadratic(alpha2_law):
    # one-dimensional positive chain: Sigma_2 = 2 C_+ with C_+ = E[2 M R + 1] / (2 m_alpha)
    target = -81.0 / (4.0 * alpha2_law.m_alpha)
    c1 = C_alpha_direct(np.array([1.0]), alpha2_law).value
    assert abs(c1.real - target) <= 0.05 * abs(target)
    c3 = C_alpha_direct(np.array([3.0]), alpha2_law).value
    assert c3 == pytest.approx(9.0 * c1, rel=1e-12)


def test_alpha2_cross_formula(alpha2_law):
    a = C_alpha_direct(np.array([1.0]), alpha2_law)
    b = C_alpha_via_delta(np.array([1.0]), alpha2_law)
    assert abs(a.value - b.value) <= 0.10 * abs(b.value)


@pytest.fixture(scope="module")
def dense_half_law():
    return build_limit_law(spec("alpha_half_dense"), N=3 * 10**5, seed=SEED)


def test_dense_homogeneity(dense_half_law):
    c1 = C_alpha_direct(np.array([1.0]), dense_half_law).value
    for t in (0.37, 2.9):
        ct = C_alpha_direct(np.array([t]), dense_half_law).value
        assert abs(ct - t ** 0.5 * c1) <= 0.10 * abs(ct)


def test_dense_symmetric_law_is_real(dense_half_law):
    # translations +-1 with equal weights: the limit law is symmetric
    c = C_alpha_direct(np.array([1.0]), dense_half_law)
    assert abs(c.value.imag) <= 0.05 * abs(c.value.real)


def test_xi_vanishes_for_symmetric_chain():
    mu = scalar_atoms([(1 / 6, 2.0, 1.0), (1 / 6, 2.0, -1.0), (1 / 3, 0.5, 1.0), (1 / 3, 0.5, -1.0)])
    R = sample_stationary(mu, 2 * 10**5, seed=7, alpha=1.0)
    for c in (0.5, 0.05, 0.005):
        m, se = xi(c, R)
        assert abs(m[0]) <= 3 * se[0]


def test_xi_log_bound():
    R = sample_stationary(spec("alpha1_lattice"), 4 * 10**5, seed=8, alpha=1.0)
    cs = 2.0 ** -np.arange(2, 11)
    ratios = np.array([abs(xi(c, R)[0][0]) / (c * abs(math.log(c))) for c in cs])
    assert ratios.max() <= 2.0 * np.median(ratios)


def test_mixed_law_product_form():
    mu = spec("mixed_blocks")
    law = build_limit_law(mu, N=2 * 10**5, seed=SEED)
    assert law.regime is Regime.MIXED_T3
    assert list(law.gaussian_mask) == [True, False]
    g = law.C(np.array([0.3, 0.0]))
    assert g == pytest.approx(exponent_2plus(np.array([0.3]), law.q, law.z), abs=1e-14)
    sch = centering_schedule(law, [256])
    assert sch.factors[0, 0] == pytest.approx(1 / 16)
    assert sch.factors[0, 1] == pytest.approx((2.0 ** -math.floor(math.log2(256) / 3)) ** 2)
    assert law.C(np.array([0.0, 0.5])).real < 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.15), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi),
       st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_covariance_symmetric_psd(p, a1, a2, q):
    mu = mu_from_dict({"dimension": 2, "atoms": [
        {"prob": p, "scale": 2.0, "rotation": a1, "translation": q[:2]},
        {"prob": 1 - p, "scale": 0.5, "rotation": a2, "translation": q[2:]}]})
    _, _, cov = _restricted_covariance(mu, np.ones(2, bool))
    assert np.allclose(cov, cov.T, atol=1e-12 * max(1.0, np.abs(cov).max()))
    assert np.linalg.eigvalsh(cov).min() >= -1e-10 * max(1.0, np.abs(cov).max())
