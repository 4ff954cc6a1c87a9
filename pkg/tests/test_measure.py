import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_limits.errors import HypothesisError, InputError
from affine_limits.measure import (kappa, load_config, load_mu, m_alpha, mean_operator_and_mean, mu_from_dict,
                                   mu_to_dict, require_hypothesis, scalar_atoms, solve_alpha,
                                   solve_weight_for_alpha, stationary_covariance, two_atom, validate_hypothesis_H)
from affine_limits.engine import sample_stationary
from conftest import spec

LN2 = math.log(2.0)
MIXTURES = [((1 / 9, 2.0, 0.5), 3.0, 7 / 9 * LN2),
            ((1 / 3, 2.0, 0.5), 1.0, 1 / 3 * LN2),
            ((1 / 5, 2.0, 0.5), 2.0, 3 / 5 * LN2),
            ((math.sqrt(2) - 1, 2.0, 0.5), 0.5, None)]


@pytest.mark.parametrize("args,alpha,m", MIXTURES)
def test_solve_alpha_and_m_alpha(args, alpha, m):
    mu = two_atom(*args)
    a = solve_alpha(mu)
    assert a == pytest.approx(alpha, abs=1e-12)
    assert abs(kappa(mu, a) - 1.0) <= 1e-12
    if m is not None:
        assert m_alpha(mu, a) == pytest.approx(m, abs=1e-12)


def test_kappa_closed_forms():
    assert kappa(two_atom(0.2, 2.0, 0.5), 2.0) == pytest.approx(1.0, abs=1e-15)
    assert kappa(two_atom(1 / 9, 2.0, 0.5), 3.0) == pytest.approx(1.0, abs=1e-15)
    assert kappa(two_atom(1 / 9, 2.0, 0.5), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_mean_operator_and_mean():
    z, m = mean_operator_and_mean(two_atom(1 / 9, 2.0, 0.5), 3.0)
    assert z[0, 0] == pytest.approx(2 / 3, abs=1e-15) and m[0] == pytest.approx(3.0, abs=1e-14)
    z, m = mean_operator_and_mean(two_atom(0.2, 2.0, 0.5), 2.0)
    assert z[0, 0] == pytest.approx(0.8, abs=1e-15) and m[0] == pytest.approx(5.0, abs=1e-13)


def test_stationary_covariance_closed_form():
    assert stationary_covariance(two_atom(1 / 9, 2.0, 0.5), 3.0)[0, 0] == pytest.approx(6.0, abs=1e-12)


def test_fixed_point_checks():
    assert validate_hypothesis_H(scalar_atoms([(0.5, 2.0, 1.0), (0.5, 0.5, 1.0)])).fixed_point_free
    rep = validate_hypothesis_H(scalar_atoms([(0.5, 2.0, -1.0), (0.5, 0.5, 0.5)]))
    assert not rep.fixed_point_free and not rep.ok


def test_single_contracting_atom_has_no_alpha():
    mu = scalar_atoms([(1.0, 0.5, 1.0)])
    assert not validate_hypothesis_H(mu).ok
    with pytest.raises(HypothesisError):
        require_hypothesis(mu)


def test_weight_solve_dense_half():
    p = solve_weight_for_alpha(2.0, 1 / 3, 0.5)
    assert p * math.sqrt(2) + (1 - p) / math.sqrt(3) == pytest.approx(1.0, abs=1e-15)


def test_closed_form_probability_strings():
    mu = mu_from_dict({"atoms": [{"prob": "sqrt(2)-1", "scale": 2, "translation": [1]},
                                 {"prob": "2-sqrt(2)", "scale": "1/2", "translation": [1]}]})
    assert solve_alpha(mu) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(InputError):
        mu_from_dict({"atoms": [{"prob": "__import__('os')", "scale": 2}]})


def test_round_trip_dict():
    mu = spec("rotation_2d")
    again = mu_from_dict(mu_to_dict(mu))
    assert np.allclose(again.atom_matrices(), mu.atom_matrices(), atol=1e-15)
    assert np.allclose(again.probs, mu.probs, atol=1e-16)


def test_missing_config(tmp_path):
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_config(bad)
    with pytest.raises(InputError):
        load_mu({"measure": {"no_atoms": []}})


def test_log_uniform_family_kappa():
    mu = mu_from_dict({"atoms": [{"prob": 0.5, "scale": 0.5, "translation": [1]}],
                       "family": {"prob": 0.5, "low": 0.5, "high": 4.0, "translation": [1]}})
    a = solve_alpha(mu)
    # closed form E U**s for log-uniform U on [1/2, 4]
    fam = (4.0 ** a - 0.5 ** a) / (a * math.log(8.0))
    assert 0.5 * 0.5 ** a + 0.5 * fam == pytest.approx(1.0, abs=1e-12)
    assert not mu.group_structure().is_lattice


def test_empirical_mean_matches_closed_form():
    mu = two_atom(1 / 9, 2.0, 0.5)
    x = sample_stationary(mu, 10**5, seed=3, alpha=3.0).flat
    _, m = mean_operator_and_mean(mu, 3.0)
    assert abs(x.mean() - m[0]) <= 3 * x.std(ddof=1) / math.sqrt(len(x))


# ---------------------------------------------------------------------------
# properties

probs = st.floats(0.02, 0.45)
his = st.floats(1.2, 5.0)
los = st.floats(0.1, 0.9)


def _mixture(p, hi, lo):
    mu = two_atom(p, hi, lo)
    if p * math.log(hi) + (1 - p) * math.log(lo) >= -1e-3:
        return None
    return mu


@settings(max_examples=100, deadline=None)
@given(probs, his, los)
def test_kappa_round_trip(p, hi, lo):
    mu = _mixture(p, hi, lo)
    if mu is None:
        return
    a = solve_alpha(mu)
    assert abs(kappa(mu, a) - 1.0) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(probs, his, los, st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3, unique=True))
def test_kappa_convex_and_below_one(p, hi, lo, fr):
    mu = _mixture(p, hi, lo)
    if mu is None:
        return
    a = solve_alpha(mu)
    s1, s2, s3 = sorted(f * a for f in fr)
    k1, k2, k3 = kappa(mu, s1), kappa(mu, s2), kappa(mu, s3)
    w = (s3 - s2) / (s3 - s1)
    assert k2 < w * k1 + (1 - w) * k3 + 1e-14
    assert max(k1, k2, k3) < 1.0
