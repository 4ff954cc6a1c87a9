import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affine_limits.engine import brute_force_distribution, partial_sums
from affine_limits.errors import EstimationError, InputError, RegimeError, UnsupportedError
from affine_limits.law import build_limit_law
from affine_limits.measure import mu_from_dict, scalar_atoms
from affine_limits.verify import (affine_rank_probe, density_at_zero, ecf, law_density_at_zero, local_limit_check,
                                  spec_hash, verify_convergence)
from conftest import SEED, spec


def test_ecf_at_zero_is_one(rng):
    tab = ecf(rng.normal(size=1000), [0.0, 1.0])
    assert tab.value[0] == 1.0
    assert tab.bound == pytest.approx(1 / math.sqrt(1000))


@given(st.floats(-50, 50), st.floats(-5, 5))
def test_ecf_of_constant_samples(u, v):
    tab = ecf(np.full(7, u), [v])
    assert abs(tab.value[0] - np.exp(1j * v * u)) < 1e-9


def test_ecf_two_point_law():
    mu = spec("alpha3_lattice")
    law = brute_force_distribution(mu, 0.0, 2, "S_n")
    assert law.as_dict() == pytest.approx({(4.0,): 1 / 9, (2.5,): 8 / 9})
    expected = np.exp(4j) / 9 + 8 * np.exp(2.5j) / 9
    sims = partial_sums(mu, 0.0, [2], 1000, seed=1)[2]
    assert abs(ecf(sims, [1.0]).value[0] - (law.ecf([1.0])[0])) <= 4 / math.sqrt(1000)
    assert abs(law.ecf([1.0])[0] - expected) < 1e-14


def test_ecf_rejects_empty_and_bad_grid():
    with pytest.raises(InputError):
        ecf(np.zeros((0, 1)), [1.0])
    with pytest.raises(InputError):
        ecf(np.zeros((5, 2)), [[1.0, 2.0, 3.0]])


@pytest.mark.parametrize("name,x0", [("alpha3_lattice", 0.0), ("alpha_half_lattice", 1.0), ("alpha1_lattice", -0.5)])
def test_simulation_matches_brute_force(name, x0):
    mu = spec(name)
    N = 40000
    V = np.linspace(-1.5, 1.5, 13)
    sims = partial_sums(mu, x0, [1, 4, 8], N, seed=7)
    for n in (1, 4, 8):
        exact = brute_force_distribution(mu, x0, n, "S_n").ecf(V)
        assert np.max(np.abs(ecf(sims[n], V).value - exact)) <= 4 / math.sqrt(N)


def test_ecf_error_shrinks_at_root_n_rate():
    mu = spec("alpha3_lattice")
    V = np.linspace(-1.0, 1.0, 9)
    exact = brute_force_distribution(mu, 0.0, 6, "S_n").ecf(V)
    Ns = np.array([500, 2000, 8000, 32000])
    dist = []
    for N in Ns:
        d = [np.max(np.abs(ecf(partial_sums(mu, 0.0, [6], int(N), seed=s)[6], V).value - exact)) for s in range(8)]
        dist.append(np.mean(d))
    slope = np.polyfit(np.log(Ns), np.log(dist), 1)[0]
    assert -0.65 <= slope <= -0.35
    assert max(dist) <= 2


def test_density_gaussian_and_cauchy():
    g = density_at_zero(lambda v: np.exp(-0.5 * np.sum(np.square(v))), 1, 2.0)
    assert abs(g.value - 1 / math.sqrt(2 * math.pi)) < 1e-6
    assert g.error < 1e-6
    c = density_at_zero(lambda v: np.exp(-np.sum(np.abs(v))), 1, 1.0)
    assert abs(c.value - 1 / math.pi) < 1e-6
    g30 = density_at_zero(lambda v: np.exp(-15.0 * np.sum(np.square(v))), 1, 2.0)
    assert abs(g30.value - 1 / math.sqrt(60 * math.pi)) < 1e-6


def test_density_two_dimensional_gaussian():
    g = density_at_zero(lambda v: np.exp(-0.5 * np.sum(np.square(v))), 2, 2.0)
    assert abs(g.value - 1 / (2 * math.pi)) < 1e-6


def test_density_rejects_growing_transform():
    with pytest.raises(EstimationError):
        density_at_zero(lambda v: np.exp(0.1 * np.sum(np.square(v))), 1, 2.0)


def test_law_density_for_variance_thirty(alpha3_law):
    assert law_density_at_zero(alpha3_law).value == pytest.approx(1 / math.sqrt(60 * math.pi), rel=1e-9)


def test_zero_sums_compare_only_at_the_origin(alpha3_law):
    rep = verify_convergence(alpha3_law, [0], v_grid=[0.0, 0.5], N=100)
    assert rep.rows[0].n == 0 and rep.rows[0].passed
    rep = verify_convergence(alpha3_law, [0], v_grid=[0.5], N=100)
    assert rep.rows[0].sup_distance == 0.0


def test_regime_mismatch_is_rejected(alpha3_law):
    with pytest.raises(RegimeError):
        verify_convergence(alpha3_law, [10], v_grid=[0.1], N=100, regime="AlphaLt1")


def test_report_is_reproducible_and_serialisable(alpha3_law):
    a = verify_convergence(alpha3_law, [50, 200], v_grid=[0.1, 0.2], N=2000, seed=4)
    b = verify_convergence(alpha3_law, [50, 200], v_grid=[0.1, 0.2], N=2000, seed=4, workers=2)
    assert np.array_equal(a.distances, b.distances)
    assert all(0 <= d <= 2 for d in a.distances)
    assert a.spec_hash == spec_hash(spec("alpha3_lattice"))
    lines = a.to_csv().splitlines()
    assert lines[0] == "n,v0,re_phi,im_phi,re_ecf,im_ecf,se" and len(lines) == 1 + 2 * 2
    d = a.to_dict()
    assert d["seed"] == 4 and len(d["rows"]) == 2


def test_lattice_subsequence_is_enforced(half_law):
    with pytest.raises(InputError):
        verify_convergence(half_law, [6], v_grid=[0.5], N=100)


def test_local_limit_rejects_lattice(alpha3_law):
    with pytest.raises(UnsupportedError):
        local_limit_check(alpha3_law, [-1, 1], [10], N=100)


def test_local_limit_rejects_alpha_one():
    # kappa(1) = 2/5 * 2 + 3/5 * 1/3 = 1 with a dense scale group
    mu = scalar_atoms([(0.4, 2.0, 1.0), (0.6, 1 / 3, -1.0)])
    law = build_limit_law(mu, N=2 * 10**4, seed=1)
    with pytest.raises(RegimeError):
        local_limit_check(law, [-1, 1], [10], N=100)


@pytest.fixture(scope="module")
def dense3_law():
    return build_limit_law(spec("alpha3_dense"), N=10**4, seed=SEED)


def test_local_limit_empty_interval(dense3_law):
    rep = local_limit_check(dense3_law, [1.0, 1.0], [10, 20], N=100)
    assert all(r.ratio == 0 for r in rep.rows) and not rep.stabilized


def test_local_limit_small_counts_are_inconclusive(dense3_law):
    rep = local_limit_check(dense3_law, [-0.01, 0.01], [100], N=200, seed=2)
    assert rep.rows[0].inconclusive
    assert rep.chi == 0.5 and rep.target == pytest.approx(0.02 / math.sqrt(60 * math.pi))


def test_rank_probe_detects_invariant_line():
    # both maps preserve the horizontal axis and have different fixed points on it
    mu = mu_from_dict({"dimension": 2, "atoms": [
        {"prob": "1/9", "scale": 2, "rotation": 0.0, "translation": [1, 0]},
        {"prob": "8/9", "scale": 0.5, "rotation": 0.0, "translation": [1, 0]}]})
    probe = affine_rank_probe(mu, seed=1)
    assert probe.rank == 1 and not probe.full


def test_rank_probe_full_for_rotations():
    probe = affine_rank_probe(spec("rotation_2d"), seed=1)
    assert probe.full and probe.to_dict()["heuristic"]


def test_local_limit_report_carries_probe(dense3_law):
    rep = local_limit_check(dense3_law, [-1.0, 1.0], [10], N=1000, seed=3)
    assert rep.subspace is not None and rep.subspace.full
    assert any("heuristic" in n for n in rep.to_dict()["notes"])
