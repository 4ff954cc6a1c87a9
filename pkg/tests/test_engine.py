import math

import numpy as np
import pytest
from scipy import stats

from affine_limits.engine import (backward_series, batch_to_csv, brute_force_distribution, default_truncation,
                                  dual_from_operator, forward_batch, moment_profile, partial_sums, read_binary,
                                  sample_dual_operator, sample_eta, sample_stationary, simulate_coupled,
                                  simulate_forward, truncation_bound, write_binary)
from affine_limits.errors import InputError
from affine_limits.measure import kappa, two_atom
from conftest import spec

MU3 = two_atom(1 / 9, 2.0, 0.5)


def test_brute_force_small_n():
    s1 = brute_force_distribution(MU3, [0.0], 1)
    assert s1.as_dict() == {(1.0,): pytest.approx(1.0)}
    s2 = brute_force_distribution(MU3, [0.0], 2).as_dict()
    assert s2[(2.5,)] == pytest.approx(8 / 9, abs=1e-15) and s2[(4.0,)] == pytest.approx(1 / 9, abs=1e-15)
    x2 = brute_force_distribution(MU3, [0.0], 2, target="X_n").as_dict()
    assert x2[(1.5,)] == pytest.approx(8 / 9) and x2[(3.0,)] == pytest.approx(1 / 9)


def test_brute_force_guard():
    with pytest.raises(InputError):
        brute_force_distribution(MU3, [0.0], 30, max_states=1000)


def test_partial_sums_first_two():
    s = partial_sums(MU3, [0.0], [1, 2], 1000, seed=1)
    assert np.all(s[1].flat == 1.0)
    assert set(np.unique(s[2].flat)) <= {2.5, 4.0}


def _chi_square(samples, law):
    keys = np.round(law.support[:, 0], 9)
    idx = {k: i for i, k in enumerate(keys)}
    counts = np.zeros(len(keys))
    for v, c in zip(*np.unique(np.round(samples, 9), return_counts=True)):
        counts[idx[v]] += c
    expected = law.probs * len(samples)
    big = expected >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    return stats.chisquare(obs, exp).pvalue


@pytest.mark.parametrize("n", [3, 6, 8])
def test_forward_and_backward_match_enumeration(n):
    law = brute_force_distribution(MU3, [0.0], n, target="X_n")
    fwd = forward_batch(MU3, [0.0], n, 20000, seed=n).flat
    bwd = backward_series(MU3, n, 20000, seed=n).flat
    assert _chi_square(fwd, law) > 1e-3
    assert _chi_square(bwd, law) > 1e-3


def test_determinism_across_workers():
    a = sample_stationary(MU3, 70000, seed=9, workers=1, block=8192).values
    b = sample_stationary(MU3, 70000, seed=9, workers=4, block=8192).values
    assert np.array_equal(a, b)
    s1 = partial_sums(MU3, [0.0], [5, 50], 40000, seed=2, workers=1, block=4096)
    s8 = partial_sums(MU3, [0.0], [5, 50], 40000, seed=2, workers=8, block=4096)
    assert all(np.array_equal(s1[n].values, s8[n].values) for n in (5, 50))


def test_seed_changes_samples():
    a = sample_stationary(MU3, 1000, seed=1).values
    b = sample_stationary(MU3, 1000, seed=2).values
    assert not np.array_equal(a, b)


def test_cocycle_identity():
    mu = spec("rotation_2d")
    x, y = simulate_coupled(mu, [3.0, -1.0], [0.5, 2.0], 40, np.random.default_rng(4))
    gen = np.random.default_rng(4)
    from affine_limits.engine import MapSampler
    lin, _ = MapSampler(mu).draw(gen, 40)
    prod = np.eye(2)
    for k in range(40):
        prod = lin[k] @ prod
        diff = x[k + 1] - y[k + 1] - prod @ np.array([2.5, -3.0])
        assert np.max(np.abs(diff)) <= 1e-10 * max(1.0, np.abs(x[k + 1]).max())


def test_simulate_forward_shape():
    path = simulate_forward(MU3, [0.0], 10, 1)
    assert path.shape == (11, 1) and path[1, 0] == 1.0


def test_stationary_moments_alpha3():
    x = sample_stationary(MU3, 10**5, seed=20261016, alpha=3.0).flat
    se_mean = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - 3.0) <= 3 * se_mean
    second = x ** 2
    assert abs(second.mean() - 15.0) <= 3 * second.std(ddof=1) / math.sqrt(len(x))


def test_truncation_rule():
    T = default_truncation(MU3, 3.0)
    assert kappa(MU3, 2.4) ** T < 1e-6
    assert truncation_bound(MU3, 3.0, T) < 1e-6


def test_dual_mean_and_operator():
    Z = sample_dual_operator(MU3, 10**5, seed=5, alpha=3.0)
    W = dual_from_operator(Z, [1.0])[:, 0]
    assert abs(W.mean() - 2.0) <= 3 * W.std(ddof=1) / math.sqrt(len(W))
    eta = sample_eta(MU3, [1.0], 10**5, seed=5, alpha=3.0).flat
    assert abs(eta.mean() - 2.0) <= 3 * eta.std(ddof=1) / math.sqrt(len(eta))


def test_dual_homogeneity_along_group():
    mu = spec("rotation_2d")
    Z = sample_dual_operator(mu, 10**5, seed=6, alpha=3.0)
    v = np.array([0.3, -0.2])
    g = mu.atoms[0].M
    gv = g.adjoint().matrix @ v
    W_gv = dual_from_operator(Z, gv)
    gW = dual_from_operator(Z, v) @ g.adjoint().matrix.T
    grid = np.array([[0.2, 0.1], [-0.3, 0.4], [0.5, 0.0]])
    e1 = np.exp(1j * W_gv @ grid.T).mean(axis=0)
    e2 = np.exp(1j * gW @ grid.T).mean(axis=0)
    assert np.max(np.abs(e1 - e2)) < 0.02


def test_moment_bound_no_trend():
    theta = 0.8 * 3.0
    vals = []
    for n in (10, 100, 1000):
        b = forward_batch(MU3, [0.0], n, 20000, seed=n)
        vals.append(moment_profile(b, spec("alpha3_lattice").blocks, theta))
    means = [m for m, _ in vals]
    ses = [s for _, s in vals]
    assert abs(means[2] - means[1]) <= 3 * math.hypot(ses[1], ses[2]) + 0.05 * means[1]


def test_csv_and_binary_round_trip(tmp_path):
    b = sample_stationary(spec("rotation_2d"), 500, seed=1)
    text = batch_to_csv(b)
    back = np.loadtxt(text.splitlines()[1:], delimiter=",")
    assert np.array_equal(back, b.values)
    path = tmp_path / "batch.bin"
    write_binary(b, path)
    again = read_binary(path)
    assert np.array_equal(again.values, b.values) and again.kind == b.kind


def test_non_finite_batch_rejected():
    from affine_limits.engine import TrajectoryBatch
    with pytest.raises(InputError):
        TrajectoryBatch(np.array([1.0, np.nan]), "forward")
