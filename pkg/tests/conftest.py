import time

import numpy as np
import pytest

from affine_limits import build_limit_law, load_mu, spec_path

SEED = 20261016

# wall-clock seconds spent building each shared law, so runtime limits can include it
BUILD_SECONDS: dict[str, float] = {}


def spec(name: str):
    return load_mu(str(spec_path(name)))


def _timed(key, fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    BUILD_SECONDS[key] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def half_law():
    """alpha = 1/2 lattice law from 10**6 frozen stationary and dual samples."""
    return _timed("half_law", build_limit_law, spec("alpha_half_lattice"), N=10**6, seed=SEED)


@pytest.fixture(scope="session")
def alpha3_law():
    return _timed("alpha3_law", build_limit_law, spec("alpha3_lattice"), N=10**5, seed=SEED)


@pytest.fixture(scope="session")
def alpha2_law():
    """alpha = 2 law on a high quantile window, where the shell estimates are close to asymptotic."""
    return _timed("alpha2_law", build_limit_law, spec("alpha2_lattice"), N=10**7, seed=SEED,
                  window=(0.999, 0.99999))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
