"""Simulation of the affine recursion, its stationary law and the dual chain.

Forward chain ``X_n = M_n X_{n-1} + Q_n``; stationary variable
``R = sum_k M_0 ... M_{k-1} Q_k``; dual variable ``W = Z* v`` with
``Z* = sum_{k>=1} M_0* ... M_{k-1}*``; partial sums ``S_n = X_1 + ... + X_n``
(the starting point ``X_0`` is excluded).
"""
from __future__ import annotations

import io
import itertools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .groups import tau
from .measure import MuSpec, kappa, moment_of_translation, solve_alpha
from .rng import DEFAULT_BLOCK, RngStream, make_stream, run_blocks

BINARY_MAGIC = b"AFFB"
BINARY_VERSION = 1
KIND_CODES = {"forward": 0, "stationary": 1, "dual": 2, "partial_sum": 3, "Z_series": 4, "backward": 5}


class MapSampler:
    """Vectorised sampler of i.i.d. affine maps drawn from a measure."""

    def __init__(self, mu: MuSpec):
        self.mu = mu
        self.d = mu.d
        probs = [a.prob for a in mu.atoms] + ([mu.family.prob] if mu.family else [])
        self.cum = np.cumsum(probs)
        self.cum[-1] = 1.0
        self.n_atoms = len(mu.atoms)
        if self.d == 1:
            self.lin = np.array([a.M.matrix[0, 0] for a in mu.atoms] + [0.0])
            self.trans = np.array([a.Q[0] for a in mu.atoms] + [mu.family.Q[0] if mu.family else 0.0])
        else:
            mats = [a.M.matrix for a in mu.atoms] + [np.zeros((self.d, self.d))]
            self.lin = np.array(mats)
            qs = [a.Q for a in mu.atoms] + [mu.family.Q if mu.family else np.zeros(self.d)]
            self.trans = np.array(qs)
        if mu.family is not None:
            fam = mu.family
            self.fam_log = (math.log(fam.low), math.log(fam.high))
            self.fam_K = fam.orthogonal_matrix()
            self.fam_exps = mu.blocks.coordinate_exponents()

    def draw(self, rng: np.random.Generator, n: int):
        """Return ``(linear parts, translations)`` for ``n`` independent maps.

        In dimension one the linear parts are signed scalars of shape ``(n,)``
        and translations have shape ``(n,)``; otherwise ``(n, d, d)`` and ``(n, d)``.
        """
        u = rng.random(n)
        idx = np.searchsorted(self.cum, u, side="right")
        np.minimum(idx, len(self.cum) - 1, out=idx)
        lin = self.lin[idx]
        trans = self.trans[idx]
        if self.mu.family is not None:
            w = rng.random(n)
            fam = idx == self.n_atoms
            if np.any(fam):
                lo, hi = self.fam_log
                scale = np.exp(lo + (hi - lo) * w[fam])
                if self.d == 1:
                    lin[fam] = scale * self.fam_K[0, 0]
                else:
                    diag = scale[:, None] ** self.fam_exps
                    lin[fam] = diag[:, :, None] * self.fam_K[None]
        return lin, trans


def _act(lin, x):
    if lin.ndim == 1:
        return lin * x
    return np.einsum("nij,nj->ni", lin, x)


def _act_adjoint(lin, x):
    if lin.ndim == 1:
        return lin * x
    return np.einsum("nji,nj->ni", lin, x)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng), 0, 0).generator()


def _vec(x, d: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise InputError(f"expected a vector of length {d}")
    return x


@dataclass
class TrajectoryBatch:
    """Samples of one chain quantity, one row per trajectory."""

    values: np.ndarray
    kind: str
    n: int | None = None
    seed: int | None = None
    truncation: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[:, None]
        self.values = v
        if not np.all(np.isfinite(v)):
            raise InputError("batch contains non-finite entries")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """Values as a 1-d array (dimension one only)."""
        if self.d != 1:
            raise InputError("flat view exists only in dimension one")
        return self.values[:, 0]


def default_truncation(mu: MuSpec, alpha: float | None = None, tol: float = 1e-6) -> int:
    """Number of series terms so that both ``kappa(0.8 alpha)**T`` and the error bound are below ``tol``."""
    alpha = solve_alpha(mu) if alpha is None else alpha
    k08 = kappa(mu, 0.8 * alpha)
    T = int(math.ceil(math.log(tol) / math.log(k08)))
    while truncation_bound(mu, alpha, T) >= tol:
        T += 1
    return max(T, 1)


def truncation_bound(mu: MuSpec, alpha: float, T: int) -> float:
    """Bound on ``E|R - R_T|**theta`` with ``theta = min(0.8 alpha, 1)`` after ``T`` terms."""
    theta = min(0.8 * alpha, 1.0)
    k = kappa(mu, theta)
    return moment_of_translation(mu, theta) * k ** T / (1.0 - k)


def simulate_forward(mu: MuSpec, x0, n: int, rng) -> np.ndarray:
    """One path ``X_0, ..., X_n`` as an array of shape ``(n + 1, d)``."""
    gen = _as_generator(rng)
    sampler = MapSampler(mu)
    x = _vec(x0, mu.d)
    path = np.empty((n + 1, mu.d))
    path[0] = x
    if n == 0:
        return path
    lin, trans = sampler.draw(gen, n)
    for k in range(n):
        if mu.d == 1:
            x = lin[k] * x + trans[k]
        else:
            x = lin[k] @ x + trans[k]
        path[k + 1] = x
    return path


def simulate_coupled(mu: MuSpec, x0, y0, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Two paths from ``x0`` and ``y0`` driven by the same maps."""
    gen = _as_generator(rng)
    sampler = MapSampler(mu)
    lin, trans = sampler.draw(gen, n)
    out = []
    for start in (x0, y0):
        x = _vec(start, mu.d)
        path = np.empty((n + 1, mu.d))
        path[0] = x
        for k in range(n):
            x = lin[k] * x + trans[k] if mu.d == 1 else lin[k] @ x + trans[k]
            path[k + 1] = x
        out.append(path)
    return out[0], out[1]


def cumulative_product(mu: MuSpec, lin_seq: np.ndarray) -> np.ndarray:
    """``Pi_n = M_n ... M_1`` for a drawn sequence of linear parts."""
    d = mu.d
    P = np.eye(d)
    for L in lin_seq:
        P = (np.array([[L]]) if d == 1 else L) @ P
    return P


def _forward_block(sampler: MapSampler, x0: np.ndarray, n: int):
    d = sampler.d

    def fn(gen, size):
        x = np.full(size, x0[0]) if d == 1 else np.tile(x0, (size, 1))
        for _ in range(n):
            lin, trans = sampler.draw(gen, size)
            x = _act(lin, x) + trans
        return x

    return fn


def forward_batch(mu: MuSpec, x0, n: int, N: int, seed: int = 0, workers: int = 1,
                  stream: str = "forward", block: int = DEFAULT_BLOCK) -> TrajectoryBatch:
    """``N`` independent copies of ``X_n`` started at ``x0``."""
    sampler = MapSampler(mu)
    x0 = _vec(x0, mu.d)
    parts = run_blocks(_forward_block(sampler, x0, n), N, make_stream(seed, stream), workers, block)
    return TrajectoryBatch(np.concatenate(parts), "forward", n, seed)


def backward_series(mu: MuSpec, n: int, N: int, seed: int = 0, workers: int = 1,
                    stream: str = "backward", block: int = DEFAULT_BLOCK) -> TrajectoryBatch:
    """``N`` copies of ``Q_0 + M_0 Q_1 + ... + M_0...M_{n-2} Q_{n-1}`` (``n`` terms)."""
    sampler = MapSampler(mu)
    d = mu.d

    def fn(gen, size):
        acc = np.zeros(size) if d == 1 else np.zeros((size, d))
        prod = np.ones(size) if d == 1 else np.tile(np.eye(d), (size, 1, 1))
        for _ in range(n):
            lin, trans = sampler.draw(gen, size)
            acc = acc + _act(prod, trans)
            prod = prod * lin if d == 1 else np.einsum("nij,njk->nik", prod, lin)
        return acc

    parts = run_blocks(fn, N, make_stream(seed, stream), workers, block)
    return TrajectoryBatch(np.concatenate(parts), "backward", n, seed)


def sample_stationary(mu: MuSpec, N: int, seed: int = 0, trunc: int | None = None, workers: int = 1,
                      alpha: float | None = None, tol: float = 1e-6, stream: str = "stationary",
                      block: int = DEFAULT_BLOCK) -> TrajectoryBatch:
    """Samples of the truncated stationary series.

    The truncated series with ``T`` terms has the law of the forward chain
    ``X_T`` started at zero, which is what is simulated (vector operations
    only).  The metadata carries the truncation error bound.
    """
    alpha = solve_alpha(mu) if alpha is None else alpha
    T = default_truncation(mu, alpha, tol) if trunc is None else int(trunc)
    if T < 1:
        raise InputError("truncation must be at least 1")
    sampler = MapSampler(mu)
    parts = run_blocks(_forward_block(sampler, np.zeros(mu.d), T), N, make_stream(seed, stream), workers, block)
    bound = truncation_bound(mu, alpha, T)
    meta = {"truncation_bound": bound, "theta": min(0.8 * alpha, 1.0), "warning": bound >= tol}
    return TrajectoryBatch(np.concatenate(parts), "stationary", None, seed, T, meta)


def sample_dual_operator(mu: MuSpec, N: int, seed: int = 0, trunc: int | None = None, workers: int = 1,
                         alpha: float | None = None, tol: float = 1e-6, stream: str = "dual",
                         block: int = DEFAULT_BLOCK) -> TrajectoryBatch:
    """Samples of the adjoint series ``Z* = sum_{k>=1} M_0* ... M_{k-1}*``.

    Returned flattened to shape ``(N, d*d)`` (row-major); in dimension one this
    is a scalar and ``W_v = v Z*``.  Simulated through the equal-in-law forward
    recursion ``Z_n = M_n* (Z_{n-1} + I)``.
    """
    alpha = solve_alpha(mu) if alpha is None else alpha
    T = default_truncation(mu, alpha, tol) if trunc is None else int(trunc)
    sampler = MapSampler(mu)
    d = mu.d

    def fn(gen, size):
        if d == 1:
            z = np.zeros(size)
            for _ in range(T):
                lin, _ = sampler.draw(gen, size)
                z = lin * (z + 1.0)
            return z[:, None]
        z = np.zeros((size, d, d))
        eye = np.eye(d)
        for _ in range(T):
            lin, _ = sampler.draw(gen, size)
            z = np.einsum("nji,njk->nik", lin, z + eye)
        return z.reshape(size, d * d)

    parts = run_blocks(fn, N, make_stream(seed, stream), workers, block)
    return TrajectoryBatch(np.concatenate(parts), "Z_series", None, seed, T,
                           {"truncation_bound": truncation_bound(mu, alpha, T)})


def dual_from_operator(zstar: TrajectoryBatch | np.ndarray, v) -> np.ndarray:
    """``W_v = Z* v`` for every sampled ``Z*``; shape ``(N, d)``."""
    Z = zstar.values if isinstance(zstar, TrajectoryBatch) else np.asarray(zstar)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = v.size
    if Z.shape[1] != d * d:
        raise InputError("dual operator samples and v have inconsistent dimensions")
    if d == 1:
        return Z * v[0]
    return np.einsum("nij,j->ni", Z.reshape(-1, d, d), v)


def sample_eta(mu: MuSpec, v, N: int, seed: int = 0, trunc: int | None = None, workers: int = 1,
               alpha: float | None = None, tol: float = 1e-6, stream: str = "dual",
               block: int = DEFAULT_BLOCK) -> TrajectoryBatch:
    """Samples of ``W = Z* v`` (the stationary law of the dual chain).

    Simulated by ``W_n = M_n* (W_{n-1} + v)``, equal in law to the truncated series.
    """
    v = _vec(v, mu.d)
    if not np.any(v):
        raise InputError("v must be nonzero")
    alpha = solve_alpha(mu) if alpha is None else alpha
    T = default_truncation(mu, alpha, tol) if trunc is None else int(trunc)
    sampler = MapSampler(mu)
    d = mu.d

    def fn(gen, size):
        w = np.zeros(size) if d == 1 else np.zeros((size, d))
        for _ in range(T):
            lin, _ = sampler.draw(gen, size)
            w = _act_adjoint(lin, w + (v[0] if d == 1 else v))
        return w

    parts = run_blocks(fn, N, make_stream(seed, stream), workers, block)
    return TrajectoryBatch(np.concatenate(parts), "dual", None, seed, T, {"v": v.tolist()})


def partial_sums(mu: MuSpec, x0, n_list: Sequence[int], N: int, seed: int = 0, workers: int = 1,
                 stream: str = "partial_sum", block: int = DEFAULT_BLOCK,
                 with_endpoint: bool = False) -> dict[int, TrajectoryBatch]:
    """``S_n = X_1 + ... + X_n`` for every ``n`` in ``n_list`` in one streaming pass.

    With ``with_endpoint`` the batches also carry ``X_n`` in ``meta["X"]``.
    """
    n_list = sorted({int(n) for n in n_list})
    if any(n < 0 for n in n_list):
        raise InputError("n must be nonnegative")
    sampler = MapSampler(mu)
    x0 = _vec(x0, mu.d)
    d = mu.d
    n_max = max(n_list) if n_list else 0

    def fn(gen, size):
        x = np.full(size, x0[0]) if d == 1 else np.tile(x0, (size, 1))
        s = np.zeros_like(x)
        out = {}
        if 0 in n_list:
            out[0] = (s.copy(), x.copy())
        for k in range(1, n_max + 1):
            lin, trans = sampler.draw(gen, size)
            x = _act(lin, x) + trans
            s += x
            if k in n_list:
                out[k] = (s.copy(), x.copy())
        return out

    parts = run_blocks(fn, N, make_stream(seed, stream), workers, block)
    result = {}
    for n in n_list:
        S = np.concatenate([p[n][0] for p in parts])
        meta = {"X": np.concatenate([p[n][1] for p in parts])} if with_endpoint else {}
        result[n] = TrajectoryBatch(S, "partial_sum", n, seed, None, meta)
    return result


@dataclass
class DiscreteLaw:
    """Finitely supported law: ``support`` of shape ``(K, d)`` and ``probs``."""

    support: np.ndarray
    probs: np.ndarray

    def ecf(self, v_grid) -> np.ndarray:
        v = np.asarray(v_grid, dtype=float)
        v = v[:, None] if v.ndim == 1 else v
        return np.exp(1j * v @ self.support.T) @ self.probs

    def as_dict(self) -> dict:
        return {tuple(np.round(s, 12)): float(p) for s, p in zip(self.support, self.probs)}


def brute_force_distribution(mu: MuSpec, x0, n: int, target: str = "S_n",
                             max_states: int = 10**7) -> DiscreteLaw:
    """Exact law of ``X_n`` or ``S_n`` by enumerating all branch sequences.

    Atoms landing on the same point (to 12 digits) are merged.
    """
    if not mu.is_finite:
        raise InputError("brute force needs a finite mixture")
    if target not in ("S_n", "X_n"):
        raise InputError("target must be 'S_n' or 'X_n'")
    A = len(mu.atoms)
    if A ** n > max_states:
        raise InputError(f"{A}**{n} branches exceed the explosion guard {max_states}")
    x0 = _vec(x0, mu.d)
    mats = mu.atom_matrices()
    trans = mu.atom_translations()
    probs = mu.probs
    xs = x0[None, :]
    ss = np.zeros((1, mu.d))
    ps = np.ones(1)
    for _ in range(n):
        new_x = np.einsum("aij,kj->aki", mats, xs) + trans[:, None, :]
        xs = new_x.reshape(-1, mu.d)
        ss = (np.broadcast_to(ss, (A,) + ss.shape) + new_x).reshape(-1, mu.d)
        ps = (probs[:, None] * ps[None, :]).reshape(-1)
        xs, ss, ps = _merge(xs, ss, ps, target)
    pts = ss if target == "S_n" else xs
    return _collapse(pts, ps)


def _merge(xs, ss, ps, target):
    # joint state (X, S) is Markov; merge identical pairs to keep the enumeration small
    key = np.round(np.hstack([xs, ss]), 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    p = np.bincount(inv, weights=ps)
    d = xs.shape[1]
    first = np.zeros(len(uniq), dtype=int)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    return xs[first], ss[first], p


def _collapse(pts, ps) -> DiscreteLaw:
    key = np.round(pts, 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    p = np.bincount(inv.reshape(-1), weights=ps)
    return DiscreteLaw(uniq, p)


# ---------------------------------------------------------------------------
# export

def batch_to_csv(batch: TrajectoryBatch, path: str | Path | None = None) -> str:
    """One row per trajectory, columns ``x0..x{d-1}``."""
    buf = io.StringIO()
    header = ",".join(f"x{j}" for j in range(batch.d))
    np.savetxt(buf, batch.values, delimiter=",", header=header, comments="", fmt="%.17g")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def write_binary(batch: TrajectoryBatch, path: str | Path) -> None:
    """Column-major float64 payload after a header ``magic, version, N, d, kind``."""
    header = BINARY_MAGIC + struct.pack("<IQII", BINARY_VERSION, batch.N, batch.d, KIND_CODES[batch.kind])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asfortranarray(batch.values, dtype="<f8").tobytes(order="F"))


def read_binary(path: str | Path) -> TrajectoryBatch:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BINARY_MAGIC:
            raise InputError("not a batch file")
        version, N, d, code = struct.unpack("<IQII", fh.read(20))
        if version != BINARY_VERSION:
            raise InputError(f"unsupported batch version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    kind = {v: k for k, v in KIND_CODES.items()}[code]
    return TrajectoryBatch(data.reshape((N, d), order="F").copy(), kind)


def moment_profile(batch: TrajectoryBatch, blocks, theta: float) -> tuple[float, float]:
    """Empirical ``E tau(X)**theta`` with its standard error."""
    vals = tau(batch.values, blocks) ** theta
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))
