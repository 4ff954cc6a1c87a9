"""Limit laws of normalised partial sums: parameters, centering and Fourier transforms.

Regimes by tail exponent: ``alpha < 1``, ``alpha = 1``, ``1 < alpha < 2`` and
``alpha = 2`` give stable (or semistable) laws built from the tail measure of
the stationary law and the dual law; ``alpha > 2`` gives a normal law from the
mean, averaged operator and covariance.  With block exponents above
``alpha / 2`` the limit is a product of a normal and a stable factor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .engine import TrajectoryBatch, dual_from_operator, sample_dual_operator, sample_stationary
from .errors import InputError, NumericError, RegimeError, UnsupportedError
from .groups import BlockStructure, GroupStructure, Similarity, normalizer_schedule
from .measure import (MuSpec, m_alpha, mean_linear_part, mean_operator_and_mean, require_hypothesis,
                      solve_alpha)
from .rng import RngStream, stream_id
from .tails import (ALPHA_EQ1, ALPHA_EQ2, ALPHA_GT2, DEFAULT_WINDOW, LambdaTildeTable, LevelEstimates,
                    ShellWindow, coordinate_masks, delta_v_of_lambda1, integrand_orders, lambda_tilde, regime_of,
                    second_moment_form, shell_window)

LOW_PRECISION = 0.25


class Regime(str, Enum):
    ALPHA_LT1 = "AlphaLt1"
    ALPHA_EQ1 = "AlphaEq1"
    ALPHA_1TO2 = "Alpha1to2"
    ALPHA_EQ2 = "AlphaEq2"
    ALPHA_GT2 = "AlphaGt2"
    MIXED_T3 = "MixedT3"


def classify_regime(alpha: float, blocks: BlockStructure, tol: float = 1e-9) -> Regime:
    """Regime of the limit theorem for a tail exponent and block structure.

    Above two, blocks with exponent larger than ``alpha / 2`` give the mixed
    regime; a block exponent equal to ``alpha / 2`` is not covered.
    """
    base = Regime(regime_of(alpha, tol))
    if base is not Regime.ALPHA_GT2:
        return base
    lam = np.asarray(blocks.exponents)
    if np.any(np.abs(lam - alpha / 2) <= tol):
        raise RegimeError("a block exponent equals alpha/2; this mixed case is not covered")
    return Regime.MIXED_T3 if np.any(lam > alpha / 2) else Regime.ALPHA_GT2


# ---------------------------------------------------------------------------
# sample handles for the stable regimes

@dataclass
class TailHandles:
    """Frozen stationary and dual samples with the shell window of the tail measure."""

    samples: TrajectoryBatch
    zstar: TrajectoryBatch
    window: ShellWindow
    seed: int
    _table: LambdaTildeTable | None = None
    _pairs: dict = field(default_factory=dict)

    @property
    def table(self) -> LambdaTildeTable:
        if self._table is None:
            self._table = LambdaTildeTable(self.window)
        return self._table

    def pairing(self, level: int, n_transport: int, n_points: int) -> np.ndarray:
        """Dual-sample indices paired with every (transport step, shell point).

        Drawn from a stream keyed by the level only, so the pairing does not
        depend on the frequency ``v``; this makes ``C(-v)`` the conjugate of ``C(v)``.
        """
        key = (level, n_transport, n_points)
        if key not in self._pairs:
            gen = RngStream(self.seed, stream_id("pairing"), level).generator()
            self._pairs[key] = gen.integers(0, self.zstar.N, size=(n_transport, n_points))
        return self._pairs[key]


def build_tail_handles(mu: MuSpec, alpha: float, N: int, N_dual: int | None = None, seed: int = 0,
                       workers: int = 1, window: tuple[float, float] = DEFAULT_WINDOW,
                       trunc: int | None = None) -> TailHandles:
    """Simulate the stationary and dual series once and set up the shell window."""
    N_dual = N if N_dual is None else N_dual
    R = sample_stationary(mu, N, seed, trunc, workers, alpha)
    Z = sample_dual_operator(mu, N_dual, seed, trunc, workers, alpha)
    win = shell_window(R, alpha, mu.group_structure(), mu.blocks, window)
    return TailHandles(R, Z, win, seed)


# ---------------------------------------------------------------------------
# law specification

@dataclass
class LimitLawSpec:
    """Parameters of the limit law of the normalised partial sums.

    Attributes
    ----------
    m, z, q : ndarray or None
        Stationary mean, averaged operator and covariance form (``alpha > 2``;
        restricted to the Gaussian coordinates in the mixed regime).
    gaussian_mask, stable_mask : ndarray of bool
        Coordinates of the normal and of the stable factor.
    tails : TailHandles or None
        Sample handles for the stable part.
    """

    mu: MuSpec
    regime: Regime
    alpha: float
    structure: GroupStructure
    blocks: BlockStructure
    m_alpha: float
    m: np.ndarray | None = None
    z: np.ndarray | None = None
    q: np.ndarray | None = None
    tails: TailHandles | None = None
    gaussian_mask: np.ndarray | None = None
    stable_mask: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.blocks.d

    @property
    def stability_index(self) -> float:
        return 2.0 if self.regime is Regime.ALPHA_GT2 else min(self.alpha, 2.0)

    def C(self, v) -> complex:
        """Log Fourier transform of the limit law at ``v``."""
        v = _vector(v, self.d)
        key = tuple(np.round(v, 15))
        if key not in self._cache:
            self._cache[key] = _log_phi(self, v)
        return self._cache[key]

    def phi(self, v) -> complex:
        return complex(np.exp(self.C(v)))

    def to_dict(self, v_grid: Sequence | None = None) -> dict:
        out = {"regime": self.regime.value, "alpha": self.alpha, "structure": self.structure.label,
               "m_alpha": self.m_alpha}
        for name in ("m", "z", "q"):
            val = getattr(self, name)
            out[name] = None if val is None else np.asarray(val).tolist()
        if v_grid is not None:
            rows = []
            for v in v_grid:
                vv = _vector(v, self.d)
                c = self.C(vv)
                rows.append({"v": vv.tolist(), "Re C": c.real, "Im C": c.imag})
            out["C"] = rows
        return out


def _vector(v, d: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (d,):
        raise InputError(f"frequency must have dimension {d}")
    return v


def _restricted_covariance(mu: MuSpec, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact ``(z, m, q)`` of the stationary law restricted to invariant coordinates."""
    idx = np.flatnonzero(mask)
    k = len(idx)
    mats = [a.M.matrix[np.ix_(idx, idx)] for a in mu.atoms]
    qs = [a.Q[idx] for a in mu.atoms]
    z = sum(a.prob * M for a, M in zip(mu.atoms, mats))
    m = np.linalg.solve(np.eye(k) - z, sum(a.prob * Q for a, Q in zip(mu.atoms, qs)))
    A = np.zeros((k * k, k * k))
    rhs = np.zeros((k, k))
    for a, M, Q in zip(mu.atoms, mats, qs):
        A += a.prob * np.kron(M, M)
        cross = np.outer(M @ m, Q)
        rhs += a.prob * (cross + cross.T + np.outer(Q, Q))
    S = np.linalg.solve(np.eye(k * k) - A, rhs.reshape(-1)).reshape(k, k)
    return z, m, S - np.outer(m, m)


def build_limit_law(mu: MuSpec, N: int = 10**6, N_dual: int | None = None, seed: int = 0, workers: int = 1,
                    window: tuple[float, float] = DEFAULT_WINDOW, tails: TailHandles | None = None) -> LimitLawSpec:
    """Assemble the limit-law parameters for a measure satisfying the hypothesis.

    Normal parameters are exact for finite mixtures and Monte Carlo otherwise;
    the stable part uses frozen stationary and dual samples of size ``N``.
    """
    require_hypothesis(mu)
    alpha = solve_alpha(mu)
    regime = classify_regime(alpha, mu.blocks)
    law = LimitLawSpec(mu, regime, alpha, mu.group_structure(), mu.blocks, m_alpha(mu, alpha))
    lam = mu.blocks.coordinate_exponents()
    if regime is Regime.ALPHA_GT2:
        law.z, law.m = mean_operator_and_mean(mu, alpha)
        if mu.is_finite:
            law.q = _restricted_covariance(mu, np.ones(mu.d, bool))[2]
        else:
            R = sample_stationary(mu, N, seed, workers=workers, alpha=alpha)
            law.q = covariance_q(R, law.m)[0]
        law.gaussian_mask = np.ones(mu.d, bool)
        law.stable_mask = np.zeros(mu.d, bool)
        return law
    if regime is Regime.MIXED_T3:
        gm = lam < alpha / 2
        law.gaussian_mask, law.stable_mask = gm, ~gm
        law.m = mean_operator_and_mean(mu, alpha)[1] if alpha > 1 else None
        if gm.any():
            if mu.is_finite:
                law.z, m_minus, law.q = _restricted_covariance(mu, gm)
            else:
                law.z = mean_linear_part(mu, gm)
                R = sample_stationary(mu, N, seed, workers=workers, alpha=alpha)
                law.q = covariance_q(R, law.m, restriction=gm)[0]
    else:
        law.gaussian_mask = np.zeros(mu.d, bool)
        law.stable_mask = np.ones(mu.d, bool)
        if alpha > 1:
            law.z, law.m = mean_operator_and_mean(mu, alpha)
    law.tails = tails if tails is not None else build_tail_handles(mu, alpha, N, N_dual, seed, workers, window)
    return law


# ---------------------------------------------------------------------------
# centering

def xi(c_scale: float, samples, blocks: BlockStructure | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``xi(c) = E[c R / (1 + |c R|^2)]`` with its standard error (``alpha = 1``)."""
    X = samples.values if isinstance(samples, TrajectoryBatch) else np.atleast_2d(np.asarray(samples, float).T).T
    if c_scale == 0:
        return np.zeros(X.shape[1]), np.zeros(X.shape[1])
    blocks = BlockStructure.euclidean(X.shape[1]) if blocks is None else blocks
    cX = blocks.dilate(X, c_scale)
    f = cX / (1.0 + np.sum(cX * cX, axis=1))[:, None]
    return f.mean(axis=0), f.std(axis=0, ddof=1) / math.sqrt(len(f))


def xi1_xi2(c_scale: float, samples, alpha: float, blocks: BlockStructure) -> dict:
    """Block centering vectors ``xi_1(c)`` and ``xi_2(c)`` with standard errors.

    ``xi_1(c) = c m_{alpha,-} + E[c x_alpha / (1 + |c x_alpha|^2)]`` and
    ``xi_2(c) = c m_{alpha/2,alpha} + E[c x_alpha / (1 + |c x_alpha|^2)]``;
    the means are sample means of the corresponding coordinate projections.
    """
    X = samples.values if isinstance(samples, TrajectoryBatch) else np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != blocks.d:
        raise InputError("samples do not match the block structure")
    d = blocks.d
    if c_scale == 0:
        z = np.zeros(d)
        return {"xi1": z, "xi1_se": z, "xi2": z, "xi2_se": z}
    lam = blocks.coordinate_exponents()
    minus, eq = coordinate_masks(alpha, blocks)
    between = (lam > alpha / 2) & minus
    cX = blocks.dilate(X, c_scale)
    comp = np.zeros_like(cX)
    if eq.any():
        xe = cX[:, eq]
        comp[:, eq] = xe / (1.0 + np.sum(xe * xe, axis=1))[:, None]
    parts = {}
    for name, mask in (("xi1", minus), ("xi2", between)):
        f = comp.copy()
        f[:, mask] += cX[:, mask]
        parts[name] = f.mean(axis=0)
        parts[name + "_se"] = f.std(axis=0, ddof=1) / math.sqrt(len(f))
    return parts


def covariance_q(samples, m=None, restriction: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariance form about ``m`` (sample mean by default) with per-entry SE.

    Parameters
    ----------
    restriction : ndarray of bool, optional
        Coordinates to keep.
    """
    X = samples.values if isinstance(samples, TrajectoryBatch) else np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    if restriction is not None:
        X = X[:, np.asarray(restriction, bool)]
    m = X.mean(axis=0) if m is None else np.atleast_1d(np.asarray(m, float))
    if restriction is not None and m.shape[0] != X.shape[1]:
        m = m[np.asarray(restriction, bool)]
    Y = X - m
    prod = np.einsum("ni,nj->nij", Y, Y)
    q = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(len(Y))
    return 0.5 * (q + q.T), se


@dataclass
class CenteringSchedule:
    """Per-``n`` normalisation ``factors * S_n - shift``.

    ``scale`` is ``|c_n|``; ``factors`` holds the coordinatewise multipliers
    (dilation by ``c_n``, or ``n**(-1/2)`` on Gaussian coordinates).
    """

    n: np.ndarray
    scale: np.ndarray
    exact: np.ndarray
    factors: np.ndarray
    shift: np.ndarray

    def normalize(self, index: int, S) -> np.ndarray:
        S = np.asarray(S, float)
        if S.ndim == 1:
            S = S[:, None]
        return S * self.factors[index] - self.shift[index]

    def to_rows(self) -> list[dict]:
        return [{"n": int(n), "c": float(c), "exact": bool(e), "d_n": s.tolist()}
                for n, c, e, s in zip(self.n, self.scale, self.exact, self.shift)]


def _alpha2_scale(structure: GroupStructure, n: int) -> tuple[float, bool]:
    if n < 2:
        raise InputError("alpha = 2 normalisation needs n >= 2")
    target = 1.0 / math.sqrt(n * math.log(n))
    if not structure.is_lattice:
        return target, True
    k = round(-math.log(target) / math.log(structure.p))
    c = structure.p ** (-k)
    return c, abs(c / target - 1.0) < 1e-9


def centering_schedule(law: LimitLawSpec, n_list: Sequence[int]) -> CenteringSchedule:
    """Normalising scales and centering vectors for every ``n``.

    ``d_n = 0`` (``alpha < 1``), ``n xi(c_n)`` (``alpha = 1``), ``n c_n m``
    (``1 < alpha <= 2``; block version ``n xi_1(c_n)``), ``sqrt(n) m`` after the
    ``n**(-1/2)`` scaling (``alpha > 2``), and the mixed combination.
    """
    n_arr = np.array([int(n) for n in n_list])
    if np.any(n_arr < 1):
        raise InputError("n must be at least 1")
    d, blocks, alpha = law.d, law.blocks, law.alpha
    lam = blocks.coordinate_exponents()
    scales, exact, factors, shifts = [], [], [], []
    for n in n_arr:
        if law.regime is Regime.ALPHA_GT2:
            c, ex = 1.0 / math.sqrt(n), True
            fac = np.full(d, c)
            shift = math.sqrt(n) * law.m
        elif law.regime is Regime.ALPHA_EQ2:
            c, ex = _alpha2_scale(law.structure, n)
            fac = c ** lam
            shift = fac * (n * law.m)
        else:
            c, ex = normalizer_schedule(law.structure, alpha, n)
            fac = c ** lam
            if law.regime is Regime.MIXED_T3:
                gm = law.gaussian_mask
                fac = np.where(gm, 1.0 / math.sqrt(n), fac)
                parts = xi1_xi2(c, law.tails.samples, alpha, blocks)
                m_full = law.m if law.m is not None else np.zeros(d)
                shift = np.where(gm, math.sqrt(n) * m_full, n * parts["xi2"])
            elif law.regime is Regime.ALPHA_LT1:
                shift = np.zeros(d)
            elif law.regime is Regime.ALPHA_EQ1:
                if blocks.is_euclidean:
                    shift = n * xi(c, law.tails.samples)[0]
                else:
                    shift = n * xi1_xi2(c, law.tails.samples, alpha, blocks)["xi1"]
            else:
                if blocks.is_euclidean:
                    shift = fac * (n * law.m)
                else:
                    shift = n * xi1_xi2(c, law.tails.samples, alpha, blocks)["xi1"]
        scales.append(c)
        exact.append(ex)
        factors.append(np.asarray(fac, float))
        shifts.append(np.asarray(shift, float))
    return CenteringSchedule(n_arr, np.array(scales), np.array(exact), np.array(factors), np.array(shifts))


# ---------------------------------------------------------------------------
# log Fourier transforms

@dataclass
class CEstimate:
    """Monte Carlo estimate of ``C(v)`` with plateau detail."""

    value: complex
    se: float
    spread: float
    levels: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_level: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    gamma: float | None = None
    warning: str | None = None

    def to_dict(self) -> dict:
        out = {"re": self.value.real, "im": self.value.imag, "se": self.se, "spread": self.spread}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.warning:
            out["warning"] = self.warning
        return out


def _finish(est: CEstimate) -> CEstimate:
    if abs(est.value) > 0 and est.se > LOW_PRECISION * abs(est.value):
        est.warning = "low precision: SE exceeds 25% of |C|"
        warnings.warn(est.warning, RuntimeWarning, stacklevel=3)
    return est


def exponent_2plus(v, q: np.ndarray, z: np.ndarray) -> float:
    """Gaussian exponent ``-q(v,v)/2 - q(v, (I - z*)^{-1} z* v)``."""
    v = np.atleast_1d(np.asarray(v, float))
    zt = np.atleast_2d(z).T
    try:
        u = np.linalg.solve(np.eye(len(v)) - zt, zt @ v)
    except np.linalg.LinAlgError as exc:
        raise NumericError("I - z* is singular") from exc
    q = np.atleast_2d(q)
    return float(-0.5 * v @ q @ v - v @ q @ u)


def C_2plus(v, q, z, m) -> float:
    """``C_{2+}(v) = -q(v,v)/2 - <v,m>^2/2 - q(v, (I - z*)^{-1} z* v)``.

    This is the second-order coefficient of the dominant eigenvalue; the
    normal limit itself has exponent ``C_{2+}(v) + <v,m>^2/2``.
    """
    v = np.atleast_1d(np.asarray(v, float))
    return exponent_2plus(v, q, z) - 0.5 * float(v @ np.atleast_1d(m)) ** 2


def C_alpha_direct(v, law: LimitLawSpec) -> CEstimate:
    """``C(v)`` from the tail measure paired with the dual Fourier transform.

    Below two: ``int ((e^{i<v,x>} - 1) eta_v^(x) - i<v, x_{alpha,-}>
    - i<v, x_alpha>/(1 + |x_alpha|^2)) Lambda(dx)``, where ``eta_v^(x)`` is
    replaced by ``e^{i<x, W>}`` with a paired dual sample ``W = Z* v``; every
    shell point is transported over all scales and the sum is averaged over
    the window.  At two: ``-(1/4)(v^T Sigma_2 v + 2 v^T Sigma_2 E[W_v])``.
    For ``alpha = 1`` the imaginary part is reported as the drift ``gamma(v)``.
    """
    v = _vector(v, law.d)
    if law.regime is Regime.ALPHA_GT2:
        raise RegimeError("no tail-measure formula above exponent two")
    if law.tails is None:
        raise InputError("law has no tail handles")
    if law.regime is Regime.MIXED_T3:
        v = np.where(law.stable_mask, v, 0.0)
    if not np.any(v):
        return CEstimate(0j, 0.0, 0.0)
    if law.regime is Regime.ALPHA_EQ2:
        return _finish(_direct_alpha2(v, law))
    win = law.tails.window
    blocks, alpha, base = law.blocks, law.alpha, win.base
    W = dual_from_operator(law.tails.zstar, v)
    minus, eq = coordinate_masks(alpha, blocks)
    order, growth = integrand_orders(alpha, blocks, law.stable_mask)
    ks = win.transport_range(order, growth)
    vals, ses = [], []
    for li, sh in enumerate(win.shells):
        idx = law.tails.pairing(sh.exponent, len(ks), len(sh.points))
        acc = np.zeros(len(sh.points), complex)
        for j, k in enumerate(ks):
            X = blocks.dilate(sh.points, base ** float(k))
            g = np.expm1(1j * (X @ v)) * np.exp(1j * np.sum(X * W[idx[j]], axis=1))
            if minus.any():
                g -= 1j * (X[:, minus] @ v[minus])
            if eq.any():
                xe = X[:, eq]
                g -= 1j * (xe @ v[eq]) / (1.0 + np.sum(xe * xe, axis=1))
            acc += base ** (-float(k) * alpha) * g
        vals.append(sh.weight * acc.sum())
        n = len(acc)
        ses.append(sh.weight * math.sqrt(n) * math.sqrt(np.var(acc.real, ddof=1) + np.var(acc.imag, ddof=1)) if n > 1 else 0.0)
    lev = LevelEstimates(win.levels, np.array(vals), np.array(ses))
    value = complex(lev.value)
    est = CEstimate(value, lev.stat_se, lev.spread, lev.levels, lev.values)
    if law.regime is Regime.ALPHA_EQ1:
        est.gamma = value.imag
    return _finish(est)


def _direct_alpha2(v: np.ndarray, law: LimitLawSpec) -> CEstimate:
    S2 = second_moment_form(law.tails.window)
    zt = mean_linear_part(law.mu).T
    mean_w = np.linalg.solve(np.eye(law.d) - zt, zt @ v)
    vals = -0.25 * (np.einsum("i,lij,j->l", v, S2.values, v) + 2 * np.einsum("i,lij,j->l", v, S2.values, mean_w))
    ses = 0.25 * (np.einsum("i,lij,j->l", np.abs(v), S2.se, np.abs(v))
                  + 2 * np.einsum("i,lij,j->l", np.abs(v), S2.se, np.abs(mean_w)))
    lev = LevelEstimates(S2.levels, vals.astype(complex), ses)
    return CEstimate(complex(lev.value), lev.stat_se, lev.spread, lev.levels, lev.values)


def via_delta_factor(law: LimitLawSpec) -> float:
    """``alpha m_alpha`` (dense) or ``m_alpha (1 - p**(-alpha)) / log p`` (lattice)."""
    if law.structure.is_lattice:
        p = law.structure.p
        return law.m_alpha * (1.0 - p ** (-law.alpha)) / math.log(p)
    return law.alpha * law.m_alpha


def C_alpha_via_delta(v, law: LimitLawSpec) -> CEstimate:
    """``C(v)`` as a multiple of the dual tail ``Delta_v`` applied to ``Lambda~^1``.

    The multiple is :func:`via_delta_factor`; for ``alpha = 1`` only the real
    part is returned (the drift is not determined by this formula).
    """
    v = _vector(v, law.d)
    if law.regime in (Regime.ALPHA_GT2, Regime.MIXED_T3):
        raise RegimeError("the dual-tail formula applies for 0 < alpha <= 2 only")
    if not np.any(v):
        return CEstimate(0j, 0.0, 0.0)
    win = law.tails.window
    W = dual_from_operator(law.tails.zstar, v)
    delta = delta_v_of_lambda1(W, win, law.tails.table)
    factor = via_delta_factor(law)
    value = factor * delta.value
    # uncertainty of Lambda~ on the shell, from its per-level spread at a unit vector
    e1 = np.zeros(law.d)
    e1[0] = 1.0
    lt = lambda_tilde(e1, win, pooled=False)
    lt_val = complex(np.ravel(lt.value)[0])
    rel = math.hypot(delta.stat_se / max(abs(delta.value), 1e-300), lt.stat_se / max(abs(lt_val), 1e-300))
    if law.regime is Regime.ALPHA_EQ1:
        value = complex(value.real, 0.0)
    est = CEstimate(value, abs(value) * rel, abs(factor) * delta.spread, delta.levels, factor * delta.per_level)
    return _finish(est)


def _log_phi(law: LimitLawSpec, v: np.ndarray) -> complex:
    if law.regime is Regime.ALPHA_GT2:
        return complex(exponent_2plus(v, law.q, law.z))
    if law.regime is Regime.MIXED_T3:
        gm = law.gaussian_mask
        g = exponent_2plus(v[gm], law.q, law.z) if gm.any() else 0.0
        return complex(g) + C_alpha_direct(v, law).value
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return C_alpha_direct(v, law).value


def phi(v, law: LimitLawSpec) -> complex:
    """Fourier transform ``exp C(v)`` of the limit law (product form in the mixed regime)."""
    return law.phi(v)


def phi_table(law: LimitLawSpec, v_grid) -> np.ndarray:
    grid = np.asarray(v_grid, float).reshape(-1, law.d)
    return np.array([law.phi(v) for v in grid])


# ---------------------------------------------------------------------------
# stability

@dataclass
class StabilityReport:
    """Fit of ``log Phi(u* v) - |u|**a log Phi(v) = i <beta, v>`` over a grid."""

    scale: float
    index: float
    beta: np.ndarray
    residual: float
    max_real_part: float

    def to_dict(self) -> dict:
        return {"scale": self.scale, "index": self.index, "beta": self.beta.tolist(),
                "residual": self.residual, "max_real_part": self.max_real_part}


def stability_check(law: LimitLawSpec, u, v_grid) -> StabilityReport:
    """Check the (semi)stability identity along the scaling ``u``.

    ``u`` is a positive scale (dilation) or a :class:`Similarity`.  The
    imaginary part of the defect is fitted by a linear function of ``v``; the
    residual is the largest misfit relative to ``max |C(v)|`` over the grid.
    """
    if isinstance(u, Similarity):
        mat, scale = u.adjoint().matrix, u.scale
        act = lambda v: mat @ v
    else:
        scale = float(u)
        if scale <= 0:
            raise InputError("scale must be positive")
        act = lambda v: law.blocks.dilate(v[None, :], scale)[0]
    grid = np.asarray(v_grid, float).reshape(-1, law.d)
    a = law.stability_index
    if law.regime is Regime.MIXED_T3:
        # the normal factor is trivially stable; test the stable factor
        grid = np.where(law.gaussian_mask[None, :], 0.0, grid)
        a = law.alpha
    C0 = np.array([abs(law.C(v)) for v in grid])
    D = np.array([law.C(act(v)) - scale ** a * law.C(v) for v in grid])
    beta, *_ = np.linalg.lstsq(grid, D.imag, rcond=None)
    misfit = np.abs(D.real) + np.abs(D.imag - grid @ beta)
    denom = max(float(C0.max()), 1e-300)
    return StabilityReport(scale, a, beta, float(misfit.max() / denom), float(np.abs(D.real).max() / denom))
