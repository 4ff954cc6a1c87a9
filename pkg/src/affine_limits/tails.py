"""Tail exponent, tail constants, angular measure and tail functionals.

The tail measure ``Lambda`` is homogeneous under dilations of the scale group,
so it is determined by its restriction to one shell ``S = {1 <= tau(x) < b}``.
At level ``t = b**K`` that restriction is estimated by the rescaled
exceedances ``(t**alpha / N) sum_j delta_{R_j / t}`` with ``R_j / t`` in ``S``,
and any integral is recovered by transport,
``Lambda(f) = sum_k b**(-k alpha) int_S f(b**k x) Lambda|_S(dx)``.
A window of levels gives a plateau average and a spread.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .engine import TrajectoryBatch
from .errors import EstimationError, InputError
from .groups import BlockStructure, GroupStructure, tau

DEFAULT_WINDOW = (0.99, 0.9999)
TRANSPORT_EPS = 1e-10

ALPHA_LT1, ALPHA_EQ1, ALPHA_1TO2, ALPHA_EQ2, ALPHA_GT2 = "AlphaLt1", "AlphaEq1", "Alpha1to2", "AlphaEq2", "AlphaGt2"


def regime_of(alpha: float, tol: float = 1e-9) -> str:
    """Regime tag of a tail exponent."""
    if abs(alpha - 1.0) <= tol:
        return ALPHA_EQ1
    if abs(alpha - 2.0) <= tol:
        return ALPHA_EQ2
    if alpha < 1:
        return ALPHA_LT1
    if alpha < 2:
        return ALPHA_1TO2
    return ALPHA_GT2


def _values(samples) -> np.ndarray:
    v = samples.values if isinstance(samples, TrajectoryBatch) else np.asarray(samples, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _blocks_for(values: np.ndarray, blocks: BlockStructure | None) -> BlockStructure:
    return BlockStructure.euclidean(values.shape[1]) if blocks is None else blocks


# ---------------------------------------------------------------------------
# exponent and tail constants

def hill_alpha(samples, k_fraction: float = 0.05, blocks: BlockStructure | None = None) -> tuple[float, float]:
    """Hill estimator of the tail exponent of ``tau(R)``.

    Parameters
    ----------
    samples : TrajectoryBatch or array
    k_fraction : float
        Fraction of the sample used as upper order statistics, in ``(0, 0.2]``.

    Returns
    -------
    alpha_hat, se : float
        ``se = alpha_hat / sqrt(k)`` with ``k = k_fraction * N`` order statistics.
    """
    x = _values(samples)
    if not 0 < k_fraction <= 0.2:
        raise InputError("k_fraction must lie in (0, 0.2]")
    r = np.sort(tau(x, _blocks_for(x, blocks)))
    N = len(r)
    if N < 1000:
        raise EstimationError("the Hill estimator needs at least 1000 samples")
    k = int(k_fraction * N)
    top, ref = r[-k:], r[-k - 1]
    if not ref > 0 or np.all(top == ref):
        raise EstimationError("degenerate upper order statistics")
    mean_log = float(np.mean(np.log(top / ref)))
    if mean_log <= 0:
        raise EstimationError("degenerate upper order statistics")
    a = 1.0 / mean_log
    return a, a / math.sqrt(k)


@dataclass
class TailProfile:
    """Tail constants ``t**alpha P[tau(R) > t]`` on a geometric grid."""

    alpha: float
    t: np.ndarray
    constant: np.ndarray
    se: np.ndarray
    exceedances: np.ndarray
    alpha_hat: float | None = None
    alpha_se: float | None = None
    C_plus: float | None = None
    C_minus: float | None = None
    warnings: list = field(default_factory=list)

    @property
    def flatness(self) -> float:
        return float(np.max(self.constant) / np.min(self.constant)) if len(self.t) else float("nan")

    def lower_bound(self, z: float = 2.326) -> float:
        """One-sided 99% lower confidence bound of the smallest constant."""
        return float(np.min(self.constant - z * self.se)) if len(self.t) else float("nan")

    def to_rows(self) -> list[dict]:
        return [{"t": float(t), "constant": float(c), "se": float(s)} for t, c, s in zip(self.t, self.constant, self.se)]


def geometric_t_grid(samples, structure: GroupStructure | None = None, blocks: BlockStructure | None = None,
                     q_low: float = 0.9, min_exceed: int = 50, n_points: int = 12) -> np.ndarray:
    """Geometric grid from the ``q_low`` quantile up to the level with ``min_exceed`` exceedances.

    In a lattice structure the grid consists of powers of ``p``.
    """
    x = _values(samples)
    r = np.sort(tau(x, _blocks_for(x, blocks)))
    lo = float(np.quantile(r, q_low))
    hi = float(r[-min_exceed]) if len(r) > min_exceed else float(r[-1])
    if not hi > lo > 0:
        raise EstimationError("sample range too small for a tail grid")
    if structure is not None and structure.is_lattice:
        p = structure.p
        k0, k1 = math.ceil(math.log(lo) / math.log(p)), math.floor(math.log(hi) / math.log(p))
        return p ** np.arange(k0, k1 + 1, dtype=float)
    return np.geomspace(lo, hi, n_points)


def tail_constant_profile(samples, alpha: float, t_grid: Sequence[float] | None = None,
                          blocks: BlockStructure | None = None, structure: GroupStructure | None = None,
                          min_exceed: int = 50) -> TailProfile:
    """``t**alpha * P_hat[tau(R) > t]`` with binomial standard errors.

    Grid points with fewer than ``min_exceed`` exceedances or beyond the
    sample maximum are dropped with a warning.  In lattice mode grid points
    that are not powers of ``p`` are dropped as well.
    """
    x = _values(samples)
    r = tau(x, _blocks_for(x, blocks))
    N = len(r)
    t_grid = geometric_t_grid(x, structure, blocks) if t_grid is None else np.asarray(t_grid, dtype=float)
    warnings = []
    if structure is not None and structure.is_lattice:
        k = np.log(t_grid) / math.log(structure.p)
        keep = np.abs(k - np.round(k)) < 1e-9
        if not np.all(keep):
            warnings.append("grid points off the lattice were removed")
        t_grid = t_grid[keep]
    rs = np.sort(r)
    counts = N - np.searchsorted(rs, t_grid, side="right")
    keep = counts >= min_exceed
    if not np.all(keep):
        warnings.append(f"{int(np.sum(~keep))} grid points with fewer than {min_exceed} exceedances removed")
    t_grid, counts = t_grid[keep], counts[keep]
    p = counts / N
    const = t_grid ** alpha * p
    se = t_grid ** alpha * np.sqrt(p * (1 - p) / N)
    return TailProfile(alpha, t_grid, const, se, counts, warnings=warnings)


def tail_profile(samples, alpha: float, structure: GroupStructure | None = None,
                 blocks: BlockStructure | None = None, k_fraction: float = 0.05) -> TailProfile:
    """Full tail summary: Hill exponent, constant profile and, in dimension one, ``C_+`` and ``C_-``."""
    x = _values(samples)
    prof = tail_constant_profile(x, alpha, None, blocks, structure)
    prof.alpha_hat, prof.alpha_se = hill_alpha(x, k_fraction, blocks)
    if x.shape[1] == 1 and len(prof.t):
        ang = angular_measure(x, alpha, threshold=float(prof.t[len(prof.t) // 2]), blocks=blocks,
                              structure=structure, min_exceed=1)
        prof.C_plus, prof.C_minus = ang.C_plus, ang.C_minus
    return prof


# ---------------------------------------------------------------------------
# angular measure

@dataclass
class AngularHistogram:
    """Normalised exceedance masses on the unit shell."""

    threshold: float
    edges: np.ndarray
    mass: np.ndarray
    se: np.ndarray
    counts: np.ndarray
    C_plus: float | None = None
    C_minus: float | None = None
    C_plus_se: float | None = None
    C_minus_se: float | None = None
    radial_edges: np.ndarray | None = None
    radial_mass: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(np.sum(self.mass))

    def uniformity_pvalue(self) -> float:
        """Chi-square p-value of equal counts across the angle bins."""
        if len(self.counts) < 2:
            return 1.0
        return float(stats.chisquare(self.counts).pvalue)

    def to_dict(self) -> dict:
        out = {"threshold": self.threshold, "edges": self.edges.tolist(), "mass": self.mass.tolist(),
               "se": self.se.tolist(), "counts": self.counts.tolist(), "total": self.total}
        if self.C_plus is not None:
            out.update(C_plus=self.C_plus, C_minus=self.C_minus, C_plus_se=self.C_plus_se, C_minus_se=self.C_minus_se)
        if self.radial_mass is not None:
            out.update(radial_edges=self.radial_edges.tolist(), radial_mass=self.radial_mass.tolist())
        return out


def angular_measure(samples, alpha: float, threshold: float | None = None, blocks: BlockStructure | None = None,
                    structure: GroupStructure | None = None, n_bins: int = 16, min_exceed: int = 500) -> AngularHistogram:
    """Histogram of exceedance directions weighted by ``t**alpha / N``.

    In dimension one the two masses give ``C_+ = alpha t**alpha P[R > t]`` and
    ``C_- = alpha t**alpha P[R < -t]``, the densities of ``Lambda`` against
    ``dx / |x|**(alpha+1)``.  In dimension two directions are binned by angle;
    in lattice mode the radial position inside ``{1 <= tau < p}`` is binned too.
    """
    x = _values(samples)
    blocks = _blocks_for(x, blocks)
    r = tau(x, blocks)
    N = len(r)
    if threshold is None:
        # the (min_exceed + 1)-th largest value leaves min_exceed points strictly above
        threshold = float(np.sort(r)[-min_exceed - 1]) if N > min_exceed else float(np.min(r))
    exc = r > threshold
    n_exc = int(np.sum(exc))
    if n_exc < min_exceed:
        raise EstimationError(f"only {n_exc} exceedances above the threshold, need {min_exceed}")
    scale = threshold ** alpha / N
    d = x.shape[1]
    if d == 1:
        pos, neg = int(np.sum(x[exc, 0] > 0)), int(np.sum(x[exc, 0] < 0))
        counts = np.array([neg, pos])
        mass = scale * counts
        se = scale * np.sqrt(counts * (1 - counts / N))
        return AngularHistogram(threshold, np.array([-1.0, 0.0, 1.0]), mass, se, counts,
                                C_plus=alpha * mass[1], C_minus=alpha * mass[0],
                                C_plus_se=alpha * se[1], C_minus_se=alpha * se[0])
    pts = x[exc]
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    edges = np.linspace(-math.pi, math.pi, n_bins + 1)
    counts = np.histogram(ang, edges)[0]
    mass = scale * counts
    se = scale * np.sqrt(counts * (1 - counts / N))
    hist = AngularHistogram(threshold, edges, mass, se, counts)
    if structure is not None and structure.is_lattice:
        p = structure.p
        rel = np.log(r[exc] / threshold) / math.log(p)
        rel = rel - np.floor(rel)
        hist.radial_edges = np.linspace(0, 1, 9)
        hist.radial_mass = scale * np.histogram(rel, hist.radial_edges)[0]
    return hist


# ---------------------------------------------------------------------------
# shell estimates of the tail measure

@dataclass
class Shell:
    """Rescaled exceedances in ``{1 <= tau < base}`` at one level ``t``."""

    points: np.ndarray
    weight: float
    level: float
    exponent: int


@dataclass
class ShellWindow:
    """Shell estimates of a homogeneous tail measure on a window of levels.

    Parameters
    ----------
    shells : list of Shell
    alpha : float
    base : float
        Shell ratio ``b``; powers of ``b`` transport the shell over the space.
    blocks : BlockStructure
    structure : GroupStructure
    quantiles : (float, float)
        Quantile window the levels were chosen from.
    """

    shells: list
    alpha: float
    base: float
    blocks: BlockStructure
    structure: GroupStructure
    n_samples: int = 0
    quantiles: tuple = DEFAULT_WINDOW

    @property
    def levels(self) -> np.ndarray:
        return np.array([s.level for s in self.shells])

    def transport_range(self, order_at_zero: float, growth_at_infinity: float,
                        eps: float = TRANSPORT_EPS) -> np.ndarray:
        """Integers ``k`` for which ``b**k`` transport terms exceed ``eps``."""
        rate_hi = self.alpha - growth_at_infinity
        rate_lo = order_at_zero - self.alpha
        if rate_hi <= 0 or rate_lo <= 0:
            raise InputError("integrand is not integrable against the tail measure")
        lb = math.log(self.base)
        k_hi = math.ceil(math.log(1 / eps) / (rate_hi * lb))
        k_lo = math.ceil(math.log(1 / eps) / (rate_lo * lb))
        return np.arange(-k_lo, k_hi + 1)

    def integrate(self, point_fn: Callable[[np.ndarray, float, int], np.ndarray], order_at_zero: float,
                  growth_at_infinity: float) -> "LevelEstimates":
        """Integrate over the whole space level by level.

        ``point_fn(dilated_points, dilation, k)`` returns per-point values (``(n,)``
        or ``(n, m)``) of the integrand at ``gamma_{b**k}`` applied to the shell points.
        """
        ks = self.transport_range(order_at_zero, growth_at_infinity)
        vals, ses = [], []
        for sh in self.shells:
            contrib = None
            for k in ks:
                a = self.base ** float(k)
                f = point_fn(self.blocks.dilate(sh.points, a), a, int(k)) * self.base ** (-float(k) * self.alpha)
                contrib = f if contrib is None else contrib + f
            n = len(sh.points)
            vals.append(sh.weight * contrib.sum(axis=0))
            ses.append(sh.weight * math.sqrt(n) * _complex_std(contrib))
        return LevelEstimates(self.levels, np.array(vals), np.array(ses))

    def pooled(self) -> "ShellWindow":
        """Single pseudo-level with all shells merged (weights divided by the count)."""
        pts = np.concatenate([s.points for s in self.shells])
        w = np.concatenate([np.full(len(s.points), s.weight / len(self.shells)) for s in self.shells])
        return _WeightedShell(pts, w, self)

    def shell_integral(self, point_fn: Callable[[np.ndarray], np.ndarray]) -> "LevelEstimates":
        """Integral over the shell ``S`` only, per level."""
        vals, ses = [], []
        for sh in self.shells:
            f = point_fn(sh.points)
            vals.append(sh.weight * f.sum(axis=0))
            ses.append(sh.weight * math.sqrt(len(sh.points)) * _complex_std(f))
        return LevelEstimates(self.levels, np.array(vals), np.array(ses))


class _WeightedShell:
    """Pooled shell points with individual weights (used for smoother evaluation grids)."""

    def __init__(self, points, weights, window: ShellWindow):
        self.points, self.weights, self.window = points, weights, window

    def integrate(self, point_fn, order_at_zero, growth_at_infinity, chunk: int = 4096) -> np.ndarray:
        win = self.window
        ks = win.transport_range(order_at_zero, growth_at_infinity)
        total = 0.0
        for start in range(0, len(self.points), chunk):
            pts = self.points[start:start + chunk]
            w = self.weights[start:start + chunk]
            for k in ks:
                a = win.base ** float(k)
                f = point_fn(win.blocks.dilate(pts, a), a, int(k))
                total = total + win.base ** (-float(k) * win.alpha) * np.tensordot(w, f, axes=(0, 0))
        return total


def _complex_std(f: np.ndarray) -> np.ndarray:
    if len(f) < 2:
        return np.zeros(f.shape[1:]) if f.ndim > 1 else np.array(0.0)
    return np.sqrt(np.var(f.real, axis=0, ddof=1) + np.var(f.imag, axis=0, ddof=1)) if np.iscomplexobj(f) \
        else np.std(f, axis=0, ddof=1)


@dataclass
class LevelEstimates:
    """Per-level estimates of one functional, with plateau summary."""

    levels: np.ndarray
    values: np.ndarray
    se: np.ndarray

    @property
    def value(self):
        """Inverse-variance weighted mean over the window."""
        se = np.asarray(self.se, dtype=float)
        if se.ndim > 1:
            se = se.max(axis=tuple(range(1, se.ndim)))
        w = 1.0 / np.maximum(se, 1e-300) ** 2
        w = w / w.sum()
        return np.tensordot(w, self.values, axes=(0, 0))

    @property
    def stat_se(self):
        se = np.asarray(self.se, dtype=float)
        s = se.max(axis=tuple(range(1, se.ndim))) if se.ndim > 1 else se
        return float(1.0 / math.sqrt(np.sum(1.0 / np.maximum(s, 1e-300) ** 2)))

    @property
    def spread(self) -> float:
        """Largest absolute deviation of a level estimate from the plateau value."""
        return float(np.max(np.abs(self.values - self.value)))

    def scaled(self, factor) -> "LevelEstimates":
        return LevelEstimates(self.levels, self.values * factor, self.se * abs(factor))


def shell_window(samples, alpha: float, structure: GroupStructure, blocks: BlockStructure | None = None,
                 window: tuple[float, float] = DEFAULT_WINDOW, base: float | None = None,
                 levels: Sequence[int] | None = None, min_points: int = 20) -> ShellWindow:
    """Shell estimates at the levels ``t = b**K`` inside the quantile window.

    Parameters
    ----------
    window : (float, float)
        Quantiles of ``tau`` bounding the levels; a shell ``[t, b t)`` is used if
        ``t`` is above the lower and ``b t`` below the upper quantile.
    base : float, optional
        Shell ratio; forced to ``p`` in a lattice structure, default 2 otherwise.
    levels : sequence of int, optional
        Explicit exponents ``K`` overriding the window.
    """
    x = _values(samples)
    blocks = _blocks_for(x, blocks)
    if structure.is_lattice:
        if base is not None and abs(math.log(base) / math.log(structure.p) - round(math.log(base) / math.log(structure.p))) > 1e-9:
            raise InputError("in lattice mode the shell ratio must be a power of p")
        base = structure.p if base is None else base
    else:
        base = 2.0 if base is None else float(base)
    r = tau(x, blocks)
    N = len(r)
    if levels is None:
        q_lo, q_hi = np.quantile(r, window)
        if not q_hi > q_lo > 0:
            raise InputError("empty quantile window for shell levels")
        k0 = math.ceil(math.log(q_lo) / math.log(base) - 1e-12)
        k1 = math.floor(math.log(q_hi) / math.log(base) + 1e-12) - 1
        levels = list(range(k0, k1 + 1))
    if not levels:
        raise InputError("quantile window contains no full shell; widen it or change the base")
    shells = []
    for K in levels:
        t = base ** float(K)
        sel = (r >= t) & (r < base * t)
        if np.sum(sel) < min_points:
            continue
        pts = blocks.dilate(x[sel], 1.0 / t)
        shells.append(Shell(pts, t ** alpha / N, t, int(K)))
    if not shells:
        raise EstimationError("no shell in the window has enough points")
    return ShellWindow(shells, alpha, base, blocks, structure, N, tuple(window))


# ---------------------------------------------------------------------------
# tail functionals

def coordinate_masks(alpha: float, blocks: BlockStructure, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates with exponent below ``alpha`` and equal to ``alpha``."""
    lam = blocks.coordinate_exponents()
    return lam < alpha - tol, np.abs(lam - alpha) <= tol


def integrand_orders(alpha: float, blocks: BlockStructure, active: np.ndarray | None = None,
                     tol: float = 1e-9) -> tuple[float, float]:
    """Homogeneous order at zero and growth at infinity of the compensated integrands.

    Coordinates with exponent at most ``alpha`` are compensated to second
    order, the others enter linearly; the linear compensator grows like the
    largest exponent below ``alpha``.  ``active`` restricts to coordinates
    where the frequency may be nonzero.
    """
    lam = blocks.coordinate_exponents()
    active = np.ones(len(lam), bool) if active is None else np.asarray(active, bool)
    comp = active & (lam <= alpha + tol)
    free = active & (lam > alpha + tol)
    order = 2 * float(lam[comp].min()) if comp.any() else np.inf
    if free.any():
        order = min(order, float(lam[free].min()))
    below = active & (lam < alpha - tol)
    growth = float(lam[below].max()) if below.any() else 0.0
    return order, growth


def compensated_exponential(X: np.ndarray, Y: np.ndarray, alpha: float, blocks: BlockStructure) -> np.ndarray:
    """Integrand of ``Lambda~`` for points ``X`` (n, d) and frequencies ``Y`` (m, d).

    ``e^{i<y,x>} - 1`` minus ``i<y, x_{alpha,-}>`` minus
    ``i<y, x_alpha> / (1 + |y_alpha|^2 |x_alpha|^2)``; in the Euclidean case this is
    the plain, the ``alpha = 1`` and the ``1 < alpha < 2`` integrand respectively.
    """
    out = np.expm1(1j * (X @ Y.T))
    minus, eq = coordinate_masks(alpha, blocks)
    if minus.any():
        out -= 1j * (X[:, minus] @ Y[:, minus].T)
    if eq.any():
        xe, ye = X[:, eq], Y[:, eq]
        out -= 1j * (xe @ ye.T) / (1.0 + np.sum(ye * ye, axis=1)[None, :] * np.sum(xe * xe, axis=1)[:, None])
    return out


def second_moment_form(window: ShellWindow) -> LevelEstimates:
    """``Sigma_2 = int_{Sigma_1} w w^T sigma(dw)`` per level (tail exponent two).

    ``sigma`` is the restriction of ``Lambda`` to the shell divided by ``log b``,
    which matches both Haar normalisations (``da / a`` and ``log p`` times counting).
    """
    lb = math.log(window.base)
    return window.shell_integral(lambda pts: np.einsum("ni,nj->nij", pts, pts) / lb)


def lambda_tilde(y, window: ShellWindow, regime: str | None = None, pooled: bool = True):
    """Tail functional ``Lambda~(y)`` at one or several points.

    ``alpha < 1``: ``int (e^{i<y,x>} - 1) dLambda``; ``alpha = 1``: minus
    ``i<y,x> / (1 + |y|^2 |x|^2)``; ``1 < alpha < 2``: minus ``i<y,x>``;
    ``alpha = 2``: ``-(1/4) y^T Sigma_2 y``.  With block exponents the
    compensators act on the coordinates with exponent below or equal to alpha
    (see :func:`compensated_exponential`).

    Returns a complex array of shape ``(m,)`` for ``y`` of shape ``(m, d)``, or
    a scalar for a single vector.  With ``pooled=False`` a :class:`LevelEstimates`
    is returned instead.
    """
    regime = regime_of(window.alpha) if regime is None else regime
    d = window.blocks.d
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim == 0 or (y_arr.ndim == 1 and y_arr.size == d)
    Y = y_arr.reshape(-1, d)
    if regime == ALPHA_EQ2:
        S2 = second_moment_form(window)
        vals = -0.25 * np.einsum("mi,lij,mj->lm", Y, S2.values, Y)
        est = LevelEstimates(S2.levels, vals.astype(complex), 0.25 * np.einsum("mi,lij,mj->lm", np.abs(Y), S2.se, np.abs(Y)))
        if not pooled:
            return est
        out = est.value
        return out[0] if single else out
    if regime == ALPHA_GT2:
        raise InputError("Lambda~ is not used above exponent two")
    order, growth = integrand_orders(window.alpha, window.blocks)

    def fn(pts, a, k):
        return compensated_exponential(pts, Y, window.alpha, window.blocks)

    if pooled:
        out = np.asarray(window.pooled().integrate(fn, order, growth))
        return out[0] if single else out
    return window.integrate(fn, order, growth)


def radial_representative(y: np.ndarray, window: ShellWindow) -> tuple[np.ndarray, np.ndarray]:
    """Shell representative ``y_bar`` and radial part ``r(y)`` of each row of ``y``.

    Dense: ``y_bar`` on the unit sphere ``tau = 1`` and ``r = tau(y)``.  Lattice:
    ``y = gamma_{p**k} y_bar`` with ``y_bar`` in ``{1 <= tau < p}`` and ``r = p**k``.
    """
    y = np.atleast_2d(y)
    r = tau(y, window.blocks)
    if window.structure.is_lattice:
        p = window.structure.p
        k = np.floor(np.log(r) / math.log(p) + 1e-13)
        rad = p ** k
    else:
        rad = r
    return window.blocks.dilate(y, 1.0 / rad), rad


class LambdaTildeTable:
    """Cached evaluator of ``Lambda~`` on shell representatives.

    Representatives are interpolated from a grid: in dimension one the
    segment ``[1, p)`` per sign (lattice) or the two points ``+-1`` (dense); in
    dimension two a periodic angle grid (dense) or an angle by radius grid
    over the annulus (lattice).  Higher dimensions are evaluated exactly.
    """

    def __init__(self, window: ShellWindow, regime: str | None = None, n_radial: int = 17,
                 n_angle: int = 96, max_pool: int = 8000):
        self.window = window
        self.regime = regime_of(window.alpha) if regime is None else regime
        self.d = window.blocks.d
        self.lattice = window.structure.is_lattice
        self._sigma2 = second_moment_form(window).value if self.regime == ALPHA_EQ2 else None
        if self._sigma2 is not None:
            return
        d, base = self.d, window.base
        if d == 1:
            self.radii = np.linspace(1.0, base, n_radial) if self.lattice else np.array([1.0])
            pts = np.concatenate([self.radii, -self.radii])[:, None]
            self.values = self._exact(pts).reshape(2, -1)
        elif d == 2 and window.blocks.is_euclidean:
            self.angles = np.linspace(-math.pi, math.pi, n_angle + 1)
            self.radii = np.linspace(1.0, base, n_radial) if self.lattice else np.array([1.0])
            rr, aa = np.meshgrid(self.radii, self.angles, indexing="ij")
            pts = np.stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()], axis=1)
            self.values = self._exact(pts).reshape(len(self.radii), len(self.angles))
        else:
            self.values = None

    def _exact(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(lambda_tilde(pts, self.window, self.regime))

    def __call__(self, ybar: np.ndarray) -> np.ndarray:
        ybar = np.atleast_2d(ybar)
        if self._sigma2 is not None:
            return (-0.25 * np.einsum("mi,ij,mj->m", ybar, self._sigma2, ybar)).astype(complex)
        if self.values is None:
            return self._exact(ybar)
        if self.d == 1:
            y = ybar[:, 0]
            out = np.empty(len(y), dtype=complex)
            for row, mask in ((0, y > 0), (1, y <= 0)):
                r = np.abs(y[mask])
                vals = self.values[row]
                if len(self.radii) == 1:
                    out[mask] = vals[0]
                else:
                    out[mask] = np.interp(r, self.radii, vals.real) + 1j * np.interp(r, self.radii, vals.imag)
            return out
        r = np.hypot(ybar[:, 0], ybar[:, 1])
        ang = np.arctan2(ybar[:, 1], ybar[:, 0])
        da = self.angles[1] - self.angles[0]
        fa = np.clip((ang - self.angles[0]) / da, 0, len(self.angles) - 1 - 1e-12)
        ia = np.floor(fa).astype(int)
        wa = fa - ia
        if len(self.radii) == 1:
            v = self.values[0]
            return (1 - wa) * v[ia] + wa * v[ia + 1]
        dr = self.radii[1] - self.radii[0]
        fr = np.clip((r - self.radii[0]) / dr, 0, len(self.radii) - 1 - 1e-12)
        ir = np.floor(fr).astype(int)
        wr = fr - ir
        v = self.values
        return ((1 - wr) * ((1 - wa) * v[ir, ia] + wa * v[ir, ia + 1])
                + wr * ((1 - wa) * v[ir + 1, ia] + wa * v[ir + 1, ia + 1]))


@dataclass
class DeltaEstimate:
    """``Delta_v(Lambda~^1)`` with per-level detail."""

    value: complex
    stat_se: float
    spread: float
    levels: np.ndarray
    per_level: np.ndarray


def delta_v_of_lambda1(dual_samples, window_R: ShellWindow, table: LambdaTildeTable | None = None,
                       window: tuple[float, float] | None = None,
                       levels: Sequence[int] | None = None) -> DeltaEstimate:
    """Tail of the dual law applied to ``Lambda~^1(y) = Lambda~(y_bar) 1{r(y) >= 1}``.

    With the dual samples ``W = Z* v`` the restriction of ``Delta_v`` to the shell
    at level ``t`` is ``(t**alpha / N) sum delta_{W / t}`` and
    ``Delta_v(Lambda~^1) = Delta_v|_S(Lambda~ o bar) / (1 - b**(-alpha))``.
    The quantile window defaults to the one of ``window_R``.
    """
    W = _values(dual_samples)
    if not np.any(W):
        raise InputError("dual samples are identically zero (v = 0)")
    table = LambdaTildeTable(window_R) if table is None else table
    window = window_R.quantiles if window is None else window
    dwin = shell_window(W, window_R.alpha, window_R.structure, window_R.blocks, window, window_R.base, levels)
    geo = 1.0 / (1.0 - window_R.base ** (-window_R.alpha))

    def fn(pts):
        return table(radial_representative(pts, window_R)[0])

    est = dwin.shell_integral(fn).scaled(geo)
    return DeltaEstimate(complex(est.value), est.stat_se, est.spread, est.levels, est.values)
