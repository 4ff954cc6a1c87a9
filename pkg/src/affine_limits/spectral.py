"""Grid discretisation of the Fourier transfer operators and their dominant eigenvalue.

``P_{c,v} f(x) = E[chi_v(c(Mx + Q)) f(Mx + Q)]`` is assembled as a sparse
matrix on a grid with piecewise-linear interpolation at the images.  The
dominant eigenvalue ``k(c,v)`` and its eigenfunction are found by weighted
power iteration; expansions of ``k(c,v) - 1`` as ``c -> 0`` are compared with
the limit-law constants.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from .engine import TrajectoryBatch, partial_sums
from .errors import InputError, NumericError, UnsupportedError
from .groups import BlockStructure, Similarity, tau
from .measure import MuSpec, solve_alpha

RESIDUAL_TOL = 1e-9
MAX_ITER = 10_000
CLIP_WARNING = 0.05


# ---------------------------------------------------------------------------
# grids

@dataclass(frozen=True)
class WeightExponents:
    """Exponents of the weighted sup and Hoelder norms.

    Feasibility: ``2 lam + 3 eps < alpha`` and ``lam + 3 eps <= theta <= 2 lam``, ``theta < alpha``.
    """

    theta: float
    eps: float
    lam: float

    @classmethod
    def default(cls, alpha: float) -> "WeightExponents":
        eps = min(0.05, alpha / 20.0)
        lam = alpha / 2.0 - 2.0 * eps
        theta = 0.5 * ((lam + 3 * eps) + 2 * lam)
        return cls(theta, eps, lam)

    def constraints(self, alpha: float) -> dict:
        return {"2lam+3eps<alpha": 2 * self.lam + 3 * self.eps < alpha,
                "lam+3eps<=theta<=2lam": self.lam + 3 * self.eps <= self.theta <= 2 * self.lam,
                "theta<alpha": self.theta < alpha}

    def to_dict(self) -> dict:
        return {"theta": self.theta, "eps": self.eps, "lam": self.lam}


@dataclass
class OperatorGrid:
    """Tensor grid of nodes on which functions are stored.

    Parameters
    ----------
    axes : tuple of ndarray
        Increasing node coordinates per dimension (one axis for ``d = 1``).
    weights : WeightExponents
    kind : str
        ``"uniform"`` or ``"geometric"``.
    """

    axes: tuple
    weights: WeightExponents
    kind: str = "uniform"
    blocks: BlockStructure | None = None

    def __post_init__(self):
        if len(self.axes) not in (1, 2):
            raise InputError("operator grids exist in dimension one and two only")
        for ax in self.axes:
            if len(ax) < 2 or np.any(np.diff(ax) <= 0):
                raise InputError("grid axes must be strictly increasing with at least two nodes")
        if self.blocks is None:
            self.blocks = BlockStructure.euclidean(len(self.axes))

    @classmethod
    def uniform(cls, L: float, h: float, d: int = 1, weights: WeightExponents | None = None,
                alpha: float | None = None) -> "OperatorGrid":
        """Grid on ``[-L, L]**d`` with mesh ``h``."""
        if L <= 0 or h <= 0:
            raise InputError("L and h must be positive")
        n = int(round(2 * L / h))
        ax = np.linspace(-L, L, n + 1)
        w = weights if weights is not None else WeightExponents.default(2.0 if alpha is None else alpha)
        return cls(tuple(ax for _ in range(d)), w, "uniform")

    @classmethod
    def geometric(cls, upper: float, ratio: float = 1.003, lower: float = 1.0, symmetric: bool = True,
                  weights: WeightExponents | None = None, alpha: float | None = None) -> "OperatorGrid":
        """One-dimensional grid ``{0} U {+-lower * ratio**j}`` up to ``upper``.

        Suited to heavy tails, where the relevant range spans many decades.
        """
        if not (upper > lower > 0 and ratio > 1):
            raise InputError("need upper > lower > 0 and ratio > 1")
        pos = np.exp(np.arange(math.log(lower), math.log(upper) + 1e-12, math.log(ratio)))
        ax = np.concatenate([-pos[::-1], [0.0], pos]) if symmetric else np.concatenate([[0.0], pos])
        w = weights if weights is not None else WeightExponents.default(2.0 if alpha is None else alpha)
        return cls((ax,), w, "geometric")

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def L(self) -> float:
        return float(max(max(abs(a[0]), abs(a[-1])) for a in self.axes))

    @property
    def h(self) -> float:
        return float(min(np.min(np.diff(a)) for a in self.axes))

    def points(self) -> np.ndarray:
        if self.d == 1:
            return self.axes[0][:, None]
        g0, g1 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.stack([g0.ravel(), g1.ravel()], axis=1)

    def weight(self, pts: np.ndarray | None = None) -> np.ndarray:
        """``(1 + tau(x))**(-theta)``, the factor of the weighted sup norm."""
        pts = self.points() if pts is None else pts
        return (1.0 + tau(pts, self.blocks)) ** (-self.weights.theta)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        inside = np.ones(len(pts), bool)
        for j, ax in enumerate(self.axes):
            inside &= (pts[:, j] >= ax[0]) & (pts[:, j] <= ax[-1])
        return inside

    def interpolation(self, pts: np.ndarray, policy: str = "clamp") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node indices and coefficients of piecewise-linear interpolation at ``pts``.

        Returns ``(index (m, 2**d), coeff (m, 2**d), outside (m,))``.  Outside
        the grid, ``"clamp"`` uses the nearest boundary value and ``"damped"``
        extrapolates linearly with the factor ``((1 + L) / (1 + tau(y)))**theta``.
        """
        if policy not in ("clamp", "damped"):
            raise InputError("boundary policy must be 'clamp' or 'damped'")
        pts = np.atleast_2d(pts)
        outside = ~self.contains(pts)
        idx1, w1 = [], []
        damp = None
        if policy == "damped":
            damp = ((1.0 + self.L) / (1.0 + tau(pts, self.blocks))) ** self.weights.theta
            damp = np.minimum(damp, 1.0)
        for j, ax in enumerate(self.axes):
            y = pts[:, j]
            i = np.clip(np.searchsorted(ax, y, side="right") - 1, 0, len(ax) - 2)
            w = (y - ax[i]) / (ax[i + 1] - ax[i])
            if policy == "clamp":
                w = np.clip(w, 0.0, 1.0)
            else:
                w = np.where(w > 1, 1 + (w - 1) * damp, np.where(w < 0, w * damp, w))
            idx1.append(i)
            w1.append(w)
        if self.d == 1:
            return np.stack([idx1[0], idx1[0] + 1], 1), np.stack([1 - w1[0], w1[0]], 1), outside
        n1 = len(self.axes[1])
        i0, i1 = idx1
        a, b = w1
        index = np.stack([i0 * n1 + i1, i0 * n1 + i1 + 1, (i0 + 1) * n1 + i1, (i0 + 1) * n1 + i1 + 1], 1)
        coeff = np.stack([(1 - a) * (1 - b), (1 - a) * b, a * (1 - b), a * b], 1)
        return index, coeff, outside

    def interpolate(self, f: np.ndarray, pts: np.ndarray, policy: str = "clamp") -> np.ndarray:
        index, coeff, _ = self.interpolation(pts, policy)
        return np.sum(f[index] * coeff, axis=1)

    def wnorm(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f) * self.weight()))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "L": self.L, "h": self.h, "size": self.size,
                "weights": self.weights.to_dict()}


def default_grid(mu: MuSpec, alpha: float | None = None) -> OperatorGrid:
    """Grid suited to the measure: uniform for ``alpha > 2``, geometric otherwise.

    The geometric grid reaches ``10**(8/alpha)`` (tail probability about
    ``1e-8``) and is one-sided when the chain stays nonnegative.
    """
    alpha = solve_alpha(mu) if alpha is None else alpha
    w = WeightExponents.default(alpha)
    if mu.d == 2:
        return OperatorGrid.uniform(10.0, 0.25, 2, w)
    if alpha > 2:
        return OperatorGrid.uniform(60.0, 0.02, 1, w)
    mats, qs = mu.atom_matrices(), mu.atom_translations()
    positive = bool(np.all(mats.reshape(len(mats), -1)[:, 0] > 0) and np.all(qs >= 0))
    nz = np.abs(qs[qs != 0])
    lower = float(min(1.0, nz.min())) if nz.size else 1e-3
    return OperatorGrid.geometric(10.0 ** (8.0 / alpha), 1.003, lower, not positive, w)


# ---------------------------------------------------------------------------
# operators

@dataclass
class DiscreteOperator:
    """Sparse matrix of ``P_{c,v}`` on a grid."""

    matrix: sp.csr_matrix
    grid: OperatorGrid
    c: float
    v: np.ndarray
    policy: str
    clipped_fraction: float

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def row_abs_sums(self) -> np.ndarray:
        return np.asarray(abs(self.matrix).sum(axis=1)).ravel()


def _scale_map(c, blocks: BlockStructure):
    if isinstance(c, Similarity):
        mat = c.matrix
        return lambda y: y @ mat.T, float(c.scale)
    c = float(c)
    return (lambda y: blocks.dilate(y, c)) if c != 0 else (lambda y: np.zeros_like(y)), abs(c)


def assemble(mu: MuSpec, grid: OperatorGrid, c=0.0, v=None, policy: str = "clamp") -> DiscreteOperator:
    """Assemble ``P_{c,v} f(x) = sum_i p_i chi_v(c(M_i x + Q_i)) f(M_i x + Q_i)``.

    ``c`` is a scale (dilation) or a :class:`Similarity`.  Images outside the
    grid follow the boundary policy and their probability mass (averaged over
    nodes) is reported as the clipped fraction.
    """
    if not mu.is_finite:
        raise UnsupportedError("grid operators need a finite mixture")
    if mu.d != grid.d:
        raise InputError("grid and measure dimensions differ")
    v = np.zeros(mu.d) if v is None else np.atleast_1d(np.asarray(v, float))
    if v.shape != (mu.d,):
        raise InputError("v has the wrong dimension")
    cmap, c_abs = _scale_map(c, mu.blocks)
    X = grid.points()
    n = len(X)
    rows, cols, vals = [], [], []
    clipped = 0.0
    for atom in mu.atoms:
        Y = X @ atom.M.matrix.T + atom.Q
        index, coeff, outside = grid.interpolation(Y, policy)
        phase = atom.prob * np.exp(1j * (cmap(Y) @ v))
        clipped += atom.prob * float(np.mean(outside))
        rows.append(np.repeat(np.arange(n), index.shape[1]))
        cols.append(index.ravel())
        vals.append((phase[:, None] * coeff).ravel())
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return DiscreteOperator(mat, grid, float(c.scale) if isinstance(c, Similarity) else float(c), v, policy, clipped)


# ---------------------------------------------------------------------------
# eigenvalues

@dataclass
class EigenResult:
    """Dominant eigenpair of a discrete operator."""

    k: complex
    psi: np.ndarray
    residual: float
    iterations: int
    converged: bool
    method: str = "power"
    warning: str | None = None


def _rayleigh(A, f, w):
    g = A @ f
    fw = f * w
    return np.vdot(fw, g * w) / np.vdot(fw, fw), g


def dominant_eigenvalue(op: DiscreteOperator, tol: float = RESIDUAL_TOL, max_iter: int = MAX_ITER,
                        f0: np.ndarray | None = None, seed: int = 0, fallback: bool = True) -> EigenResult:
    """Weighted power iteration with Rayleigh quotient.

    Iterates are normalised in the weighted sup norm; convergence means the
    weighted residual ``|P psi - k psi| / |psi|`` is at most ``tol``.  After 500
    iterations without a tenfold residual improvement the iteration restarts
    once from a random-phase vector.  Without convergence in ``max_iter`` steps
    an Arnoldi solve is tried (``fallback``) and a warning is recorded.
    """
    A, grid = op.matrix, op.grid
    w = grid.weight()
    f = np.ones(grid.size, complex) if f0 is None else np.asarray(f0, complex).copy()
    rng = np.random.default_rng(seed)
    best, since, restarted = np.inf, 0, False
    k, res = 0j, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        k, g = _rayleigh(A, f, w)
        res = np.max(np.abs(g - k * f) * w) / np.max(np.abs(f) * w)
        if res <= tol:
            return EigenResult(complex(k), f / _anchor(f, w), float(res), it, True)
        nrm = np.max(np.abs(g) * w)
        if nrm == 0:
            raise NumericError("operator annihilated the iterate")
        f = g / nrm
        if res < 0.1 * best:
            best, since = res, 0
        else:
            since += 1
        if since >= 500 and not restarted:
            f = f * np.exp(2j * np.pi * rng.random(len(f)))
            best, since, restarted = np.inf, 0, True
    if fallback:
        try:
            vals, vecs = spla.eigs(A, k=1, which="LM", v0=f, tol=1e-13, maxiter=5000)
            psi = vecs[:, 0]
            kk = complex(vals[0])
            r = float(np.max(np.abs(A @ psi - kk * psi) * w) / np.max(np.abs(psi) * w))
            return EigenResult(kk, psi / _anchor(psi, w), r, it, r <= max(tol, 1e-8), "arnoldi",
                               "power iteration did not converge; Arnoldi result used")
        except (spla.ArpackNoConvergence, ValueError):
            pass
    return EigenResult(complex(k), f / _anchor(f, w), float(res), it, False, "power",
                       f"no convergence in {max_iter} iterations; spectral radius estimate {abs(k):.6g}")


def _anchor(f: np.ndarray, w: np.ndarray) -> complex:
    # scale so that the weighted-largest entry is real positive
    i = int(np.argmax(np.abs(f) * w))
    return f[i] / abs(f[i]) * np.max(np.abs(f) * w) if f[i] != 0 else 1.0


def spectral_gap(op: DiscreteOperator, n_eigs: int = 2) -> dict:
    """Leading eigenvalue moduli by Arnoldi iteration; gap is ``1 - |second|``."""
    try:
        vals = spla.eigs(op.matrix, k=n_eigs, which="LM", return_eigenvectors=False, tol=1e-10,
                         maxiter=20000, ncv=max(20, 2 * n_eigs + 1))
    except spla.ArpackNoConvergence as exc:
        vals = exc.eigenvalues
        if len(vals) < 2:
            raise NumericError("Arnoldi iteration did not resolve two eigenvalues") from exc
    mods = np.sort(np.abs(vals))[::-1]
    return {"moduli": mods.tolist(), "second": float(mods[1]), "gap": float(1.0 - mods[1])}


# ---------------------------------------------------------------------------
# identities

@dataclass
class IdentityCheck:
    lhs: complex
    rhs: complex
    residual: float
    clipped_fraction: float
    warning: str | None = None


def eigenvalue_identity_check(op: DiscreteOperator, eig: EigenResult, samples) -> IdentityCheck:
    """``(k - 1) nu(psi) = nu(psi (chi_{c* v} - 1))`` with the empirical stationary law.

    ``psi`` is interpolated at the samples (clamped to the grid); the relative
    residual ``|lhs - rhs| / |rhs|`` is reported (zero when both sides vanish).
    """
    X = samples.values if isinstance(samples, TrajectoryBatch) else np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    grid = op.grid
    clipped = float(np.mean(~grid.contains(X)))
    psi = grid.interpolate(eig.psi, X, "clamp")
    cmap, _ = _scale_map(op.c, grid.blocks)
    chi = np.exp(1j * (cmap(X) @ op.v))
    lhs = (eig.k - 1.0) * psi.mean()
    rhs = np.mean(psi * (chi - 1.0))
    scale = max(abs(lhs), abs(rhs))
    residual = 0.0 if scale == 0 else float(abs(lhs - rhs) / abs(rhs)) if rhs != 0 else float("inf")
    warn = f"{clipped:.1%} of samples outside the grid" if clipped > CLIP_WARNING else None
    return IdentityCheck(complex(lhs), complex(rhs), residual, clipped, warn)


def intertwining_check(op: DiscreteOperator, eig: EigenResult, dual_samples, chunk: int = 256) -> float:
    """Weighted residual ``|P psi~ - k psi~| / |psi~|`` with ``psi~(x) = E exp(i<c x, W>)``.

    ``dual_samples`` are draws of ``W = Z* v``.  The trial function is the
    small-``c`` approximation of the eigenfunction, so the residual shrinks with ``|c|``.
    """
    W = dual_samples.values if isinstance(dual_samples, TrajectoryBatch) else np.asarray(dual_samples, float)
    if W.ndim == 1:
        W = W[:, None]
    grid = op.grid
    X = grid.points()
    cmap, _ = _scale_map(op.c, grid.blocks)
    cX = cmap(X)
    psi = np.empty(len(X), complex)
    for s in range(0, len(X), chunk):
        psi[s:s + chunk] = np.exp(1j * (cX[s:s + chunk] @ W.T)).mean(axis=1)
    w = grid.weight()
    return float(np.max(np.abs(op.matrix @ psi - eig.k * psi) * w) / np.max(np.abs(psi) * w))


def power_sum_check(mu: MuSpec, grid: OperatorGrid, v, x0, n_max: int = 20, N: int = 20000, seed: int = 0,
                    policy: str = "clamp") -> list[dict]:
    """Compare ``(P_v^n 1)(x0)`` with the empirical ``E[chi_v(S_n)]`` from ``x0``, ``n <= n_max``.

    ``S_n = X_1 + ... + X_n``; the Monte Carlo standard error is reported per ``n``.
    """
    op = assemble(mu, grid, 1.0, v, policy)
    x0 = np.atleast_1d(np.asarray(x0, float))
    v = np.atleast_1d(np.asarray(v, float))
    sums = partial_sums(mu, x0, range(1, n_max + 1), N, seed)
    f = np.ones(grid.size, complex)
    rows = []
    for n in range(1, n_max + 1):
        f = op.apply(f)
        grid_val = complex(grid.interpolate(f, x0[None, :])[0])
        chi = np.exp(1j * (sums[n].values @ v))
        mc = complex(chi.mean())
        se = float(math.sqrt((np.var(chi.real) + np.var(chi.imag)) / N))
        rows.append({"n": n, "operator": grid_val, "mc": mc, "se": se, "diff": abs(grid_val - mc)})
    return rows


# ---------------------------------------------------------------------------
# expansions

def compensated_ratio(k: complex, c: float, v: np.ndarray, regime: str, alpha: float,
                      m: np.ndarray | None = None, xi_c: np.ndarray | None = None) -> complex:
    """Regime-appropriate compensated ratio of ``k(c,v) - 1``.

    ``(k-1)/c**alpha`` (below one), ``(k-1-i<v,xi(c)>)/c`` (one),
    ``(k-1-i<v,cm>)/c**alpha`` (between one and two), ``(k-1-i<v,cm>)/(c**2 |log c|)``
    (two) and ``(k-1-i<v,cm>)/c**2`` (above two).
    """
    v = np.atleast_1d(v)
    if regime == "AlphaLt1":
        return (k - 1) / c ** alpha
    if regime == "AlphaEq1":
        return (k - 1 - 1j * float(v @ xi_c)) / c
    drift = 1j * c * float(v @ m)
    if regime == "Alpha1to2":
        return (k - 1 - drift) / c ** alpha
    if regime == "AlphaEq2":
        return (k - 1 - drift) / (c ** 2 * abs(math.log(c)))
    return (k - 1 - drift) / c ** 2


def aitken_limit(r: Sequence[complex]) -> complex:
    """Limit of a geometrically converging sequence from its last three terms."""
    r1, r2, r3 = r[-3:]
    den = (r3 - r2) - (r2 - r1)
    if den == 0:
        return complex(r3)
    return complex(r3 - (r3 - r2) ** 2 / den)


def power_law_limit(t: Sequence[float], r: Sequence[complex], gamma: float, tol: float = 0.05) -> complex:
    """Constant term of ``r(t) = C + a t**gamma + b t`` through the last three points.

    When ``gamma`` is within ``tol`` of one the basis ``{1, t log t, t}`` is used.
    """
    t = np.asarray(t[-3:], float)
    r = np.asarray(r[-3:], complex)
    second = t * np.log(t) if abs(gamma - 1.0) < tol else t ** gamma
    A = np.stack([np.ones(3), second, t], axis=1)
    return complex(np.linalg.solve(A.astype(complex), r)[0])


@dataclass
class ExpansionFit:
    """Compensated ratios on a scale grid and their extrapolation to zero."""

    c: np.ndarray
    k: np.ndarray
    ratio: np.ndarray
    residuals: np.ndarray
    fitted: complex
    spread: float
    method: str
    target: complex | None = None
    rel_deviation: float | None = None
    floor_at: float | None = None
    warnings: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"c": float(c), "Re k": k.real, "Im k": k.imag, "residual": float(r), "ratio_re": q.real,
                 "ratio_im": q.imag, "fitted_re": self.fitted.real, "fitted_im": self.fitted.imag}
                for c, k, r, q in zip(self.c, self.k, self.residuals, self.ratio)]


def _extrapolate(c, ratio, regime, alpha) -> tuple[complex, str]:
    if regime == "AlphaGt2":
        return power_law_limit(c, ratio, alpha - 2.0), "power-law basis"
    return aitken_limit(ratio), "aitken"


def default_c_grid(alpha: float, structure=None) -> np.ndarray:
    """Perturbation scales for the expansion fit, largest first.

    Above two: nine equally spaced points from 0.1 down to 0.02.  Otherwise
    even powers ``b**-k`` for ``k = 8..20``, with ``b = p`` on a lattice so the
    compensated ratio is sampled at a fixed phase of its log-period.
    """
    if alpha > 2:
        return np.linspace(0.1, 0.02, 9)
    base = structure.p if (structure is not None and structure.is_lattice) else 2.0
    return base ** -np.arange(8, 21, 2, dtype=float)


def expansion_fit(mu: MuSpec, v, c_grid: Sequence[float], regime: str, alpha: float | None = None,
                  grid: OperatorGrid | None = None, m: np.ndarray | None = None, xi_fn=None,
                  target: complex | None = None, compare: str = "complex", policy: str = "clamp") -> ExpansionFit:
    """Dominant eigenvalues on ``c_grid``, compensated ratios and their ``c -> 0`` limit.

    The limit uses the last three points: Aitken extrapolation up to exponent
    two, and the basis ``{1, c**(alpha-2), c}`` (with ``c log c`` at exponent
    three) above two.  The spread compares with the fit through the three
    preceding points.  ``compare="real"`` measures the deviation from
    ``target`` on real parts only.
    """
    alpha = solve_alpha(mu) if alpha is None else alpha
    v = np.atleast_1d(np.asarray(v, float))
    grid = default_grid(mu, alpha) if grid is None else grid
    c_sorted = np.sort(np.asarray(c_grid, float))[::-1]
    ks, res, ratios, warns = [], [], [], []
    f0 = None
    for c in c_sorted:
        op = assemble(mu, grid, c, v, policy)
        eig = dominant_eigenvalue(op, f0=f0)
        if eig.warning:
            warns.append(f"c={c:g}: {eig.warning}")
        f0 = eig.psi
        ks.append(eig.k)
        res.append(eig.residual)
        xi_c = xi_fn(c) if (regime == "AlphaEq1" and xi_fn is not None) else None
        ratios.append(compensated_ratio(eig.k, c, v, regime, alpha, m, xi_c) if np.any(v) else 0j)
    ratios = np.array(ratios)
    floor_at = None
    diffs = np.abs(np.diff(ratios))
    for i in range(1, len(diffs)):
        if diffs[i] > 2.0 * diffs[i - 1] and diffs[i] > 1e-12:
            floor_at = float(c_sorted[i])
            warns.append(f"ratios stop converging below c={floor_at:g}; grid truncated")
            c_sorted, ratios = c_sorted[: i + 1], ratios[: i + 1]
            ks, res = ks[: i + 1], res[: i + 1]
            break
    if not np.any(v):
        fitted, method, spread = 0j, "trivial", 0.0
    elif len(ratios) < 3:
        raise InputError("need at least three usable grid points to extrapolate")
    else:
        fitted, method = _extrapolate(c_sorted, ratios, regime, alpha)
        spread = abs(fitted - _extrapolate(c_sorted[:-1], ratios[:-1], regime, alpha)[0]) if len(ratios) >= 4 else float("nan")
    fit = ExpansionFit(c_sorted, np.array(ks), ratios, np.array(res), fitted, float(spread), method,
                       floor_at=floor_at, warnings=warns)
    if target is not None:
        fit.target = complex(target)
        if compare == "real":
            fit.rel_deviation = abs(fitted.real - fit.target.real) / abs(fit.target.real)
        else:
            fit.rel_deviation = abs(fitted - fit.target) / abs(fit.target)
    return fit


def detect_perturbation_radius(mu: MuSpec, grid: OperatorGrid, v, c_grid: Sequence[float],
                               max_iter: int = 2000) -> float | None:
    """Smallest scale on an increasing grid where power iteration fails; ``None`` if none fails."""
    for c in np.sort(np.asarray(c_grid, float)):
        eig = dominant_eigenvalue(assemble(mu, grid, c, v), max_iter=max_iter, fallback=False)
        if not eig.converged:
            return float(c)
    return None


def probe_csv(fit: ExpansionFit, v, path: str | Path | None = None) -> str:
    """CSV rows ``(c, v, Re k, Im k, residual, ratio, fitted)``."""
    buf = io.StringIO()
    wr = csv.writer(buf)
    wr.writerow(["c", "v", "re_k", "im_k", "residual", "ratio_re", "ratio_im", "fitted_re", "fitted_im"])
    vs = " ".join(f"{x:.17g}" for x in np.atleast_1d(v))
    for row in fit.rows():
        wr.writerow([f"{row['c']:.17g}", vs, f"{row['Re k']:.17g}", f"{row['Im k']:.17g}", f"{row['residual']:.3e}",
                     f"{row['ratio_re']:.17g}", f"{row['ratio_im']:.17g}", f"{row['fitted_re']:.17g}",
                     f"{row['fitted_im']:.17g}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
