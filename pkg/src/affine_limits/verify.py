"""Statistical verification of the limit theorems.

Empirical characteristic functions of normalised partial sums are compared
with the predicted Fourier transforms, and local-limit frequencies with the
limit density at zero.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .engine import TrajectoryBatch, partial_sums, sample_stationary
from .errors import EstimationError, InputError, RegimeError, UnsupportedError
from .law import LimitLawSpec, Regime, centering_schedule, phi_table
from .measure import MuSpec, mu_to_dict


def spec_hash(mu: MuSpec) -> str:
    """Short content hash of a measure description."""
    text = json.dumps(mu_to_dict(mu), sort_keys=True)
    return hashlib.sha256(text.encode("utf8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# empirical characteristic functions

@dataclass
class ECFTable:
    """Empirical characteristic function on a frequency grid.

    ``se`` is the sample standard error of the complex mean; ``bound`` is the
    distribution-free ``1 / sqrt(N)`` per component.
    """

    v: np.ndarray
    value: np.ndarray
    se: np.ndarray
    N: int

    @property
    def bound(self) -> float:
        return 1.0 / math.sqrt(self.N)


def _as_grid(v_grid, d: int) -> np.ndarray:
    g = np.asarray(v_grid, dtype=float)
    if g.ndim == 0:
        g = g[None]
    if d == 1 and g.ndim == 1:
        return g[:, None]
    g = np.atleast_2d(g)
    if g.shape[1] != d:
        raise InputError(f"frequency grid must have {d} columns")
    return g


def ecf(samples, v_grid, chunk: int = 1 << 16) -> ECFTable:
    """Mean of ``exp(i<v, X>)`` over the samples for every ``v`` in the grid."""
    X = samples.values if isinstance(samples, TrajectoryBatch) else np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    V = _as_grid(v_grid, X.shape[1])
    N = len(X)
    if N == 0:
        raise InputError("no samples")
    s_cos = np.zeros(len(V))
    s_sin = np.zeros(len(V))
    q_cos = np.zeros(len(V))
    q_sin = np.zeros(len(V))
    for start in range(0, N, chunk):
        ph = X[start:start + chunk] @ V.T
        c, s = np.cos(ph), np.sin(ph)
        s_cos += c.sum(axis=0)
        s_sin += s.sum(axis=0)
        q_cos += (c * c).sum(axis=0)
        q_sin += (s * s).sum(axis=0)
    mc, ms = s_cos / N, s_sin / N
    var = np.maximum(q_cos / N - mc ** 2, 0) + np.maximum(q_sin / N - ms ** 2, 0)
    se = np.sqrt(var / max(N - 1, 1))
    return ECFTable(V, mc + 1j * ms, se, N)


def default_v_grid(law: LimitLawSpec, n_per_axis: int = 17, upper: float = 8.0) -> np.ndarray:
    """Grid of ``n_per_axis`` points per axis in ``[-2, 2]``, rescaled so ``|Re C| <= upper``.

    The rescaling uses the homogeneity of ``C`` with the law's stability index.
    """
    base = np.linspace(-2.0, 2.0, n_per_axis)
    e = np.zeros(law.d)
    e[0] = 2.0
    c2 = abs(law.C(e).real)
    scale = (upper / c2) ** (1.0 / law.stability_index) if c2 > upper else 1.0
    axis = base * scale
    if law.d == 1:
        return axis[:, None]
    g = np.meshgrid(*([axis] * law.d), indexing="ij")
    return np.stack([x.ravel() for x in g], axis=1)


# ---------------------------------------------------------------------------
# convergence reports

@dataclass
class ConvergenceRow:
    n: int
    sup_distance: float
    max_se: float
    max_z: float
    passed: bool
    inconclusive: bool
    exact: bool
    ecf: np.ndarray
    phi: np.ndarray
    se: np.ndarray

    def to_dict(self) -> dict:
        return {"n": self.n, "sup_distance": self.sup_distance, "max_se": self.max_se, "max_z": self.max_z,
                "passed": self.passed, "inconclusive": self.inconclusive, "exact": self.exact}


@dataclass
class VerificationReport:
    """Outcome of one verification experiment, reproducible from (config, seed)."""

    experiment: str
    spec_hash: str
    seed: int
    N: int
    v_grid: np.ndarray
    rows: list = field(default_factory=list)
    llt: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    passed: bool = True
    runtime: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.sup_distance for r in self.rows])

    def decreasing(self) -> bool:
        d = self.distances
        return bool(np.all(np.diff(d) < 0))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "spec_hash": self.spec_hash, "seed": self.seed, "N": self.N,
                "tolerances": self.tolerances, "passed": self.passed, "runtime": self.runtime,
                "rows": [r.to_dict() for r in self.rows], "llt": self.llt, "notes": self.notes}

    def to_csv(self) -> str:
        """Plot-ready rows ``(n, v, Re Phi, Im Phi, Re ECF, Im ECF, SE)``."""
        buf = io.StringIO()
        wr = csv.writer(buf)
        d = self.v_grid.shape[1]
        wr.writerow(["n"] + [f"v{j}" for j in range(d)] + ["re_phi", "im_phi", "re_ecf", "im_ecf", "se"])
        for r in self.rows:
            for v, p, e, s in zip(self.v_grid, r.phi, r.ecf, r.se):
                wr.writerow([r.n] + [f"{x:.10g}" for x in v] +
                            [f"{p.real:.10g}", f"{p.imag:.10g}", f"{e.real:.10g}", f"{e.imag:.10g}", f"{s:.3g}"])
        return buf.getvalue()


def _default_start(law: LimitLawSpec) -> np.ndarray:
    # starting at the stationary mean makes E X_k = m for every k, removing the
    # O(n^{-1/2}) transient that a fixed start adds to the centred sums
    if law.alpha > 1 and law.m is not None:
        return np.array(law.m, float).reshape(law.d)
    return np.zeros(law.d)


def verify_convergence(law: LimitLawSpec, n_list: Sequence[int], v_grid=None, N: int = 50_000, seed: int = 0,
                       workers: int = 1, regime: Regime | str | None = None, x0=None, tol_se: float = 3.0,
                       drift: float = 0.0, experiment: str = "convergence") -> VerificationReport:
    """ECF of the normalised sums ``c_n S_n - d_n`` against the limit Fourier transform.

    A row passes when ``|ECF - Phi| <= tol_se * SE + drift`` at every grid
    point; for ``alpha = 1`` moduli are compared because the drift of the
    limit is only determined up to a real constant.  A row is inconclusive
    when the sup distance is below twice the largest SE.  Lattice structures
    accept only the exact subsequence.  The default start is the stationary
    mean when it exists and the origin otherwise.
    """
    t0 = time.perf_counter()
    if regime is not None and Regime(regime) is not law.regime:
        raise RegimeError(f"law regime {law.regime.value} does not match requested {Regime(regime).value}")
    mu = law.mu
    x0 = _default_start(law) if x0 is None else np.atleast_1d(np.asarray(x0, float))
    V = default_v_grid(law) if v_grid is None else _as_grid(v_grid, law.d)
    n_pos = sorted({int(n) for n in n_list if int(n) > 0})
    sched = centering_schedule(law, n_pos) if n_pos else None
    inexact = [] if sched is None else [int(n) for n, e in zip(sched.n, sched.exact) if not e]
    if inexact and law.regime is not Regime.ALPHA_EQ2:
        raise InputError(f"lattice structure: n = {inexact} are not on the exact subsequence")
    phis = phi_table(law, V)
    modulus = law.regime is Regime.ALPHA_EQ1
    rep = VerificationReport(experiment, spec_hash(mu), seed, N, V,
                             tolerances={"tol_se": tol_se, "drift": drift, "compare": "modulus" if modulus else "complex"})
    if inexact:
        rep.notes.append(f"normaliser rounded to the lattice for n = {inexact}")
    sums = partial_sums(mu, x0, n_pos, N, seed, workers) if n_pos else {}
    for n in sorted({int(n) for n in n_list}):
        if n == 0:
            # S_0 = 0: the ECF is identically one and only v = 0 is comparable
            at0 = np.all(V == 0, axis=1)
            e = np.ones(len(V), complex)
            dist = np.abs(e - phis)[at0] if at0.any() else np.zeros(1)
            row = ConvergenceRow(0, float(dist.max()), 0.0, 0.0, bool(dist.max() <= drift + 1e-12), False, True,
                                 e, phis, np.zeros(len(V)))
            rep.rows.append(row)
            continue
        i = n_pos.index(n)
        Y = sched.normalize(i, sums[n].values)
        tab = ecf(Y, V)
        diff = np.abs(np.abs(tab.value) - np.abs(phis)) if modulus else np.abs(tab.value - phis)
        se = np.maximum(tab.se, 1e-300)
        ok = bool(np.all(diff <= tol_se * tab.se + drift))
        row = ConvergenceRow(n, float(diff.max()), float(tab.se.max()), float((diff / se).max()), ok,
                             bool(diff.max() < 2 * tab.se.max()), bool(sched.exact[i]), tab.value, phis, tab.se)
        rep.rows.append(row)
    rep.passed = all(r.passed for r in rep.rows)
    rep.runtime = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# density at zero

@dataclass
class DensityResult:
    """``p(0) = (2 pi)^{-d} int Phi`` with quadrature error and tail bound."""

    value: float
    quad_error: float
    tail_bound: float
    decay: float
    cutoff: float

    @property
    def error(self) -> float:
        return self.quad_error + self.tail_bound


def density_at_zero(phi_fn: Callable[[np.ndarray], complex], d: int = 1, alpha: float = 2.0,
                    tail_tol: float = 1e-12, max_cutoff: float = 2.0 ** 20) -> DensityResult:
    """Fourier inversion at zero for a characteristic function ``phi_fn``.

    The integrand decays like ``exp(-D |v|**alpha)``; ``D`` is fitted as the
    smallest value of ``-log|Phi(v)| / |v|**alpha`` near the cutoff ``V``,
    which is doubled until the analytic tail bound falls below ``tail_tol``.
    Dimension one integrates ``Re Phi`` on ``[-V, V]``; dimension two uses polar
    coordinates on the disc of radius ``V``.
    """
    if d not in (1, 2):
        raise UnsupportedError("density inversion is implemented for d = 1 and d = 2")

    def at(v) -> complex:
        return complex(phi_fn(np.atleast_1d(np.asarray(v, float))))

    def dirs(r):
        if d == 1:
            return [np.array([r]), np.array([-r])]
        return [r * np.array([math.cos(a), math.sin(a)]) for a in np.linspace(0, 2 * math.pi, 16, endpoint=False)]

    def fit_decay(V):
        ds = []
        for r in np.linspace(V / 4, V, 12):
            for u in dirs(r):
                m = abs(at(u))
                ds.append(np.inf if m == 0 else -math.log(m) / r ** alpha)
        return min(ds)

    def tail(D, V):
        a = 1.0 / alpha if d == 1 else 2.0 / alpha
        upper = special.gammaincc(a, D * V ** alpha) * special.gamma(a) / (alpha * D ** a)
        return (2.0 * upper) if d == 1 else 2 * math.pi * upper

    V = 1.0
    while True:
        D = fit_decay(V)
        if not D > 0:
            raise EstimationError("fitted decay rate is not positive: integrability cannot be certified")
        tb = tail(D, V) / (2 * math.pi) ** d
        if tb < tail_tol or V >= max_cutoff:
            break
        V *= 2.0
    if d == 1:
        left = integrate.quad(lambda v: at(v).real, -V, 0.0, epsabs=1e-13, epsrel=1e-12, limit=500)
        right = integrate.quad(lambda v: at(v).real, 0.0, V, epsabs=1e-13, epsrel=1e-12, limit=500)
        total, err = left[0] + right[0], left[1] + right[1]
    else:
        inner = lambda a: integrate.quad(lambda r: at(r * np.array([math.cos(a), math.sin(a)])).real * r, 0.0, V,
                                         epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        total, err = integrate.quad(inner, 0.0, 2 * math.pi, epsabs=1e-11, epsrel=1e-10, limit=200)
    norm = (2 * math.pi) ** d
    return DensityResult(total / norm, err / norm, tb, D, V)


def law_density_at_zero(law: LimitLawSpec) -> DensityResult:
    """Limit density at zero.

    Normal limits use ``(2 pi)^{-d/2} det(Sigma)^{-1/2}``; dense stable limits
    in dimension one use homogeneity, ``C(v) = |v|**alpha C(sign v)``, which
    gives ``Re[Gamma(1 + 1/alpha) (-C(1))**(-1/alpha)] / pi``; otherwise
    numerical inversion.
    """
    if law.regime is Regime.ALPHA_GT2:
        q, zt = np.atleast_2d(law.q), np.atleast_2d(law.z).T
        A = np.linalg.solve(np.eye(law.d) - zt, zt)
        S = q + q @ A + (q @ A).T
        det = float(np.linalg.det(S))
        if det <= 0:
            raise EstimationError("limit covariance is degenerate")
        return DensityResult((2 * math.pi) ** (-law.d / 2) / math.sqrt(det), 0.0, 0.0, 0.0, math.inf)
    if law.d == 1 and not law.structure.is_lattice and law.regime in (Regime.ALPHA_LT1, Regime.ALPHA_1TO2):
        c1 = law.C(np.array([1.0]))
        if not c1.real < 0:
            raise EstimationError("Re C(1) is not negative: integrability cannot be certified")
        val = (special.gamma(1 + 1 / law.alpha) * (-c1) ** (-1 / law.alpha)).real / math.pi
        return DensityResult(float(val), 0.0, 0.0, -c1.real, math.inf)
    return density_at_zero(law.phi, law.d, law.stability_index)


# ---------------------------------------------------------------------------
# local limit

@dataclass
class SubspaceProbe:
    """Affine rank of stationary samples; a rank below ``d`` reveals an invariant affine subspace."""

    rank: int
    d: int
    singular_values: np.ndarray
    n_points: int

    @property
    def full(self) -> bool:
        return self.rank == self.d

    def to_dict(self) -> dict:
        return {"rank": self.rank, "d": self.d, "singular_values": self.singular_values.tolist(),
                "n_points": self.n_points, "heuristic": True}


def affine_rank_probe(mu: MuSpec, n_points: int = 256, seed: int = 0, rtol: float = 1e-9) -> SubspaceProbe:
    """Randomised check that no proper affine subspace is invariant under every map in the support.

    The affine hull of the stationary support is the smallest invariant affine
    subspace, so its dimension is estimated from the singular values of
    centred stationary samples.  A full rank certifies the clause only up to
    sampling; a deficient rank is conclusive up to ``rtol``.
    """
    X = sample_stationary(mu, n_points, seed=seed, stream="rank_probe").values
    sv = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    scale = max(float(np.max(np.abs(X))), 1.0)
    rank = int(np.sum(sv > rtol * scale * math.sqrt(n_points)))
    return SubspaceProbe(rank, mu.d, sv, n_points)


@dataclass
class LocalLimitRow:
    n: int
    count: int
    frequency: float
    ratio: float
    se: float
    inconclusive: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "count": self.count, "frequency": self.frequency, "ratio": self.ratio,
                "se": self.se, "inconclusive": self.inconclusive}


@dataclass
class LocalLimitReport:
    rows: list
    target: float
    chi: float
    volume: float
    stabilized: bool
    tolerance: float
    subspace: SubspaceProbe | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"target": self.target, "chi": self.chi, "volume": self.volume, "stabilized": self.stabilized,
                "tolerance": self.tolerance, "rows": [r.to_dict() for r in self.rows],
                "subspace": None if self.subspace is None else self.subspace.to_dict(), "notes": self.notes}


def local_limit_check(law: LimitLawSpec, interval, n_list: Sequence[int] = (250, 500, 1000, 2000, 4000),
                      N: int = 10**6, seed: int = 0, workers: int = 1, x0=None, p0: float | None = None,
                      tolerance: float = 0.2) -> LocalLimitReport:
    """``n**chi P[S_n - d_n in I]`` against ``p(0) lambda(I)``.

    ``interval`` is a box given as ``(low, high)`` per coordinate (a pair in
    dimension one).  ``chi = d/alpha`` below two and ``d/2`` above; ``d_n = 0``
    below one and ``n m`` above.  Stabilisation means the last two ratios are
    within ``tolerance`` of each other and of the target.  All ``n`` share the
    same trajectories.  The report carries an :func:`affine_rank_probe`; a
    deficient rank clears the stabilisation flag.
    """
    if law.structure.is_lattice:
        raise UnsupportedError("the local limit theorem requires a dense scale group")
    if law.regime in (Regime.ALPHA_EQ1, Regime.ALPHA_EQ2, Regime.MIXED_T3):
        raise RegimeError(f"local limit check not available in regime {law.regime.value}")
    box = np.asarray(interval, float).reshape(-1, 2)
    if box.shape[0] != law.d:
        raise InputError("interval dimension does not match the law")
    lo, hi = box[:, 0], box[:, 1]
    volume = float(np.prod(np.maximum(hi - lo, 0.0)))
    probe = affine_rank_probe(law.mu, seed=seed)
    notes = ["invariant-subspace clause checked by a randomised rank probe (heuristic)"]
    if not probe.full:
        notes.append(f"stationary samples span an affine subspace of dimension {probe.rank} < {law.d}; "
                     "the local limit hypothesis fails")
    chi = law.d / 2.0 if law.regime is Regime.ALPHA_GT2 else law.d / law.alpha
    p0 = law_density_at_zero(law).value if p0 is None else float(p0)
    target = p0 * volume
    x0 = _default_start(law) if x0 is None else np.atleast_1d(np.asarray(x0, float))
    n_list = sorted({int(n) for n in n_list})
    rows = []
    if volume == 0:
        rows = [LocalLimitRow(n, 0, 0.0, 0.0, 0.0, False) for n in n_list]
        return LocalLimitReport(rows, target, chi, volume, False, tolerance, probe, notes)
    sums = partial_sums(law.mu, x0, n_list, N, seed, workers)
    for n in n_list:
        shift = np.zeros(law.d) if law.regime is Regime.ALPHA_LT1 else n * law.m
        Y = sums[n].values - shift
        inside = np.all((Y >= lo) & (Y <= hi), axis=1)
        count = int(inside.sum())
        freq = count / N
        scale = n ** chi
        rows.append(LocalLimitRow(n, count, freq, scale * freq, scale * math.sqrt(freq * (1 - freq) / N), count < 20))
    stab = False
    if len(rows) >= 2 and not rows[-1].inconclusive and not rows[-2].inconclusive:
        r1, r2 = rows[-2].ratio, rows[-1].ratio
        stab = (abs(r1 - r2) <= tolerance * max(r1, r2) and abs(r1 - target) <= tolerance * target
                and abs(r2 - target) <= tolerance * target)
    return LocalLimitReport(rows, target, chi, volume, stab and probe.full, tolerance, probe, notes)
