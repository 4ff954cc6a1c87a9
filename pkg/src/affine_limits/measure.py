"""Driving measures on the affine group and their moment function.

A measure is a finite mixture of affine atoms ``x -> M_i x + Q_i`` with
optional one log-uniform continuous-scale family.  Everything needed by the
other modules (``kappa``, the critical exponent, ``m_alpha``, the mean
operator) is available in closed form.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import HypothesisError, InputError, NumericError, RegimeError
from .groups import BlockStructure, GroupStructure, Similarity, detect_group_structure, rotation_matrix

PROB_TOL = 1e-12
ALPHA_TOL = 1e-12
BRACKET_CAP = 256.0


@dataclass(frozen=True, eq=False)
class AffineAtom:
    """Atom ``(p_i, M_i, Q_i)`` of a finite mixture."""

    prob: float
    M: Similarity
    Q: np.ndarray

    def __post_init__(self):
        if not (0 < self.prob <= 1):
            raise InputError("atom probability must lie in (0, 1]")
        Q = np.atleast_1d(np.asarray(self.Q, dtype=float))
        if Q.shape != (self.M.d,):
            raise InputError("translation dimension does not match the similarity")
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True, eq=False)
class LogUniformFamily:
    """Continuous family: scale ``exp(U)`` with ``U`` uniform on ``[log low, log high]``.

    The orthogonal part and the translation are fixed.
    """

    prob: float
    low: float
    high: float
    orthogonal: tuple
    Q: np.ndarray
    blocks: BlockStructure = field(default_factory=BlockStructure)

    def __post_init__(self):
        if not (0 < self.prob <= 1):
            raise InputError("family probability must lie in (0, 1]")
        if not (0 < self.low < self.high):
            raise InputError("log-uniform family needs 0 < low < high")
        ref = Similarity(1.0, tuple(self.orthogonal), self.blocks)
        object.__setattr__(self, "orthogonal", ref.orthogonal)
        Q = np.atleast_1d(np.asarray(self.Q, dtype=float))
        if Q.shape != (self.blocks.d,):
            raise InputError("translation dimension does not match the blocks")
        object.__setattr__(self, "Q", Q)

    @property
    def log_width(self) -> float:
        return math.log(self.high) - math.log(self.low)

    def moment(self, s: float) -> float:
        """``E[scale**s]`` in closed form."""
        if abs(s) < 1e-14:
            return 1.0
        return (self.high ** s - self.low ** s) / (s * self.log_width)

    def log_moment(self, s: float) -> float:
        """``E[scale**s log(scale)]``."""
        a, b = math.log(self.low), math.log(self.high)
        if abs(s) < 1e-14:
            return 0.5 * (a + b)
        prim = lambda u: math.exp(s * u) * (u / s - 1.0 / s ** 2)
        return (prim(b) - prim(a)) / self.log_width

    def orthogonal_matrix(self) -> np.ndarray:
        return Similarity(1.0, self.orthogonal, self.blocks).orthogonal_matrix


@dataclass(frozen=True, eq=False)
class MuSpec:
    """Driving measure: finite mixture plus at most one log-uniform family."""

    atoms: tuple
    blocks: BlockStructure = field(default_factory=BlockStructure)
    family: LogUniformFamily | None = None
    name: str = ""

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        total = sum(a.prob for a in atoms) + (self.family.prob if self.family else 0.0)
        if abs(total - 1.0) > PROB_TOL:
            raise InputError(f"probabilities sum to {total!r}, not 1")
        for a in atoms:
            if a.M.blocks != self.blocks:
                raise InputError("all atoms must share the block structure")
        if self.family is not None and self.family.blocks != self.blocks:
            raise InputError("continuous family must share the block structure")

    @property
    def d(self) -> int:
        return self.blocks.d

    @property
    def is_finite(self) -> bool:
        return self.family is None

    @property
    def probs(self) -> np.ndarray:
        return np.array([a.prob for a in self.atoms])

    def scales(self) -> list[float]:
        out = [a.M.scale for a in self.atoms]
        if self.family is not None:
            out += [self.family.low, self.family.high]
        return out

    def distinct_scales(self) -> list[float]:
        out: list[float] = []
        for s in self.scales():
            if all(abs(s - t) > 1e-14 * max(s, t) for t in out):
                out.append(s)
        return out

    def group_structure(self, tol: float = 1e-9) -> GroupStructure:
        if self.family is not None:
            return GroupStructure("dense", None, tuple(self.scales()))
        return detect_group_structure([a.M.scale for a in self.atoms], tol=tol)

    def atom_matrices(self) -> np.ndarray:
        return np.array([a.M.matrix for a in self.atoms]).reshape(len(self.atoms), self.d, self.d)

    def atom_translations(self) -> np.ndarray:
        return np.array([a.Q for a in self.atoms]).reshape(len(self.atoms), self.d)

    def to_dict(self) -> dict:
        return mu_to_dict(self)


def kappa(mu: MuSpec, s: float) -> float:
    """Moment function ``E|M|**s``."""
    if s < 0:
        raise InputError("kappa is evaluated for s >= 0")
    total = sum(a.prob * a.M.scale ** s for a in mu.atoms)
    if mu.family is not None:
        total += mu.family.prob * mu.family.moment(s)
    return float(total)


def expected_log_scale(mu: MuSpec) -> float:
    """``E log|M|``, the derivative of ``kappa`` at zero."""
    total = sum(a.prob * math.log(a.M.scale) for a in mu.atoms)
    if mu.family is not None:
        total += mu.family.prob * mu.family.log_moment(0.0)
    return float(total)


def m_alpha(mu: MuSpec, alpha: float) -> float:
    """``E[|M|**alpha log|M|]``; positive when ``kappa(alpha) = 1``."""
    total = sum(a.prob * a.M.scale ** alpha * math.log(a.M.scale) for a in mu.atoms)
    if mu.family is not None:
        total += mu.family.prob * mu.family.log_moment(alpha)
    if not total > 0:
        raise HypothesisError(f"m_alpha = {total!r} is not positive; alpha inconsistent with kappa")
    return float(total)


def solve_alpha(mu: MuSpec) -> float:
    """Positive root of ``kappa(s) = 1``.

    The upper bracket is doubled until ``kappa`` exceeds one (cap 256), then
    Brent's method is polished by Newton steps on ``log kappa``.
    """
    if expected_log_scale(mu) >= 0:
        raise HypothesisError("E log|M| >= 0: no contraction on average")
    hi = 1.0
    while kappa(mu, hi) <= 1.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise HypothesisError("kappa never exceeds 1 on the search bracket: no tail exponent")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    # kappa < 1 just right of zero, so any lo where kappa <= 1 is a valid left end
    if lo == 0.0:
        lo = 1e-12
    f = lambda s: math.log(kappa(mu, s))
    root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        k = kappa(mu, root)
        if abs(k - 1.0) <= 1e-15:
            break
        root -= math.log(k) / (_kappa_log_derivative(mu, root) / k)
    if abs(kappa(mu, root) - 1.0) > ALPHA_TOL:
        raise NumericError("failed to solve kappa(alpha) = 1 to tolerance")
    return float(root)


def _kappa_log_derivative(mu: MuSpec, s: float) -> float:
    total = sum(a.prob * a.M.scale ** s * math.log(a.M.scale) for a in mu.atoms)
    if mu.family is not None:
        total += mu.family.prob * mu.family.log_moment(s)
    return total


def mean_linear_part(mu: MuSpec, restrict: np.ndarray | None = None) -> np.ndarray:
    """Averaged operator ``z = E[M]``, optionally restricted to a coordinate mask."""
    z = sum(a.prob * a.M.matrix for a in mu.atoms) if mu.atoms else np.zeros((mu.d, mu.d))
    if mu.family is not None:
        fam = mu.family
        diag = np.array([fam.moment(lam) for lam in mu.blocks.coordinate_exponents()])
        z = z + fam.prob * (diag[:, None] * fam.orthogonal_matrix())
    z = np.asarray(z, dtype=float)
    if restrict is not None:
        idx = np.flatnonzero(restrict)
        z = z[np.ix_(idx, idx)]
    return z


def mean_translation(mu: MuSpec) -> np.ndarray:
    q = sum(a.prob * a.Q for a in mu.atoms) if mu.atoms else np.zeros(mu.d)
    if mu.family is not None:
        q = q + mu.family.prob * mu.family.Q
    return np.asarray(q, dtype=float)


def mean_operator_and_mean(mu: MuSpec, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Averaged operator ``z = E[M]`` and stationary mean ``m = (I - z)^{-1} E[Q]``.

    Requires ``alpha > 1`` so that the mean exists.
    """
    if alpha <= 1:
        raise RegimeError("the stationary mean exists only for alpha > 1")
    z = mean_linear_part(mu)
    try:
        m = np.linalg.solve(np.eye(mu.d) - z, mean_translation(mu))
    except np.linalg.LinAlgError as exc:
        raise NumericError("I - z is singular") from exc
    return z, m


def second_moment(mu: MuSpec, alpha: float) -> np.ndarray:
    """Exact ``E[R R^T]`` of the stationary law (finite mixtures, ``alpha > 2``).

    Solves ``S = E[M S M^T] + E[M] m E[Q]^T + E[Q] m^T E[M]^T + E[Q Q^T]``.
    """
    if alpha <= 2:
        raise RegimeError("second moments exist only for alpha > 2")
    if not mu.is_finite:
        raise RegimeError("closed-form second moment needs a finite mixture")
    _, m = mean_operator_and_mean(mu, alpha)
    d = mu.d
    A = np.zeros((d * d, d * d))
    rhs = np.zeros((d, d))
    for a in mu.atoms:
        Mi, Qi = a.M.matrix, a.Q
        A += a.prob * np.kron(Mi, Mi)
        cross = np.outer(Mi @ m, Qi)
        rhs += a.prob * (cross + cross.T + np.outer(Qi, Qi))
    vec = np.linalg.solve(np.eye(d * d) - A, rhs.reshape(-1))
    return vec.reshape(d, d)


def stationary_covariance(mu: MuSpec, alpha: float) -> np.ndarray:
    """Exact covariance form ``q`` of the stationary law (finite mixtures, ``alpha > 2``)."""
    _, m = mean_operator_and_mean(mu, alpha)
    return second_moment(mu, alpha) - np.outer(m, m)


def moment_of_translation(mu: MuSpec, s: float) -> float:
    """``E|Q|**s`` (Euclidean norm); finite for every mixture here."""
    total = sum(a.prob * float(np.linalg.norm(a.Q)) ** s for a in mu.atoms)
    if mu.family is not None:
        total += mu.family.prob * float(np.linalg.norm(mu.family.Q)) ** s
    return float(total)


@dataclass
class HypothesisReport:
    """Outcome of the standing-assumption checks."""

    alpha: float | None
    m_alpha: float | None
    E_log_M: float
    fixed_point_free: bool
    moment_EQ_alpha: float | None
    structure: GroupStructure
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "m_alpha": self.m_alpha,
            "E_log_M": self.E_log_M,
            "fixed_point_free": self.fixed_point_free,
            "moment_EQ_alpha": self.moment_EQ_alpha,
            "structure": self.structure.to_dict(),
            "failures": list(self.failures),
        }


def _affine_fixed_set(M: np.ndarray, Q: np.ndarray):
    """Fixed set of ``x -> M x + Q`` as ``(point, null basis)`` or None if empty."""
    d = len(Q)
    A = M - np.eye(d)
    x, *_ = np.linalg.lstsq(A, -Q, rcond=None)
    if np.linalg.norm(A @ x + Q) > 1e-9 * max(1.0, np.linalg.norm(Q)):
        return None
    u, sing, vt = np.linalg.svd(A)
    null = vt[sing.size:].T if sing.size < d else vt[sing < 1e-9].T
    return x, null


def has_common_fixed_point(mu: MuSpec) -> bool:
    """Whether all atoms (and the family) share a fixed point.

    Atoms with ``|M_i| != 1`` have a unique fixed point; atoms with
    ``|M_i| = 1`` may fix an affine subspace, handled by least squares.
    """
    maps = [(a.M.matrix, a.Q) for a in mu.atoms]
    if mu.family is not None:
        fam = mu.family
        K = fam.orthogonal_matrix()
        for s in (fam.low, fam.high):
            D = mu.blocks.dilation_factors(s)
            maps.append((D[:, None] * K, fam.Q))
    d = mu.d
    rows, rhs = [], []
    for M, Q in maps:
        fixed = _affine_fixed_set(M, Q)
        if fixed is None:
            return False
        rows.append(M - np.eye(d))
        rhs.append(-Q)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return bool(np.linalg.norm(A @ x - b) <= 1e-9 * max(1.0, np.linalg.norm(b)))


def validate_hypothesis_H(mu: MuSpec) -> HypothesisReport:
    """Check contraction on average, existence of ``alpha`` and no common fixed point."""
    failures = []
    if len(mu.distinct_scales()) < 2 and mu.family is None:
        failures.append("fewer than two distinct scales")
    e_log = expected_log_scale(mu)
    alpha = m_a = eq = None
    try:
        alpha = solve_alpha(mu)
        m_a = m_alpha(mu, alpha)
        eq = moment_of_translation(mu, alpha)
    except HypothesisError as exc:
        failures.append(str(exc))
    fixed_free = not has_common_fixed_point(mu)
    if not fixed_free:
        failures.append("all affine maps share a fixed point")
    try:
        structure = mu.group_structure()
    except Exception as exc:  # structure errors are reported, not raised
        failures.append(str(exc))
        structure = GroupStructure("dense", None, tuple(mu.scales()))
    return HypothesisReport(alpha, m_a, e_log, fixed_free, eq, structure, failures)


def require_hypothesis(mu: MuSpec) -> HypothesisReport:
    report = validate_hypothesis_H(mu)
    if not report.ok:
        raise HypothesisError("; ".join(report.failures))
    return report


def solve_weight_for_alpha(scale_hi: float, scale_lo: float, alpha: float) -> float:
    """Probability ``p`` of ``scale_hi`` making ``p hi**a + (1-p) lo**a = 1``."""
    a, b = scale_hi ** alpha, scale_lo ** alpha
    p = (1.0 - b) / (a - b)
    if not 0 < p < 1:
        raise InputError("no admissible weight for these scales and alpha")
    return p


# ---------------------------------------------------------------------------
# configuration parsing

def _parse_orthogonal(entry: dict, blocks: BlockStructure):
    if "orthogonal" in entry:
        raw = entry["orthogonal"]
        if blocks.n_blocks == 1 and np.ndim(raw) == 2:
            raw = [raw]
        return tuple(np.array(K, dtype=float).reshape(k, k) for K, k in zip(raw, blocks.dims))
    if "orthogonal_matrix" in entry:
        return (np.array(entry["orthogonal_matrix"], dtype=float),)
    if "rotation" in entry:
        angles = entry["rotation"]
        angles = angles if isinstance(angles, list) else [angles]
        Ks = []
        for k, ang in zip(blocks.dims, angles + [0.0] * blocks.n_blocks):
            if k == 2:
                Ks.append(rotation_matrix(float(ang)))
            elif k == 1:
                Ks.append(np.array([[-1.0 if ang in ("pi", math.pi) else 1.0]]))
            else:
                Ks.append(np.eye(k))
        return tuple(Ks)
    if "sign" in entry:
        return (np.array([[float(np.sign(entry["sign"]))]]),) + tuple(np.eye(k) for k in blocks.dims[1:])
    return tuple(np.eye(k) for k in blocks.dims)


def _parse_vector(value, d: int) -> np.ndarray:
    raw = value if isinstance(value, (list, tuple)) else [value]
    v = np.array([_parse_prob(x) for x in raw], dtype=float)
    if v.shape == (1,) and d > 1:
        raise InputError("translation must have one entry per coordinate")
    if v.shape != (d,):
        raise InputError(f"translation must have length {d}")
    return v


_FUNCS = {"sqrt": math.sqrt, "log": math.log, "exp": math.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_node(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval_node(node.operand)
        return -val if isinstance(node.op, ast.USub) else val
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval_node(node.args[0]))
    raise ValueError("unsupported expression")


def _parse_prob(value) -> float:
    """Number or closed-form arithmetic string such as ``"sqrt(2)-1"`` or ``"1/9"``."""
    if isinstance(value, str):
        try:
            return float(_eval_node(ast.parse(value, mode="eval").body))
        except (SyntaxError, ValueError, ZeroDivisionError, OverflowError) as exc:
            raise InputError(f"cannot parse number {value!r}") from exc
    return float(value)


def mu_from_dict(data: dict) -> MuSpec:
    """Parse a JSON-compatible measure description.

    Schema::

        {"blocks": {"exponents": [...], "dims": [...]},      # optional
         "atoms": [{"prob": p, "scale": a | "block_scales": [...],
                    "orthogonal" | "rotation" | "sign": ..., "translation": [...]}],
         "family": {"prob": p, "low": a, "high": b, "translation": [...]}}
    """
    if not isinstance(data, dict) or "atoms" not in data:
        raise InputError("measure description needs an 'atoms' list")
    b = data.get("blocks")
    if b is None:
        d = int(data.get("dimension", 1))
        blocks = BlockStructure.euclidean(d)
    else:
        blocks = BlockStructure(tuple(b["exponents"]), tuple(b["dims"]))
    atoms = []
    for entry in data["atoms"]:
        try:
            prob = _parse_prob(entry["prob"])
            Ks = _parse_orthogonal(entry, blocks)
            if "block_scales" in entry:
                M = Similarity.from_block_scales(entry["block_scales"], Ks, blocks)
            else:
                M = Similarity(_parse_prob(entry["scale"]), Ks, blocks)
            Q = _parse_vector(entry.get("translation", [0.0] * blocks.d), blocks.d)
        except KeyError as exc:
            raise InputError(f"atom is missing field {exc}") from exc
        atoms.append(AffineAtom(prob, M, Q))
    fam = None
    if data.get("family"):
        f = data["family"]
        fam = LogUniformFamily(_parse_prob(f["prob"]), float(f["low"]), float(f["high"]),
                               _parse_orthogonal(f, blocks),
                               _parse_vector(f.get("translation", [0.0] * blocks.d), blocks.d), blocks)
    probs = [a.prob for a in atoms] + ([fam.prob] if fam else [])
    total = sum(probs)
    if abs(total - 1.0) > PROB_TOL and abs(total - 1.0) < 1e-9:
        # absorb decimal rounding of closed-form weights into the last atom
        last = atoms[-1]
        atoms[-1] = AffineAtom(last.prob + 1.0 - total, last.M, last.Q)
    return MuSpec(tuple(atoms), blocks, fam, str(data.get("name", "")))


def mu_to_dict(mu: MuSpec) -> dict:
    """Inverse of :func:`mu_from_dict` with 17 significant digits."""
    out = {"name": mu.name, "blocks": mu.blocks.to_dict(), "atoms": []}
    for a in mu.atoms:
        out["atoms"].append({
            "prob": float(f"{a.prob:.17g}"),
            "scale": float(f"{a.M.scale:.17g}"),
            "orthogonal": [K.tolist() for K in a.M.orthogonal],
            "translation": [float(f"{q:.17g}") for q in a.Q],
        })
    if mu.family is not None:
        f = mu.family
        out["family"] = {"prob": f.prob, "low": f.low, "high": f.high,
                         "orthogonal": [K.tolist() for K in f.orthogonal],
                         "translation": f.Q.tolist()}
    return out


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}") from exc


def load_mu(path_or_dict) -> MuSpec:
    """Load a measure from a config path, a config dict, or a bare measure dict."""
    data = load_config(path_or_dict) if isinstance(path_or_dict, (str, Path)) else path_or_dict
    if "measure" in data:
        data = data["measure"]
    return mu_from_dict(data)


def two_atom(p_high: float, scale_high: float, scale_low: float, translation=1.0, name: str = "") -> MuSpec:
    """One-dimensional two-atom mixture with common translation."""
    Q = np.atleast_1d(np.asarray(translation, dtype=float))
    return MuSpec((
        AffineAtom(p_high, Similarity.scalar(scale_high), Q),
        AffineAtom(1.0 - p_high, Similarity.scalar(scale_low), Q),
    ), BlockStructure(), None, name)


def scalar_atoms(atoms: Sequence[tuple[float, float, float]], name: str = "") -> MuSpec:
    """One-dimensional mixture from ``(prob, signed multiplier, translation)`` triples."""
    return MuSpec(tuple(AffineAtom(p, Similarity.scalar(m), np.array([q])) for p, m, q in atoms),
                  BlockStructure(), None, name)
