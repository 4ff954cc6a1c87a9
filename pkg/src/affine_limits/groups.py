"""Componentwise similarities, the homogeneous norm and the scale group.

A vector space ``V = V_1 + ... + V_l`` is split into orthogonal blocks with
exponents ``1 = lam_1 < ... < lam_l``.  A componentwise similarity with base
scale ``a`` acts on block ``j`` as ``a**lam_j * K_j`` with ``K_j`` orthogonal,
and the homogeneous norm ``tau(x) = sum_j |x_j| ** (1 / lam_j)`` satisfies
``tau(g x) = a * tau(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InputError, StructureError

ORTHO_TOL = 1e-12
SCALE_TOL = 1e-10


@dataclass(frozen=True)
class BlockStructure:
    """Block exponents and dimensions of the ambient space.

    Parameters
    ----------
    exponents : tuple of float
        Strictly increasing, first entry equal to 1.
    dims : tuple of int
        Dimension of each block, all at least 1.
    """

    exponents: tuple[float, ...] = (1.0,)
    dims: tuple[int, ...] = (1,)

    def __post_init__(self):
        exps = tuple(float(e) for e in self.exponents)
        dims = tuple(int(k) for k in self.dims)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "dims", dims)
        if len(exps) == 0 or len(exps) != len(dims):
            raise InputError("exponents and dims must be non-empty and of equal length")
        if abs(exps[0] - 1.0) > 1e-12:
            raise InputError("the first block exponent must be 1")
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise InputError("block exponents must be strictly increasing")
        if any(k < 1 for k in dims):
            raise InputError("block dimensions must be at least 1")

    @classmethod
    def euclidean(cls, d: int) -> "BlockStructure":
        return cls((1.0,), (int(d),))

    @property
    def d(self) -> int:
        return sum(self.dims)

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def is_euclidean(self) -> bool:
        return self.n_blocks == 1

    def slices(self) -> list[slice]:
        out, start = [], 0
        for k in self.dims:
            out.append(slice(start, start + k))
            start += k
        return out

    def coordinate_exponents(self) -> np.ndarray:
        """Exponent attached to every coordinate, shape ``(d,)``."""
        return np.repeat(np.array(self.exponents), self.dims)

    def dilation_factors(self, a) -> np.ndarray:
        """Coordinate factors ``a**lam_j`` of the pure dilation ``gamma_a``.

        ``a`` may be an array; the result has shape ``a.shape + (d,)``.
        """
        a = np.asarray(a, dtype=float)
        return a[..., None] ** self.coordinate_exponents()

    def dilate(self, x, a) -> np.ndarray:
        """Apply ``gamma_a`` to points ``x`` of shape ``(..., d)``."""
        return np.asarray(x, dtype=float) * self.dilation_factors(a)

    def block_mask(self, predicate) -> np.ndarray:
        """Boolean coordinate mask of the blocks whose exponent satisfies ``predicate``."""
        return np.repeat(np.array([bool(predicate(e)) for e in self.exponents]), self.dims)

    def to_dict(self) -> dict:
        return {"exponents": list(self.exponents), "dims": list(self.dims)}


def tau(x, blocks: BlockStructure) -> np.ndarray:
    """Homogeneous norm ``sum_j |x_j| ** (1 / lam_j)``.

    Works on a single vector or on an array of shape ``(..., d)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (blocks.d,):
        raise InputError(f"expected last dimension {blocks.d}, got shape {x.shape}")
    # hypot.reduce avoids the under/overflow of squaring tiny or huge entries
    if blocks.is_euclidean:
        return np.hypot.reduce(x, axis=-1)
    total = 0.0
    for lam, sl in zip(blocks.exponents, blocks.slices()):
        total = total + np.hypot.reduce(x[..., sl], axis=-1) ** (1.0 / lam)
    return total


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _as_orthogonal(K, k: int) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (k, k):
        raise InputError(f"orthogonal part must be {k}x{k}, got {K.shape}")
    if np.max(np.abs(K.T @ K - np.eye(k))) > ORTHO_TOL:
        raise InputError("orthogonal part fails K^T K = I")
    return K


@dataclass(frozen=True, eq=False)
class Similarity:
    """Componentwise similarity ``(a, K_1, ..., K_l)``.

    Parameters
    ----------
    scale : float
        Base scale ``a > 0``; block ``j`` is multiplied by ``a**lam_j``.
    orthogonal : tuple of ndarray
        One orthogonal matrix per block.
    blocks : BlockStructure
    """

    scale: float
    orthogonal: tuple
    blocks: BlockStructure = field(default_factory=BlockStructure)

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InputError("similarity scale must be positive and finite")
        if len(self.orthogonal) != self.blocks.n_blocks:
            raise InputError("one orthogonal part per block is required")
        Ks = tuple(_as_orthogonal(K, k) for K, k in zip(self.orthogonal, self.blocks.dims))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "orthogonal", Ks)

    @classmethod
    def identity(cls, blocks: BlockStructure) -> "Similarity":
        return cls(1.0, tuple(np.eye(k) for k in blocks.dims), blocks)

    @classmethod
    def scalar(cls, value: float) -> "Similarity":
        """One-dimensional similarity ``x -> value * x`` (sign kept as O(1) part)."""
        if value == 0:
            raise InputError("zero is not a similarity")
        return cls(abs(value), (np.array([[math.copysign(1.0, value)]]),), BlockStructure())

    @classmethod
    def rotation(cls, scale: float, angle: float) -> "Similarity":
        """Planar similarity ``scale * R(angle)`` in the Euclidean plane."""
        return cls(scale, (rotation_matrix(angle),), BlockStructure.euclidean(2))

    @classmethod
    def dilation(cls, scale: float, blocks: BlockStructure) -> "Similarity":
        return cls(scale, tuple(np.eye(k) for k in blocks.dims), blocks)

    @classmethod
    def from_block_scales(cls, block_scales: Sequence[float], orthogonal, blocks: BlockStructure) -> "Similarity":
        """Build from user supplied per-block scales, enforcing ``s_j = a**lam_j``."""
        block_scales = [float(s) for s in block_scales]
        if len(block_scales) != blocks.n_blocks:
            raise InputError("one scale per block is required")
        a = block_scales[0]
        for s, lam in zip(block_scales, blocks.exponents):
            if abs(s - a ** lam) > SCALE_TOL * max(1.0, abs(s)):
                raise InputError("per-block scales must equal a**lam_j for a common base scale a")
        return cls(a, tuple(orthogonal), blocks)

    @property
    def d(self) -> int:
        return self.blocks.d

    @property
    def matrix(self) -> np.ndarray:
        out = np.zeros((self.d, self.d))
        for lam, sl, K in zip(self.blocks.exponents, self.blocks.slices(), self.orthogonal):
            out[sl, sl] = self.scale ** lam * K
        return out

    @property
    def orthogonal_matrix(self) -> np.ndarray:
        out = np.zeros((self.d, self.d))
        for sl, K in zip(self.blocks.slices(), self.orthogonal):
            out[sl, sl] = K
        return out

    def norm(self) -> float:
        return self.scale

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise InputError(f"expected last dimension {self.d}, got shape {x.shape}")
        return x @ self.matrix.T

    def compose(self, other: "Similarity") -> "Similarity":
        """``self o other``."""
        _check_same(self.blocks, other.blocks)
        Ks = tuple(A @ B for A, B in zip(self.orthogonal, other.orthogonal))
        return Similarity(self.scale * other.scale, Ks, self.blocks)

    def adjoint(self) -> "Similarity":
        return Similarity(self.scale, tuple(K.T for K in self.orthogonal), self.blocks)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "orthogonal": [K.tolist() for K in self.orthogonal]}


def _check_same(a: BlockStructure, b: BlockStructure):
    if a != b:
        raise InputError("block structures differ")


def apply(g: Similarity, x) -> np.ndarray:
    return g.apply(x)


def compose(g: Similarity, h: Similarity) -> Similarity:
    return g.compose(h)


def adjoint(g: Similarity) -> Similarity:
    return g.adjoint()


def norm_of(g: Similarity) -> float:
    return g.norm()


@dataclass(frozen=True)
class GroupStructure:
    """Closed group generated by the scales: dense or a lattice ``<p>``."""

    kind: str
    p: float | None = None
    scales: tuple[float, ...] = ()

    @property
    def is_lattice(self) -> bool:
        return self.kind == "lattice"

    @property
    def label(self) -> str:
        if self.is_lattice:
            return f"Lattice({self.p:.6g})"
        return "Dense"

    def __str__(self) -> str:
        return self.label

    def exponent_of(self, scale: float) -> int:
        """Integer ``k`` with ``scale = p**k`` (lattice only)."""
        if not self.is_lattice:
            raise StructureError("exponent_of is defined for lattice structures only")
        return int(round(math.log(scale) / math.log(self.p)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "scales": list(self.scales), "label": self.label}


def _rational_ratio(x: float, tol: float, max_depth: int, max_den: int) -> Fraction | None:
    """Continued-fraction expansion of ``x > 0``; the value if it terminates, else None."""
    a0 = math.floor(x)
    rem = x - a0
    if rem > 1 - tol:
        a0, rem = a0 + 1, 0.0
    h_prev, h = 1, int(a0)
    k_prev, k = 0, 1
    for _ in range(max_depth):
        if rem < tol:
            return Fraction(h, k)
        y = 1.0 / rem
        a = math.floor(y)
        rem = y - a
        if rem > 1 - tol:
            a, rem = a + 1, 0.0
        h_prev, h = h, int(a) * h + h_prev
        k_prev, k = k, int(a) * k + k_prev
        if k > max_den:
            return None
    return None


def detect_group_structure(scales: Sequence[float], tol: float = 1e-9,
                           max_depth: int = 40, max_den: int = 10**6) -> GroupStructure:
    """Decide whether the scales generate a dense group or a lattice ``<p>``.

    The log-scales are reduced by a real greatest-common-divisor procedure: the
    ratio of each log-scale to the running divisor is expanded as a continued
    fraction, which must terminate within ``tol`` and ``max_depth`` steps.

    Parameters
    ----------
    scales : sequence of float
        Positive scales ``|M_i|``.
    tol : float
        Relative tolerance for integrality tests.
    max_depth : int
        Continued-fraction depth cap.

    Returns
    -------
    GroupStructure
    """
    scales = tuple(float(s) for s in scales)
    if any(not (s > 0) for s in scales):
        raise InputError("scales must be positive")
    logs = sorted({abs(math.log(s)) for s in scales if abs(math.log(s)) > tol})
    if not logs:
        raise StructureError("all scales equal 1")
    g = logs[0]
    for ell in logs[1:]:
        frac = _rational_ratio(ell / g, tol, max_depth, max_den)
        if frac is None:
            return GroupStructure("dense", None, scales)
        g = g / frac.denominator
    for ell in logs:
        r = ell / g
        if abs(r - round(r)) > tol * max(1.0, r) * 10:
            return GroupStructure("dense", None, scales)
    return GroupStructure("lattice", math.exp(g), scales)


def _floor_power(p: float, e: float) -> int:
    # floor(p**e) guarded against values that should be integers
    val = p ** e
    near = round(val)
    if abs(val - near) <= 1e-9 * max(1.0, val):
        return int(near)
    return int(math.floor(val))


def normalizer_schedule(structure: GroupStructure, alpha: float, n: int) -> tuple[float, bool]:
    """Scale ``|c_n|`` with ``[|c_n|**(-alpha)] = n`` and an exactness flag.

    Dense groups give ``n**(-1/alpha)`` (always exact).  For ``Lattice(p)`` the
    scale is ``p**(-k)`` with ``floor(p**(k alpha)) <= n < floor(p**((k+1) alpha))``
    and the flag marks the subsequence where ``floor(p**(k alpha)) = n``.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if not structure.is_lattice:
        return n ** (-1.0 / alpha), True
    p = structure.p
    k = int(math.floor(math.log(n) / (alpha * math.log(p))))
    while _floor_power(p, k * alpha) > n:
        k -= 1
    while _floor_power(p, (k + 1) * alpha) <= n:
        k += 1
    return p ** (-k), _floor_power(p, k * alpha) == n


def exact_subsequence(structure: GroupStructure, alpha: float, k_values: Sequence[int]) -> list[tuple[int, int, float]]:
    """Lattice exact points ``(k, n_k, c_k)`` with ``n_k = floor(p**(k alpha))``.

    Values of ``k`` whose ``n_k`` repeats an earlier one or is zero are skipped.
    """
    if not structure.is_lattice:
        raise StructureError("exact subsequences exist for lattice structures only")
    out, seen = [], set()
    for k in k_values:
        n = _floor_power(structure.p, k * alpha)
        if n < 1 or n in seen:
            continue
        c, exact = normalizer_schedule(structure, alpha, n)
        if exact and abs(c - structure.p ** (-k)) <= 1e-12 * c:
            out.append((int(k), n, c))
            seen.add(n)
    return out
