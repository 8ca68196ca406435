"""Labeled point clouds with optional orthorhombic periodicity.

Squared distances are the internal currency; square roots are only taken
when a caller asks for a distance.  Replica indices follow the convention
``delta = r_j - r_i + n * cell`` so that ``(j, n)`` in the list of ``i``
mirrors ``(i, -n)`` in the list of ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    InvalidCellError,
    InvalidParameterError,
    ResourceLimitError,
    SelfIntersectingFoldError,
    UnsupportedInputError,
)

DEFAULT_PAIR_CAP = 10**7

Cell = tuple[Optional[float], Optional[float], Optional[float]]


def _normalize_cell(cell) -> Cell:
    if cell is None:
        return (None, None, None)
    cell = tuple(cell)
    if len(cell) != 3:
        raise InvalidCellError(f"cell must have 3 entries, got {len(cell)}")
    out = []
    for p in cell:
        if p is None:
            out.append(None)
            continue
        p = float(p)
        if not math.isfinite(p) or p <= 0:
            raise InvalidCellError(f"periods must be finite and strictly positive, got {p}")
        out.append(p)
    return tuple(out)


@dataclass(frozen=True)
class LabeledPointCloud:
    """Species labels, Cartesian positions (Å) and per-axis periods.

    ``cell[a] is None`` means axis ``a`` is open.  Positions may be stored
    unwrapped along periodic axes.
    """

    labels: tuple[str, ...]
    positions: np.ndarray
    cell: Cell = (None, None, None)
    metadata: str = ""

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        pos = np.array(self.positions, dtype=float, copy=True).reshape(-1, 3)
        if len(labels) != len(pos):
            raise InvalidParameterError(
                f"{len(labels)} labels for {len(pos)} positions"
            )
        if not np.all(np.isfinite(pos)):
            raise InvalidParameterError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "cell", _normalize_cell(self.cell))

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, LabeledPointCloud):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.cell == other.cell
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None

    @property
    def is_periodic(self) -> bool:
        return any(p is not None for p in self.cell)

    @property
    def periodic_axes(self) -> tuple[int, ...]:
        return tuple(a for a, p in enumerate(self.cell) if p is not None)

    def with_cell(self, cell, metadata: str | None = None) -> "LabeledPointCloud":
        return LabeledPointCloud(
            self.labels,
            self.positions,
            cell,
            self.metadata if metadata is None else metadata,
        )

    def transformed(self, rotation=None, translation=None, order=None) -> "LabeledPointCloud":
        """Return ``R @ r + t`` for every point, optionally reordered."""
        pos = self.positions
        labels = self.labels
        if order is not None:
            order = list(order)
            pos = pos[order]
            labels = tuple(labels[k] for k in order)
        if rotation is not None:
            pos = pos @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            pos = pos + np.asarray(translation, dtype=float)
        return LabeledPointCloud(labels, pos, self.cell, self.metadata)


@dataclass(frozen=True)
class Displacement:
    delta: np.ndarray
    replica_index: tuple[int, int, int]

    @property
    def sqdist(self) -> float:
        d = self.delta
        return float(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])


@dataclass(frozen=True)
class Neighbor:
    index: int
    displacement: Displacement
    sqdist: float = field(repr=False)

    @property
    def distance(self) -> float:
        return math.sqrt(self.sqdist)


def sqnorm(delta: np.ndarray) -> np.ndarray:
    """Squared norm with a fixed x, y, z summation order."""
    delta = np.asarray(delta, dtype=float)
    x, y, z = delta[..., 0], delta[..., 1], delta[..., 2]
    return x * x + y * y + z * z


def _wrap_shift(delta: np.ndarray, cell: Cell) -> np.ndarray:
    """Integer shift ``n`` per axis such that ``delta - n*p`` lies in (-p/2, p/2]."""
    delta = np.asarray(delta, dtype=float)
    shift = np.zeros(delta.shape, dtype=np.int64)
    for a, p in enumerate(cell):
        if p is None:
            continue
        shift[..., a] = np.ceil(delta[..., a] / p - 0.5).astype(np.int64)
    return shift


def minimum_image(delta, cell) -> Displacement:
    """Map a displacement into the half-open box (-p/2, p/2] on periodic axes."""
    cell = _normalize_cell(cell)
    delta = np.array(delta, dtype=float).reshape(3)
    if not np.all(np.isfinite(delta)):
        raise InvalidParameterError("displacement must be finite")
    shift = _wrap_shift(delta, cell)
    out = delta.copy()
    for a, p in enumerate(cell):
        if p is not None:
            out[a] = delta[a] - shift[a] * p
            # floating rounding can leave the value a hair outside the box
            if out[a] <= -p / 2:
                out[a] += p
                shift[a] -= 1
            elif out[a] > p / 2:
                out[a] -= p
                shift[a] += 1
    out.setflags(write=False)
    return Displacement(out, tuple(int(s) for s in shift))


def replica_range(cutoff: float, cell: Cell) -> list[range]:
    ranges = []
    for p in cell:
        if p is None:
            ranges.append(range(0, 1))
        else:
            m = math.ceil(cutoff / p) + 1
            ranges.append(range(-m, m + 1))
    return ranges


@dataclass(frozen=True)
class NeighborArrays:
    """Flat edge arrays sorted by ``(i, j, replica)``."""

    i: np.ndarray
    j: np.ndarray
    replica: np.ndarray
    delta: np.ndarray
    sqdist: np.ndarray

    def __len__(self):
        return len(self.i)


def neighbor_arrays(
    cloud: LabeledPointCloud, cutoff: float, pair_cap: int = DEFAULT_PAIR_CAP
) -> NeighborArrays:
    if not cutoff > 0 or not math.isfinite(cutoff):
        raise InvalidParameterError(f"cutoff must be positive and finite, got {cutoff}")
    cell = cloud.cell
    pos = cloud.positions
    n = len(pos)
    rr = replica_range(cutoff, cell)
    reps = np.array(
        [(a, b, c) for a in rr[0] for b in rr[1] for c in rr[2]], dtype=np.int64
    ).reshape(-1, 3)
    if n * n * len(reps) > 20 * pair_cap:
        raise ResourceLimitError(
            f"cutoff {cutoff} would scan {n * n * len(reps)} candidate pairs"
        )
    period = np.array([0.0 if p is None else p for p in cell])
    cut2 = cutoff * cutoff
    out_i, out_j, out_r, out_d, out_s = [], [], [], [], []
    total = 0
    for i in range(n):
        raw = pos - pos[i]  # (n, 3)
        base = _wrap_shift(raw, cell)  # (n, 3)
        # n_total = n' - n0 for every (j, n')
        shifts = reps[None, :, :] - base[:, None, :]  # (n, R, 3)
        delta = raw[:, None, :] + shifts * period
        d2 = sqnorm(delta)
        keep = (d2 > 0.0) & (d2 <= cut2)
        jj, kk = np.nonzero(keep)
        total += len(jj)
        if total > pair_cap:
            raise ResourceLimitError(
                f"neighbor enumeration exceeded the cap of {pair_cap} pairs"
            )
        sh = shifts[jj, kk]
        order = np.lexsort((sh[:, 2], sh[:, 1], sh[:, 0], jj))
        out_i.append(np.full(len(jj), i, dtype=np.int64))
        out_j.append(jj[order])
        out_r.append(sh[order])
        out_d.append(delta[jj, kk][order])
        out_s.append(d2[jj, kk][order])
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return NeighborArrays(empty, empty, np.zeros((0, 3), np.int64), np.zeros((0, 3)), np.zeros(0))
    return NeighborArrays(
        np.concatenate(out_i),
        np.concatenate(out_j),
        np.concatenate(out_r),
        np.concatenate(out_d),
        np.concatenate(out_s),
    )


def neighbor_list(
    cloud: LabeledPointCloud, cutoff: float, pair_cap: int = DEFAULT_PAIR_CAP
) -> list[list[Neighbor]]:
    """All ``(j, replica)`` with ``0 < |r_j - r_i + n*cell| <= cutoff``, per point."""
    arr = neighbor_arrays(cloud, cutoff, pair_cap)
    result: list[list[Neighbor]] = [[] for _ in range(len(cloud))]
    for i, j, rep, d, s in zip(arr.i, arr.j, arr.replica, arr.delta, arr.sqdist):
        d = d.copy()
        d.setflags(write=False)
        result[int(i)].append(
            Neighbor(int(j), Displacement(d, tuple(int(x) for x in rep)), float(s))
        )
    return result


def pairwise_sqdist(cloud: LabeledPointCloud) -> np.ndarray:
    if cloud.is_periodic:
        raise UnsupportedInputError("pairwise distances need a finite cloud")
    pos = cloud.positions
    return sqnorm(pos[None, :, :] - pos[:, None, :])


def gram(cloud: LabeledPointCloud) -> np.ndarray:
    """Uncentered Gram matrix ``G[i, j] = r_i . r_j``."""
    if cloud.is_periodic:
        raise UnsupportedInputError("Gram matrix is defined for finite clouds only")
    pos = cloud.positions
    return pos @ pos.T


def fold_radius(y: float, period: float, copies: int) -> float:
    return copies * period / (2 * math.pi) + y


def fold_to_finite(cloud: LabeledPointCloud, copies: int) -> LabeledPointCloud:
    """Wrap ``copies`` repeat units of an x-periodic cloud around the z axis.

    A point ``(x, y, z)`` goes to cylindrical ``(P p / 2 pi + y, 2 pi x / (p P), z)``.
    Output points are ordered by repeat unit, then by input index.
    """
    if int(copies) != copies or copies < 2:
        raise InvalidParameterError(f"number of folded periods must be an integer >= 2, got {copies}")
    copies = int(copies)
    px, py, pz = cloud.cell
    if px is None or py is not None or pz is not None:
        raise UnsupportedInputError("folding needs a cloud periodic along x only")
    pos = cloud.positions
    radius = copies * px / (2 * math.pi) + pos[:, 1]
    if len(pos) and radius.min() <= 0:
        raise SelfIntersectingFoldError(
            f"fold radius {radius.min():.6g} <= 0; increase the number of periods"
        )
    blocks = []
    for k in range(copies):
        theta = 2 * math.pi * (pos[:, 0] + k * px) / (px * copies)
        blocks.append(np.column_stack([radius * np.cos(theta), radius * np.sin(theta), pos[:, 2]]))
    labels = cloud.labels * copies
    meta = f"{cloud.metadata} folded P={copies}".strip()
    return LabeledPointCloud(labels, np.vstack(blocks) if blocks else np.zeros((0, 3)), None, meta)


def chord_sqdist(delta: Sequence[float], y_i: float, y_j: float, period: float, copies: int) -> float:
    """Squared distance between folded images, predicted from the periodic data.

    ``delta`` is the periodic displacement ``r_j - r_i + n*p`` (x may include
    the replica shift).  Independent of the Cartesian fold, used as an oracle.
    """
    r_i = fold_radius(y_i, period, copies)
    r_j = fold_radius(y_j, period, copies)
    angle = 2 * math.pi * delta[0] / (period * copies)
    return r_i * r_i + r_j * r_j - 2 * r_i * r_j * math.cos(angle) + delta[2] * delta[2]
