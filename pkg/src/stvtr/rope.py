"""Rotary position tables: 1D temporal, 2D spatial, their composition, and
the split-slice baseline.

A :class:`RotationTable` stores per-token, per-pair rotation angles as
cosine/sine arrays.  Tables are built in float64 and are immutable; apply
them to query/key sequences with :func:`apply_rope`.

Conventions (fixed so replication and composition are bit-reproducible):

* feature pairing is interleaved, (x_{2k}, x_{2k+1});
* spatial tokens are ordered row-major over grid coordinates (x, y) with
  x the first grid axis;
* composed tables order tokens frame-major, then row-major within the
  frame: token index = t * (gridH*gridW) + x * gridW + y.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor, rope_rotate

AXIS_TAGS = ("temporal", "spatial2d", "spatiotemporal", "split3d")


@dataclass(frozen=True)
class FrequencyTable:
    """Per-pair rotation frequencies theta_k = base ** (-2k / dim)."""

    dim: int
    base: float
    theta: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, dim: int, base: float = 10000.0) -> "FrequencyTable":
        if dim < 2 or dim % 2 != 0:
            raise ValueError(f"frequency table needs a positive even dim, got {dim}")
        if base <= 0:
            raise ValueError("base must be positive")
        k = np.arange(dim // 2, dtype=np.float64)
        theta = base ** (-2.0 * k / dim)
        return cls(dim=dim, base=base, theta=theta)


@dataclass(frozen=True)
class RotationTable:
    """Cos/sin of per-token, per-pair rotation angles.

    ``cos`` and ``sin`` have shape (n_tokens, dim // 2) and satisfy
    cos^2 + sin^2 = 1 entrywise.
    """

    cos: np.ndarray
    sin: np.ndarray
    axis_tag: str

    def __post_init__(self):
        if self.axis_tag not in AXIS_TAGS:
            raise ValueError(f"unknown axis tag {self.axis_tag!r}")
        if self.cos.shape != self.sin.shape or self.cos.ndim != 2:
            raise ValueError("cos/sin must be equal-shape 2D arrays")
        unit = self.cos * self.cos + self.sin * self.sin
        if not np.allclose(unit, 1.0, atol=1e-12):
            raise ValueError("rotation table rows are not unit cos/sin pairs")

    @property
    def n_tokens(self) -> int:
        return self.cos.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.cos.shape[1]


def _table_from_angles(angles: np.ndarray, axis_tag: str) -> RotationTable:
    return RotationTable(cos=np.cos(angles), sin=np.sin(angles), axis_tag=axis_tag)


def identity_table(n_tokens: int, dim: int, axis_tag: str = "temporal") -> RotationTable:
    """All-zero-angle table (useful for disabling one axis)."""
    return _table_from_angles(np.zeros((n_tokens, dim // 2)), axis_tag)


def build_temporal_rope(n_frames: int, dim: int, base: float = 10000.0) -> RotationTable:
    """1D table over frame index t; every one of the dim/2 pairs carries t*theta_k."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    freqs = FrequencyTable.build(dim, base)
    t = np.arange(n_frames, dtype=np.float64)
    angles = np.outer(t, freqs.theta)
    return _table_from_angles(angles, "temporal")


def build_spatial_rope(grid_h: int, grid_w: int, dim: int, base: float = 10000.0) -> RotationTable:
    """2D table over the patch grid, dimension split evenly between axes.

    The first dim/4 pairs rotate by x*theta, the last dim/4 by y*theta,
    with theta drawn from a half-width frequency table (dim/2).  Tokens
    are ordered row-major: index = x * grid_w + y.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError("grid extents must be positive")
    if dim % 4 != 0:
        raise ValueError(f"2D table needs dim divisible by 4, got {dim}")
    freqs = FrequencyTable.build(dim // 2, base)
    xs = np.repeat(np.arange(grid_h, dtype=np.float64), grid_w)
    ys = np.tile(np.arange(grid_w, dtype=np.float64), grid_h)
    angles = np.concatenate([np.outer(xs, freqs.theta), np.outer(ys, freqs.theta)], axis=1)
    return _table_from_angles(angles, "spatial2d")


def compose_st_rope(spatial: RotationTable, temporal: RotationTable) -> RotationTable:
    """Combine spatial and temporal tables by adding their rotation angles.

    The spatial table is replicated once per frame and the temporal table
    once per patch; the combined angle is formed with the angle-sum
    identities on the stored cos/sin values (no re-evaluation of cos/sin).
    Output token order: frame-major, then the spatial table's row order.
    """
    if spatial.dim != temporal.dim:
        raise ValueError(f"dim mismatch: spatial {spatial.dim} vs temporal {temporal.dim}")
    cs, ss = spatial.cos[None, :, :], spatial.sin[None, :, :]
    ct, st = temporal.cos[:, None, :], temporal.sin[:, None, :]
    cos = cs * ct - ss * st
    sin = ss * ct + cs * st
    n = spatial.n_tokens * temporal.n_tokens
    return RotationTable(
        cos=cos.reshape(n, spatial.dim // 2),
        sin=sin.reshape(n, spatial.dim // 2),
        axis_tag="spatiotemporal",
    )


def split_slice_dims(dim: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """Resolve per-axis slice widths for the split baseline, or fail loudly."""
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    dims = []
    for frac, axis in zip(fractions, ("x", "y", "t")):
        d = frac * dim
        if abs(d - round(d)) > 1e-9 or round(d) % 2 != 0 or round(d) <= 0:
            raise ValueError(
                f"cannot split dim={dim}: axis {axis} fraction {frac} gives "
                f"{d} dims, which is not a positive even integer"
            )
        dims.append(int(round(d)))
    return tuple(dims)


def build_split_3d_rope(
    n_frames: int,
    grid_h: int,
    grid_w: int,
    dim: int,
    fractions: tuple[float, float, float] = (3 / 8, 3 / 8, 1 / 4),
    base: float = 10000.0,
) -> RotationTable:
    """Baseline table with disjoint x/y/t dimension slices.

    Each slice carries an independent 1D rope over its own axis; pairs in
    one slice are insensitive to the other two coordinates.  Token order
    matches :func:`compose_st_rope`.
    """
    dx, dy, dt = split_slice_dims(dim, fractions)
    tx = FrequencyTable.build(dx, base).theta
    ty = FrequencyTable.build(dy, base).theta
    tt = FrequencyTable.build(dt, base).theta
    t_idx = np.repeat(np.arange(n_frames, dtype=np.float64), grid_h * grid_w)
    x_idx = np.tile(np.repeat(np.arange(grid_h, dtype=np.float64), grid_w), n_frames)
    y_idx = np.tile(np.arange(grid_w, dtype=np.float64), n_frames * grid_h)
    angles = np.concatenate(
        [np.outer(x_idx, tx), np.outer(y_idx, ty), np.outer(t_idx, tt)], axis=1
    )
    return _table_from_angles(angles, "split3d")


def apply_rope(seq, table: RotationTable):
    """Rotate each interleaved pair of ``seq`` by the table's angles.

    ``seq`` is a Tensor or ndarray of shape (..., n_tokens, dim); the
    rotation preserves per-pair Euclidean norms.
    """
    if isinstance(seq, Tensor):
        return rope_rotate(seq, table.cos, table.sin)
    seq = np.asarray(seq)
    out = rope_rotate(Tensor(seq), table.cos, table.sin)
    return out.data


_MAGIC = b"ROTB"


def export_table(table: RotationTable, path) -> None:
    """Write the flat binary layout: n_tokens, dim, row-major cos then sin.

    All values little-endian 64-bit (unsigned for the two extents, IEEE
    doubles for the tables).
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", table.n_tokens, table.dim))
        fh.write(np.ascontiguousarray(table.cos, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.sin, dtype="<f8").tobytes())


def load_table(path, axis_tag: str = "spatiotemporal") -> RotationTable:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a rotation table file: bad magic {magic!r}")
        n_tokens, dim = struct.unpack("<QQ", fh.read(16))
        count = n_tokens * (dim // 2)
        cos = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(n_tokens, dim // 2)
        sin = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(n_tokens, dim // 2)
    return RotationTable(cos=cos.copy(), sin=sin.copy(), axis_tag=axis_tag)
