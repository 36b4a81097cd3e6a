"""Dense 3D intensity volumes on regular grids.

A volume is a C-contiguous float32 array of shape (n1, n2, n3) plus one
AxisSpec per axis mapping grid indices to physical coordinates.  The
linear (raveled) order — i3 fastest — is part of the VXG1 file contract,
so scans along the third axis are contiguous in memory and on disk.

VXG1 layout (little-endian):
    magic "VXG1" | version u16 = 1 | reserved u16 = 0
    | n1, n2, n3 as u64
    | per axis: q_min f64, q_max f64
    | payload: n1*n2*n3 float32 values in linear order
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFileError,
    InvalidHeaderError,
    OutOfRangeError,
    VolumeFormatError,
)

_MAGIC = b"VXG1"
_VERSION = 1
_HEADER = struct.Struct("<4sHHQQQdddddd")


@dataclass(frozen=True)
class AxisSpec:
    """Uniform physical coordinate axis: n grid points spanning [q_min, q_max]."""

    q_min: float
    q_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise InvalidHeaderError(f"axis needs at least 2 grid points, got {self.n}")
        if not (math.isfinite(self.q_min) and math.isfinite(self.q_max)):
            raise InvalidHeaderError("axis bounds must be finite")
        if not self.q_min < self.q_max:
            raise InvalidHeaderError(
                f"axis requires q_min < q_max, got [{self.q_min}, {self.q_max}]"
            )

    @property
    def delta(self) -> float:
        """Grid spacing (q_max - q_min) / (n - 1); strictly positive."""
        return (self.q_max - self.q_min) / (self.n - 1)

    def coords(self) -> np.ndarray:
        """All grid-point coordinates, index_to_q applied to 0..n-1."""
        return self.q_min + np.arange(self.n, dtype=np.float64) * self.delta


def index_to_q(axis: AxisSpec, i: int) -> float:
    """Physical coordinate of grid index i: q_min + i * delta."""
    return axis.q_min + i * axis.delta


def q_to_index(axis: AxisSpec, q: float) -> int:
    """Nearest grid index for physical coordinate q.

    Ties round half-up (after the shift to non-negative offsets), and the
    result is clamped to [0, n-1].  q may overhang either endpoint by up
    to half a grid spacing; beyond that OutOfRangeError is raised.
    Region filters depend on the tie rule, so it is nailed down here
    rather than left to banker's rounding.
    """
    # (q - q_min) * (n - 1) / span keeps decimal ties (e.g. 251.5) exact
    # where the divide-by-delta form would drift a few ulp below them.
    t = (q - axis.q_min) * (axis.n - 1) / (axis.q_max - axis.q_min)
    if not (-0.5 <= t <= (axis.n - 1) + 0.5):
        raise OutOfRangeError(
            f"q={q} outside [{axis.q_min - axis.delta / 2}, {axis.q_max + axis.delta / 2}]"
        )
    return min(max(math.floor(t + 0.5), 0), axis.n - 1)


def linear_index(dims: tuple[int, int, int], i1: int, i2: int, i3: int) -> int:
    """Flat payload position of voxel (i1, i2, i3); i3 varies fastest."""
    return (i1 * dims[1] + i2) * dims[2] + i3


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Immutable intensity volume: three axes plus a float32 data cube.

    NaN intensities mark masked voxels.  They are kept in the array but
    counted at construction (nan_count) so downstream stages can treat
    them as carrying zero weight.
    """

    axes: tuple[AxisSpec, AxisSpec, AxisSpec]
    data: np.ndarray
    nan_count: int = -1  # computed in __post_init__

    def __post_init__(self):
        dims = tuple(ax.n for ax in self.axes)
        if self.data.dtype != np.float32:
            raise ValueError(f"intensity data must be float32, got {self.data.dtype}")
        if self.data.shape != dims:
            raise ValueError(f"data shape {self.data.shape} != axis dims {dims}")
        if not self.data.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(self.data))
        self.data.setflags(write=False)
        if self.nan_count < 0:
            object.__setattr__(self, "nan_count", int(np.isnan(self.data).sum()))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.axes[0].n, self.axes[1].n, self.axes[2].n)

    @property
    def size(self) -> int:
        return self.data.size


def save_volume(grid: VoxelGrid, path: str | Path) -> None:
    """Write a VXG1 file; round-trips bit-exactly through load_volume."""
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        0,
        *grid.dims,
        *(v for ax in grid.axes for v in (ax.q_min, ax.q_max)),
    )
    with open(path, "wb") as f:
        f.write(header)
        # tofile writes raw bits, preserving NaN payloads exactly
        grid.data.astype("<f4", copy=False).tofile(f)


def load_volume(path: str | Path) -> VoxelGrid:
    """Read a VXG1 file.

    Raises VolumeFormatError on bad magic or unsupported version,
    CorruptFileError when the payload is truncated (or has trailing
    bytes), and InvalidHeaderError when header values break the axis
    contract.
    """
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < 4 or raw[:4] != _MAGIC:
            raise VolumeFormatError(f"{path}: not a VXG1 file")
        if len(raw) < _HEADER.size:
            raise CorruptFileError(f"{path}: truncated header")
        (_, version, _, n1, n2, n3, *bounds) = _HEADER.unpack(raw)
        if version != _VERSION:
            raise VolumeFormatError(f"{path}: unsupported VXG1 version {version}")
        axes = tuple(
            AxisSpec(bounds[2 * k], bounds[2 * k + 1], (n1, n2, n3)[k]) for k in range(3)
        )
        total = n1 * n2 * n3
        data = np.fromfile(f, dtype="<f4", count=total)
        if data.size < total:
            raise CorruptFileError(
                f"{path}: payload holds {data.size} of {total} values"
            )
        if f.read(1):
            raise CorruptFileError(f"{path}: trailing bytes after payload")
    return VoxelGrid(axes=axes, data=data.reshape(n1, n2, n3))
