"""Intensity-weighted DBSCAN on a regular 3D lattice.

Neighborhoods are fixed integer-offset stencils (6/18/26 neighbors for
eps below 2), each voxel's weight is 1 below the intensity threshold and
intensity/threshold at or above it, and a voxel is core when the weights
over its closed neighborhood sum to at least min_pts.  Clusters are the
connected components of the core graph; a non-core voxel adjacent to a
core voxel joins the cluster of its smallest-linear-index core neighbor,
which makes labeling independent of traversal order.

NaN voxels weigh 0, are never core and are never attached as borders, so
masked detector regions cannot glue clusters together.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import CorruptFileError, InvalidHeaderError, VolumeFormatError
from .volume import VoxelGrid

# Lattice squared norms are integers.  Truncated-decimal eps values such
# as 1.4142 or 1.7320 must still pick up the sqrt(2)/sqrt(3) shells, so
# the squared radius gets a small absolute slack.
_R2_SLACK = 1e-3

# elements per slab when accumulating neighbor sums (keeps temporaries
# at a few tens of MB regardless of volume size)
_SLAB = 1 << 21

_LBL_MAGIC = b"VXL1"
_LBL_HEADER = struct.Struct("<4sHHQQQ")


@dataclass(frozen=True)
class Stencil:
    """Integer neighbor offsets within Euclidean distance eps of the origin."""

    eps: float
    offsets: tuple[tuple[int, int, int], ...]

    @property
    def radius(self) -> int:
        return max((max(abs(c) for c in o) for o in self.offsets), default=0)

    def __len__(self) -> int:
        return len(self.offsets)


def build_stencil(eps: float) -> Stencil:
    """All nonzero integer offsets v with |v| <= eps (plus the decimal slack).

    eps below 1 legally yields an empty stencil.  Offsets come out in
    lexicographic order; that order is the accumulation contract for the
    weighted core test.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    reach = math.floor(eps)
    r2max = eps * eps + _R2_SLACK
    offsets = [
        (o1, o2, o3)
        for o1 in range(-reach, reach + 1)
        for o2 in range(-reach, reach + 1)
        for o3 in range(-reach, reach + 1)
        if (o1, o2, o3) != (0, 0, 0) and o1 * o1 + o2 * o2 + o3 * o3 <= r2max
    ]
    return Stencil(eps=eps, offsets=tuple(offsets))


@dataclass(frozen=True)
class WdbscanParams:
    """eps (lattice distance), min_pts (weighted count) and the weight threshold."""

    eps: float
    min_pts: float
    threshold: float

    def __post_init__(self):
        for name in ("eps", "min_pts", "threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def stencil(self) -> Stencil:
        return build_stencil(self.eps)


def weight(intensity: float, threshold: float) -> float:
    """Clustering weight of one intensity value.

    Sub-threshold values (negative ones included) weigh 1, values at or
    above the threshold weigh intensity/threshold, NaN weighs 0.
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if math.isnan(intensity):
        return 0.0
    if intensity < threshold:
        return 1.0
    return intensity / threshold


def _weights64(x: np.ndarray, threshold: float) -> np.ndarray:
    """Vectorized weight(); float64 throughout, matching the scalar op bitwise."""
    d = x.astype(np.float64)
    w = d / threshold
    np.copyto(w, 1.0, where=d < threshold)
    np.copyto(w, 0.0, where=np.isnan(d))
    return w


def _shift_slices(off, dims):
    """dst/src slice triples so that src = dst + off stays in bounds."""
    dst, src = [], []
    for o, n in zip(off, dims):
        lo, hi = max(0, -o), n - max(0, o)
        if hi <= lo:
            return None
        dst.append(slice(lo, hi))
        src.append(slice(lo + o, hi + o))
    return tuple(dst), tuple(src)


def _neighborhood_sums(data: np.ndarray, stencil: Stencil, threshold: float) -> np.ndarray:
    """Closed-neighborhood weight sums, float64.

    Accumulation order per voxel is fixed: own weight first, then the
    stencil offsets in their lexicographic order, skipping neighbors that
    fall outside the grid.  A plain per-voxel loop with the same order
    reproduces every sum bit for bit.
    """
    dims = data.shape
    rows = max(1, _SLAB // max(1, dims[1] * dims[2]))
    sums = np.zeros(dims, dtype=np.float64)
    for off in ((0, 0, 0), *stencil.offsets):
        sl = _shift_slices(off, dims)
        if sl is None:
            continue
        (d0, d1, d2), (s0, s1, s2) = sl
        for k in range(0, d0.stop - d0.start, rows):
            lo, hi = d0.start + k, min(d0.start + k + rows, d0.stop)
            dst = sums[lo:hi, d1, d2]
            src = data[s0.start + k : s0.start + k + (hi - lo), s1, s2]
            dst += _weights64(src, threshold)
    return sums


def classify_cores(grid: VoxelGrid, params: WdbscanParams) -> np.ndarray:
    """Boolean core mask: closed-neighborhood weight sum >= min_pts.

    NaN voxels are never core, however bright their neighborhoods are.
    """
    sums = _neighborhood_sums(grid.data, params.stencil, params.threshold)
    core = sums >= params.min_pts
    if grid.nan_count:
        core &= ~np.isnan(grid.data)
    return core


def _label_components_scan(core: np.ndarray, stencil: Stencil) -> np.ndarray:
    """Core-graph components via a single raster scan (stencil radius 1)."""
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1, 1, 1] = True
    for o1, o2, o3 in stencil.offsets:
        structure[1 + o1, 1 + o2, 1 + o3] = True
    labels = np.zeros(core.shape, dtype=np.int32)
    ndimage.label(core, structure=structure, output=labels)
    return labels


def _label_components_sweep(core: np.ndarray, stencil: Stencil) -> np.ndarray:
    """Core-graph components for arbitrary stencil radius.

    Min-hooking plus pointer jumping over a parent array: every core
    voxel converges to the smallest linear index in its component, which
    is order-free, so the partition never depends on sweep scheduling.
    """
    dims = core.shape
    n = core.size
    parent = np.arange(n, dtype=np.int64)
    pv = parent.reshape(dims)
    changed = True
    while changed:
        changed = False
        for off in stencil.offsets:
            sl = _shift_slices(off, dims)
            if sl is None:
                continue
            dsl, ssl = sl
            m = core[dsl] & core[ssl]
            if not m.any():
                continue
            a = pv[dsl]
            am, bm = a[m], pv[ssl][m]
            nm = np.minimum(am, bm)
            if (nm < am).any():
                a[m] = nm
                changed = True
        while True:
            jumped = parent[parent]
            if np.array_equal(jumped, parent):
                break
            parent = jumped
            pv = parent.reshape(dims)
    cf = core.ravel()
    roots = parent[cf]
    uniq = np.unique(roots)
    labels = np.zeros(n, dtype=np.int32)
    labels[cf] = np.searchsorted(uniq, roots) + 1
    return labels.reshape(dims)


def _linear_offset(off, dims) -> int:
    return (off[0] * dims[1] + off[1]) * dims[2] + off[2]


def _attach_borders(
    labels: np.ndarray, core: np.ndarray, stencil: Stencil, grid: VoxelGrid
) -> None:
    """Assign each eligible non-core voxel to its smallest-index core neighbor.

    For in-bounds neighbors the linear index of voxel+offset is the voxel's
    own index plus a per-offset constant, so scanning offsets by ascending
    linear offset and keeping the first hit realizes the tie rule exactly.
    """
    dims = grid.dims
    notnan = None if grid.nan_count == 0 else ~np.isnan(grid.data)
    for off in sorted(stencil.offsets, key=lambda o: _linear_offset(o, dims)):
        sl = _shift_slices(off, dims)
        if sl is None:
            continue
        dsl, ssl = sl
        m = (labels[dsl] == 0) & core[ssl]
        if notnan is not None:
            m &= notnan[dsl]
        if not m.any():
            continue
        labels[dsl][m] = labels[ssl][m]


def cluster(grid: VoxelGrid, params: WdbscanParams) -> "LabelVolume":
    """Weighted DBSCAN labeling of a volume.

    Labels are dense 1..K with 0 meaning noise; the numbering is
    deterministic but otherwise arbitrary — rank_clusters() re-labels by
    descending size.  Output is bit-identical across runs.
    """
    core = classify_cores(grid, params)
    stencil = params.stencil
    if stencil.radius <= 1:
        labels = _label_components_scan(core, stencil)
    else:
        labels = _label_components_sweep(core, stencil)
    _attach_borders(labels, core, stencil, grid)
    return LabelVolume(dims=grid.dims, labels=labels.astype(np.uint32))


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Per-voxel cluster ids (uint32, 0 = noise), same layout as the grid."""

    dims: tuple[int, int, int]
    labels: np.ndarray

    def __post_init__(self):
        if self.labels.dtype != np.uint32:
            raise ValueError(f"labels must be uint32, got {self.labels.dtype}")
        if self.labels.shape != tuple(self.dims):
            raise ValueError(f"labels shape {self.labels.shape} != dims {self.dims}")
        if not self.labels.flags.c_contiguous:
            object.__setattr__(self, "labels", np.ascontiguousarray(self.labels))
        self.labels.setflags(write=False)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max())


def save_labels(vol: LabelVolume, path: str | Path) -> None:
    """Write a VXL1 file: magic, version, dims as u64, then u32 labels."""
    with open(path, "wb") as f:
        f.write(_LBL_HEADER.pack(_LBL_MAGIC, 1, 0, *vol.dims))
        vol.labels.astype("<u4", copy=False).tofile(f)


def load_labels(path: str | Path) -> LabelVolume:
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read(_LBL_HEADER.size)
        if len(raw) < 4 or raw[:4] != _LBL_MAGIC:
            raise VolumeFormatError(f"{path}: not a VXL1 file")
        if len(raw) < _LBL_HEADER.size:
            raise CorruptFileError(f"{path}: truncated header")
        _, version, _, n1, n2, n3 = _LBL_HEADER.unpack(raw)
        if version != 1:
            raise VolumeFormatError(f"{path}: unsupported VXL1 version {version}")
        if min(n1, n2, n3) < 1:
            raise InvalidHeaderError(f"{path}: bad dims {(n1, n2, n3)}")
        total = n1 * n2 * n3
        labels = np.fromfile(f, dtype="<u4", count=total)
        if labels.size < total:
            raise CorruptFileError(f"{path}: payload holds {labels.size} of {total} values")
        if f.read(1):
            raise CorruptFileError(f"{path}: trailing bytes after payload")
    return LabelVolume(dims=(n1, n2, n3), labels=labels.reshape(n1, n2, n3))
