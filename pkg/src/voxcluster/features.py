"""Cluster ranking, symmetry grouping, selection filters and exports.

rank_clusters() turns an arbitrary label volume into a size-ordered
table plus a relabeled volume where cluster id equals rank.  The other
operations — multiplet detection, index-group breaks, point selection,
photometric characterization — all work on ranked labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import EmptyDataError, MissingParameterError
from .stats import IntensityStats, collect_stats
from .volume import VoxelGrid, index_to_q, q_to_index
from .wdbscan import LabelVolume


@dataclass(frozen=True)
class ClusterRecord:
    """One ranked cluster: rank 1 is the largest."""

    rank: int
    size: int
    bbox: tuple[int, int, int, int, int, int]  # i1min,i1max,i2min,i2max,i3min,i3max
    q_bbox: tuple[float, float, float, float, float, float]
    sum_intensity: float
    min_intensity: float
    max_intensity: float


@dataclass
class ClusterTable:
    """Rank-ordered cluster records plus the noise tally.

    group_breaks lists ranks after which an index-group boundary falls;
    it starts empty and is filled by detect_index_groups or a manual
    override.
    """

    records: list[ClusterRecord]
    noise_count: int
    group_breaks: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_voxels(self) -> int:
        return sum(r.size for r in self.records) + self.noise_count

    def sizes(self) -> np.ndarray:
        return np.array([r.size for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class Multiplet:
    """A maximal run of consecutive ranks with near-equal sizes."""

    rank_lo: int
    rank_hi: int
    size: int  # of the run's first (largest) member

    @property
    def multiplicity(self) -> int:
        return self.rank_hi - self.rank_lo + 1


def rank_clusters(labels: LabelVolume, grid: VoxelGrid) -> tuple[ClusterTable, LabelVolume]:
    """Order clusters by descending size and relabel so id == rank.

    Equal sizes are ordered by ascending smallest-member linear index.
    Applying rank_clusters to its own output is the identity.
    """
    if labels.dims != grid.dims:
        raise ValueError(f"label dims {labels.dims} != grid dims {grid.dims}")
    flat = labels.labels.ravel()
    vals, first, counts = np.unique(flat, return_index=True, return_counts=True)
    keep = vals != 0
    noise_count = int(counts[~keep][0]) if (~keep).any() else 0
    vals, first, counts = vals[keep], first[keep], counts[keep]
    if vals.size == 0:
        empty = LabelVolume(dims=labels.dims, labels=np.zeros(labels.dims, np.uint32))
        return ClusterTable(records=[], noise_count=noise_count), empty

    order = np.lexsort((first, -counts))
    ranks = np.empty(order.size, dtype=np.uint32)
    ranks[order] = np.arange(1, order.size + 1, dtype=np.uint32)
    if int(vals.max()) <= max(4 * vals.size, 1 << 20):
        rank_of = np.zeros(int(vals.max()) + 1, dtype=np.uint32)
        rank_of[vals] = ranks
        ranked = rank_of[flat].reshape(labels.dims)
    else:
        # ids too sparse for a lookup table; vals is sorted, so map by search
        pos = np.searchsorted(vals, flat)
        ranked = np.where(flat == 0, 0, ranks[np.minimum(pos, vals.size - 1)]).astype(np.uint32)
        ranked = ranked.reshape(labels.dims)
    ranked_vol = LabelVolume(dims=labels.dims, labels=ranked)

    k = order.size
    sizes = counts[order]
    index = np.arange(1, k + 1)
    sums = np.bincount(ranked.ravel(), weights=grid.data.ravel().astype(np.float64),
                       minlength=k + 1)[1:]
    mins = ndimage.minimum(grid.data, labels=ranked, index=index)
    maxs = ndimage.maximum(grid.data, labels=ranked, index=index)
    boxes = ndimage.find_objects(ranked)

    records = []
    for j in range(k):
        sl = boxes[j]
        bbox = (sl[0].start, sl[0].stop - 1, sl[1].start, sl[1].stop - 1,
                sl[2].start, sl[2].stop - 1)
        q_bbox = tuple(
            index_to_q(grid.axes[a], bbox[2 * a + e]) for a in range(3) for e in range(2)
        )
        records.append(
            ClusterRecord(
                rank=j + 1,
                size=int(sizes[j]),
                bbox=bbox,
                q_bbox=q_bbox,
                sum_intensity=float(sums[j]),
                min_intensity=float(mins[j]),
                max_intensity=float(maxs[j]),
            )
        )
    return ClusterTable(records=records, noise_count=noise_count), ranked_vol


def symmetry_groups(table: ClusterTable, rel_tol: float) -> list[Multiplet]:
    """Greedy maximal runs of ranks whose sizes stay within rel_tol of the run head.

    Size-sorted input means each run's first member is its largest; a
    rel_tol of 0 yields exact equal-size runs, mirroring the crystal
    symmetry multiplicities (2, 4, 8, ...) seen in ranked cluster sizes.
    """
    if not 0 <= rel_tol < 1:
        raise ValueError(f"rel_tol must be in [0, 1), got {rel_tol}")
    runs: list[Multiplet] = []
    i = 0
    recs = table.records
    while i < len(recs):
        head = recs[i].size
        j = i + 1
        while j < len(recs) and (head - recs[j].size) <= rel_tol * head:
            j += 1
        runs.append(Multiplet(rank_lo=i + 1, rank_hi=j, size=head))
        i = j
    return runs


def detect_index_groups(table: ClusterTable, min_gap: float = 1.0) -> list[int]:
    """Ranks after which log10(size) drops by at least min_gap decades.

    A heuristic stand-in for picking group boundaries off a size-vs-rank
    plot by eye; the CLI lets callers override the breaks explicitly.
    """
    if not table.records:
        raise EmptyDataError("cannot detect groups in an empty cluster table")
    if not min_gap > 0:
        raise ValueError(f"min_gap must be positive, got {min_gap}")
    sizes = table.sizes().astype(np.float64)
    gaps = np.log10(sizes[:-1]) - np.log10(sizes[1:])
    return [int(r) + 1 for r in np.flatnonzero(gaps >= min_gap)]


@dataclass(frozen=True)
class IntensityFilter:
    """Low-pass keeps values <= cutoff, high-pass keeps values > cutoff.

    With scaled=True the cutoff is in intensity/threshold units and the
    clustering threshold must accompany the selection.  The two kinds
    partition any selection exactly; NaN intensities fall on the
    low-pass side.
    """

    kind: Literal["low", "high"]
    cutoff: float
    scaled: bool = False


@dataclass(frozen=True)
class Selection:
    """Conjunction of selection criteria; at least one must be present."""

    rank_range: tuple[int, int] | None = None
    q_region: tuple[tuple[float, float] | None, ...] | None = None
    intensity_filter: IntensityFilter | None = None

    def __post_init__(self):
        if self.rank_range is None and self.q_region is None and self.intensity_filter is None:
            raise ValueError("selection needs at least one criterion")
        if self.rank_range is not None and self.rank_range[0] > self.rank_range[1]:
            raise ValueError(f"empty rank range {self.rank_range}")
        if self.q_region is not None and len(self.q_region) != 3:
            raise ValueError("q_region must give one interval (or None) per axis")


@dataclass(frozen=True, eq=False)
class PointSet:
    """Selected voxels in ascending linear-index order."""

    ijk: np.ndarray  # (n, 3) int32
    q: np.ndarray  # (n, 3) float64
    intensity: np.ndarray  # (n,) float32
    rank: np.ndarray  # (n,) uint32
    threshold: float | None = None

    def __len__(self) -> int:
        return self.ijk.shape[0]

    @property
    def scaled_intensity(self) -> np.ndarray | None:
        if self.threshold is None:
            return None
        return self.intensity.astype(np.float64) / self.threshold


def select(
    grid: VoxelGrid,
    labels: LabelVolume,
    sel: Selection,
    threshold: float | None = None,
) -> PointSet:
    """Voxels satisfying every present criterion of the selection.

    labels must be rank-labeled (id == rank), as written by the cluster
    command.  Q-region bounds map to index ranges through the grid's
    nearest-index rule, so region edges land on the same voxels the
    coordinate mapping would pick.
    """
    if labels.dims != grid.dims:
        raise ValueError(f"label dims {labels.dims} != grid dims {grid.dims}")
    filt = sel.intensity_filter
    if filt is not None and filt.scaled and threshold is None:
        raise MissingParameterError("scaled intensity filter requires the clustering threshold")

    mask = np.ones(grid.dims, dtype=bool)
    if sel.rank_range is not None:
        lo, hi = sel.rank_range
        mask &= (labels.labels >= lo) & (labels.labels <= hi)
    if sel.q_region is not None:
        from .volume import q_to_index

        for a, interval in enumerate(sel.q_region):
            if interval is None:
                continue
            i_lo = q_to_index(grid.axes[a], interval[0])
            i_hi = q_to_index(grid.axes[a], interval[1])
            ax_idx = np.arange(grid.dims[a])
            ax_mask = (ax_idx >= i_lo) & (ax_idx <= i_hi)
            mask &= ax_mask.reshape([-1 if k == a else 1 for k in range(3)])
    if filt is not None:
        vals = grid.data.astype(np.float64)
        if filt.scaled:
            vals = vals / threshold
        if filt.kind == "high":
            mask &= vals > filt.cutoff
        else:
            mask &= ~(vals > filt.cutoff)  # NaN goes to the low-pass side
    lin = np.flatnonzero(mask.ravel())
    i1, i2, i3 = np.unravel_index(lin, grid.dims)
    ijk = np.stack([i1, i2, i3], axis=1).astype(np.int32)
    q = np.stack(
        [grid.axes[a].coords()[ijk[:, a]] for a in range(3)], axis=1
    )
    return PointSet(
        ijk=ijk,
        q=q,
        intensity=grid.data.ravel()[lin],
        rank=labels.labels.ravel()[lin],
        threshold=threshold,
    )


def characterize(points: PointSet, bin_count: int = 1_000_000) -> IntensityStats:
    """Photometric statistics of a selection's raw intensities."""
    if len(points) == 0:
        raise EmptyDataError("cannot characterize an empty selection")
    return collect_stats(points.intensity, bin_count)


def export_points(points: PointSet, path: str | Path) -> None:
    """Point-set CSV; scaled_intensity stays blank when no threshold is known."""
    scaled = points.scaled_intensity
    with open(path, "w") as f:
        f.write("i1,i2,i3,q1,q2,q3,intensity,scaled_intensity,rank\n")
        for row in range(len(points)):
            i1, i2, i3 = (int(v) for v in points.ijk[row])
            q1, q2, q3 = (float(v) for v in points.q[row])
            s = "" if scaled is None else repr(float(scaled[row]))
            f.write(
                f"{i1},{i2},{i3},{q1!r},{q2!r},{q3!r},"
                f"{float(points.intensity[row])!r},{s},{int(points.rank[row])}\n"
            )


def export_cluster_table(table: ClusterTable, path: str | Path) -> None:
    cols = (
        "rank,size,i1min,i1max,i2min,i2max,i3min,i3max,"
        "q1min,q1max,q2min,q2max,q3min,q3max,"
        "sum_intensity,min_intensity,max_intensity"
    )
    with open(path, "w") as f:
        f.write(cols + "\n")
        for r in table.records:
            f.write(
                f"{r.rank},{r.size},"
                + ",".join(str(int(v)) for v in r.bbox)
                + ","
                + ",".join(repr(float(v)) for v in r.q_bbox)
                + f",{r.sum_intensity!r},{r.min_intensity!r},{r.max_intensity!r}\n"
            )


def export_size_rank(table: ClusterTable, path: str | Path) -> None:
    """TSV of size vs rank, the data behind a size-ordered cluster plot."""
    with open(path, "w") as f:
        f.write("rank\tsize\n")
        for r in table.records:
            f.write(f"{r.rank}\t{r.size}\n")
