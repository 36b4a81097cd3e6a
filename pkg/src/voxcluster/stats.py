"""First-order photometric statistics: exact mean/median plus a linear histogram.

All statistics are order-free: values are sorted once, the median comes
from the central order statistics, and the mean is a float64 sum over the
ascending-sorted values.  Permuting the voxels therefore never changes
any output bit.  NaN voxels are excluded from every statistic and counted
separately; +/-inf land in the overflow/underflow buckets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataError, InvalidRangeError
from .volume import VoxelGrid

# values per chunk when binning large arrays; integer bin counts make the
# result independent of the chunk size
_CHUNK = 1 << 22


@dataclass(frozen=True)
class Histogram:
    """Linear-binned counts over [lo, hi]; the last bin is closed at hi.

    bin b covers [lo + b*w, lo + (b+1)*w) with w = (hi - lo) / bin_count.
    counts + underflow + overflow + nan_count always equals the number of
    values the histogram was built from.
    """

    bin_count: int
    lo: float
    hi: float
    counts: np.ndarray
    underflow: int
    overflow: int
    nan_count: int

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bin_count

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow + self.nan_count

    def bin_edges(self, b: int) -> tuple[float, float]:
        w = self.bin_width
        return (self.lo + b * w, self.lo + (b + 1) * w)


@dataclass(frozen=True)
class IntensityStats:
    """Mean, median and modal-bin marker of an intensity sample."""

    vmean: float
    vmedian: float
    hmax: float
    histogram: Histogram


def collect_stats(
    values: np.ndarray,
    bin_count: int,
    value_range: tuple[float, float] | None = None,
) -> IntensityStats:
    """Statistics over an arbitrary array of float32 intensities.

    The mean accumulates in float64 over the ascending-sorted finite
    values; the median is the midpoint of the central order statistics.
    hmax is the center of the lowest-index maximal bin.
    """
    if bin_count < 1:
        raise InvalidRangeError(f"bin_count must be >= 1, got {bin_count}")
    flat = values.ravel()
    total = flat.size
    nan_count = int(np.isnan(flat).sum())
    finite = flat[np.isfinite(flat)]
    if finite.size == 0:
        raise EmptyDataError("no finite intensity values")
    pos_inf = int(np.sum(flat == np.inf))
    neg_inf = int(np.sum(flat == -np.inf))

    finite = np.sort(finite)
    n = finite.size
    if n % 2:
        vmedian = float(finite[n // 2])
    else:
        vmedian = (float(finite[n // 2 - 1]) + float(finite[n // 2])) / 2.0
    vmean = float(np.sum(finite.astype(np.float64))) / n

    if value_range is not None:
        lo, hi = float(value_range[0]), float(value_range[1])
        if not lo < hi:
            raise InvalidRangeError(f"histogram range needs lo < hi, got ({lo}, {hi})")
    else:
        lo, hi = float(finite[0]), float(finite[-1])
        if lo == hi:
            # constant data: a degenerate auto range gets unit width
            lo, hi = lo - 0.5, hi + 0.5

    counts = np.zeros(bin_count, dtype=np.int64)
    underflow = neg_inf
    overflow = pos_inf
    width = (hi - lo) / bin_count
    for start in range(0, n, _CHUNK):
        x = finite[start : start + _CHUNK].astype(np.float64)
        underflow += int(np.sum(x < lo))
        overflow += int(np.sum(x > hi))
        x = x[(x >= lo) & (x <= hi)]
        idx = ((x - lo) / width).astype(np.int64)
        # values at (or rounding onto) hi belong to the closed last bin
        np.clip(idx, 0, bin_count - 1, out=idx)
        counts += np.bincount(idx, minlength=bin_count)

    hmax_bin = int(np.argmax(counts))  # lowest index wins ties
    hmax = lo + (hmax_bin + 0.5) * width

    hist = Histogram(
        bin_count=bin_count,
        lo=lo,
        hi=hi,
        counts=counts,
        underflow=underflow,
        overflow=overflow,
        nan_count=nan_count,
    )
    assert hist.total == total
    return IntensityStats(vmean=vmean, vmedian=vmedian, hmax=hmax, histogram=hist)


def intensity_stats(
    grid: VoxelGrid,
    bin_count: int = 1_000_000,
    value_range: tuple[float, float] | None = None,
) -> IntensityStats:
    """Statistics over a whole volume; see collect_stats."""
    return collect_stats(grid.data, bin_count, value_range)


def export_histogram(
    hist: Histogram,
    path: str | Path,
    stats: IntensityStats | None = None,
) -> None:
    """Write the non-empty bins as TSV: bin_lo, bin_hi, count.

    Empty bins are skipped so a million-bin histogram stays compact.
    When stats is given, footer comment lines carry vmean/vmedian/hmax
    plus the out-of-range tallies.
    """
    occupied = np.flatnonzero(hist.counts)
    with open(path, "w") as f:
        f.write("bin_lo\tbin_hi\tcount\n")
        for b in occupied:
            lo, hi = hist.bin_edges(int(b))
            f.write(f"{lo!r}\t{hi!r}\t{int(hist.counts[b])}\n")
        if stats is not None:
            f.write(f"# vmean = {stats.vmean!r}\n")
            f.write(f"# vmedian = {stats.vmedian!r}\n")
            f.write(f"# hmax = {stats.hmax!r}\n")
            f.write(
                f"# underflow = {hist.underflow}, overflow = {hist.overflow}, "
                f"nan = {hist.nan_count}\n"
            )
