"""Statistics: exact mean/median, histogram conservation, TSV export."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxcluster import (
    EmptyDataError,
    InvalidRangeError,
    collect_stats,
    export_histogram,
    intensity_stats,
)
from conftest import make_grid
from reference import ref_fsum_mean, ref_sorted_stats


def cube(values):
    """Smallest cube holding the given values, padded with NaN."""
    vals = np.asarray(values, dtype=np.float32)
    n = 2
    while n**3 < vals.size:
        n += 1
    data = np.full(n**3, np.nan, np.float32)
    data[: vals.size] = vals
    return make_grid(data.reshape(n, n, n))


class TestSmallExact:
    def test_four_values(self):
        st_ = intensity_stats(cube([1, 2, 3, 4]), 4, (1.0, 4.0))
        assert st_.vmean == 2.5
        assert st_.vmedian == 2.5  # even count: midpoint of central pair
        # bins of width 0.75; 4 sits in the closed last bin
        assert st_.histogram.counts.tolist() == [1, 1, 1, 1]
        st2 = intensity_stats(cube([1, 2, 3, 4]), 3, (1.0, 4.0))
        assert st2.histogram.counts.tolist() == [1, 1, 2]

    def test_constant_grid(self):
        g = make_grid(np.full((3, 3, 3), 7.25, np.float32))
        st_ = intensity_stats(g, 10)
        assert st_.vmean == 7.25
        assert st_.vmedian == 7.25
        lo, hi = st_.histogram.lo, st_.histogram.hi
        assert lo < 7.25 < hi
        b = int(np.argmax(st_.histogram.counts))
        blo, bhi = st_.histogram.bin_edges(b)
        assert blo <= 7.25 <= bhi
        assert st_.hmax == lo + (b + 0.5) * st_.histogram.bin_width

    def test_hmax_lowest_max_bin_wins(self):
        st_ = collect_stats(np.array([0.5, 2.5], np.float32), 3, (0.0, 3.0))
        # bins [0,1) and [2,3] both hold one value; the lower bin wins
        assert st_.hmax == 0.5

    def test_median_odd_count(self):
        st_ = collect_stats(np.array([5.0, 1.0, 9.0], np.float32), 2)
        assert st_.vmedian == 5.0

    def test_empty_errors(self):
        with pytest.raises(EmptyDataError):
            collect_stats(np.full(4, np.nan, np.float32), 4)

    def test_bad_range_errors(self):
        with pytest.raises(InvalidRangeError):
            collect_stats(np.array([1.0, 2.0], np.float32), 4, (3.0, 3.0))
        with pytest.raises(InvalidRangeError):
            collect_stats(np.array([1.0, 2.0], np.float32), 0)

    def test_nan_and_inf_bookkeeping(self):
        vals = np.array([1.0, 2.0, np.nan, np.inf, -np.inf, 3.0], np.float32)
        st_ = collect_stats(vals, 4, (1.0, 3.0))
        h = st_.histogram
        assert h.nan_count == 1
        assert h.overflow == 1
        assert h.underflow == 1
        assert h.total == 6
        assert st_.vmean == 2.0


class TestOracleEquivalence:
    @pytest.mark.parametrize("n", [8, 16, 33])
    def test_matches_sorted_oracle(self, n, rng):
        data = (rng.gamma(0.7, 2.0, size=(n, n, n)) - 0.3).astype(np.float32)
        data.ravel()[rng.integers(0, data.size, size=n)] = np.nan
        g = make_grid(data)
        st_ = intensity_stats(g, 1000)
        mean, median = ref_sorted_stats(data)
        assert st_.vmean == mean
        assert st_.vmedian == median
        assert st_.vmean == pytest.approx(ref_fsum_mean(data), rel=1e-12)

    def test_permutation_invariance(self, rng):
        data = rng.exponential(2.0, size=512).astype(np.float32)
        a = collect_stats(data, 64)
        for _ in range(3):
            perm = rng.permutation(data)
            b = collect_stats(perm, 64)
            assert (b.vmean, b.vmedian, b.hmax) == (a.vmean, a.vmedian, a.hmax)
            assert np.array_equal(b.histogram.counts, a.histogram.counts)


@given(
    st.lists(
        st.floats(min_value=-1e6, max_value=1e6, width=32, allow_nan=False),
        min_size=1,
        max_size=300,
    ),
    st.integers(min_value=1, max_value=50),
    st.integers(min_value=0, max_value=40),
)
@settings(max_examples=60, deadline=None)
def test_conservation_property(values, bins, nan_pad):
    arr = np.array(values + [np.nan] * nan_pad, dtype=np.float32)
    st_ = collect_stats(arr, bins)
    assert st_.histogram.total == arr.size
    assert st_.histogram.nan_count == nan_pad
    # the default range covers all finite values
    assert st_.histogram.underflow == 0
    assert st_.histogram.overflow == 0


@given(
    st.lists(st.floats(min_value=-100, max_value=100, width=32), min_size=2, max_size=80),
    st.floats(min_value=-50, max_value=0), st.floats(min_value=1, max_value=50),
)
@settings(max_examples=40, deadline=None)
def test_conservation_with_explicit_range(values, lo, hi):
    arr = np.array(values, dtype=np.float32)
    st_ = collect_stats(arr, 7, (lo, hi))
    assert st_.histogram.total == arr.size


class TestExport:
    def test_single_occupied_bin(self, tmp_path):
        st_ = collect_stats(np.array([2.0, 2.0], np.float32), 8, (0.0, 8.0))
        p = tmp_path / "h.tsv"
        export_histogram(st_.histogram, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "bin_lo\tbin_hi\tcount"
        assert len(lines) == 2
        lo, hi, count = lines[1].split("\t")
        assert (float(lo), float(hi), int(count)) == (2.0, 3.0, 2)

    def test_sparse_emission(self, tmp_path, rng):
        vals = rng.exponential(1.0, 500).astype(np.float32)
        st_ = collect_stats(vals, 1_000_000)
        p = tmp_path / "big.tsv"
        export_histogram(st_.histogram, p, stats=st_)
        lines = [l for l in p.read_text().splitlines() if not l.startswith("#")]
        occupied = int((st_.histogram.counts > 0).sum())
        assert len(lines) == occupied + 1  # header + one row per non-empty bin
        assert occupied <= 500
        footer = [l for l in p.read_text().splitlines() if l.startswith("#")]
        assert any("vmedian" in l for l in footer)

    def test_counts_roundtrip_from_tsv(self, tmp_path):
        vals = np.array([0.1, 0.9, 0.9, 3.3], np.float32)
        st_ = collect_stats(vals, 16, (0.0, 4.0))
        p = tmp_path / "rt.tsv"
        export_histogram(st_.histogram, p)
        total = 0
        for line in p.read_text().splitlines()[1:]:
            lo, hi, count = line.split("\t")
            b = int((float(lo) - st_.histogram.lo) / st_.histogram.bin_width + 0.5)
            assert st_.histogram.counts[b] == int(count)
            total += int(count)
        assert total == 4
