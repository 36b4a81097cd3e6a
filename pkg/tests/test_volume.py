"""Volume data model, coordinate mapping and VXG1 file round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxcluster import (
    AxisSpec,
    CorruptFileError,
    InvalidHeaderError,
    OutOfRangeError,
    VolumeFormatError,
    VoxelGrid,
    index_to_q,
    linear_index,
    load_volume,
    q_to_index,
    save_volume,
)
from conftest import make_grid


class TestAxisSpec:
    def test_delta(self):
        ax = AxisSpec(-10.0, 10.0, 501)
        assert ax.delta == pytest.approx(0.04)

    @pytest.mark.parametrize("qmin,qmax,n", [(-1, 1, 1), (-1, 1, 0), (1, 1, 5), (2, 1, 5)])
    def test_invalid(self, qmin, qmax, n):
        with pytest.raises(InvalidHeaderError):
            AxisSpec(qmin, qmax, n)

    def test_nonfinite_bounds(self):
        with pytest.raises(InvalidHeaderError):
            AxisSpec(float("-inf"), 1.0, 5)


class TestQToIndex:
    def test_lower_endpoint(self):
        assert q_to_index(AxisSpec(-10, 10, 501), -10.0) == 0

    def test_symmetric_midpoint(self):
        assert q_to_index(AxisSpec(-25, 25, 501), 0.0) == 250

    def test_tie_rounds_half_up(self):
        # (0.06 + 10) / 0.04 = 251.5 exactly; half-up picks 252
        assert q_to_index(AxisSpec(-10, 10, 501), 0.06) == 252

    def test_half_spacing_overhang_clamps(self):
        ax = AxisSpec(0.0, 1.0, 11)
        assert q_to_index(ax, -0.05) == 0
        assert q_to_index(ax, 1.05) == 10

    def test_out_of_range(self):
        ax = AxisSpec(0.0, 1.0, 11)
        with pytest.raises(OutOfRangeError):
            q_to_index(ax, -0.0501)
        with pytest.raises(OutOfRangeError):
            q_to_index(ax, 1.0501)

    @given(
        st.integers(min_value=2, max_value=600),
        st.floats(min_value=-100, max_value=100),
        st.floats(min_value=0.01, max_value=50),
    )
    @settings(max_examples=80, deadline=None)
    def test_index_bijection(self, n, qmin, span):
        ax = AxisSpec(qmin, qmin + span, n)
        for i in range(0, n, max(1, n // 17)):
            assert q_to_index(ax, index_to_q(ax, i)) == i


class TestLinearIndex:
    def test_contract_layout(self):
        dims = (3, 4, 5)
        assert linear_index(dims, 0, 0, 0) == 0
        assert linear_index(dims, 0, 0, 1) == 1  # i3 fastest
        assert linear_index(dims, 0, 1, 0) == 5
        assert linear_index(dims, 1, 0, 0) == 20
        assert linear_index(dims, 2, 3, 4) == 59

    def test_bijection_small_dims(self):
        dims = (3, 4, 5)
        seen = set()
        for i1 in range(3):
            for i2 in range(4):
                for i3 in range(5):
                    seen.add(linear_index(dims, i1, i2, i3))
        assert seen == set(range(60))

    def test_matches_numpy_ravel_order(self):
        dims = (4, 3, 6)
        arr = np.arange(np.prod(dims)).reshape(dims)
        for idx in [(0, 0, 0), (1, 2, 3), (3, 2, 5)]:
            assert arr[idx] == linear_index(dims, *idx)

    def test_501_cube_fits_index_arithmetic(self):
        # the biggest supported production volume must stay well inside
        # both int64 and the uint32 label space
        dims = (501, 501, 501)
        top = linear_index(dims, 500, 500, 500)
        assert top == 501**3 - 1 == 125_751_500
        assert top < 2**31
        lin = np.array([top], dtype=np.int64)
        assert int(lin[0]) == top


class TestVoxelGrid:
    def test_shape_and_nan_count(self):
        data = np.zeros((2, 3, 4), np.float32)
        data[1, 2, 3] = np.nan
        g = make_grid(data)
        assert g.dims == (2, 3, 4)
        assert g.size == 24
        assert g.nan_count == 1

    def test_data_is_readonly(self):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        with pytest.raises(ValueError):
            g.data[0, 0, 0] = 1.0

    def test_wrong_dtype_rejected(self):
        ax = AxisSpec(0, 1, 2)
        with pytest.raises(ValueError):
            VoxelGrid(axes=(ax, ax, ax), data=np.zeros((2, 2, 2), np.float64))


class TestVolumeIO:
    def test_roundtrip_zero_grid(self, tmp_path):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        p = tmp_path / "z.vxg"
        save_volume(g, p)
        g2 = load_volume(p)
        assert g2.dims == (2, 2, 2)
        assert np.array_equal(g2.data, g.data)
        # idempotent re-save produces identical bytes
        p2 = tmp_path / "z2.vxg"
        save_volume(g2, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_roundtrip_bit_exact_with_nan_and_negatives(self, tmp_path, rng):
        data = rng.normal(size=(6, 5, 4)).astype(np.float32)
        data[0, 0, 0] = np.nan
        data[5, 4, 3] = np.float32(-0.0)
        data[2, 2, 2] = np.inf
        g = make_grid(data)
        p = tmp_path / "r.vxg"
        save_volume(g, p)
        g2 = load_volume(p)
        assert g2.data.tobytes() == g.data.tobytes()
        for a, b in zip(g2.axes, g.axes):
            assert (a.q_min, a.q_max, a.n) == (b.q_min, b.q_max, b.n)

    def test_payload_order_is_linear_index(self, tmp_path):
        dims = (2, 3, 4)
        data = np.arange(24, dtype=np.float32).reshape(dims)
        p = tmp_path / "o.vxg"
        save_volume(make_grid(data), p)
        payload = np.frombuffer(p.read_bytes()[80:], dtype="<f4")
        for idx in [(0, 0, 1), (1, 2, 3), (1, 0, 0)]:
            assert payload[linear_index(dims, *idx)] == data[idx]

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.vxg"
        p.write_bytes(b"NOPE" + b"\0" * 100)
        with pytest.raises(VolumeFormatError):
            load_volume(p)

    def test_truncated_payload(self, tmp_path):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        p = tmp_path / "t.vxg"
        save_volume(g, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-4])  # 7 of 8 values remain
        with pytest.raises(CorruptFileError):
            load_volume(p)

    def test_trailing_bytes(self, tmp_path):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        p = tmp_path / "x.vxg"
        save_volume(g, p)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(CorruptFileError):
            load_volume(p)

    def test_invalid_header_values(self, tmp_path):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        p = tmp_path / "h.vxg"
        save_volume(g, p)
        blob = bytearray(p.read_bytes())
        blob[8:16] = (1).to_bytes(8, "little")  # n1 = 1 < 2
        p.write_bytes(bytes(blob))
        with pytest.raises(InvalidHeaderError):
            load_volume(p)

    def test_unwritable_path(self):
        g = make_grid(np.zeros((2, 2, 2), np.float32))
        with pytest.raises(OSError):
            save_volume(g, "/nonexistent-dir/sub/out.vxg")

    @given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, n, seed):
        import tempfile

        rng = np.random.default_rng(seed)
        data = (rng.normal(size=(n, n, n)) * 10).astype(np.float32)
        g = make_grid(data, q_ranges=[(-2.0, 3.0), (0.0, 1.0), (-5.0, 5.0)])
        with tempfile.TemporaryDirectory() as d:
            p = f"{d}/g.vxg"
            save_volume(g, p)
            g2 = load_volume(p)
        assert g2.data.tobytes() == g.data.tobytes()
        assert g2.axes == g.axes
