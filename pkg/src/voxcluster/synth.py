"""Deterministic synthetic volumes with per-primitive ground truth.

A SynthSpec plants analytic primitives (Gaussian peaks, double-cone
shells, cylindrical bars, broomstick streaks) on top of an exponential
noise floor.  Reproducibility contract: voxel i of the noise field is
word i of the Philox4x64 stream keyed by the seed, mapped to a uniform
u = (word >> 11) * 2**-53 and then to -noise_floor * log1p(-u), so the
same spec yields the same volume on every run regardless of scheduling.

Primitive contributions are evaluated on per-axis coordinate arrays in
the midpoint-centered form c + (i - m) * delta (c the axis midpoint, m
the center index).  On symmetric axes this makes coordinates exact
negations of their mirrors, so a spec with mirrored primitives and the
noise floor at zero produces a bitwise mirror-symmetric volume.
Contributions accumulate in float64 in primitive list order; the stored
volume is the float32 cast of that sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfRangeError, VolumeFormatError
from .volume import AxisSpec, VoxelGrid


def _centered_coords(axis: AxisSpec) -> np.ndarray:
    c = (axis.q_min + axis.q_max) / 2.0
    m = (axis.n - 1) / 2.0
    return c + (np.arange(axis.n, dtype=np.float64) - m) * axis.delta


def _box_indices(coords: np.ndarray, lo: float, hi: float) -> tuple[int, int]:
    """Index range covering [lo, hi], padded one voxel outward."""
    inside = np.flatnonzero((coords >= lo) & (coords <= hi))
    if inside.size == 0:
        mid = int(np.argmin(np.abs(coords - (lo + hi) / 2)))
        return mid, mid + 1
    return max(int(inside[0]) - 1, 0), min(int(inside[-1]) + 2, coords.size)


@dataclass(frozen=True)
class GaussianPeak:
    """Separable Gaussian blob: amplitude * prod_k exp(-(q_k-c_k)^2 / 2 sigma_k^2)."""

    center: tuple[float, float, float]
    sigma: tuple[float, float, float]
    amplitude: float

    def anchor(self):
        return self.center

    def bbox_q(self):
        # beyond ~39 sigma the per-axis factor underflows to exactly 0.0,
        # so clipping there changes nothing
        return tuple(
            (c - 40.0 * s, c + 40.0 * s) for c, s in zip(self.center, self.sigma)
        )

    def contribution(self, q1, q2, q3):
        f = []
        for q, c, s in zip((q1, q2, q3), self.center, self.sigma):
            d = q - c
            f.append(np.exp(-(d * d) / (2.0 * s * s)))
        return self.amplitude * (f[0] * f[1] * f[2])


@dataclass(frozen=True)
class ConeShell:
    """Hard double-cone shell around one grid axis.

    With axial distance h from the apex and perpendicular radius r, the
    shell is |r - h*tan(half_angle)| <= thickness/2 for |h| <= extent;
    contribution is the amplitude inside and 0 outside.  Both nappes are
    included, joined through the apex disk.
    """

    apex: tuple[float, float, float]
    axis: int  # 1, 2 or 3
    half_angle: float
    thickness: float
    extent: float
    amplitude: float

    def anchor(self):
        return self.apex

    def bbox_q(self):
        reach = self.extent * math.tan(self.half_angle) + self.thickness / 2
        out = []
        for k in range(3):
            half = self.extent if k == self.axis - 1 else reach
            out.append((self.apex[k] - half, self.apex[k] + half))
        return tuple(out)

    def contribution(self, q1, q2, q3):
        qs = (q1, q2, q3)
        a = self.axis - 1
        h = np.abs(qs[a] - self.apex[a])
        perp = [k for k in range(3) if k != a]
        dp = qs[perp[0]] - self.apex[perp[0]]
        dr = qs[perp[1]] - self.apex[perp[1]]
        rad = np.sqrt(dp * dp + dr * dr)
        inside = (h <= self.extent) & (
            np.abs(rad - h * math.tan(self.half_angle)) <= self.thickness / 2
        )
        return np.where(inside, float(self.amplitude), 0.0)


@dataclass(frozen=True)
class Bar:
    """Hard cylinder along one grid axis: length along it, radius across."""

    center: tuple[float, float, float]
    axis: int
    length: float
    radius: float
    amplitude: float

    def anchor(self):
        return self.center

    def bbox_q(self):
        out = []
        for k in range(3):
            half = self.length / 2 if k == self.axis - 1 else self.radius
            out.append((self.center[k] - half, self.center[k] + half))
        return tuple(out)

    def contribution(self, q1, q2, q3):
        qs = (q1, q2, q3)
        a = self.axis - 1
        h = np.abs(qs[a] - self.center[a])
        perp = [k for k in range(3) if k != a]
        dp = qs[perp[0]] - self.center[perp[0]]
        dr = qs[perp[1]] - self.center[perp[1]]
        inside = (h <= self.length / 2) & (dp * dp + dr * dr <= self.radius * self.radius)
        return np.where(inside, float(self.amplitude), 0.0)


@dataclass(frozen=True)
class Broomstick:
    """Hard streak widening along its direction.

    At axial distance t from the base (0 <= t <= length) the radius is
    spread_growth * (t + length/10); the base offset keeps the thin end
    of the handle at least a voxel or two wide for sane growth rates.
    """

    base: tuple[float, float, float]
    direction: tuple[float, float, float]
    length: float
    spread_growth: float
    amplitude: float

    def anchor(self):
        return self.base

    def _unit(self):
        norm = math.sqrt(sum(c * c for c in self.direction))
        if norm == 0:
            raise ValueError("broomstick direction must be nonzero")
        return tuple(c / norm for c in self.direction)

    def bbox_q(self):
        u = self._unit()
        rmax = self.spread_growth * (self.length + self.length / 10)
        out = []
        for k in range(3):
            ends = (self.base[k], self.base[k] + u[k] * self.length)
            out.append((min(ends) - rmax, max(ends) + rmax))
        return tuple(out)

    def contribution(self, q1, q2, q3):
        u = self._unit()
        d = [q - b for q, b in zip((q1, q2, q3), self.base)]
        t = d[0] * u[0] + d[1] * u[1] + d[2] * u[2]
        r2 = sum((dk - t * uk) ** 2 for dk, uk in zip(d, u))
        limit = self.spread_growth * (t + self.length / 10)
        inside = (t >= 0) & (t <= self.length) & (r2 <= limit * limit)
        return np.where(inside, float(self.amplitude), 0.0)


Primitive = GaussianPeak | ConeShell | Bar | Broomstick

_KIND = {
    GaussianPeak: "gaussian_peak",
    ConeShell: "cone_shell",
    Bar: "bar",
    Broomstick: "broomstick",
}
_BY_KIND = {v: k for k, v in _KIND.items()}


@dataclass(frozen=True)
class SynthSpec:
    """Axes, noise floor, planted primitives and the PRNG seed."""

    axes: tuple[AxisSpec, AxisSpec, AxisSpec]
    noise_floor: float
    primitives: tuple[Primitive, ...]
    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.noise_floor < 0:
            raise ValueError(f"noise_floor must be >= 0, got {self.noise_floor}")
        for p in self.primitives:
            if getattr(p, "amplitude") < 0:
                raise ValueError("primitive amplitudes must be >= 0")
            for k, v in enumerate(p.anchor()):
                ax = self.axes[k]
                if not ax.q_min <= v <= ax.q_max:
                    raise OutOfRangeError(
                        f"{_KIND[type(p)]} anchor {p.anchor()} outside axis {k + 1} "
                        f"range [{ax.q_min}, {ax.q_max}]"
                    )

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(ax.n for ax in self.axes)


def _noise_field(dims, noise_floor: float, seed: int) -> np.ndarray:
    n = dims[0] * dims[1] * dims[2]
    words = np.random.Philox(key=seed).random_raw(n)
    u = (words >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return (-noise_floor * np.log1p(-u)).reshape(dims)


def generate(spec: SynthSpec) -> tuple[VoxelGrid, list[np.ndarray]]:
    """Build the volume and one boolean ground-truth mask per primitive.

    A mask marks the voxels where that primitive's noiseless contribution
    exceeds the noise floor.  Masks are full-size arrays, so very large
    volumes with many primitives cost memory accordingly.
    """
    dims = spec.dims
    coords = [_centered_coords(ax) for ax in spec.axes]
    acc = _noise_field(dims, spec.noise_floor, spec.seed)
    masks: list[np.ndarray] = []
    for p in spec.primitives:
        ranges = [
            _box_indices(coords[k], lo, hi) for k, (lo, hi) in enumerate(p.bbox_q())
        ]
        (a0, a1), (b0, b1), (c0, c1) = ranges
        q1 = coords[0][a0:a1].reshape(-1, 1, 1)
        q2 = coords[1][b0:b1].reshape(1, -1, 1)
        q3 = coords[2][c0:c1].reshape(1, 1, -1)
        contrib = p.contribution(q1, q2, q3)
        acc[a0:a1, b0:b1, c0:c1] += contrib
        m = np.zeros(dims, dtype=bool)
        m[a0:a1, b0:b1, c0:c1] = contrib > spec.noise_floor
        masks.append(m)
    grid = VoxelGrid(axes=spec.axes, data=acc.astype(np.float32))
    return grid, masks


def combine_masks(masks: list[np.ndarray]) -> np.ndarray:
    """Fold per-primitive masks into one uint32 id volume; first id wins overlaps."""
    if not masks:
        raise ValueError("no masks to combine")
    out = np.zeros(masks[0].shape, dtype=np.uint32)
    for pid, m in enumerate(masks, start=1):
        out[(out == 0) & m] = pid
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_vec(vec) -> str:
    return ",".join(_fmt(v) for v in vec)


def write_synth_spec(spec: SynthSpec, path: str | Path) -> None:
    lines = [f"seed = {spec.seed}", f"noise_floor = {_fmt(spec.noise_floor)}"]
    for k, ax in enumerate(spec.axes, start=1):
        lines.append(f"axis{k} = {_fmt(ax.q_min)} {_fmt(ax.q_max)} {ax.n}")
    for p in spec.primitives:
        kind = _KIND[type(p)]
        if isinstance(p, GaussianPeak):
            args = (
                f"center={_fmt_vec(p.center)} sigma={_fmt_vec(p.sigma)} "
                f"amplitude={_fmt(p.amplitude)}"
            )
        elif isinstance(p, ConeShell):
            args = (
                f"apex={_fmt_vec(p.apex)} axis={p.axis} half_angle={_fmt(p.half_angle)} "
                f"thickness={_fmt(p.thickness)} extent={_fmt(p.extent)} "
                f"amplitude={_fmt(p.amplitude)}"
            )
        elif isinstance(p, Bar):
            args = (
                f"center={_fmt_vec(p.center)} axis={p.axis} length={_fmt(p.length)} "
                f"radius={_fmt(p.radius)} amplitude={_fmt(p.amplitude)}"
            )
        else:
            args = (
                f"base={_fmt_vec(p.base)} direction={_fmt_vec(p.direction)} "
                f"length={_fmt(p.length)} spread_growth={_fmt(p.spread_growth)} "
                f"amplitude={_fmt(p.amplitude)}"
            )
        lines.append(f"primitive = {kind} {args}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_kv(tokens: list[str], line: str) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise VolumeFormatError(f"bad primitive token {tok!r} in line: {line}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _vec3(s: str) -> tuple[float, float, float]:
    parts = s.split(",")
    if len(parts) != 3:
        raise VolumeFormatError(f"expected 3 comma-separated values, got {s!r}")
    return tuple(float(x) for x in parts)


def load_synth_spec(path: str | Path) -> SynthSpec:
    """Parse the plain-text key-value spec format written by write_synth_spec."""
    seed = None
    noise_floor = None
    axes: dict[int, AxisSpec] = {}
    prims: list[Primitive] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise VolumeFormatError(f"expected 'key = value', got: {raw}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "seed":
            seed = int(value)
        elif key == "noise_floor":
            noise_floor = float(value)
        elif key in ("axis1", "axis2", "axis3"):
            parts = value.split()
            if len(parts) != 3:
                raise VolumeFormatError(f"axis line needs 'q_min q_max n': {raw}")
            axes[int(key[-1])] = AxisSpec(float(parts[0]), float(parts[1]), int(parts[2]))
        elif key == "primitive":
            tokens = value.split()
            kind, kv = tokens[0], _parse_kv(tokens[1:], raw)
            if kind not in _BY_KIND:
                raise VolumeFormatError(f"unknown primitive kind {kind!r}")
            try:
                if kind == "gaussian_peak":
                    prims.append(
                        GaussianPeak(
                            center=_vec3(kv["center"]),
                            sigma=_vec3(kv["sigma"]),
                            amplitude=float(kv["amplitude"]),
                        )
                    )
                elif kind == "cone_shell":
                    prims.append(
                        ConeShell(
                            apex=_vec3(kv["apex"]),
                            axis=int(kv["axis"]),
                            half_angle=float(kv["half_angle"]),
                            thickness=float(kv["thickness"]),
                            extent=float(kv["extent"]),
                            amplitude=float(kv["amplitude"]),
                        )
                    )
                elif kind == "bar":
                    prims.append(
                        Bar(
                            center=_vec3(kv["center"]),
                            axis=int(kv["axis"]),
                            length=float(kv["length"]),
                            radius=float(kv["radius"]),
                            amplitude=float(kv["amplitude"]),
                        )
                    )
                else:
                    prims.append(
                        Broomstick(
                            base=_vec3(kv["base"]),
                            direction=_vec3(kv["direction"]),
                            length=float(kv["length"]),
                            spread_growth=float(kv["spread_growth"]),
                            amplitude=float(kv["amplitude"]),
                        )
                    )
            except KeyError as e:
                raise VolumeFormatError(f"primitive missing field {e} in line: {raw}")
        else:
            raise VolumeFormatError(f"unknown key {key!r} in synth spec")
    if seed is None or noise_floor is None or sorted(axes) != [1, 2, 3]:
        raise VolumeFormatError(f"{path}: spec needs seed, noise_floor and axis1..3")
    return SynthSpec(
        axes=(axes[1], axes[2], axes[3]),
        noise_floor=noise_floor,
        primitives=tuple(prims),
        seed=seed,
    )
