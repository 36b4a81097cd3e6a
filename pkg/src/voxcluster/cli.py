"""Command-line driver tying the pipeline together.

Subcommands: synth, stats, cluster, rank, groups, select, characterize.
Every delimited export a figure needs is produced by some command here,
and cluster runs freeze their resolved parameters into a flat key-value
manifest so any labeling can be reproduced byte for byte.

Exit codes: 0 success, 2 usage or bad parameter, 3 file-format error,
4 I/O error, 5 data error (empty selection, out-of-range coordinate...).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .errors import (
    CorruptFileError,
    InvalidHeaderError,
    VolumeFormatError,
    VoxclusterError,
)
from .features import (
    IntensityFilter,
    Selection,
    characterize,
    detect_index_groups,
    export_cluster_table,
    export_points,
    export_size_rank,
    rank_clusters,
    select,
    symmetry_groups,
)
from .stats import collect_stats, export_histogram, intensity_stats
from .synth import combine_masks, generate, load_synth_spec
from .volume import load_volume, save_volume
from .wdbscan import WdbscanParams, cluster, load_labels, save_labels

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_IO = 4
EXIT_DATA = 5


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Everything needed to reproduce one cluster run."""

    input: str
    labels_out: str
    eps: float
    min_pts: float
    threshold: float
    threshold_frac: float | None = None
    vmedian: float | None = None
    threads: int = 1
    tool_version: str = __version__
    wall_time_s: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"input = {self.input}",
            f"labels_out = {self.labels_out}",
            f"eps = {self.eps!r}",
            f"min_pts = {self.min_pts!r}",
        ]
        if self.threshold_frac is not None:
            lines.append(f"threshold_frac = {self.threshold_frac!r}")
        if self.vmedian is not None:
            lines.append(f"vmedian = {self.vmedian!r}")
        lines += [
            f"threshold = {self.threshold!r}",
            f"threads = {self.threads}",
            f"tool_version = {self.tool_version}",
            f"wall_time_s = {self.wall_time_s!r}",
        ]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "RunManifest":
        kv = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise VolumeFormatError(f"{path}: bad manifest line: {raw}")
            k, v = (s.strip() for s in line.split("=", 1))
            kv[k] = v
        try:
            return cls(
                input=kv["input"],
                labels_out=kv["labels_out"],
                eps=float(kv["eps"]),
                min_pts=float(kv["min_pts"]),
                threshold=float(kv["threshold"]),
                threshold_frac=float(kv["threshold_frac"]) if "threshold_frac" in kv else None,
                vmedian=float(kv["vmedian"]) if "vmedian" in kv else None,
                threads=int(kv.get("threads", 1)),
                tool_version=kv.get("tool_version", "unknown"),
                wall_time_s=float(kv.get("wall_time_s", 0.0)),
            )
        except KeyError as e:
            raise VolumeFormatError(f"{path}: manifest missing key {e}")


def _parse_span(text: str, kind=float) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError(f"expected LO:HI, got {text!r}")
    try:
        return (kind(parts[0]), kind(parts[1]))
    except ValueError:
        raise UsageError(f"could not parse bounds from {text!r}")


def _selection_from_args(args) -> tuple[Selection, float | None]:
    rank_range = _parse_span(args.ranks, int) if args.ranks else None
    q_region = None
    if args.q1 or args.q2 or args.q3:
        q_region = tuple(
            _parse_span(s) if s else None for s in (args.q1, args.q2, args.q3)
        )
    filt = None
    if args.low_pass is not None and args.high_pass is not None:
        raise UsageError("--low-pass and --high-pass are mutually exclusive")
    if args.low_pass is not None:
        filt = IntensityFilter(kind="low", cutoff=args.low_pass, scaled=args.scaled)
    elif args.high_pass is not None:
        filt = IntensityFilter(kind="high", cutoff=args.high_pass, scaled=args.scaled)
    elif args.scaled:
        raise UsageError("--scaled needs --low-pass or --high-pass")
    threshold = args.threshold
    if threshold is None and getattr(args, "manifest", None):
        threshold = RunManifest.read(args.manifest).threshold
    if rank_range is None and q_region is None and filt is None:
        raise UsageError("give at least one of --ranks, --q1/--q2/--q3, --low-pass/--high-pass")
    return Selection(rank_range=rank_range, q_region=q_region, intensity_filter=filt), threshold


def _print_stats(st, prefix="") -> None:
    print(f"{prefix}VMEAN = {st.vmean!r}")
    print(f"{prefix}VMEDIAN = {st.vmedian!r}")
    print(f"{prefix}HMAX = {st.hmax!r}")


def cmd_stats(args) -> int:
    grid = load_volume(args.volume)
    st = intensity_stats(grid, args.bins, None)
    print(f"voxels = {grid.size} (nan = {grid.nan_count})")
    _print_stats(st)
    if args.out:
        export_histogram(st.histogram, args.out, stats=st)
        print(f"histogram -> {args.out}")
    if args.plot:
        from .report import render_histogram

        render_histogram(st, args.plot)
        print(f"figure -> {args.plot}")
    return 0


def cmd_cluster(args) -> int:
    if args.from_manifest:
        if args.threshold is not None or args.threshold_frac is not None:
            raise UsageError("--from-manifest already fixes the threshold")
        ref = RunManifest.read(args.from_manifest)
        input_path = ref.input
        eps, min_pts, threshold = ref.eps, ref.min_pts, ref.threshold
        threshold_frac = ref.threshold_frac
        vmedian = ref.vmedian
        labels_out = args.labels or ref.labels_out
    else:
        if args.threshold is not None and args.threshold_frac is not None:
            raise UsageError("give exactly one of --threshold / --threshold-frac")
        input_path = args.volume
        if input_path is None:
            raise UsageError("volume path required (or --from-manifest)")
        eps, min_pts = args.eps, args.minpts
        threshold = args.threshold
        threshold_frac = args.threshold_frac if threshold is None else None
        if threshold_frac is None and threshold is None:
            threshold_frac = 0.3
        vmedian = None
        labels_out = args.labels
    if not labels_out:
        raise UsageError("--labels output path required")

    grid = load_volume(input_path)
    if threshold is None:
        # resolved once from this volume's median, then frozen in the manifest
        vmedian = collect_stats(grid.data, 1).vmedian
        threshold = threshold_frac * vmedian
        if not threshold > 0:
            raise VoxclusterError(
                f"resolved threshold {threshold!r} is not positive (vmedian = {vmedian!r})"
            )
    try:
        params = WdbscanParams(eps=eps, min_pts=min_pts, threshold=threshold)
    except ValueError as e:
        raise UsageError(str(e))

    t0 = time.perf_counter()
    provisional = cluster(grid, params)
    table, ranked = rank_clusters(provisional, grid)
    wall = time.perf_counter() - t0
    save_labels(ranked, labels_out)

    manifest = RunManifest(
        input=str(Path(input_path).resolve()),
        labels_out=str(Path(labels_out).resolve()),
        eps=eps,
        min_pts=min_pts,
        threshold=threshold,
        threshold_frac=threshold_frac,
        vmedian=vmedian,
        threads=args.threads,
        wall_time_s=wall,
    )
    manifest_path = args.manifest or (str(labels_out) + ".manifest")
    manifest.write(manifest_path)
    print(f"clusters = {len(table)}, noise = {table.noise_count}")
    print(f"threshold = {threshold!r}")
    print(f"labels -> {labels_out}")
    print(f"manifest -> {manifest_path}")
    return 0


def _load_pair(args):
    grid = load_volume(args.volume)
    labels = load_labels(args.labels)
    return grid, labels


def cmd_rank(args) -> int:
    grid, labels = _load_pair(args)
    table, ranked = rank_clusters(labels, grid)
    print(f"clusters = {len(table)}, noise = {table.noise_count}")
    if args.table:
        export_cluster_table(table, args.table)
        print(f"table -> {args.table}")
    if args.size_rank:
        export_size_rank(table, args.size_rank)
        print(f"size-rank -> {args.size_rank}")
    if args.relabel:
        save_labels(ranked, args.relabel)
        print(f"ranked labels -> {args.relabel}")
    if args.plot:
        from .report import render_size_rank

        render_size_rank(table, args.plot)
        print(f"figure -> {args.plot}")
    return 0


def cmd_groups(args) -> int:
    grid, labels = _load_pair(args)
    table, _ = rank_clusters(labels, grid)
    out_lines = [f"clusters = {len(table)}, noise = {table.noise_count}"]
    if len(table):
        if args.breaks:
            breaks = [int(s) for s in args.breaks.split(",") if s]
            origin = "manual"
        else:
            breaks = detect_index_groups(table, args.min_gap)
            origin = f"log-gap >= {args.min_gap} decades"
        table.group_breaks = breaks
        out_lines.append(f"group breaks ({origin}): {','.join(map(str, breaks)) or '-'}")
        total = table.total_voxels
        edges = [0, *breaks, len(table)]
        for g in range(len(edges) - 1):
            lo, hi = edges[g] + 1, edges[g + 1]
            if lo > hi:
                continue
            pop = int(sum(r.size for r in table.records[lo - 1 : hi]))
            out_lines.append(
                f"group {chr(ord('a') + g)}: ranks [{lo}, {hi}], "
                f"population {pop} ({100.0 * pop / total:.1f}%)"
            )
        out_lines.append("multiplets (rank_lo-rank_hi x multiplicity @ size):")
        for m in symmetry_groups(table, args.rel_tol):
            out_lines.append(f"  {m.rank_lo}-{m.rank_hi} x{m.multiplicity} @ {m.size}")
    report = "\n".join(out_lines)
    print(report)
    if args.out:
        Path(args.out).write_text(report + "\n")
    if args.plot:
        from .report import render_size_rank

        render_size_rank(table, args.plot, breaks=table.group_breaks)
        print(f"figure -> {args.plot}")
    return 0


def cmd_select(args) -> int:
    grid, labels = _load_pair(args)
    sel, threshold = _selection_from_args(args)
    points = select(grid, labels, sel, threshold=threshold)
    print(f"selected {len(points)} voxels")
    if args.out:
        export_points(points, args.out)
        print(f"points -> {args.out}")
    return 0


def cmd_characterize(args) -> int:
    grid, labels = _load_pair(args)
    sel, threshold = _selection_from_args(args)
    points = select(grid, labels, sel, threshold=threshold)
    st = characterize(points, args.bins)
    print(f"selected {len(points)} voxels")
    _print_stats(st)
    if args.out:
        export_histogram(st.histogram, args.out, stats=st)
        print(f"histogram -> {args.out}")
    if args.plot:
        from .report import render_histogram

        render_histogram(st, args.plot, title="Selection intensity histogram")
        print(f"figure -> {args.plot}")
    return 0


def cmd_synth(args) -> int:
    spec = load_synth_spec(args.spec)
    grid, masks = generate(spec)
    save_volume(grid, args.out)
    print(f"volume {grid.dims} -> {args.out}")
    if masks:
        truth_path = args.truth or (str(Path(args.out).with_suffix("")) + ".truth.vxl")
        from .wdbscan import LabelVolume

        truth = LabelVolume(dims=grid.dims, labels=combine_masks(masks))
        save_labels(truth, truth_path)
        print(f"truth ids ({len(masks)} primitives) -> {truth_path}")
    return 0


def _add_selection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ranks", help="rank range LO:HI (inclusive)")
    p.add_argument("--q1", help="physical range LO:HI on axis 1")
    p.add_argument("--q2", help="physical range LO:HI on axis 2")
    p.add_argument("--q3", help="physical range LO:HI on axis 3")
    p.add_argument("--low-pass", type=float, default=None, metavar="C",
                   help="keep voxels with intensity <= C")
    p.add_argument("--high-pass", type=float, default=None, metavar="C",
                   help="keep voxels with intensity > C")
    p.add_argument("--scaled", action="store_true",
                   help="filter cutoff is in intensity/threshold units")
    p.add_argument("--threshold", type=float, default=None,
                   help="clustering threshold for scaled filters")
    p.add_argument("--manifest", help="manifest to take the threshold from")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="voxcluster",
        description="Feature extraction from gridded 3D intensity volumes.",
        epilog="exit codes: 0 ok, 2 usage, 3 format, 4 I/O, 5 data",
    )
    ap.add_argument("--version", action="version", version=f"voxcluster {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="intensity statistics and histogram export")
    p.add_argument("volume")
    p.add_argument("--bins", type=int, default=1_000_000)
    p.add_argument("--out", help="histogram TSV path")
    p.add_argument("--plot", help="histogram figure path (png/pdf)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cluster", help="weighted DBSCAN, rank labels, write VXL1")
    p.add_argument("volume", nargs="?")
    p.add_argument("--eps", type=float, default=1.7)
    p.add_argument("--minpts", type=float, default=80.0)
    p.add_argument("--threshold-frac", type=float, default=None,
                   help="threshold as a fraction of VMEDIAN (default 0.3)")
    p.add_argument("--threshold", type=float, default=None,
                   help="absolute intensity threshold")
    p.add_argument("--labels", help="output VXL1 path")
    p.add_argument("--manifest", help="output manifest path (default <labels>.manifest)")
    p.add_argument("--from-manifest", help="rerun a previous run exactly")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap; computation is vectorized, results never vary")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("rank", help="rank clusters by size; table + size-rank exports")
    p.add_argument("labels")
    p.add_argument("volume")
    p.add_argument("--table", help="cluster table CSV path")
    p.add_argument("--size-rank", help="size-vs-rank TSV path")
    p.add_argument("--relabel", help="write rank-labeled VXL1 here")
    p.add_argument("--plot", help="size-vs-rank figure path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("groups", help="symmetry multiplets and index-group breaks")
    p.add_argument("labels")
    p.add_argument("volume")
    p.add_argument("--rel-tol", type=float, default=0.0,
                   help="relative size tolerance within a multiplet")
    p.add_argument("--min-gap", type=float, default=1.0,
                   help="decades of size drop that open a new group")
    p.add_argument("--breaks", help="comma-separated rank breaks, overrides detection")
    p.add_argument("--out", help="write the report here as well")
    p.add_argument("--plot", help="size-vs-rank figure with break markers")
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("select", help="extract voxels by rank / region / intensity")
    p.add_argument("volume")
    p.add_argument("labels")
    _add_selection_flags(p)
    p.add_argument("--out", help="point-set CSV path")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("characterize", help="intensity statistics of a selection")
    p.add_argument("volume")
    p.add_argument("labels")
    _add_selection_flags(p)
    p.add_argument("--bins", type=int, default=1_000_000)
    p.add_argument("--out", help="histogram TSV path")
    p.add_argument("--plot", help="histogram figure path")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("synth", help="generate a synthetic volume from a spec file")
    p.add_argument("spec")
    p.add_argument("--out", required=True, help="output VXG1 path")
    p.add_argument("--truth", help="output VXL1 of primitive ids "
                                   "(default <out>.truth.vxl)")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (VolumeFormatError, CorruptFileError, InvalidHeaderError) as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (VoxclusterError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
