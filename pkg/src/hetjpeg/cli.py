"""Command line entry points: decode, profile, bench."""
from __future__ import annotations

import argparse
import csv
import statistics
import sys
from pathlib import Path

from . import kernels
from .errors import HetJpegError, InsufficientSamples
from .executors import make_lanes
from .orchestrator import MODES, amdahl_bound, decode
from .parser import parse_stream
from .perf_model import load_profile, run_profiling, save_profile

EXIT_USAGE = 2
EXIT_INSUFFICIENT = 3


def write_ppm(pixels, path) -> None:
    """Binary PPM (P6, maxval 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{pixels.width} {pixels.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _add_lane_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("lane overrides")
    g.add_argument("--threads", type=int, default=None,
                   help="host lane worker count (default: HETJPEG_THREADS or CPU count)")
    g.add_argument("--host-throttle", type=float, default=1.0,
                   help="stretch factor applied to host compute time")
    g.add_argument("--accel-workers", type=int, default=1)
    g.add_argument("--accel-throttle", type=float, default=1.0,
                   help="stretch factor applied to accelerator compute time")
    g.add_argument("--transfer-latency-ns", type=float, default=None,
                   help="accelerator transfer latency (default: from profile, else 20000)")
    g.add_argument("--transfer-bytes-per-ns", type=float, default=None,
                   help="accelerator transfer bandwidth (default: from profile, else 8)")


def _make_lanes_from_args(args, profile=None):
    latency = args.transfer_latency_ns
    bandwidth = args.transfer_bytes_per_ns
    if profile is not None:
        if latency is None:
            latency = profile.transfer_latency_ns
        if bandwidth is None:
            bandwidth = profile.transfer_bytes_per_ns
    return make_lanes(
        host_workers=args.threads,
        host_throttle=args.host_throttle,
        accel_workers=args.accel_workers,
        accel_throttle=args.accel_throttle,
        transfer_latency_ns=latency if latency is not None else 20_000.0,
        transfer_bytes_per_ns=bandwidth if bandwidth is not None else 8.0,
    )


def _report_line(path, report) -> str:
    plan_x = report.plan.x_cpu_rows if report.plan else -1
    fields = [
        ("image", path),
        ("mode", report.mode),
        ("backend", kernels.backend_name()),
        ("w", report.width),
        ("h", report.height),
        ("d", f"{report.density:.6f}"),
        ("wall_ns", report.wall_ns),
        ("huff_ns", report.huffman_ns),
        ("par_host_ns", report.parallel_host_ns),
        ("accel_busy_ns", report.accel_busy_ns),
        ("accel_compute_ns", report.accel_compute_ns),
        ("write_ns", report.transfer_write_ns),
        ("read_ns", report.transfer_read_ns),
        ("dispatch_ns", report.dispatch_ns),
        ("x_rows", plan_x),
        ("chunks", len(report.chunks)),
        ("repartitioned", int(report.repartitioned)),
    ]
    return " ".join(f"{k}={v}" for k, v in fields)


def cmd_decode(args) -> int:
    profile = load_profile(args.profile) if args.profile else None
    if args.mode in ("sps", "pps", "accel-pipe") and profile is None:
        print(f"error: --mode {args.mode} requires --profile", file=sys.stderr)
        return EXIT_USAGE
    try:
        data = Path(args.input).read_bytes()
        parsed = parse_stream(data)
        with _make_lanes_from_args(args, profile) as lanes:
            pixels, report = decode(
                parsed, args.mode, profile, lanes, idct=args.idct,
                enable_repartition=not args.no_repartition)
        if args.out:
            write_ppm(pixels, args.out)
        print(_report_line(args.input, report))
        return 0
    except (HetJpegError, OSError) as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return 1


def _grid_select(paths: list[Path], grid_w: int, grid_h: int) -> list[Path]:
    """Pick one training image per cell of a (width x height) grid.

    Keeps coverage of the size space while bounding the sample count;
    cells are equal-width bins over the observed dimension ranges.
    """
    infos = []
    for p in paths:
        try:
            parsed = parse_stream(p.read_bytes())
        except HetJpegError:
            continue
        infos.append((p, parsed.width, parsed.height))
    if not infos:
        return []
    ws = sorted({w for _, w, _ in infos})
    hs = sorted({h for _, _, h in infos})
    w_lo, w_hi = ws[0], ws[-1]
    h_lo, h_hi = hs[0], hs[-1]

    def cell(v, lo, hi, n):
        if hi == lo:
            return 0
        return min(n - 1, int((v - lo) / (hi - lo) * n))

    chosen: dict[tuple[int, int], Path] = {}
    for p, w, h in infos:
        key = (cell(w, w_lo, w_hi, grid_w), cell(h, h_lo, h_hi, grid_h))
        chosen.setdefault(key, p)
    return sorted(chosen.values())


def cmd_profile(args) -> int:
    train_dir = Path(args.train_dir)
    paths = sorted(p for p in train_dir.iterdir()
                   if p.suffix.lower() in (".jpg", ".jpeg"))
    try:
        grid_w, grid_h = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        print(f"error: bad --grid {args.grid!r}, expected WxH", file=sys.stderr)
        return EXIT_USAGE
    selected = _grid_select(paths, grid_w, grid_h)
    with _make_lanes_from_args(args) as lanes:
        try:
            profile = run_profiling(
                selected, lanes, repeats=args.repeats,
                max_degree=args.max_degree,
                device_description=args.description)
        except InsufficientSamples as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INSUFFICIENT
    save_profile(profile, args.out)

    print(f"profile written to {args.out} "
          f"({len(selected)} training images, chunk_rows={profile.chunk_rows})")
    for name, model in (("p_cpu", profile.p_cpu), ("p_gpu", profile.p_gpu),
                        ("t_disp", profile.t_disp),
                        ("t_huff_per_pixel", profile.t_huff_per_pixel)):
        print(f"model={name} selected_degree={model.degree}")
        for degree, aic in sorted(model.aic_by_degree.items()):
            marker = " *" if degree == model.degree else ""
            print(f"  degree={degree} aic={aic:.3f}{marker}")
    return 0


CSV_HEADER = ["image", "w", "h", "d", "mode", "wall_ns", "huff_ns", "par_ns",
              "x_rows", "chunks", "amdahl_bound"]


def cmd_bench(args) -> int:
    corpus = sorted(p for p in Path(args.corpus_dir).iterdir()
                    if p.suffix.lower() in (".jpg", ".jpeg"))
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            print(f"error: unknown mode {m!r}", file=sys.stderr)
            return EXIT_USAGE
    profile = load_profile(args.profile) if args.profile else None
    if profile is None and any(m in ("sps", "pps", "accel-pipe") for m in modes):
        print("error: model-driven modes require --profile", file=sys.stderr)
        return EXIT_USAGE
    reference = args.reference

    rows = []
    failed = 0
    wall_by_mode: dict[str, dict[str, int]] = {m: {} for m in modes}
    ref_by_image: dict[str, tuple[int, float]] = {}

    with _make_lanes_from_args(args, profile) as lanes:
        for path in corpus:
            try:
                parsed = parse_stream(path.read_bytes())
                run_modes = list(modes)
                if reference not in run_modes:
                    run_modes.append(reference)
                reports = {}
                for mode in run_modes:
                    _, reports[mode] = decode(parsed, mode, profile, lanes)
                ref = reports[reference]
                bound = amdahl_bound(ref)
                ref_by_image[path.name] = (ref.wall_ns, bound)
                for mode in modes:
                    rep = reports[mode]
                    plan_x = rep.plan.x_cpu_rows if rep.plan else -1
                    rows.append([path.name, rep.width, rep.height,
                                 f"{rep.density:.6f}", mode, rep.wall_ns,
                                 rep.huffman_ns, rep.parallel_host_ns, plan_x,
                                 len(rep.chunks), f"{bound:.6f}"])
                    wall_by_mode[mode][path.name] = rep.wall_ns
            except HetJpegError as exc:
                failed += 1
                print(f"error: {path}: {exc}", file=sys.stderr)

    with open(args.csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)

    for mode in modes:
        speedups = [ref_by_image[img][0] / wall
                    for img, wall in wall_by_mode[mode].items() if wall > 0]
        if not speedups:
            continue
        mean = statistics.fmean(speedups)
        cov = (statistics.stdev(speedups) / mean * 100.0
               if len(speedups) > 1 and mean > 0 else 0.0)
        print(f"mode={mode} images={len(speedups)} "
              f"mean_speedup_vs_{reference}={mean:.3f} cov_pct={cov:.2f}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetjpeg",
        description="Baseline JPEG decoder with model-driven host/accelerator "
                    "work partitioning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode one image to PPM")
    p.add_argument("input")
    p.add_argument("--mode", choices=MODES, default="seq")
    p.add_argument("--profile", help="device profile JSON (model-driven modes)")
    p.add_argument("--out", help="output PPM path")
    p.add_argument("--idct", choices=("fast", "direct"), default="fast")
    p.add_argument("--no-repartition", action="store_true",
                   help="disable the mid-decode re-partition in pps mode")
    _add_lane_flags(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("profile", help="fit a device profile from a training set")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default="8x8",
                   help="training grid resolution WxH (default 8x8)")
    p.add_argument("--max-degree", type=int, default=7)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--description", default="")
    _add_lane_flags(p)
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("bench", help="benchmark modes over a corpus")
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--modes", default="seq,par,accel,accel-pipe,sps,pps")
    p.add_argument("--profile")
    p.add_argument("--csv", required=True)
    p.add_argument("--reference", choices=MODES, default="par",
                   help="mode whose time anchors speedups and the bound")
    _add_lane_flags(p)
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
