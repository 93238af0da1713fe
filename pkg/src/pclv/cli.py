"""Command-line front end: segment, eval, sweep, and convert.

Exit codes: 0 on success, 1 on usage errors (including unknown flags),
2 on runtime failures. Standard output is key=value per line so scripts
can parse it.
"""

from __future__ import annotations

import argparse
import sys
import time

from .cloud import (CameraIntrinsics, INTRINSICS_PRESETS, backproject_depth,
                    load_depth_image, load_label_image, load_ply,
                    load_rgb_image, write_ply, write_segmented_ply)
from .merge import Segmentation, load_labels
from .metrics import evaluate_pair, write_metrics_csv, MetricsRecord
from .pipeline import (ConfigError, RunConfig, StageError, load_config_file,
                       run, run_sweep, validate)
from .weights import MODALITY_PRESETS

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--preset", choices=sorted(MODALITY_PRESETS),
                   help="named modality combination")
    p.add_argument("--ply", help="input PLY path")
    p.add_argument("--depth", help="input 16-bit depth image")
    p.add_argument("--rgb", help="input color image")
    p.add_argument("--intrinsics",
                   help="intrinsics preset name or 5-value file (fx fy cx cy scale)")
    p.add_argument("--graph", choices=["grid8", "knn", "radius", "delaunay"])
    p.add_argument("--k", type=int, help="neighbor count for the knn graph")
    p.add_argument("--radius", type=float, help="radius for the radius graph")
    p.add_argument("--delta", type=float, help="merge threshold scale")
    p.add_argument("--target-segments", type=int, dest="target_segments",
                   help="bisect delta toward this output count")
    p.add_argument("--modalities",
                   help="comma list from color,distance,normal,fpfh")
    p.add_argument("--mode", choices=["multi", "linear"])
    p.add_argument("--unsigned-normals", action="store_true", default=None,
                   dest="unsigned_normals")
    p.add_argument("--normals-k", type=int, dest="normals_k")
    p.add_argument("--fpfh-k", type=int, dest="fpfh_k")
    p.add_argument("--no-post-process", action="store_false", default=None,
                   dest="post_process")
    p.add_argument("--gt", help="ground-truth 16-bit label image")
    p.add_argument("--d", type=float, help="boundary recall distance (pixels)")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--out-labels", dest="out_labels")
    p.add_argument("--out-ply", dest="out_ply")
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-meta", dest="out_meta")


_MODE_NAMES = {"multi": "multi_criteria", "linear": "linear_scalar"}


def _config_from_args(args) -> RunConfig:
    mapping = {}
    if args.config:
        mapping.update(load_config_file(args.config))
    for key in RunConfig.__dataclass_fields__:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    if getattr(args, "mode", None) is not None:
        mapping["mode"] = _MODE_NAMES[args.mode]
    elif "mode" in mapping:
        mapping["mode"] = _MODE_NAMES.get(mapping["mode"], mapping["mode"])
    if getattr(args, "modalities", None) is not None:
        mapping["modalities"] = tuple(
            m.strip() for m in args.modalities.split(",") if m.strip()
        )
    if getattr(args, "preset", None) is not None:
        mapping["modalities"] = MODALITY_PRESETS[args.preset]
    mapping.pop("preset", None)
    return RunConfig.from_mapping(mapping)


def cmd_segment(args) -> int:
    try:
        cfg = _config_from_args(args)
        issues = validate(cfg)
        if issues:
            for issue in issues:
                print(f"invalid: {issue}", file=sys.stderr)
            return RUNTIME_ERROR
        t0 = time.perf_counter()
        result = run(cfg)
        elapsed = time.perf_counter() - t0
    except (ConfigError, StageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    print(f"segments={result.segmentation.n_segments}")
    print(f"delta={result.delta_used!r}")
    print(f"time_s={elapsed:.3f}")
    if result.metrics is not None:
        print(f"BR={result.metrics.boundary_recall!r} "
              f"UE={result.metrics.under_seg_error!r}")
    return 0


def cmd_eval(args) -> int:
    try:
        pred = load_label_image(args.pred)
        gt = load_label_image(args.gt)
        scores = evaluate_pair(gt, pred, d=args.d)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    br = scores["boundary_recall"]
    ue = scores["under_seg_error"]
    n = scores["n_gt_segments"]
    print(f"BR={br!r} UE={ue!r} N={n}")
    if args.out_csv:
        record = MetricsRecord(
            n_segments=int(len(set(pred.labels[pred.mask].tolist()))),
            boundary_recall=br, under_seg_error=ue, delta=float("nan"),
            graph="", modalities="", mode="",
        )
        write_metrics_csv([record], args.out_csv)
    return 0


def cmd_sweep(args) -> int:
    try:
        targets = [int(t) for t in args.targets.split(",") if t.strip()]
    except ValueError:
        print("error: --targets must be a comma list of integers", file=sys.stderr)
        return USAGE_ERROR
    if not targets:
        print("error: --targets must not be empty", file=sys.stderr)
        return USAGE_ERROR
    try:
        cfg = _config_from_args(args)
        records = run_sweep(cfg, targets)
    except (ConfigError, StageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    for r in records:
        print(f"target={r.target} segments={r.n_segments} BR={r.boundary_recall!r} "
              f"UE={r.under_seg_error!r} delta={r.delta!r} flagged={int(r.flagged)}")
    return 0


def cmd_convert(args) -> int:
    try:
        if args.labels is not None:
            if args.ply is None:
                print("error: labels conversion needs --ply", file=sys.stderr)
                return USAGE_ERROR
            cloud = load_ply(args.ply)
            labels = load_labels(args.labels)
            if labels.shape[0] != cloud.n:
                raise ValueError(
                    f"labels file covers {labels.shape[0]} points, "
                    f"cloud has {cloud.n}"
                )
            sizes = [int((labels == lab).sum()) for lab in range(labels.max() + 1)]
            seg = Segmentation(labels=labels, segment_sizes=sizes)
            write_segmented_ply(cloud, seg, args.out_ply)
            print(f"points={cloud.n}")
            print(f"segments={seg.n_segments}")
            return 0
        if args.depth is None or args.rgb is None:
            print("error: convert needs --depth and --rgb (or --labels)",
                  file=sys.stderr)
            return USAGE_ERROR
        depth = load_depth_image(args.depth)
        rgb = load_rgb_image(args.rgb)
        spec = args.intrinsics or "nyu"
        intr = (INTRINSICS_PRESETS[spec] if spec in INTRINSICS_PRESETS
                else CameraIntrinsics.from_file(spec))
        cloud = backproject_depth(depth, rgb, intr)
        write_ply(cloud, args.out_ply)
        print(f"points={cloud.n}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="pclv",
                     description="Point-cloud over-segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_seg = sub.add_parser("segment", help="segment a cloud or RGB-D frame")
    _add_run_flags(p_seg)
    p_seg.set_defaults(func=cmd_segment)

    p_eval = sub.add_parser("eval", help="score predicted vs gt label images")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--d", type=float, default=2.0)
    p_eval.add_argument("--out-csv", dest="out_csv")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="metric curves over target counts")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--targets", required=True,
                         help="comma list of target segment counts")
    p_sweep.set_defaults(func=cmd_sweep)

    p_conv = sub.add_parser("convert", help="RGB-D to PLY, or labels to colored PLY")
    p_conv.add_argument("--depth")
    p_conv.add_argument("--rgb")
    p_conv.add_argument("--intrinsics")
    p_conv.add_argument("--ply")
    p_conv.add_argument("--labels")
    p_conv.add_argument("--out-ply", dest="out_ply", required=True)
    p_conv.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
