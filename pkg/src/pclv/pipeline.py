"""End-to-end orchestration: ingest, graph, descriptors, weights, merge.

A run is fully described by a RunConfig; the metadata sidecar written next
to the outputs echoes the resolved config so any run can be replayed
bit-identically. Descriptors are computed lazily: a color-only run never
estimates normals or FPFH (the stage timing map doubles as the counter).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND_NAME
from .cloud import (CameraIntrinsics, INTRINSICS_PRESETS, LabelImage, PointCloud,
                    backproject_depth, load_depth_image, load_label_image,
                    load_ply, load_rgb_image, write_segmented_ply)
from .descriptors import (DEFAULT_FPFH_K, DEFAULT_NORMAL_K, compute_fpfh,
                          estimate_normals, load_descriptor_cache,
                          save_descriptor_cache)
from .graph import build_delaunay, build_grid8, build_knn, build_radius
from .merge import (MergeConfig, Segmentation, find_delta_for_target,
                    merge_small_segments, save_labels, segment)
from .metrics import (DEFAULT_BOUNDARY_DISTANCE, MetricsRecord, evaluate_pair,
                      project_labels, sweep, write_metrics_csv)
from .weights import MODALITY_PRESETS, ModalitySet, assign_weights

GRAPH_METHODS = ("grid8", "knn", "radius", "delaunay")


class ConfigError(ValueError):
    """Invalid run configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    """Everything one segmentation run needs, flags-over-file-over-defaults."""

    ply: str = None
    depth: str = None
    rgb: str = None
    intrinsics: str = "nyu"  # preset name or path to a 5-value text file
    graph: str = "grid8"
    k: int = 8
    radius: float = 0.1
    modalities: tuple = MODALITY_PRESETS["pclv"]
    mode: str = "multi_criteria"
    delta: float = None
    target_segments: int = None
    coefficients: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    unsigned_normals: bool = None  # None: signed iff the cloud has a viewpoint
    normals_k: int = DEFAULT_NORMAL_K
    fpfh_k: int = DEFAULT_FPFH_K
    post_process: bool = True
    post_desired: int = None  # small-segment reference count; None derives it
    gt: str = None
    d: float = DEFAULT_BOUNDARY_DISTANCE
    cache_dir: str = None
    out_labels: str = None
    out_ply: str = None
    out_csv: str = None
    out_meta: str = None

    def resolved_modalities(self) -> ModalitySet:
        return ModalitySet(tuple(self.modalities))

    def echo(self) -> dict:
        """JSON-ready view of every field, for the metadata sidecar."""
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        kwargs = {}
        for name, f in cls.__dataclass_fields__.items():
            if name not in mapping or mapping[name] is None:
                continue
            value = mapping[name]
            if name in ("modalities", "coefficients") and isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
        unknown = set(mapping) - set(cls.__dataclass_fields__) - {"preset"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "preset" in mapping and mapping["preset"] is not None:
            preset = mapping["preset"]
            if preset not in MODALITY_PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
            kwargs.setdefault("modalities", MODALITY_PRESETS[preset])
        return cls(**kwargs)


@dataclass
class RunResult:
    segmentation: Segmentation
    cloud: PointCloud
    metrics: MetricsRecord = None
    delta_used: float = None
    timings: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


def validate(cfg: RunConfig) -> list:
    """Return diagnostics naming every offending field; empty when runnable."""
    issues = []
    has_ply = cfg.ply is not None
    has_rgbd = cfg.depth is not None or cfg.rgb is not None
    if has_ply and has_rgbd:
        issues.append("ply: give either a PLY path or a depth+rgb pair, not both")
    if not has_ply and not has_rgbd:
        issues.append("ply: an input (ply or depth+rgb) is required")
    if has_rgbd and (cfg.depth is None or cfg.rgb is None):
        issues.append("depth: depth and rgb must be given together")
    for field_name in ("ply", "depth", "rgb"):
        path = getattr(cfg, field_name)
        if path is not None and not Path(path).exists():
            issues.append(f"{field_name}: file {path!r} does not exist")
    if cfg.graph not in GRAPH_METHODS:
        issues.append(f"graph: unknown method {cfg.graph!r}")
    if cfg.graph == "grid8" and has_ply:
        issues.append("graph: grid8 needs an image grid; PLY input has none")
    if cfg.graph == "knn" and cfg.k < 1:
        issues.append("k: must be at least 1")
    if cfg.graph == "radius" and cfg.radius <= 0:
        issues.append("radius: must be positive")
    try:
        modalities = cfg.resolved_modalities()
    except ValueError as exc:
        issues.append(f"modalities: {exc}")
        modalities = None
    if cfg.mode not in ("multi_criteria", "linear_scalar"):
        issues.append(f"mode: unknown mode {cfg.mode!r}")
    if modalities is not None and cfg.mode == "linear_scalar":
        missing = [m for m in ("color", "distance", "normal") if m not in modalities]
        if missing:
            issues.append(f"mode: linear_scalar requires modalities {missing}")
    if (cfg.delta is None) == (cfg.target_segments is None):
        issues.append("delta: exactly one of delta / target_segments is required")
    if cfg.delta is not None and cfg.delta < 0:
        issues.append("delta: must be nonnegative")
    if cfg.target_segments is not None and cfg.target_segments < 1:
        issues.append("target_segments: must be at least 1")
    if cfg.normals_k < 3:
        issues.append("normals_k: must be at least 3")
    if cfg.fpfh_k < 3:
        issues.append("fpfh_k: must be at least 3")
    if cfg.d < 0:
        issues.append("d: must be nonnegative")
    if modalities is not None and "fpfh" in modalities and cfg.fpfh_k < 3:
        issues.append("fpfh_k: fpfh modality needs a valid neighborhood size")
    if cfg.intrinsics not in INTRINSICS_PRESETS and has_rgbd:
        if not Path(cfg.intrinsics).exists():
            issues.append(f"intrinsics: no preset or file named {cfg.intrinsics!r}")
    if cfg.gt is not None and not Path(cfg.gt).exists():
        issues.append(f"gt: file {cfg.gt!r} does not exist")
    return issues


def _load_intrinsics(spec: str) -> CameraIntrinsics:
    if spec in INTRINSICS_PRESETS:
        return INTRINSICS_PRESETS[spec]
    return CameraIntrinsics.from_file(spec)


def _stage(timings: dict, name: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - self.t0
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Timer()


def run(cfg: RunConfig) -> RunResult:
    """Execute the full pipeline for one configuration."""
    issues = validate(cfg)
    if issues:
        raise ConfigError("; ".join(issues))
    timings: dict = {}

    with _stage(timings, "ingest"):
        if cfg.ply is not None:
            cloud = load_ply(cfg.ply)
        else:
            depth = load_depth_image(cfg.depth)
            rgb = load_rgb_image(cfg.rgb)
            cloud = backproject_depth(depth, rgb, _load_intrinsics(cfg.intrinsics))

    with _stage(timings, "graph"):
        if cfg.graph == "grid8":
            graph = build_grid8(cloud.grid)
        elif cfg.graph == "knn":
            graph = build_knn(cloud, cfg.k)
        elif cfg.graph == "radius":
            graph = build_radius(cloud, cfg.radius)
        else:
            graph = build_delaunay(cloud)

    modalities = cfg.resolved_modalities()
    needs_normals = "normal" in modalities or "fpfh" in modalities
    if needs_normals and cloud.normals is None:
        with _stage(timings, "normals"):
            cloud = cloud.with_descriptors(
                normals=_normals_for(cloud, cfg).directions
            )
    if "fpfh" in modalities and cloud.fpfh is None:
        with _stage(timings, "fpfh"):
            cloud = cloud.with_descriptors(fpfh=_fpfh_for(cloud, cfg))

    unsigned = cfg.unsigned_normals
    if unsigned is None:
        unsigned = cloud.viewpoint is None
    with _stage(timings, "weights"):
        wg = assign_weights(graph, cloud, modalities, unsigned_normals=unsigned)

    merge_cfg = MergeConfig(
        delta=cfg.delta if cfg.delta is not None else 0.0,
        modalities=modalities, mode=cfg.mode, coefficients=cfg.coefficients,
    )
    with _stage(timings, "merge"):
        if cfg.target_segments is not None:
            search = find_delta_for_target(
                wg, merge_cfg, cfg.target_segments, post_process=cfg.post_process
            )
            merge_cfg = merge_cfg.with_delta(search.delta)
        result = segment(wg, merge_cfg)
        pre_post_count = result.n_segments
        desired = cfg.post_desired
        if desired is None:
            desired = (cfg.target_segments if cfg.target_segments is not None
                       else max(pre_post_count, 1))
        if cfg.post_process:
            result = merge_small_segments(result, wg, desired)

    metrics_record = None
    if cfg.gt is not None:
        with _stage(timings, "metrics"):
            if cloud.grid is None:
                raise ValueError("metrics need an image grid to project labels")
            gt_img = load_label_image(cfg.gt)
            pred = project_labels(result, cloud.grid)
            scores = evaluate_pair(gt_img, pred, d=cfg.d)
            metrics_record = MetricsRecord(
                n_segments=result.n_segments,
                boundary_recall=scores["boundary_recall"],
                under_seg_error=scores["under_seg_error"],
                delta=merge_cfg.delta,
                graph=cfg.graph,
                modalities="+".join(modalities),
                mode=cfg.mode,
            )

    metadata = {
        "config": _config_echo_with_delta(cfg, merge_cfg.delta, desired),
        "n_points": cloud.n,
        "n_segments": result.n_segments,
        "delta": merge_cfg.delta,
        "backend": BACKEND_NAME,
        "version": __version__,
        "timings": dict(timings),
    }

    with _stage(timings, "outputs"):
        if cfg.out_labels is not None:
            save_labels(result, cfg.out_labels)
        if cfg.out_ply is not None:
            write_segmented_ply(cloud, result, cfg.out_ply)
        if cfg.out_csv is not None and metrics_record is not None:
            write_metrics_csv([metrics_record], cfg.out_csv)
        if cfg.out_meta is not None:
            Path(cfg.out_meta).write_text(json.dumps(metadata, indent=2) + "\n")

    return RunResult(
        segmentation=result, cloud=cloud, metrics=metrics_record,
        delta_used=merge_cfg.delta, timings=timings, metadata=metadata,
    )


def _config_echo_with_delta(cfg: RunConfig, delta: float, desired: int) -> dict:
    # The echoed config replays the exact delta the run settled on and the
    # post-processing reference count it used.
    echo = cfg.echo()
    echo["delta"] = delta
    echo["target_segments"] = None
    echo["post_desired"] = desired
    return echo


def _normals_for(cloud: PointCloud, cfg: RunConfig):
    cache_path = None
    if cfg.cache_dir is not None:
        cache_path = Path(cfg.cache_dir) / f"normals_k{cfg.normals_k}.bin"
        cached = load_descriptor_cache(cache_path, "normals", cfg.normals_k, cloud.n)
        if cached is not None:
            return cached
    normals = estimate_normals(cloud, k=cfg.normals_k, viewpoint=cloud.viewpoint)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        save_descriptor_cache(cache_path, "normals", cfg.normals_k, {
            "directions": normals.directions,
            "curvature": normals.curvature,
            "degenerate": normals.degenerate,
        })
    return normals


def _fpfh_for(cloud: PointCloud, cfg: RunConfig) -> np.ndarray:
    cache_path = None
    if cfg.cache_dir is not None:
        cache_path = Path(cfg.cache_dir) / f"fpfh_k{cfg.fpfh_k}.bin"
        cached = load_descriptor_cache(cache_path, "fpfh", cfg.fpfh_k, cloud.n)
        if cached is not None:
            return cached
    if cloud.normals is not None:
        from .descriptors import Normals
        normals = Normals(
            directions=cloud.normals,
            curvature=np.zeros(cloud.n),
            degenerate=np.zeros(cloud.n, dtype=bool),
        )
    else:
        normals = estimate_normals(cloud, k=cfg.normals_k, viewpoint=cloud.viewpoint)
    fpfh = compute_fpfh(cloud, normals, k=cfg.fpfh_k)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        save_descriptor_cache(cache_path, "fpfh", cfg.fpfh_k, {"fpfh": fpfh})
    return fpfh


def run_sweep(cfg: RunConfig, targets) -> list:
    """Shared-preparation sweep over several target segment counts."""
    if cfg.gt is None:
        raise ConfigError("sweep needs a ground-truth label image (gt)")
    if cfg.ply is not None:
        raise ConfigError("sweep needs grid-mapped RGB-D input for 2D metrics")
    base = replace(cfg, delta=0.1, target_segments=None,
                   out_labels=None, out_ply=None, out_csv=None, out_meta=None,
                   gt=cfg.gt)
    issues = validate(base)
    if issues:
        raise ConfigError("; ".join(issues))

    depth = load_depth_image(base.depth)
    rgb = load_rgb_image(base.rgb)
    cloud = backproject_depth(depth, rgb, _load_intrinsics(base.intrinsics))
    if base.graph == "grid8":
        graph = build_grid8(cloud.grid)
    elif base.graph == "knn":
        graph = build_knn(cloud, base.k)
    elif base.graph == "radius":
        graph = build_radius(cloud, base.radius)
    else:
        graph = build_delaunay(cloud)
    modalities = base.resolved_modalities()
    if "normal" in modalities or "fpfh" in modalities:
        cloud = cloud.with_descriptors(normals=_normals_for(cloud, base).directions)
    if "fpfh" in modalities:
        cloud = cloud.with_descriptors(fpfh=_fpfh_for(cloud, base))
    unsigned = base.unsigned_normals
    if unsigned is None:
        unsigned = cloud.viewpoint is None
    wg = assign_weights(graph, cloud, modalities, unsigned_normals=unsigned)
    template = MergeConfig(delta=0.1, modalities=modalities, mode=base.mode,
                           coefficients=base.coefficients)
    gt_img = load_label_image(cfg.gt)
    records = sweep(wg, template, cloud.grid, gt_img, targets, d=base.d,
                    post_process=base.post_process)
    if cfg.out_csv is not None:
        write_metrics_csv(records, cfg.out_csv)
    return records


# ---------------------------------------------------------------------------
# Flat key=value config files
# ---------------------------------------------------------------------------

_BOOL_KEYS = {"unsigned_normals", "post_process"}
_INT_KEYS = {"k", "target_segments", "normals_k", "fpfh_k", "post_desired"}
_FLOAT_KEYS = {"radius", "delta", "d"}


def parse_config_text(text: str) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _BOOL_KEYS:
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            out[key] = int(value)
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key == "modalities":
            out[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "coefficients":
            out[key] = tuple(float(v) for v in value.split(","))
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())
