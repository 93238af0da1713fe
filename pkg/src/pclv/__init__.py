"""Graph-based over-segmentation of 3D point clouds into super-points.

The pipeline: build a connectivity graph (image grid, kNN, radius, or
Delaunay), attach per-edge dissimilarities over the chosen modalities
(color, distance, normal angle, FPFH), then merge components along the
sorted edges under adaptive per-component thresholds, with optional
small-segment cleanup, 2D metrics, and a delta-sweep harness on top.
"""

__version__ = "0.1.0"

from ._backend import BACKEND_NAME, COMPILED
from .cloud import (CameraIntrinsics, GridMapping, LabelImage, PlyError,
                    PointCloud, backproject_depth, label_colors,
                    load_depth_image, load_label_image, load_ply,
                    load_rgb_image, write_ply, write_segmented_ply)
from .descriptors import (Normals, compute_fpfh, estimate_normals,
                          load_descriptor_cache, save_descriptor_cache)
from .graph import (ConnectivityGraph, SpatialIndex, build_delaunay,
                    build_grid8, build_knn, build_radius)
from .merge import (MergeConfig, MergeState, Segmentation, compact_labels,
                    find_delta_for_target, load_labels, merge_forest,
                    merge_small_segments, save_labels, segment)
from .metrics import (MetricsRecord, boundary_mask, boundary_recall,
                      dilate_mask, evaluate_pair, project_labels, sweep,
                      under_segmentation_error, write_metrics_csv)
from .pipeline import (ConfigError, RunConfig, RunResult, StageError,
                       load_config_file, run, run_sweep, validate)
from .weights import (MODALITY_ORDER, MODALITY_PRESETS, ModalitySet,
                      WeightedGraph, assign_weights, color_weight,
                      combine_linear, distance_weight, fpfh_weight,
                      normal_weight)

__all__ = [
    "BACKEND_NAME", "COMPILED", "__version__",
    "CameraIntrinsics", "GridMapping", "LabelImage", "PlyError", "PointCloud",
    "backproject_depth", "label_colors", "load_depth_image", "load_label_image",
    "load_ply", "load_rgb_image", "write_ply", "write_segmented_ply",
    "Normals", "compute_fpfh", "estimate_normals",
    "load_descriptor_cache", "save_descriptor_cache",
    "ConnectivityGraph", "SpatialIndex", "build_delaunay", "build_grid8",
    "build_knn", "build_radius",
    "MergeConfig", "MergeState", "Segmentation", "compact_labels",
    "find_delta_for_target", "load_labels", "merge_forest",
    "merge_small_segments", "save_labels", "segment",
    "MetricsRecord", "boundary_mask", "boundary_recall", "dilate_mask",
    "evaluate_pair", "project_labels", "sweep", "under_segmentation_error",
    "write_metrics_csv",
    "ConfigError", "RunConfig", "RunResult", "StageError", "load_config_file",
    "run", "run_sweep", "validate",
    "MODALITY_ORDER", "MODALITY_PRESETS", "ModalitySet", "WeightedGraph",
    "assign_weights", "color_weight", "combine_linear", "distance_weight",
    "fpfh_weight", "normal_weight",
]
