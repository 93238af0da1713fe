"""Per-edge dissimilarity weights over the selected modalities.

Each edge gets a tuple of dissimilarities, one entry per active modality
in the fixed order color, distance, normal, fpfh. Color and FPFH weights
live in [0, 1] by construction; the distance weight is min-max normalized
over the edges of the given graph; the normal weight is 1 minus the dot
product, in [0, 2] signed or [0, 1] unsigned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .graph import ConnectivityGraph

MODALITY_ORDER = ("color", "distance", "normal", "fpfh")

# The modality combinations exercised throughout: color alone is the
# classic single-weight configuration, pclv is color+distance+normal.
MODALITY_PRESETS = {
    "lv": ("color",),
    "lv_d": ("color", "distance"),
    "lv_n": ("color", "normal"),
    "dn": ("distance", "normal"),
    "lv_fpfh": ("color", "fpfh"),
    "pclv": ("color", "distance", "normal"),
}

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class ModalitySet:
    """Ordered, non-empty subset of the four modalities."""

    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ValueError("modality set may not be empty")
        if len(set(names)) != len(names):
            raise ValueError("modality set may not repeat entries")
        for name in names:
            if name not in MODALITY_ORDER:
                raise ValueError(f"unknown modality {name!r}")
        ordered = tuple(m for m in MODALITY_ORDER if m in names)
        object.__setattr__(self, "names", ordered)

    @classmethod
    def of(cls, *names) -> "ModalitySet":
        return cls(tuple(names))

    @classmethod
    def preset(cls, name: str) -> "ModalitySet":
        if name not in MODALITY_PRESETS:
            raise ValueError(
                f"unknown preset {name!r}; choose from {sorted(MODALITY_PRESETS)}"
            )
        return cls(MODALITY_PRESETS[name])

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class WeightedGraph:
    """Graph plus per-edge weight tuples and the edge-length extrema."""

    graph: ConnectivityGraph
    modalities: ModalitySet
    weights: np.ndarray  # (E, len(modalities)) float64
    lengths: np.ndarray  # (E,) raw Euclidean edge lengths, meters
    d_min: float
    d_max: float
    _sort_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.graph.n_edges, len(self.modalities)):
            raise ValueError("weight matrix shape does not match graph/modalities")
        if w.size and not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if self.d_min > self.d_max:
            raise ValueError("d_min must not exceed d_max")
        object.__setattr__(self, "weights", np.ascontiguousarray(w))

    def column(self, modality: str) -> np.ndarray:
        return self.weights[:, self.modalities.index(modality)]

    def sort_order(self, modality: str) -> np.ndarray:
        """Stable non-decreasing edge order for one modality, cached."""
        if modality not in self._sort_cache:
            self._sort_cache[modality] = np.argsort(
                self.column(modality), kind="stable"
            )
        return self._sort_cache[modality]

    def dump_weighted_csv(self, path) -> None:
        """Debug dump: i,j,len,w_c,w_d,w_n,w_fpfh with absent columns blank."""
        cols = {m: self.column(m) for m in self.modalities}
        with open(path, "w") as f:
            f.write("i,j,len,w_c,w_d,w_n,w_fpfh\n")
            for e in range(self.graph.n_edges):
                i, j = self.graph.edges[e]
                cells = [str(i), str(j), repr(float(self.lengths[e]))]
                for m in MODALITY_ORDER:
                    cells.append(repr(float(cols[m][e])) if m in cols else "")
                f.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Scalar weight functions
# ---------------------------------------------------------------------------

def color_weight(c_i, c_j) -> float:
    """Euclidean RGB distance scaled by sqrt(3) into [0, 1]."""
    d = np.asarray(c_i, dtype=np.float64) - np.asarray(c_j, dtype=np.float64)
    return float(min(np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / _SQRT3, 1.0))


def distance_weight(length: float, d_min: float, d_max: float) -> float:
    """Edge length min-max normalized over the graph's edge lengths."""
    if length < d_min or length > d_max:
        raise ValueError(
            f"edge length {length} outside [{d_min}, {d_max}]; "
            "normalization pass is inconsistent"
        )
    if d_max == d_min:
        return 0.0
    return float((length - d_min) / (d_max - d_min))


def normal_weight(n_i, n_j, unsigned: bool = False) -> float:
    """1 - dot(n_i, n_j); unsigned mode uses the absolute dot product.

    Clamped below at 0: near-parallel unit vectors can round to dot > 1.
    """
    n_i = np.asarray(n_i, dtype=np.float64)
    n_j = np.asarray(n_j, dtype=np.float64)
    dot = n_i[0] * n_j[0] + n_i[1] * n_j[1] + n_i[2] * n_j[2]
    if unsigned:
        dot = abs(dot)
    return float(max(1.0 - dot, 0.0))


def fpfh_weight(h_i, h_j) -> float:
    """1 - histogram intersection of two unit-sum FPFH rows."""
    return float(max(1.0 - np.minimum(h_i, h_j).sum(), 0.0))


def combine_linear(weights_cdn, k_c: float, k_d: float, k_n: float):
    """Linear combination k_c*w_c + k_d*w_d + k_n*w_n.

    ``weights_cdn`` holds (w_c, w_d, w_n) in its last axis; works on a
    single tuple or on an (E, 3) matrix.
    """
    if k_c < 0 or k_d < 0 or k_n < 0:
        raise ValueError("combination coefficients must be nonnegative")
    if k_c == 0 and k_d == 0 and k_n == 0:
        raise ValueError("at least one combination coefficient must be positive")
    w = np.asarray(weights_cdn, dtype=np.float64)
    return w[..., 0] * k_c + w[..., 1] * k_d + w[..., 2] * k_n


# ---------------------------------------------------------------------------
# Whole-graph assignment
# ---------------------------------------------------------------------------

def assign_weights(graph: ConnectivityGraph, cloud: PointCloud,
                   modalities: ModalitySet,
                   unsigned_normals: bool = False) -> WeightedGraph:
    """Fill per-edge weight tuples for the requested modalities.

    Two passes: raw edge lengths first (they fix d_min/d_max for the
    normalized distance weight), then the weight tuple per edge. Raises
    when the cloud lacks a descriptor a modality needs.
    """
    if "normal" in modalities and cloud.normals is None:
        raise ValueError("modality 'normal' requires normals on the cloud")
    if "fpfh" in modalities and cloud.fpfh is None:
        raise ValueError("modality 'fpfh' requires FPFH descriptors on the cloud")
    ei = graph.edges[:, 0]
    ej = graph.edges[:, 1]
    diff = cloud.positions[ei] - cloud.positions[ej]
    lengths = np.sqrt(
        diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    )
    if lengths.size:
        d_min = float(lengths.min())
        d_max = float(lengths.max())
    else:
        d_min = d_max = 0.0
    cols = []
    for m in modalities:
        if m == "color":
            d = cloud.colors[ei] - cloud.colors[ej]
            w = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
            cols.append(np.minimum(w / _SQRT3, 1.0))
        elif m == "distance":
            if d_max == d_min:
                cols.append(np.zeros_like(lengths))
            else:
                cols.append((lengths - d_min) / (d_max - d_min))
        elif m == "normal":
            a, b = cloud.normals[ei], cloud.normals[ej]
            dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]
            if unsigned_normals:
                dot = np.abs(dot)
            cols.append(np.maximum(1.0 - dot, 0.0))
        else:
            inter = np.minimum(cloud.fpfh[ei], cloud.fpfh[ej]).sum(axis=1)
            cols.append(np.maximum(1.0 - inter, 0.0))
    weights = (
        np.column_stack(cols) if cols else np.empty((graph.n_edges, 0))
    )
    return WeightedGraph(
        graph=graph, modalities=modalities, weights=weights,
        lengths=lengths, d_min=d_min, d_max=d_max,
    )
