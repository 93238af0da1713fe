"""The merge engine: sorted-edge traversal with adaptive thresholds.

Edges are processed in non-decreasing order of the sort modality's weight
(ties by edge index). An edge joining two components merges them when, for
every criterion, the edge weight is at most
min over both components of (internal maximum + delta / component size).
In multi-criteria mode each active modality is a criterion and any of them
can veto the merge; in linear-scalar mode the single criterion is the
linear combination of the color, distance, and normal weights.

The per-component internal maximum is maintained over the edges that
actually performed merges. For the sort modality those edges form the
minimum spanning forest of the graph under single-criterion operation, so
the tracked value equals the true maximum MST edge weight.

Post-processing absorbs undersized segments into their closest neighbor,
where closest means the boundary edge with the smallest sort-modality
weight.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ._backend import BACKEND_NAME, kernels
from .weights import ModalitySet, WeightedGraph, combine_linear

MODES = ("multi_criteria", "linear_scalar")
DEFAULT_LINEAR_COEFFS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class MergeConfig:
    """Threshold scale, criterion mode, and modality bookkeeping."""

    delta: float
    modalities: ModalitySet
    mode: str = "multi_criteria"
    sort_modality: str = None
    coefficients: tuple = DEFAULT_LINEAR_COEFFS

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sort_modality is None:
            # Color when present, else the first modality in fixed order.
            default = "color" if "color" in self.modalities else self.modalities.names[0]
            object.__setattr__(self, "sort_modality", default)
        if self.sort_modality not in self.modalities:
            raise ValueError(
                f"sort modality {self.sort_modality!r} not in modality set"
            )
        if self.mode == "linear_scalar":
            for need in ("color", "distance", "normal"):
                if need not in self.modalities:
                    raise ValueError(
                        "linear_scalar mode requires the color, distance and "
                        "normal modalities"
                    )
            k_c, k_d, k_n = self.coefficients
            if min(k_c, k_d, k_n) < 0 or max(k_c, k_d, k_n) <= 0:
                raise ValueError("coefficients must be nonnegative, one positive")

    def with_delta(self, delta: float) -> "MergeConfig":
        return MergeConfig(
            delta=delta, modalities=self.modalities, mode=self.mode,
            sort_modality=self.sort_modality, coefficients=self.coefficients,
        )


@dataclass(frozen=True)
class MergeState:
    """Union-find outcome: flattened roots plus per-root accounting.

    ``internal`` columns follow the criterion layout of the run: one
    column per modality in multi-criteria mode, a single combined column
    in linear-scalar mode. Values are meaningful at root indices only.
    """

    root: np.ndarray
    size: np.ndarray
    internal: np.ndarray
    criterion_names: tuple


@dataclass(frozen=True)
class Segmentation:
    """Dense per-point labels with segment sizes and run provenance."""

    labels: np.ndarray
    segment_sizes: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        sizes = np.ascontiguousarray(np.asarray(self.segment_sizes, dtype=np.int64))
        if lab.min(initial=0) < 0 or (lab.size and lab.max() + 1 != sizes.shape[0]):
            raise ValueError("labels must be dense and 0-based")
        if sizes.sum() != lab.shape[0]:
            raise ValueError("segment sizes must sum to the point count")
        lab.flags.writeable = False
        sizes.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "segment_sizes", sizes)

    @property
    def n_points(self) -> int:
        return self.labels.shape[0]

    @property
    def n_segments(self) -> int:
        return self.segment_sizes.shape[0]


def compact_labels(root: np.ndarray) -> tuple:
    """Relabel arbitrary component ids densely, by first occurrence."""
    uniq, first, inverse = np.unique(root, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    labels = order[inverse]
    sizes = np.bincount(labels, minlength=len(uniq))
    return labels, sizes


def _criterion_matrix(wg: WeightedGraph, cfg: MergeConfig) -> tuple:
    if cfg.mode == "multi_criteria":
        return np.ascontiguousarray(wg.weights), tuple(cfg.modalities)
    cdn = np.column_stack(
        [wg.column("color"), wg.column("distance"), wg.column("normal")]
    )
    combined = combine_linear(cdn, *cfg.coefficients)
    return np.ascontiguousarray(combined[:, None]), ("linear",)


def merge_forest(wg: WeightedGraph, cfg: MergeConfig) -> MergeState:
    """Run the merge loop and return the raw union-find state."""
    for m in cfg.modalities:
        if m not in wg.modalities:
            raise ValueError(f"modality {m!r} missing from the weighted graph")
    crit, names = _criterion_matrix(wg, cfg)
    order = wg.sort_order(cfg.sort_modality).astype(np.int64, copy=False)
    ei = np.ascontiguousarray(wg.graph.edges[:, 0], dtype=np.int64)
    ej = np.ascontiguousarray(wg.graph.edges[:, 1], dtype=np.int64)
    root, size, internal = kernels.local_variation_merge(
        wg.graph.n_vertices, ei, ej,
        np.ascontiguousarray(order), crit, float(cfg.delta),
    )
    return MergeState(root=root, size=size, internal=internal,
                      criterion_names=names)


def segment(wg: WeightedGraph, cfg: MergeConfig) -> Segmentation:
    """Segment the weighted graph; labels are dense and deterministic."""
    state = merge_forest(wg, cfg)
    labels, sizes = compact_labels(state.root)
    provenance = {
        "graph": wg.graph.construction_tag,
        "modalities": list(cfg.modalities),
        "mode": cfg.mode,
        "sort_modality": cfg.sort_modality,
        "delta": cfg.delta,
        "backend": BACKEND_NAME,
    }
    if cfg.mode == "linear_scalar":
        provenance["coefficients"] = list(cfg.coefficients)
    return Segmentation(labels=labels, segment_sizes=sizes, provenance=provenance)


# ---------------------------------------------------------------------------
# Small-segment post-processing
# ---------------------------------------------------------------------------

def _boundary_adjacency(labels: np.ndarray, wg: WeightedGraph, sort_col: np.ndarray):
    """Per-segment neighbor map: label -> {other: (min weight, edge id)}."""
    ei = wg.graph.edges[:, 0]
    ej = wg.graph.edges[:, 1]
    la = labels[ei]
    lb = labels[ej]
    cross = la != lb
    if not cross.any():
        return {}
    la, lb = la[cross], lb[cross]
    w = sort_col[cross]
    eid = np.nonzero(cross)[0]
    lo = np.minimum(la, lb)
    hi = np.maximum(la, lb)
    order = np.lexsort((eid, w, hi, lo))
    lo, hi, w, eid = lo[order], hi[order], w[order], eid[order]
    new_group = np.ones(len(lo), dtype=bool)
    new_group[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    firsts = np.nonzero(new_group)[0]
    adjacency: dict = {}
    for f in firsts:
        a, b, weight, edge = int(lo[f]), int(hi[f]), float(w[f]), int(eid[f])
        adjacency.setdefault(a, {})[b] = (weight, edge)
        adjacency.setdefault(b, {})[a] = (weight, edge)
    return adjacency


def merge_small_segments(seg: Segmentation, wg: WeightedGraph,
                         desired_segments: int) -> Segmentation:
    """Absorb segments below 10% of the uniform-subdivision size.

    A segment smaller than 0.1 * n / desired_segments merges into the
    neighbor reachable through its minimum sort-modality-weight boundary
    edge. Smallest segments go first (ties by label) and merged results
    are re-tested, so an absorber that stays small is processed again.
    Segments with no neighbors are left alone.
    """
    if desired_segments < 1:
        raise ValueError("desired_segments must be at least 1")
    n = seg.n_points
    threshold = 0.1 * n / desired_segments
    sizes = seg.segment_sizes.astype(np.int64).copy()
    if not (sizes < threshold).any():
        return seg
    sort_name = seg.provenance.get("sort_modality")
    if sort_name is None or sort_name not in wg.modalities:
        sort_name = wg.modalities.names[0]
    adjacency = _boundary_adjacency(seg.labels, wg, wg.column(sort_name))

    n_labels = seg.n_segments
    parent = np.arange(n_labels, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = int(parent[x])
        return x

    def resolved_neighbors(lab: int) -> dict:
        """Re-root the raw neighbor keys of lab's map, dropping self-edges."""
        out: dict = {}
        for key, entry in adjacency.get(lab, {}).items():
            r = find(int(key))
            if r == lab:
                continue
            prev = out.get(r)
            if prev is None or entry < prev:
                out[r] = entry
        adjacency[lab] = out
        return out

    heap = [(int(sizes[lab]), lab) for lab in range(n_labels)]
    heapq.heapify(heap)
    isolated = np.zeros(n_labels, dtype=bool)  # smalls with no neighbors
    while heap:
        sz, lab = heapq.heappop(heap)
        if find(lab) != lab or sizes[lab] != sz or isolated[lab]:
            continue  # stale entry
        if sz >= threshold:
            break  # sizes only grow; nothing smaller remains
        nbrs = resolved_neighbors(lab)
        if not nbrs:
            isolated[lab] = True
            continue
        target = min(nbrs, key=lambda o: (nbrs[o][0], nbrs[o][1]))
        # Absorb lab into target; target's label survives. Neighbor maps
        # keep raw keys and are re-rooted lazily on their next use.
        parent[lab] = target
        sizes[target] += sizes[lab]
        small_map = adjacency.pop(lab)
        big_map = adjacency.get(target, {})
        if len(small_map) > len(big_map):
            small_map, big_map = big_map, small_map
        for key, entry in small_map.items():
            prev = big_map.get(key)
            if prev is None or entry < prev:
                big_map[key] = entry
        adjacency[target] = big_map
        heapq.heappush(heap, (int(sizes[target]), target))

    roots = np.array([find(int(l)) for l in range(n_labels)], dtype=np.int64)
    labels, sizes_out = compact_labels(roots[seg.labels])
    provenance = dict(seg.provenance)
    provenance["post_processed"] = {"desired_segments": desired_segments}
    return Segmentation(labels=labels, segment_sizes=sizes_out,
                        provenance=provenance)


# ---------------------------------------------------------------------------
# Delta search and label I/O
# ---------------------------------------------------------------------------

@dataclass
class DeltaSearchResult:
    delta: float
    n_segments: int
    converged: bool
    iterations: int


def find_delta_for_target(wg: WeightedGraph, cfg: MergeConfig, target: int,
                          post_process: bool = True, iterations: int = 20,
                          tolerance: float = 0.05) -> DeltaSearchResult:
    """Bisect log-delta until the output count is within the tolerance.

    Segment count tends to fall as delta grows; the search brackets the
    target by expanding outward, then bisects. The best delta seen is
    returned even when the tolerance was never reached (converged=False).
    """
    if target < 1:
        raise ValueError("target must be at least 1")

    def count_for(delta: float) -> int:
        result = segment(wg, cfg.with_delta(delta))
        if post_process:
            result = merge_small_segments(result, wg, target)
        return result.n_segments

    def good(count: int) -> bool:
        return abs(count - target) <= tolerance * target

    lo, hi = 1e-6, 8.0
    c_lo = count_for(lo)
    evals = [(abs(c_lo - target), lo, c_lo)]
    if good(c_lo):
        return DeltaSearchResult(lo, c_lo, True, 1)
    tries = 0
    while c_lo < target and lo > 1e-30 and tries < 40:
        lo /= 8.0
        c_lo = count_for(lo)
        evals.append((abs(c_lo - target), lo, c_lo))
        tries += 1
    c_hi = count_for(hi)
    evals.append((abs(c_hi - target), hi, c_hi))
    tries = 0
    while c_hi > target and hi < 1e12 and tries < 40:
        hi *= 8.0
        c_hi = count_for(hi)
        evals.append((abs(c_hi - target), hi, c_hi))
        tries += 1
    it = 0
    for it in range(1, iterations + 1):
        mid = float(np.sqrt(lo * hi))
        c_mid = count_for(mid)
        evals.append((abs(c_mid - target), mid, c_mid))
        if good(c_mid):
            return DeltaSearchResult(mid, c_mid, True, it)
        if c_mid > target:
            lo = mid
        else:
            hi = mid
    best = min(evals, key=lambda t: (t[0], t[1]))
    return DeltaSearchResult(best[1], best[2], good(best[2]), it)


def save_labels(seg: Segmentation, path) -> None:
    """One line per point: 'index label'."""
    with open(path, "w") as f:
        for i, lab in enumerate(seg.labels):
            f.write(f"{i} {lab}\n")


def load_labels(path) -> np.ndarray:
    data = np.loadtxt(path, dtype=np.int64, ndmin=2)
    order = np.argsort(data[:, 0])
    return data[order, 1]
