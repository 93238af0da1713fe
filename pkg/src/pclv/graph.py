"""Connectivity-graph construction over a point cloud.

Four builders are provided: 8-connected image grid, K-nearest-neighbor
union, fixed-radius, and the 1-skeleton of a 3D Delaunay tetrahedralization.
Every builder returns edges normalized to i < j with no duplicates or
self-loops. The grid graph can never connect pixels farther than one step
apart in Chebyshev distance, which is what rules out spatially dispersed
output segments for that construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .cloud import GridMapping, PointCloud


@dataclass(frozen=True)
class ConnectivityGraph:
    """Undirected edge list over point indices, i < j per edge."""

    n_vertices: int
    edges: np.ndarray  # (E, 2) int64
    construction_tag: str

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.n_vertices:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy i < j")
            keys = e[:, 0] * self.n_vertices + e[:, 1]
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate edges")
        e = np.ascontiguousarray(e)
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def dump_edges_csv(self, path) -> None:
        """Debug dump, columns i,j."""
        with open(path, "w") as f:
            f.write("i,j\n")
            for i, j in self.edges:
                f.write(f"{i},{j}\n")


def _lex_unique(pairs: np.ndarray, n: int) -> np.ndarray:
    """Normalize (a, b) pairs to unique i < j rows in lexicographic order."""
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    keys = np.unique(lo[keep] * np.int64(n) + hi[keep])
    return np.column_stack([keys // n, keys % n])


class SpatialIndex:
    """Balanced k-d tree with exact, deterministically tie-broken queries.

    Equidistant candidates at the neighbor-set cutoff are resolved toward
    the smaller point index, so results match a brute-force scan exactly.
    """

    def __init__(self, positions: np.ndarray):
        self.positions = np.asarray(positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (n, 3)")
        self.n = self.positions.shape[0]
        self.tree = cKDTree(self.positions, balanced_tree=True)

    def knn(self, k: int) -> np.ndarray:
        """Indices of the k nearest other points for every point, (n, k)."""
        if k < 1 or k > self.n - 1:
            raise ValueError(f"k must be in [1, n-1], got {k}")
        pts = self.positions
        # One extra column beyond self + k reveals ties at the cutoff.
        kq = min(k + 2, self.n)
        dist, idx = self.tree.query(pts, k=kq, workers=1)
        out = np.empty((self.n, k), dtype=np.int64)
        if kq == k + 2:
            clear = dist[:, k] < dist[:, k + 1]
        else:  # kq == n: every other point is returned, no cutoff exists
            clear = np.ones(self.n, dtype=bool)
        # Self should occupy column 0; duplicates can displace it.
        clear &= idx[:, 0] == np.arange(self.n)
        sets = idx[:, 1 : k + 1]
        out[clear] = np.sort(sets[clear], axis=1)
        for i in np.nonzero(~clear)[0]:
            out[i] = self._knn_exact(i, k)
        return out

    def _knn_exact(self, i: int, k: int) -> np.ndarray:
        """Tie-aware kNN of point i by (distance, index) order."""
        p = self.positions[i]
        r = np.sort(np.linalg.norm(self.positions - p, axis=1))[k] * (1 + 1e-9)
        cand = np.asarray(self.tree.query_ball_point(p, r + 1e-300, workers=1))
        cand = cand[cand != i]
        d2 = np.sum((self.positions[cand] - p) ** 2, axis=1)
        order = np.lexsort((cand, d2))
        return np.sort(cand[order[:k]])

    def pairs_within(self, radius: float) -> np.ndarray:
        """All unordered pairs with strict distance < radius, (E, 2)."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        pairs = self.tree.query_pairs(radius * (1 + 1e-12), output_type="ndarray")
        if pairs.size == 0:
            return np.empty((0, 2), dtype=np.int64)
        diff = self.positions[pairs[:, 0]] - self.positions[pairs[:, 1]]
        d2 = np.sum(diff * diff, axis=1)
        pairs = pairs[d2 < radius * radius]
        return _lex_unique(pairs.astype(np.int64), self.n)


def build_grid8(mapping: GridMapping) -> ConnectivityGraph:
    """8-connected graph over valid pixels of an image-grid mapping."""
    if mapping is None:
        raise ValueError("grid mapping is required for the grid8 graph")
    p2p = mapping.pixel_to_point
    n = mapping.point_to_pixel.shape[0]
    blocks = []
    # Right, down, down-right, down-left cover each 8-neighbor pair once.
    shifts = {
        (0, 1): (p2p[:, :-1], p2p[:, 1:]),
        (1, 0): (p2p[:-1, :], p2p[1:, :]),
        (1, 1): (p2p[:-1, :-1], p2p[1:, 1:]),
        (1, -1): (p2p[:-1, 1:], p2p[1:, :-1]),
    }
    for a, b in shifts.values():
        ok = (a >= 0) & (b >= 0)
        blocks.append(np.column_stack([a[ok], b[ok]]))
    edges = np.concatenate(blocks, axis=0) if blocks else np.empty((0, 2), np.int64)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return ConnectivityGraph(n, np.column_stack([lo, hi]), "grid8")


def build_knn(cloud: PointCloud, k: int) -> ConnectivityGraph:
    """Union-symmetrized K-nearest-neighbor graph."""
    if k < 1:
        raise ValueError("K must be at least 1")
    if cloud.n < 2:
        raise ValueError("KNN graph needs at least 2 points")
    index = SpatialIndex(cloud.positions)
    k_eff = min(k, cloud.n - 1)
    nbrs = index.knn(k_eff)
    src = np.repeat(np.arange(cloud.n, dtype=np.int64), k_eff)
    pairs = np.column_stack([src, nbrs.reshape(-1)])
    return ConnectivityGraph(cloud.n, _lex_unique(pairs, cloud.n), "knn")


def build_radius(cloud: PointCloud, radius: float) -> ConnectivityGraph:
    """Graph joining every pair at Euclidean distance strictly below R."""
    if radius <= 0:
        raise ValueError("R must be positive")
    index = SpatialIndex(cloud.positions)
    return ConnectivityGraph(cloud.n, index.pairs_within(radius), "radius")


def _best_fit_plane_coords(pos: np.ndarray) -> np.ndarray:
    centered = pos - pos.mean(axis=0)
    _u, _s, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def build_delaunay(cloud: PointCloud) -> ConnectivityGraph:
    """1-skeleton of the 3D Delaunay tetrahedralization.

    Coplanar inputs fall back to a 2D triangulation in the best-fit plane.
    Degenerate inputs are retried with a deterministic jitter of magnitude
    attempt * (index + 1) * 1e-9 m before giving up.
    """
    n = cloud.n
    if n < 4:
        raise ValueError("Delaunay graph needs at least 4 points")
    pos = cloud.positions
    centered = pos - pos.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    coplanar = sv[2] <= max(1e-12, 1e-9 * sv[0])
    points = _best_fit_plane_coords(pos) if coplanar else pos
    rng = np.random.default_rng(0)
    directions = rng.standard_normal(points.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    scale = (np.arange(n, dtype=np.float64) + 1.0)[:, None] * 1e-9
    last_error = None
    for attempt in range(4):
        jittered = points if attempt == 0 else points + attempt * scale * directions
        try:
            tri = Delaunay(jittered)
        except QhullError as exc:
            last_error = exc
            continue
        simplices = tri.simplices
        m = simplices.shape[1]
        pairs = np.concatenate(
            [np.column_stack([simplices[:, a], simplices[:, b]])
             for a in range(m) for b in range(a + 1, m)]
        )
        return ConnectivityGraph(n, _lex_unique(pairs.astype(np.int64), n), "delaunay")
    raise ValueError(f"Delaunay triangulation failed after jitter retries: {last_error}")


BUILDERS = {
    "grid8": lambda cloud, **kw: build_grid8(cloud.grid),
    "knn": lambda cloud, k=8, **kw: build_knn(cloud, k),
    "radius": lambda cloud, radius=0.1, **kw: build_radius(cloud, radius),
    "delaunay": lambda cloud, **kw: build_delaunay(cloud),
}
