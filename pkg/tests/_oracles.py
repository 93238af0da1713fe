"""Independent brute-force oracles shared across the test suite.

These deliberately avoid the library's own data paths: neighbor queries
scan all pairs, the reference merge recomputes each component's MST from
scratch with scipy after every merge, and the metric oracles are plain
nested loops over pixels and segments.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree


def brute_force_knn_sets(positions: np.ndarray, k: int) -> list:
    """k nearest others per point, ties by smaller index; returns sets."""
    n = len(positions)
    out = []
    for i in range(n):
        d2 = np.sum((positions - positions[i]) ** 2, axis=1)
        idx = np.array([j for j in range(n) if j != i])
        order = np.lexsort((idx, d2[idx]))
        out.append(set(idx[order[:k]].tolist()))
    return out


def brute_force_knn_edges(positions: np.ndarray, k: int) -> set:
    sets = brute_force_knn_sets(positions, k)
    edges = set()
    for i, nbrs in enumerate(sets):
        for j in nbrs:
            edges.add((min(i, j), max(i, j)))
    return edges


def brute_force_radius_edges(positions: np.ndarray, r: float) -> set:
    n = len(positions)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            diff = positions[i] - positions[j]
            if float(np.sum(diff * diff)) < r * r:
                edges.add((i, j))
    return edges


def mst_max_edge(ei, ej, w, member_mask) -> float:
    """Max edge weight of the MST over the induced subgraph; 0 if no edges.

    ``member_mask`` is a boolean per-vertex membership array. All MSTs of a
    weighted graph share their sorted weight multiset, so the maximum is
    well defined even under ties.
    """
    sel = member_mask[ei] & member_mask[ej]
    if not sel.any():
        return 0.0
    vi, vj, vw = ei[sel], ej[sel], w[sel]
    verts, inv = np.unique(np.concatenate([vi, vj]), return_inverse=True)
    m = len(verts)
    li, lj = inv[: len(vi)], inv[len(vi):]
    # Shift by +1 so zero-weight edges are not dropped by sparse storage;
    # a constant shift never changes which edges form the MST.
    shifted = coo_matrix((vw + 1.0, (li, lj)), shape=(m, m)).tocsr()
    tree = minimum_spanning_tree(shifted)
    rows, cols = tree.nonzero()
    if len(rows) == 0:
        return 0.0
    lookup = {}
    for a, b, weight in zip(li, lj, vw):
        lookup[(a, b)] = weight
        lookup[(b, a)] = weight
    return float(max(lookup[(a, b)] for a, b in zip(rows, cols)))


def reference_local_variation(n, ei, ej, w, delta):
    """Single-criterion merge with the component MST recomputed per merge.

    Edges are processed by (weight, edge index). Component membership is a
    plain relabel array; the internal value of the merged component is the
    exact max MST edge of its induced subgraph, via scipy.
    """
    ei = np.asarray(ei)
    ej = np.asarray(ej)
    w = np.asarray(w, dtype=np.float64)
    order = np.lexsort((np.arange(len(w)), w))
    comp = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    internal = np.zeros(n)
    for e in order:
        a = comp[ei[e]]
        b = comp[ej[e]]
        if a == b:
            continue
        bound = min(internal[a] + delta / size[a], internal[b] + delta / size[b])
        if w[e] <= bound:
            comp[comp == b] = a
            size[a] += size[b]
            internal[a] = mst_max_edge(ei, ej, w, comp == a)
    return comp


def partition_signature(labels: np.ndarray) -> tuple:
    """Canonical form of a labeling for partition equality checks."""
    _uniq, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return tuple(order[inverse].tolist())


def brute_force_boundary_mask(labels: np.ndarray) -> np.ndarray:
    h, w = labels.shape
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            if labels[r, c] < 0:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] >= 0 \
                        and labels[rr, cc] != labels[r, c]:
                    out[r, c] = True
                    break
    return out


def brute_force_boundary_recall(gt_mask, pred_mask, d) -> float:
    gt_pts = np.argwhere(gt_mask)
    if len(gt_pts) == 0:
        return 1.0
    pred_pts = np.argwhere(pred_mask)
    if len(pred_pts) == 0:
        return 0.0
    tp = 0
    for r, c in gt_pts:
        d2 = (pred_pts[:, 0] - r) ** 2 + (pred_pts[:, 1] - c) ** 2
        if (d2 <= d * d).any():
            tp += 1
    return tp / len(gt_pts)


def brute_force_under_seg_error(gt_labels, pred_labels) -> float:
    both = (gt_labels >= 0) & (pred_labels >= 0)
    gt_ids = np.unique(gt_labels[both])
    total = 0
    for s in gt_ids:
        inside_s = both & (gt_labels == s)
        for p in np.unique(pred_labels[inside_s]):
            in_p = both & (pred_labels == p)
            p_in = int((in_p & inside_s).sum())
            p_out = int((in_p & ~inside_s).sum())
            total += min(p_in, p_out)
    return total / len(gt_ids)


def random_label_image(rng, height, width, n_labels, block=4, holes=0.0):
    """Blocky random labeling with optional unlabeled holes."""
    hb = (height + block - 1) // block
    wb = (width + block - 1) // block
    coarse = rng.integers(0, n_labels, size=(hb, wb))
    labels = np.kron(coarse, np.ones((block, block), dtype=np.int64))
    labels = labels[:height, :width].astype(np.int64)
    if holes > 0:
        mask = rng.random((height, width)) < holes
        labels[mask] = -1
    return labels


def connected_components_count(n, ei, ej) -> int:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(ei, ej):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[rb] = ra
    return len({find(i) for i in range(n)})


def segment_is_connected(labels, ei, ej, seg_label) -> bool:
    """BFS connectivity of one segment inside the construction graph."""
    members = np.nonzero(labels == seg_label)[0]
    if len(members) <= 1:
        return True
    member_set = set(members.tolist())
    adj = {int(v): [] for v in members}
    for a, b in zip(ei, ej):
        a, b = int(a), int(b)
        if a in member_set and b in member_set:
            adj[a].append(b)
            adj[b].append(a)
    seen = {int(members[0])}
    stack = [int(members[0])]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(members)
