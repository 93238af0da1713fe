"""Pure-Python merge kernel, used when the compiled extension is absent.

Semantically identical to the compiled version in ``_core``: both walk the
edges in the given order over a union-find forest, merge when every
criterion column passes its adaptive threshold, and track the per-column
internal maxima of the merge edges. Decisions are bitwise-identical
because both evaluate the same IEEE double expressions in the same order.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def local_variation_merge(n_vertices, ei, ej, order, crit, delta):
    """Run the sorted-edge merge loop.

    Args:
        n_vertices: vertex count.
        ei, ej: (E,) endpoint index arrays.
        order: (E,) edge ids in processing order.
        crit: (E, m) criterion weight matrix; a merge needs every column
            to pass w <= min over both components of (internal + delta/size).
        delta: adaptive-threshold scale.

    Returns:
        (root, size, internal): per-vertex root id after full path
        flattening, component sizes and per-column internal maxima, both
        valid at root indices.
    """
    n = int(n_vertices)
    m = crit.shape[1]
    parent = list(range(n))
    rank = [0] * n
    size = [1] * n
    internal = [[0.0] * m for _ in range(n)]
    ei_l = np.asarray(ei).tolist()
    ej_l = np.asarray(ej).tolist()
    order_l = np.asarray(order).tolist()
    crit_l = np.asarray(crit).tolist()
    delta = float(delta)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for e in order_l:
        ra = find(ei_l[e])
        rb = find(ej_l[e])
        if ra == rb:
            continue
        row = crit_l[e]
        ia = internal[ra]
        ib = internal[rb]
        ta = delta / size[ra]
        tb = delta / size[rb]
        ok = True
        for c in range(m):
            w = row[c]
            bound_a = ia[c] + ta
            bound_b = ib[c] + tb
            bound = bound_a if bound_a < bound_b else bound_b
            if w > bound:
                ok = False
                break
        if not ok:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
            ia, ib = ib, ia
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        size[ra] += size[rb]
        for c in range(m):
            w = row[c]
            top = ia[c] if ia[c] >= ib[c] else ib[c]
            ia[c] = top if top >= w else w

    root = np.empty(n, dtype=np.int64)
    for i in range(n):
        root[i] = find(i)
    return root, np.asarray(size, dtype=np.int64), np.asarray(internal)
