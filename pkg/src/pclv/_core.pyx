# cython: language_level=3
"""Compiled merge kernel; semantic twin of ``_kernels``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True


cdef inline Py_ssize_t _find(cnp.int64_t* parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x
    cdef Py_ssize_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def local_variation_merge(Py_ssize_t n_vertices,
                          const cnp.int64_t[::1] ei,
                          const cnp.int64_t[::1] ej,
                          const cnp.int64_t[::1] order,
                          const cnp.float64_t[:, ::1] crit,
                          double delta):
    """Sorted-edge union-find merge with per-column adaptive thresholds."""
    cdef Py_ssize_t n = n_vertices
    cdef Py_ssize_t n_edges = order.shape[0]
    cdef Py_ssize_t m = crit.shape[1]

    parent_arr = np.arange(n, dtype=np.int64)
    rank_arr = np.zeros(n, dtype=np.uint8)
    size_arr = np.ones(n, dtype=np.int64)
    internal_arr = np.zeros((n, m), dtype=np.float64)

    cdef cnp.int64_t[::1] parent = parent_arr
    cdef cnp.uint8_t[::1] rank = rank_arr
    cdef cnp.int64_t[::1] size = size_arr
    cdef cnp.float64_t[:, ::1] internal = internal_arr

    cdef Py_ssize_t t, e, ra, rb, tmp, c
    cdef double w, bound_a, bound_b, bound, ta, tb, top
    cdef bint ok

    with nogil:
        for t in range(n_edges):
            e = order[t]
            ra = _find(&parent[0], ei[e])
            rb = _find(&parent[0], ej[e])
            if ra == rb:
                continue
            ta = delta / size[ra]
            tb = delta / size[rb]
            ok = True
            for c in range(m):
                w = crit[e, c]
                bound_a = internal[ra, c] + ta
                bound_b = internal[rb, c] + tb
                bound = bound_a if bound_a < bound_b else bound_b
                if w > bound:
                    ok = False
                    break
            if not ok:
                continue
            if rank[ra] < rank[rb]:
                tmp = ra
                ra = rb
                rb = tmp
            parent[rb] = ra
            if rank[ra] == rank[rb]:
                rank[ra] += 1
            size[ra] += size[rb]
            for c in range(m):
                w = crit[e, c]
                top = internal[ra, c] if internal[ra, c] >= internal[rb, c] \
                    else internal[rb, c]
                internal[ra, c] = top if top >= w else w

        for t in range(n):
            _find(&parent[0], t)

    return parent_arr, size_arr, internal_arr
