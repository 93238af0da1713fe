"""Per-point geometric descriptors: PCA plane-fit normals and FPFH.

Both descriptors are estimated from k-nearest neighborhoods, which keeps
them usable on clouds with uneven sampling density. Estimation leaks some
neighborhood context into every per-point value by construction; no
smoothing or cleanup is applied on top.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .graph import SpatialIndex

DEFAULT_NORMAL_K = 10
DEFAULT_FPFH_K = 15

_CACHE_MAGIC = b"PCLVDSC1"
_CACHE_KINDS = {"normals": 1, "fpfh": 2}


@dataclass(frozen=True)
class Normals:
    """Unit directions with a curvature proxy per point.

    ``curvature`` is the smallest PCA eigenvalue over the eigenvalue sum,
    in [0, 1/3]; ``degenerate`` flags neighborhoods of coincident points,
    which get direction (0, 0, 1) and curvature 0.
    """

    directions: np.ndarray
    curvature: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        lengths = np.linalg.norm(d, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-6):
            raise ValueError("normal directions must be unit length")
        c = np.asarray(self.curvature, dtype=np.float64)
        if c.min() < 0.0 or c.max() > 1.0 / 3.0 + 1e-12:
            raise ValueError("curvature proxy must lie in [0, 1/3]")


def estimate_normals(cloud: PointCloud, k: int = DEFAULT_NORMAL_K,
                     viewpoint: np.ndarray = None) -> Normals:
    """PCA plane-fit normals over k-nearest neighborhoods (self included).

    The direction is the eigenvector of the smallest eigenvalue of the
    neighborhood covariance. When a viewpoint is given, directions are
    flipped so they point toward it; otherwise signs are whatever the
    eigendecomposition produced.
    """
    if k < 3:
        raise ValueError("normal estimation needs k >= 3")
    if cloud.n <= k:
        raise ValueError(f"cloud of {cloud.n} points is too small for k={k}")
    pos = cloud.positions
    index = SpatialIndex(pos)
    nbrs = index.knn(k - 1)  # k-point neighborhood = self + (k-1) others
    hood = np.concatenate([np.arange(cloud.n, dtype=np.int64)[:, None], nbrs], axis=1)
    pts = pos[hood]  # (n, k, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    eigvals, eigvecs = np.linalg.eigh(cov)
    directions = eigvecs[:, :, 0].copy()
    trace = eigvals.sum(axis=1)
    degenerate = trace <= 0.0
    safe = np.where(degenerate, 1.0, trace)
    curvature = np.clip(np.where(degenerate, 0.0, eigvals[:, 0] / safe), 0.0, 1.0 / 3.0)
    directions[degenerate] = (0.0, 0.0, 1.0)
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    directions /= np.where(norms > 0, norms, 1.0)
    if viewpoint is not None:
        to_view = np.asarray(viewpoint, dtype=np.float64).reshape(3) - pos
        flip = np.einsum("ni,ni->n", to_view, directions) < 0.0
        directions[flip] *= -1.0
    return Normals(directions=directions, curvature=curvature, degenerate=degenerate)


def _pair_angles(p_src, n_src, p_tgt, n_tgt):
    """Darboux-frame angle features (alpha, phi, theta) per point pair.

    Returns the three features plus a validity mask; pairs with coincident
    positions or an ill-defined frame are masked out.
    """
    diff = p_tgt - p_src
    dist = np.linalg.norm(diff, axis=-1)
    ok = dist > 0.0
    d_hat = np.where(ok[..., None], diff / np.where(ok, dist, 1.0)[..., None], 0.0)
    u = n_src
    phi = np.einsum("...i,...i->...", u, d_hat)
    v = np.cross(d_hat, u)
    v_norm = np.linalg.norm(v, axis=-1)
    ok &= v_norm > 1e-12
    v = np.where(ok[..., None], v / np.where(ok, v_norm, 1.0)[..., None], 0.0)
    w = np.cross(u, v)
    alpha = np.einsum("...i,...i->...", v, n_tgt)
    theta = np.arctan2(
        np.einsum("...i,...i->...", w, n_tgt),
        np.einsum("...i,...i->...", u, n_tgt),
    )
    return alpha, phi, theta, ok, dist


def _bin11(values, lo, hi):
    idx = np.floor((values - lo) / (hi - lo) * 11.0).astype(np.int64)
    return np.clip(idx, 0, 10)


def compute_fpfh(cloud: PointCloud, normals: Normals,
                 k: int = DEFAULT_FPFH_K) -> np.ndarray:
    """33-bin fast point feature histograms, one row per point.

    Per point, a simplified histogram of the three pair angles against its
    k nearest neighbors (11 uniform bins per angle over its full range),
    then the neighbors' histograms are folded in with inverse-distance
    weights. Rows are normalized to sum 1.
    """
    if k < 3:
        raise ValueError("FPFH needs k >= 3")
    if normals.directions.shape[0] != cloud.n:
        raise ValueError("normals do not cover the cloud")
    pos = cloud.positions
    dirs = normals.directions
    index = SpatialIndex(pos)
    k_eff = min(k, cloud.n - 1)
    nbrs = index.knn(k_eff)  # (n, k) neighbor indices, self excluded

    p_src = pos[:, None, :]
    n_src = dirs[:, None, :]
    p_tgt = pos[nbrs]
    n_tgt = dirs[nbrs]
    alpha, phi, theta, ok, dist = _pair_angles(p_src, n_src, p_tgt, n_tgt)

    spfh = np.zeros((cloud.n, 33))
    rows = np.repeat(np.arange(cloud.n, dtype=np.int64), k_eff)
    okf = ok.reshape(-1)
    bins = np.concatenate([
        rows[okf] * 33 + _bin11(alpha.reshape(-1)[okf], -1.0, 1.0),
        rows[okf] * 33 + 11 + _bin11(phi.reshape(-1)[okf], -1.0, 1.0),
        rows[okf] * 33 + 22 + _bin11(theta.reshape(-1)[okf], -np.pi, np.pi),
    ])
    np.add.at(spfh.reshape(-1), bins, 1.0)

    # Neighbor accumulation: fpfh_i = spfh_i + (1/k) * sum_j spfh_j / dist_ij
    inv_d = np.where(ok & (dist > 0.0), 1.0 / np.where(dist > 0.0, dist, 1.0), 0.0)
    fpfh = spfh.copy()
    for col in range(k_eff):
        fpfh += (inv_d[:, col] / k_eff)[:, None] * spfh[nbrs[:, col]]
    totals = fpfh.sum(axis=1)
    empty = totals <= 0.0
    fpfh[empty] = 1.0 / 33.0  # no valid pair anywhere in the neighborhood
    fpfh[~empty] /= totals[~empty, None]
    return fpfh


# ---------------------------------------------------------------------------
# Descriptor cache (binary, little-endian)
# ---------------------------------------------------------------------------

def save_descriptor_cache(path, kind: str, k: int, arrays: dict) -> None:
    """Write a descriptor cache: header (magic, kind, n, k), then raw data."""
    if kind not in _CACHE_KINDS:
        raise ValueError(f"unknown cache kind {kind!r}")
    if kind == "normals":
        payload = [
            np.ascontiguousarray(arrays["directions"], dtype="<f8"),
            np.ascontiguousarray(arrays["curvature"], dtype="<f8"),
            np.ascontiguousarray(arrays["degenerate"], dtype="u1"),
        ]
        n = payload[0].shape[0]
    else:
        payload = [np.ascontiguousarray(arrays["fpfh"], dtype="<f8")]
        n = payload[0].shape[0]
    header = struct.pack("<8sBQI", _CACHE_MAGIC, _CACHE_KINDS[kind], n, k)
    with open(path, "wb") as f:
        f.write(header)
        for a in payload:
            f.write(a.tobytes())


def load_descriptor_cache(path, kind: str, k: int, n: int):
    """Load a cache if its header matches (kind, k, n); else return None."""
    path = Path(path)
    if not path.exists():
        return None
    raw = path.read_bytes()
    head = struct.calcsize("<8sBQI")
    if len(raw) < head:
        return None
    magic, kind_id, n_stored, k_stored = struct.unpack("<8sBQI", raw[:head])
    if magic != _CACHE_MAGIC or kind_id != _CACHE_KINDS.get(kind):
        return None
    if n_stored != n or k_stored != k:
        return None
    body = raw[head:]
    if kind == "normals":
        want = n * 3 * 8 + n * 8 + n
        if len(body) != want:
            return None
        directions = np.frombuffer(body[: n * 24], dtype="<f8").reshape(n, 3)
        curvature = np.frombuffer(body[n * 24 : n * 32], dtype="<f8")
        degenerate = np.frombuffer(body[n * 32 :], dtype="u1").astype(bool)
        return Normals(directions=directions.copy(), curvature=curvature.copy(),
                       degenerate=degenerate)
    if len(body) != n * 33 * 8:
        return None
    return np.frombuffer(body, dtype="<f8").reshape(n, 33).copy()
