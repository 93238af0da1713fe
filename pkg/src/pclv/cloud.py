"""Point-cloud data model and file ingestion.

Positions are in meters. Colors are stored per channel in [0, 1] so the
color dissimilarity is in [0, 1] by construction; 8-bit sources are divided
by 255. Intensity-only clouds replicate the intensity into all three
channels. Clouds built from RGB-D frames keep the pixel<->point mapping so
grid-based graphs and 2D label projection stay available downstream.

All container types are immutable after construction (their arrays are
marked read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

DEFAULT_COLOR = 0.5
DEFAULT_DEPTH_SCALE = 0.001  # raw depth unit -> meters (millimeter sensors)

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    """Malformed or unsupported PLY content."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters plus the raw-depth-to-meters scale."""

    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")

    @classmethod
    def from_file(cls, path) -> "CameraIntrinsics":
        """Read a 5-value text file: fx fy cx cy depth_scale."""
        values = [float(tok) for tok in Path(path).read_text().split()]
        if len(values) != 5:
            raise ValueError(f"intrinsics file {path} must hold exactly 5 values")
        return cls(*values)


# Kinect intrinsics distributed with the NYU Depth V2 toolbox (RGB camera).
NYU_INTRINSICS = CameraIntrinsics(
    fx=518.857901, fy=519.469611, cx=325.582449, cy=253.736166,
    depth_scale=DEFAULT_DEPTH_SCALE,
)

INTRINSICS_PRESETS = {"nyu": NYU_INTRINSICS}


@dataclass(frozen=True)
class GridMapping:
    """Mutually-inverse maps between image pixels and point indices.

    ``pixel_to_point`` is (height, width) with -1 marking pixels that carry
    no point; ``point_to_pixel`` is (n, 2) rows of (row, col).
    """

    pixel_to_point: np.ndarray
    point_to_pixel: np.ndarray

    def __post_init__(self):
        p2p = np.asarray(self.pixel_to_point, dtype=np.int64)
        pix = np.asarray(self.point_to_pixel, dtype=np.int64)
        if p2p.ndim != 2 or pix.ndim != 2 or pix.shape[1] != 2:
            raise ValueError("pixel_to_point must be (H, W), point_to_pixel (n, 2)")
        n = pix.shape[0]
        valid = p2p >= 0
        if valid.sum() != n:
            raise ValueError("pixel_to_point must reference every point exactly once")
        rows, cols = np.nonzero(valid)
        idx = p2p[rows, cols]
        if len(np.unique(idx)) != n:
            raise ValueError("duplicate point index in pixel_to_point")
        if not (np.all(pix[idx, 0] == rows) and np.all(pix[idx, 1] == cols)):
            raise ValueError("pixel_to_point and point_to_pixel are not inverse")
        object.__setattr__(self, "pixel_to_point", _readonly(p2p))
        object.__setattr__(self, "point_to_pixel", _readonly(pix))

    @property
    def height(self) -> int:
        return self.pixel_to_point.shape[0]

    @property
    def width(self) -> int:
        return self.pixel_to_point.shape[1]


@dataclass(frozen=True)
class PointCloud:
    """A 3D point cloud with per-point color and optional descriptors.

    Invariants enforced at construction: equal lengths, colors in [0, 1],
    unit normals, and FPFH histograms that are nonnegative and sum to 1.
    """

    positions: np.ndarray
    colors: np.ndarray = None
    normals: np.ndarray = None
    fpfh: np.ndarray = None
    grid: GridMapping = None
    viewpoint: np.ndarray = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("positions must be a non-empty (n, 3) array")
        n = pos.shape[0]
        if self.colors is None:
            col = np.full((n, 3), DEFAULT_COLOR)
        else:
            col = np.asarray(self.colors, dtype=np.float64)
        if col.shape != (n, 3):
            raise ValueError("colors must be (n, 3)")
        if col.min() < 0.0 or col.max() > 1.0:
            raise ValueError("color channels must lie in [0, 1]")
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "colors", _readonly(col))
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != (n, 3):
                raise ValueError("normals must be (n, 3)")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ValueError("normals must have unit length (1e-6)")
            object.__setattr__(self, "normals", _readonly(nrm))
        if self.fpfh is not None:
            h = np.asarray(self.fpfh, dtype=np.float64)
            if h.shape != (n, 33):
                raise ValueError("fpfh must be (n, 33)")
            if h.min() < 0.0 or np.any(np.abs(h.sum(axis=1) - 1.0) > 1e-6):
                raise ValueError("fpfh histograms must be nonnegative and sum to 1")
            object.__setattr__(self, "fpfh", _readonly(h))
        if self.grid is not None and self.grid.point_to_pixel.shape[0] != n:
            raise ValueError("grid mapping does not cover the cloud")
        if self.viewpoint is not None:
            vp = np.asarray(self.viewpoint, dtype=np.float64).reshape(3)
            object.__setattr__(self, "viewpoint", _readonly(vp))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def with_descriptors(self, normals=None, fpfh=None) -> "PointCloud":
        """Return a copy sharing all arrays, with descriptors attached."""
        return PointCloud(
            positions=self.positions,
            colors=self.colors,
            normals=self.normals if normals is None else normals,
            fpfh=self.fpfh if fpfh is None else fpfh,
            grid=self.grid,
            viewpoint=self.viewpoint,
        )


@dataclass(frozen=True)
class LabelImage:
    """Per-pixel segment labels; -1 marks pixels that carry no label."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError("labels must be a non-empty 2D array")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ValueError("labels must be integers")
        lab = lab.astype(np.int64, copy=False)
        if lab[lab != -1].size and lab[lab != -1].min() < 0:
            raise ValueError("labels must be nonnegative (or -1 for unlabeled)")
        object.__setattr__(self, "labels", _readonly(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def mask(self) -> np.ndarray:
        """Boolean map of labeled pixels."""
        return self.labels >= 0

    def restricted_to(self, keep: np.ndarray) -> "LabelImage":
        """Copy with labels outside ``keep`` removed."""
        lab = np.where(keep, self.labels, -1)
        return LabelImage(lab)


# ---------------------------------------------------------------------------
# PLY reading / writing
# ---------------------------------------------------------------------------

def _parse_ply_header(f):
    """Return (format, vertex_count, properties, header_end_offset)."""
    magic = f.readline()
    if magic.strip() not in (b"ply",):
        raise PlyError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []  # list of (name, count, [(prop_name, type_str)])
    current = None
    while True:
        raw = f.readline()
        if not raw:
            raise PlyError("unexpected end of header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise PlyError(f"unsupported format line: {line!r}")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unsupported PLY format {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyError(f"malformed element line: {line!r}")
            current = (parts[1], int(parts[2]), [])
            elements.append(current)
        elif parts[0] == "property":
            if current is None:
                raise PlyError("property before any element")
            if parts[1] == "list":
                current[2].append((parts[-1], "list"))
            else:
                if len(parts) != 3:
                    raise PlyError(f"malformed property line: {line!r}")
                current[2].append((parts[2], parts[1]))
        else:
            raise PlyError(f"unrecognized header line: {line!r}")
    if fmt is None:
        raise PlyError("header missing format line")
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise PlyError("header has no vertex element")
    vi = names.index("vertex")
    for name, count, _props in elements[:vi]:
        if count > 0:
            raise PlyError(f"element {name!r} precedes vertex data; unsupported layout")
    _, count, props = elements[vi]
    for pname, ptype in props:
        if ptype == "list":
            raise PlyError(f"list property {pname!r} on vertex element is unsupported")
        if ptype not in _PLY_DTYPES:
            raise PlyError(f"unsupported property type {ptype!r}")
    return fmt, count, props


def load_ply(path) -> PointCloud:
    """Load an ASCII or binary-little-endian PLY file.

    Requires x, y, z vertex properties. Optional red/green/blue (8-bit,
    rescaled to [0, 1]), a single intensity channel (replicated to RGB),
    and nx/ny/nz normals. Files without color default to mid-gray.
    """
    path = Path(path)
    with open(path, "rb") as f:
        fmt, count, props = _parse_ply_header(f)
        if count < 1:
            raise PlyError("vertex element is empty")
        names = [p[0] for p in props]
        for need in ("x", "y", "z"):
            if need not in names:
                raise PlyError(f"vertex element lacks {need!r}")
        if fmt == "ascii":
            data = np.loadtxt(f, dtype=np.float64, max_rows=count, ndmin=2)
            if data.shape[0] != count or data.shape[1] != len(props):
                raise PlyError(
                    f"vertex count mismatch: header says {count}, "
                    f"file holds {data.shape}"
                )
            columns = {name: data[:, i] for i, (name, _t) in enumerate(props)}
            types = dict(props)
        else:
            dtype = np.dtype([(name, "<" + _PLY_DTYPES[t]) for name, t in props])
            raw = f.read(dtype.itemsize * count)
            if len(raw) != dtype.itemsize * count:
                raise PlyError(
                    f"vertex count mismatch: header says {count}, "
                    f"file holds {len(raw) // dtype.itemsize}"
                )
            rec = np.frombuffer(raw, dtype=dtype, count=count)
            columns = {name: rec[name] for name, _t in props}
            types = dict(props)

    positions = np.column_stack(
        [np.asarray(columns[c], dtype=np.float64) for c in ("x", "y", "z")]
    )
    colors = None
    if all(c in columns for c in ("red", "green", "blue")):
        rgb = np.column_stack(
            [np.asarray(columns[c], dtype=np.float64) for c in ("red", "green", "blue")]
        )
        colors = np.clip(rgb / 255.0, 0.0, 1.0)
    elif "intensity" in columns:
        it = types["intensity"]
        intensity = np.asarray(columns["intensity"], dtype=np.float64)
        if it in ("uchar", "uint8"):
            intensity = intensity / 255.0
        elif it in ("ushort", "uint16"):
            intensity = intensity / 65535.0
        colors = np.clip(np.repeat(intensity[:, None], 3, axis=1), 0.0, 1.0)
    normals = None
    if all(c in columns for c in ("nx", "ny", "nz")):
        normals = np.column_stack(
            [np.asarray(columns[c], dtype=np.float64) for c in ("nx", "ny", "nz")]
        )
        lengths = np.linalg.norm(normals, axis=1)
        normals = normals / np.where(lengths > 0, lengths, 1.0)[:, None]
    return PointCloud(positions=positions, colors=colors, normals=normals)


def write_ply(cloud: PointCloud, path, binary: bool = True,
              colors: np.ndarray = None) -> None:
    """Write positions as 32-bit floats, colors as 8-bit unsigned.

    ``colors`` overrides the cloud's own colors (expects uint8 (n, 3)).
    Normals are written when the cloud carries them.
    """
    if colors is None:
        colors_u8 = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.uint8)
    else:
        colors_u8 = np.asarray(colors, dtype=np.uint8)
    fields = [
        ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
        ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ]
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {cloud.n}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
    ]
    if cloud.normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
        header += ["property float nx", "property float ny", "property float nz"]
    header.append("end_header")
    rec = np.empty(cloud.n, dtype=np.dtype(fields))
    pos32 = cloud.positions.astype(np.float32)
    rec["x"], rec["y"], rec["z"] = pos32[:, 0], pos32[:, 1], pos32[:, 2]
    rec["red"], rec["green"], rec["blue"] = (
        colors_u8[:, 0], colors_u8[:, 1], colors_u8[:, 2],
    )
    if cloud.normals is not None:
        nrm32 = cloud.normals.astype(np.float32)
        rec["nx"], rec["ny"], rec["nz"] = nrm32[:, 0], nrm32[:, 1], nrm32[:, 2]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec.tofile(f)
        else:
            cols = [rec[name] for name, _ in fields]
            for row in zip(*cols):
                f.write((" ".join(repr(v.item()) if v.dtype.kind == "f"
                                  else str(v.item()) for v in row) + "\n"
                         ).encode("ascii"))


def label_colors(labels: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-random uint8 RGB per label (splitmix64 mix)."""
    x = (np.asarray(labels, dtype=np.uint64) + np.uint64(1)) * np.uint64(
        0x9E3779B97F4A7C15
    )
    with np.errstate(over="ignore"):
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    out = np.empty(z.shape + (3,), dtype=np.uint8)
    out[..., 0] = (z & np.uint64(0xFF)).astype(np.uint8)
    out[..., 1] = ((z >> np.uint64(8)) & np.uint64(0xFF)).astype(np.uint8)
    out[..., 2] = ((z >> np.uint64(16)) & np.uint64(0xFF)).astype(np.uint8)
    return out


def write_segmented_ply(cloud: PointCloud, seg, path, binary: bool = True) -> None:
    """Write the cloud with one deterministic color per segment label."""
    labels = np.asarray(seg.labels)
    if labels.shape[0] != cloud.n:
        raise ValueError("segmentation does not cover the cloud")
    write_ply(cloud, path, binary=binary, colors=label_colors(labels))


# ---------------------------------------------------------------------------
# RGB-D ingestion
# ---------------------------------------------------------------------------

def backproject_depth(depth: np.ndarray, rgb: np.ndarray,
                      intr: CameraIntrinsics) -> PointCloud:
    """Back-project a raw 16-bit depth image through pinhole intrinsics.

    Raw value 0 marks invalid depth; those pixels are excluded from the
    cloud and stay unmapped in the grid. The sensor origin (0, 0, 0) is
    recorded as the viewpoint for normal orientation.
    """
    depth = np.asarray(depth)
    rgb = np.asarray(rgb)
    if depth.ndim != 2:
        raise ValueError("depth must be a single-channel image")
    if rgb.shape[:2] != depth.shape:
        raise ValueError(
            f"depth {depth.shape} and rgb {rgb.shape[:2]} dimensions differ"
        )
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("rgb must be (H, W, 3)")
    valid = depth > 0
    if not valid.any():
        raise ValueError("depth image has no valid pixels")
    rows, cols = np.nonzero(valid)
    z = depth[rows, cols].astype(np.float64) * intr.depth_scale
    x = (cols.astype(np.float64) - intr.cx) * z / intr.fx
    y = (rows.astype(np.float64) - intr.cy) * z / intr.fy
    positions = np.column_stack([x, y, z])
    if rgb.dtype == np.uint8:
        colors = rgb[rows, cols].astype(np.float64) / 255.0
    else:
        colors = np.clip(rgb[rows, cols].astype(np.float64), 0.0, 1.0)
    pixel_to_point = np.full(depth.shape, -1, dtype=np.int64)
    pixel_to_point[rows, cols] = np.arange(rows.size)
    mapping = GridMapping(
        pixel_to_point=pixel_to_point,
        point_to_pixel=np.column_stack([rows, cols]),
    )
    return PointCloud(
        positions=positions,
        colors=colors,
        grid=mapping,
        viewpoint=np.zeros(3),
    )


# ---------------------------------------------------------------------------
# Image loading
# ---------------------------------------------------------------------------

def load_depth_image(path) -> np.ndarray:
    """Load a 16-bit single-channel depth image (PNG or PGM)."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ValueError(f"cannot read image {path}")
    if img.ndim != 2 or img.dtype != np.uint16:
        raise ValueError(
            f"unsupported bit depth for {path}: want 16-bit single-channel, "
            f"got dtype={img.dtype} shape={img.shape}"
        )
    return img


def load_rgb_image(path) -> np.ndarray:
    """Load an 8-bit RGB image (converted from OpenCV's BGR order)."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise ValueError(f"cannot read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def load_label_image(path) -> LabelImage:
    """Load a 16-bit single-channel image of segment ids, used verbatim."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ValueError(f"cannot read image {path}")
    if img.ndim != 2 or img.dtype != np.uint16:
        raise ValueError(
            f"unsupported bit depth for {path}: want 16-bit single-channel, "
            f"got dtype={img.dtype} shape={img.shape}"
        )
    return LabelImage(img.astype(np.int64))
