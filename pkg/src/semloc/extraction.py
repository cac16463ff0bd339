"""Semantic + depth frames to graph vertices.

Pixel coordinates follow the image convention: ``u`` is the column index,
``v`` the row index. The camera looks along +z.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from semloc._backend import kernels
from semloc.errors import InputError, InvalidDepthError
from semloc.graph import RigidTransform, SemanticVertex, read_reals

DEFAULT_MIN_BLOB_SIZE = 50
DEFAULT_MERGE_RADIUS = 1.5


@dataclass(frozen=True, eq=False)
class LabeledFrame:
    semantic: np.ndarray
    depth: np.ndarray
    intrinsics: tuple[float, float, float, float]
    pose: RigidTransform

    def __post_init__(self):
        sem = np.asarray(self.semantic)
        depth = np.asarray(self.depth, dtype=np.float64)
        if sem.ndim != 2 or sem.shape != depth.shape:
            raise InputError(f"semantic {sem.shape} and depth {depth.shape} must be equal 2D grids")
        if not np.issubdtype(sem.dtype, np.integer):
            if not np.all(sem == np.round(sem)):
                raise InputError("semantic labels must be integers")
        fx, fy, cx, cy = (float(x) for x in self.intrinsics)
        if not (fx > 0 and fy > 0):
            raise InputError("fx and fy must be positive")
        object.__setattr__(self, "semantic", np.ascontiguousarray(sem, dtype=np.int64))
        object.__setattr__(self, "depth", np.ascontiguousarray(depth))
        object.__setattr__(self, "intrinsics", (fx, fy, cx, cy))


@dataclass(frozen=True)
class Blob:
    label: int
    pixel_count: int
    centroid_px: tuple[float, float]
    depth_m: float


def components(frame, ignored_labels=()):
    """Component id per pixel (-1 for ignored labels) and component count."""
    keep = ~np.isin(frame.semantic, list(ignored_labels))
    return kernels.label_components(frame.semantic, np.ascontiguousarray(keep, dtype=np.uint8))


def segment(frame, min_blob_size=DEFAULT_MIN_BLOB_SIZE, ignored_labels=()):
    """Seed-fill the semantic image into blobs.

    Blobs are maximal 4-connected regions of one label. The centroid is the
    mean pixel coordinate over the whole region, the depth the median over
    its valid (positive, finite) depth pixels. Regions smaller than
    ``min_blob_size`` or without valid depth are dropped. Output order is
    the raster order of each region's first pixel.
    """
    comp, n = components(frame, ignored_labels)
    if n == 0:
        return []
    flat = comp.ravel()
    kept = flat >= 0
    ids = flat[kept]
    rows, cols = np.divmod(np.flatnonzero(kept), comp.shape[1])
    counts = np.bincount(ids, minlength=n)
    u = np.bincount(ids, weights=cols, minlength=n) / counts
    v = np.bincount(ids, weights=rows, minlength=n) / counts
    labels = np.zeros(n, dtype=np.int64)
    labels[ids] = frame.semantic.ravel()[kept]

    depth = frame.depth.ravel()[kept]
    valid = np.isfinite(depth) & (depth > 0)
    vid, vdepth = ids[valid], depth[valid]
    order = np.lexsort((vdepth, vid))
    vid, vdepth = vid[order], vdepth[order]
    starts = np.searchsorted(vid, np.arange(n), side="left")
    ends = np.searchsorted(vid, np.arange(n), side="right")

    blobs = []
    for k in range(n):
        if counts[k] < min_blob_size or ends[k] == starts[k]:
            continue
        blobs.append(Blob(int(labels[k]), int(counts[k]), (float(u[k]), float(v[k])),
                          float(np.median(vdepth[starts[k]:ends[k]]))))
    return blobs


def backproject(blob, frame):
    d = blob.depth_m
    if not (d > 0 and np.isfinite(d)):
        raise InvalidDepthError(f"blob depth must be positive, got {d}")
    fx, fy, cx, cy = frame.intrinsics
    u, v = blob.centroid_px
    cam = np.array([(u - cx) * d / fx, (v - cy) * d / fy, d])
    p = frame.pose.apply(cam)
    return SemanticVertex(0, blob.label, tuple(float(c) for c in p))


def reproject(position, frame):
    """Inverse of :func:`backproject`: map-frame point to ``(u, v, depth)``."""
    fx, fy, cx, cy = frame.intrinsics
    x, y, z = frame.pose.inverse().apply(np.asarray(position, dtype=np.float64))
    return (fx * x / z + cx, fy * y / z + cy, z)


def merge_vertices(observations, merge_radius=DEFAULT_MERGE_RADIUS):
    """Greedy order-dependent fusion of repeated observations.

    Each observation joins the first cluster of the same label whose running
    mean lies within ``merge_radius``; otherwise it opens a new cluster.
    Output vertices are numbered in cluster-creation order.
    """
    if not merge_radius > 0:
        raise InputError("merge_radius must be positive")
    sums, counts, labels = [], [], []
    by_label = {}
    for ob in observations:
        p = np.asarray(ob.position, dtype=np.float64)
        for k in by_label.get(ob.label, ()):
            if np.linalg.norm(sums[k] / counts[k] - p) <= merge_radius:
                sums[k] = sums[k] + p
                counts[k] += 1
                break
        else:
            by_label.setdefault(ob.label, []).append(len(sums))
            sums.append(p.copy())
            counts.append(1)
            labels.append(ob.label)
    return [
        SemanticVertex(i, labels[i], tuple(float(c) for c in sums[i] / counts[i]))
        for i in range(len(sums))
    ]


def extract_vertices(frames, min_blob_size=DEFAULT_MIN_BLOB_SIZE, ignored_labels=(),
                     merge_radius=DEFAULT_MERGE_RADIUS):
    observations = []
    for frame in frames:
        observations.extend(backproject(b, frame) for b in segment(frame, min_blob_size, ignored_labels))
    return merge_vertices(observations, merge_radius)


# --- frame files ----------------------------------------------------------

def read_grid_csv(path):
    try:
        return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def read_semantic(path):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        try:
            with Image.open(path) as im:
                return np.asarray(im, dtype=np.int64)
        except OSError as exc:
            raise InputError(f"{path}: {exc}") from None
    grid = read_grid_csv(path)
    if not np.all(grid == np.round(grid)):
        raise InputError(f"{path}: semantic labels must be integers")
    return grid.astype(np.int64)


def write_pgm(path, labels):
    """Binary (P5) PGM writer, 8 or 16 bit depending on the largest label."""
    labels = np.asarray(labels)
    maxval = max(int(labels.max(initial=0)), 1)
    dtype = "u1" if maxval < 256 else ">u2"
    header = f"P5\n{labels.shape[1]} {labels.shape[0]}\n{255 if maxval < 256 else 65535}\n".encode()
    Path(path).write_bytes(header + labels.astype(dtype).tobytes())


def write_grid_csv(path, grid):
    np.savetxt(path, np.asarray(grid), delimiter=",", fmt="%.17g")


def read_frame_meta(path):
    """``fx fy cx cy`` followed by a row-major 3x4 camera-to-map pose."""
    vals = read_reals(path, 16)
    return tuple(vals[:4]), RigidTransform.from_matrix34(vals[4:])


def write_frame_meta(path, intrinsics, pose):
    rows = [" ".join(repr(float(x)) for x in intrinsics)]
    rows += [" ".join(repr(float(x)) for x in r) for r in pose.matrix34()]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_frame(semantic_path, depth_path, meta_path):
    intrinsics, pose = read_frame_meta(meta_path)
    return LabeledFrame(read_semantic(semantic_path), read_grid_csv(depth_path), intrinsics, pose)


def read_manifest(path):
    """Frame triples ``semantic depth meta``, paths relative to the manifest."""
    path = Path(path)
    triples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected 'semantic depth meta'")
        triples.append(tuple(path.parent / p for p in parts))
    return triples
