from __future__ import annotations

import itertools
import logging
import math
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from detlattice.domain import (
    EllipsoidLatticeConfig,
    EllipsoidTruth,
    GraphLatticeConfig,
    GraphTruth,
    GridSpec,
    LabeledVolume,
)

logger = logging.getLogger(__name__)


# Ellipsoid lattice ---------------------------------------------------------------


def ellipsoid_grid(cfg: EllipsoidLatticeConfig) -> GridSpec:
    """Cubic domain of side base_n (base voxel units) sampled by n_x voxels per axis."""
    h = cfg.base_n / cfg.n_x
    return GridSpec((cfg.n_x,) * 3, (h, h, h), (h / 2,) * 3)


def ellipsoid_truth(cfg: EllipsoidLatticeConfig) -> EllipsoidTruth:
    jitter = cfg.center_jitter
    if any(s + jitter > 0.5 for s in cfg.semi_axes):
        raise ValueError("overlapping ellipsoids at configured semi-axes")
    layout = np.array(cfg.layout)
    pitch = cfg.base_n / layout
    rng = np.random.default_rng(cfg.seed)
    ids, centers = [], []
    for k, (iz, iy, ix) in enumerate(itertools.product(*(range(n) for n in cfg.layout[::-1]))):
        ids.append(k + 1)
        centers.append((np.array([ix, iy, iz]) + 0.5) * pitch)
    offsets = rng.uniform(-jitter, jitter, size=(len(ids), 3)) * pitch
    centers = np.array(centers) + offsets
    semi = np.tile(np.array(cfg.semi_axes) * pitch, (len(ids), 1))
    volumes = 4.0 / 3.0 * math.pi * semi.prod(axis=1)
    return EllipsoidTruth(np.array(ids), centers, volumes, semi)


def generate_ellipsoid_lattice(
    cfg: EllipsoidLatticeConfig,
) -> tuple[LabeledVolume, EllipsoidTruth]:
    truth = ellipsoid_truth(cfg)
    spec = ellipsoid_grid(cfg)
    h = spec.spacing[0]
    origin = spec.origin[0]
    labels = np.zeros(spec.shape, dtype=np.uint32)
    n = cfg.n_x
    for label, center, semi in zip(truth.ids, truth.centers, truth.semi_axes):
        lo = np.clip(np.ceil((center - semi - origin) / h).astype(int), 0, n - 1)
        hi = np.clip(np.floor((center + semi - origin) / h).astype(int), 0, n - 1)
        axes = [origin + np.arange(lo[a], hi[a] + 1) * h for a in range(3)]
        x = ((axes[0] - center[0]) / semi[0]) ** 2
        y = ((axes[1] - center[1]) / semi[1]) ** 2
        z = ((axes[2] - center[2]) / semi[2]) ** 2
        inside = (z[:, None, None] + y[None, :, None] + x[None, None, :]) <= 1.0
        block = labels[lo[2] : hi[2] + 1, lo[1] : hi[1] + 1, lo[0] : hi[0] + 1]
        block[inside] = label
    volume = LabeledVolume(spec, labels)
    logger.info("ellipsoid lattice n_x=%d: %d objects", n, len(truth.ids))
    return volume, truth


def predicted_volumes(volume: LabeledVolume) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Voxel-count volume and bounding-box center of every instance, by ascending ID."""
    spec = volume.spec
    max_id = int(volume.labels.max())
    if max_id == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, 3))
    # np.histogram works block by block, so 480^3 volumes are never copied whole.
    histogram, _ = np.histogram(volume.labels, bins=max_id + 1, range=(-0.5, max_id + 0.5))
    ids = np.flatnonzero(histogram)
    ids = ids[ids != 0]
    counts = histogram[ids]
    boxes = ndimage.find_objects(volume.labels, max_label=max_id)
    starts = np.array([[s.start for s in boxes[i - 1]] for i in ids], dtype=np.float64)
    stops = np.array([[s.stop for s in boxes[i - 1]] for i in ids], dtype=np.float64)
    centers = spec.centers_from_zyx((starts + stops - 1.0) / 2.0)
    voxel_volume = float(np.prod(spec.spacing))
    return ids, counts * voxel_volume, centers


def match_objects(
    predicted_centers: np.ndarray,
    true_centers: np.ndarray,
    max_distance: float | None = None,
) -> np.ndarray:
    """Index of the predicted object nearest to each true object.

    Pairs must be mutual nearest neighbours and lie within ``max_distance``;
    by default that is half the smallest spacing between true centers.
    """
    predicted_centers = np.asarray(predicted_centers, dtype=np.float64).reshape(-1, 3)
    true_centers = np.asarray(true_centers, dtype=np.float64).reshape(-1, 3)
    n = true_centers.shape[0]
    if predicted_centers.shape[0] != n or n == 0:
        raise ValueError("unmatched objects")
    true_tree = cKDTree(true_centers)
    distance, nearest = cKDTree(predicted_centers).query(true_centers, k=1)
    _, back = true_tree.query(predicted_centers, k=1)
    if not np.array_equal(back[nearest], np.arange(n)):
        raise ValueError("unmatched objects: nearest neighbours are not mutual")
    if max_distance is None and n > 1:
        gaps, _ = true_tree.query(true_centers, k=2)
        max_distance = 0.5 * float(gaps[:, 1].min())
    if max_distance is not None and float(distance.max()) > max_distance:
        worst = float(distance.max())
        raise ValueError(f"unmatched objects: center offset {worst:.6g} exceeds {max_distance:.6g}")
    return np.asarray(nearest, dtype=np.int64)


def volume_error(predicted: Sequence[float], truth: Sequence[float]) -> tuple[float, float]:
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape or truth.size == 0:
        raise ValueError("unmatched objects")
    errors = 100.0 * np.abs(predicted - truth) / truth
    std = float(errors.std(ddof=1)) if errors.size > 1 else 0.0
    return float(errors.mean()), std


def synthetic_extents(
    mean: Sequence[float], cv: float, n: int, seed: int = 0
) -> np.ndarray:
    if n < 1 or cv < 0:
        raise ValueError("n must be >= 1 and cv >= 0")
    mean = np.asarray(mean, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return rng.normal(mean, cv * mean, size=(n, mean.size))


# Graph lattice --------------------------------------------------------------------


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(points))
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _triangle_distance(points: np.ndarray, a, b, c) -> tuple[np.ndarray, float]:
    """Distance to a triangle, and the half-thickness of a 6-tunnel-free digital plane."""
    normal = np.cross(b - a, c - a)
    unit = normal / np.linalg.norm(normal)
    plane = (points - a) @ unit
    proj = points - plane[:, None] * unit
    v0, v1, v2 = b - a, c - a, proj - a
    d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
    d20, d21 = v2 @ v0, v2 @ v1
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    edges = np.minimum.reduce(
        [_segment_distance(points, a, b), _segment_distance(points, b, c), _segment_distance(points, c, a)]
    )
    return np.where(inside, np.abs(plane), edges), 0.5 * float(np.abs(unit).sum())


class _Raster:
    """Foreground mask restricted to a clip box, filled primitive by primitive."""

    def __init__(self, shape_xyz: tuple[int, int, int], clip_lo: np.ndarray, clip_hi: np.ndarray) -> None:
        self.mask = np.zeros(shape_xyz[::-1], dtype=bool)
        self.clip_lo = clip_lo
        self.clip_hi = clip_hi

    def _box(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        lo = np.maximum(np.floor(lo).astype(int), self.clip_lo)
        hi = np.minimum(np.ceil(hi).astype(int), self.clip_hi)
        if np.any(hi < lo):
            return None
        return lo, hi

    def paint(self, lo, hi, test) -> None:
        box = self._box(np.asarray(lo), np.asarray(hi))
        if box is None:
            return
        lo, hi = box
        grid = np.stack(
            np.meshgrid(*(np.arange(lo[a], hi[a] + 1) for a in range(3)), indexing="ij"), axis=-1
        )
        points = grid.reshape(-1, 3).astype(np.float64)
        hit = test(points).reshape(grid.shape[:3])
        view = self.mask[lo[2] : hi[2] + 1, lo[1] : hi[1] + 1, lo[0] : hi[0] + 1]
        view |= hit.transpose(2, 1, 0)


def graph_lattice_layout(cfg: GraphLatticeConfig) -> tuple[tuple[int, int, int], np.ndarray, np.ndarray]:
    """Grid dims (x, y, z) and the clip box of the lattice, in voxel indices."""
    half = (cfg.pitch - 1) // 2
    cells = np.array(cfg.cells)
    clip_lo = np.full(3, cfg.margin)
    clip_hi = clip_lo + 2 * half + cells * cfg.pitch
    dims = tuple(int(d) for d in clip_hi + 1 + cfg.margin)
    return dims, clip_lo, clip_hi


def generate_graph_lattice(cfg: GraphLatticeConfig) -> tuple[LabeledVolume, GraphTruth]:
    dims, clip_lo, clip_hi = graph_lattice_layout(cfg)
    half = (cfg.pitch - 1) // 2
    p = cfg.pitch
    nv = np.array(cfg.vertex_counts)
    rng = np.random.default_rng(cfg.seed)

    # Lattice indices -1..n run one ghost layer past the real vertices so trails and
    # walls continue half a pitch outward and every vertex label has the same shape.
    ext = [np.arange(-1, n + 1) for n in nv]
    ext_shape = tuple(len(e) for e in ext)
    base = clip_lo + half
    lattice = np.stack(np.meshgrid(*ext, indexing="ij"), axis=-1).astype(np.float64)
    positions = base + lattice * p
    positions += rng.uniform(-cfg.jitter, cfg.jitter, size=positions.shape) * p

    raster = _Raster(dims, clip_lo, clip_hi)
    r_trail = cfg.trail_radius
    r_blob = cfg.blob_radius
    for idx in itertools.product(*(range(n) for n in ext_shape)):
        a = positions[idx]
        for axis in range(3):
            nxt = list(idx)
            nxt[axis] += 1
            if nxt[axis] >= ext_shape[axis]:
                continue
            b = positions[tuple(nxt)]
            raster.paint(
                np.minimum(a, b) - r_trail,
                np.maximum(a, b) + r_trail,
                lambda pts, a=a, b=b: _segment_distance(pts, a, b) <= r_trail,
            )
        if not cfg.walls:
            continue
        for u, v in ((0, 1), (0, 2), (1, 2)):
            i10, i01, i11 = list(idx), list(idx), list(idx)
            i10[u] += 1
            i01[v] += 1
            i11[u] += 1
            i11[v] += 1
            if i11[u] >= ext_shape[u] or i11[v] >= ext_shape[v]:
                continue
            corners = [a, positions[tuple(i10)], positions[tuple(i11)], positions[tuple(i01)]]
            lo = np.min(corners, axis=0) - 1
            hi = np.max(corners, axis=0) + 1
            for tri in ((corners[0], corners[1], corners[2]), (corners[0], corners[2], corners[3])):

                def on_wall(pts, tri=tri):
                    dist, thickness = _triangle_distance(pts, *tri)
                    return dist <= thickness

                raster.paint(lo, hi, on_wall)

    real = tuple(slice(1, n + 1) for n in nv)
    vertices = positions[real].transpose(2, 1, 0, 3).reshape(-1, 3)
    for a in vertices:
        raster.paint(a - r_blob, a + r_blob, lambda pts, a=a: np.linalg.norm(pts - a, axis=1) <= r_blob)

    spacing = np.array(cfg.spacing)
    spec = GridSpec(dims, cfg.spacing, (0.0, 0.0, 0.0))
    labels = np.zeros(spec.shape, dtype=np.uint32)
    fg = np.argwhere(raster.mask)
    if fg.size:
        _, nearest = cKDTree(vertices * spacing).query(fg[:, ::-1] * spacing, k=1)
        labels[tuple(fg.T)] = np.asarray(nearest, dtype=np.uint32) + 1

    ids = np.arange(1, len(vertices) + 1)
    flat = np.arange(len(vertices)).reshape(tuple(nv[::-1]))
    edges: list[tuple[int, int]] = []
    for axis_zyx in range(3):
        a_idx = np.moveaxis(flat, axis_zyx, 0)
        edges.extend(zip(a_idx[:-1].ravel().tolist(), a_idx[1:].ravel().tolist()))
    edges = sorted((min(i, j), max(i, j)) for i, j in edges)
    truth = GraphTruth(ids, vertices * spacing, tuple(edges))
    logger.info(
        "graph lattice %s: %d vertices, %d edges, %d labeled voxels",
        "x".join(str(c) for c in cfg.cells),
        len(vertices),
        len(edges),
        int(raster.mask.sum()),
    )
    return LabeledVolume(spec, labels), truth
