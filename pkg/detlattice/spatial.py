from __future__ import annotations

import logging
import threading

import numpy as np
from scipy.spatial import cKDTree

from detlattice.domain import LabeledVolume

logger = logging.getLogger(__name__)

LEAF_SIZE = 16


class PointIndex:
    """Exact nearest-neighbour index over a fixed 3D point set.

    Median split on the widest-spread axis (``balanced_tree``), leaves of 16.
    """

    def __init__(self, points: np.ndarray) -> None:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if points.shape[0] == 0:
            raise ValueError("empty point set")
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        self.points = points
        self._tree = cKDTree(points, leafsize=LEAF_SIZE, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def nearest_distance(self, q) -> float:
        q = np.asarray(q, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(q)):
            raise ValueError("query must be finite")
        distance, _ = self._tree.query(q, k=1)
        return float(distance)

    def nearest_distances(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if queries.shape[0] == 0:
            return np.zeros(0)
        distances, _ = self._tree.query(queries, k=1)
        return np.asarray(distances, dtype=np.float64)


def build_index(points: np.ndarray) -> PointIndex:
    return PointIndex(points)


def nearest_distance(index: PointIndex, q) -> float:
    return index.nearest_distance(q)


class LabelIndex:
    """Per-label indices over voxel centers plus one index over every labeled voxel."""

    def __init__(self, volume: LabeledVolume) -> None:
        self.volume = volume
        flat = volume.labels.ravel()
        foreground = np.flatnonzero(flat)
        if foreground.size == 0:
            raise ValueError("volume has no labeled voxels")
        order = np.argsort(flat[foreground], kind="stable")
        self._voxels = foreground[order]
        sorted_labels = flat[self._voxels]
        self._ids, self._starts = np.unique(sorted_labels, return_index=True)
        self._stops = np.append(self._starts[1:], sorted_labels.size)
        self._per_label: dict[int, PointIndex] = {}
        self._union: PointIndex | None = None
        self._lock = threading.Lock()

    def _centers(self, flat_indices: np.ndarray) -> np.ndarray:
        zyx = np.column_stack(np.unravel_index(flat_indices, self.volume.spec.shape))
        return self.volume.spec.centers_from_zyx(zyx)

    @property
    def union(self) -> PointIndex:
        with self._lock:
            if self._union is None:
                self._union = PointIndex(self._centers(self._voxels))
                logger.debug("built union index over %d voxels", len(self._union))
            return self._union

    def for_label(self, label: int) -> PointIndex:
        label = int(label)
        with self._lock:
            index = self._per_label.get(label)
            if index is None:
                pos = int(np.searchsorted(self._ids, label))
                if pos >= self._ids.size or int(self._ids[pos]) != label:
                    raise KeyError(f"label {label} not found")
                voxels = self._voxels[self._starts[pos] : self._stops[pos]]
                index = PointIndex(self._centers(voxels))
                self._per_label[label] = index
            return index
