from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy import ndimage

from detlattice.domain import CentroidTable, LabeledVolume, ScalarField

logger = logging.getLogger(__name__)

DENSE_LOOKUP_LIMIT = 1 << 24


def threshold_field(field: ScalarField, t: float) -> LabeledVolume:
    if not math.isfinite(t):
        raise ValueError("threshold must be finite")
    return LabeledVolume(field.spec, (field.values >= t).astype(np.uint32))


def max_trace(fields: Sequence[ScalarField]) -> ScalarField:
    """Element-wise maximum over snapshots: the lattice left behind by the front."""
    if not fields:
        raise ValueError("no snapshots")
    spec = fields[0].spec
    peak = np.array(fields[0].values, dtype=np.float64, copy=True)
    for snapshot in fields[1:]:
        if snapshot.spec != spec:
            raise ValueError("snapshot grid mismatch")
        np.maximum(peak, snapshot.values, out=peak)
    return ScalarField(spec, peak)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise ValueError("connectivity must be 6 or 26")


def scan_order_relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber nonzero IDs 1..M by first appearance in x-fastest scan order."""
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    ids, first = ids[keep], first[keep]
    lookup = np.zeros(int(ids.max()) + 1 if ids.size else 1, dtype=np.uint32)
    lookup[ids[np.argsort(first, kind="stable")]] = np.arange(1, ids.size + 1, dtype=np.uint32)
    return lookup[labels]


def connected_components(volume: LabeledVolume, connectivity: int = 6) -> LabeledVolume:
    if volume.labels.size and volume.labels.max() > 1:
        raise ValueError("connected_components expects a binary volume")
    components, count = ndimage.label(volume.labels > 0, structure=_structure(connectivity))
    logger.debug("found %d components (%d-connectivity)", count, connectivity)
    return LabeledVolume(volume.spec, scan_order_relabel(components))


def instance_sizes(volume: LabeledVolume) -> dict[int, int]:
    ids, counts = np.unique(volume.labels, return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts) if i != 0}


def remove_small_instances(
    volume: LabeledVolume, min_voxels: int, *, relabel: bool = False
) -> LabeledVolume:
    if min_voxels < 1:
        raise ValueError("min_voxels must be >= 1")
    ids, inverse, counts = np.unique(volume.labels, return_inverse=True, return_counts=True)
    keep = (ids != 0) & (counts >= min_voxels)
    removed = int(np.count_nonzero((ids != 0) & ~keep))
    if relabel:
        lookup = np.zeros(ids.size, dtype=np.uint32)
        lookup[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.uint32)
    else:
        lookup = np.where(keep, ids, 0).astype(np.uint32)
    labels = lookup[inverse.reshape(volume.labels.shape)]
    if removed:
        logger.info("removed %d instances below %d voxels", removed, min_voxels)
    return LabeledVolume(volume.spec, labels)


def _bounding_boxes(volume: LabeledVolume) -> dict[int, tuple[slice, slice, slice]]:
    ids = volume.label_ids()
    if ids.size == 0:
        return {}
    if ids.max() < DENSE_LOOKUP_LIMIT:
        dense = np.zeros(int(ids.max()) + 1, dtype=np.int64)
        dense[ids] = np.arange(1, ids.size + 1)
        compact = dense[volume.labels]
    else:
        compact = np.where(volume.labels > 0, np.searchsorted(ids, volume.labels) + 1, 0)
    boxes = ndimage.find_objects(compact)
    return {int(label): box for label, box in zip(ids, boxes)}


def _label_patch(
    volume: LabeledVolume, label: int, box: tuple[slice, slice, slice]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """EDT of one label on its bounding box grown by one voxel.

    Out-of-grid voxels in the grown ring count as background one spacing beyond
    the boundary face. Any non-label voxel outside the ring is farther than the
    ring itself, so the patch result is exact.
    """
    lo = np.array([s.start for s in box]) - 1
    hi = np.array([s.stop for s in box]) + 1
    mask = np.zeros(tuple(hi - lo), dtype=bool)
    mask[1:-1, 1:-1, 1:-1] = volume.labels[box] == label
    dt = ndimage.distance_transform_edt(mask, sampling=volume.spec.sampling_zyx)
    return mask, dt, lo


def label_edt(volume: LabeledVolume, label: int) -> ScalarField:
    box = _bounding_boxes(volume).get(int(label))
    if box is None:
        raise KeyError(f"label {label} not found")
    mask, dt, lo = _label_patch(volume, label, box)
    values = np.zeros(volume.spec.shape, dtype=np.float64)
    values[box] = dt[1:-1, 1:-1, 1:-1]
    return ScalarField(volume.spec, values)


def _centers(volume: LabeledVolume, label: int, box) -> tuple[np.ndarray, np.ndarray]:
    mask, dt, lo = _label_patch(volume, label, box)
    zyx = np.argwhere(mask)
    weights = dt[mask]
    spec = volume.spec

    # Weighted mean in index space first, then map to physical coordinates.
    mean_idx = (zyx * weights[:, None]).sum(axis=0) / weights.sum()
    dt_center = spec.centers_from_zyx((mean_idx + lo)[None, :])[0]

    # argmax over C-order picks the smallest (k, j, i) among ties.
    peak = np.unravel_index(int(np.argmax(np.where(mask, dt, -1.0))), dt.shape)
    lis = spec.centers_from_zyx((np.array(peak) + lo)[None, :])[0]
    return dt_center, lis


def dt_weighted_center(volume: LabeledVolume, label: int) -> np.ndarray:
    box = _bounding_boxes(volume).get(int(label))
    if box is None:
        raise KeyError(f"label {label} not found")
    return _centers(volume, label, box)[0]


def lis_center(volume: LabeledVolume, label: int) -> np.ndarray:
    box = _bounding_boxes(volume).get(int(label))
    if box is None:
        raise KeyError(f"label {label} not found")
    return _centers(volume, label, box)[1]


def centroid_table(volume: LabeledVolume, *, workers: int = 1) -> CentroidTable:
    boxes = _bounding_boxes(volume)
    if not boxes:
        raise ValueError("volume has no instances")
    labels = sorted(boxes)

    def centroid(label: int) -> np.ndarray:
        dt_center, lis = _centers(volume, label, boxes[label])
        return 0.5 * (dt_center + lis)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(centroid, labels))
    else:
        points = [centroid(label) for label in labels]
    logger.info("computed %d centroids", len(labels))
    return CentroidTable(np.array(points), labels)
