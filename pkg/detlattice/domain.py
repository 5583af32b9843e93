from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

Vec3 = tuple[float, float, float]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _triple(values: Sequence[float], name: str, cast=float) -> tuple:
    items = tuple(cast(v) for v in values)
    if len(items) != 3:
        raise ValueError(f"{name} must have 3 components")
    return items


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, int, int]
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", _triple(self.dims, "dims", int))
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _triple(self.origin, "origin"))
        if any(n < 1 for n in self.dims):
            raise ValueError("dims must be >= 1")
        if not all(np.isfinite(s) and s > 0 for s in self.spacing):
            raise ValueError("spacing must be finite and > 0")
        if not all(np.isfinite(o) for o in self.origin):
            raise ValueError("origin must be finite")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx); C order keeps x fastest."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def sampling_zyx(self) -> tuple[float, float, float]:
        dx, dy, dz = self.spacing
        return (dz, dy, dx)

    def centers_from_zyx(self, zyx: np.ndarray) -> np.ndarray:
        """Physical (x, y, z) centers for an (M, 3) array of (k, j, i) indices."""
        idx = np.asarray(zyx, dtype=np.float64)[:, ::-1]
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def translated(self, offset: Sequence[float]) -> GridSpec:
        origin = tuple(o + float(t) for o, t in zip(self.origin, offset))
        return GridSpec(self.dims, self.spacing, origin)


@dataclass(frozen=True, eq=False)
class LabeledVolume:
    spec: GridSpec
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.size != self.spec.n_voxels:
            raise ValueError("payload length mismatch")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be unsigned")
        labels = labels.astype(np.uint32, copy=False).reshape(self.spec.shape)
        object.__setattr__(self, "labels", _frozen(labels))

    def label_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids != 0]

    @property
    def n_instances(self) -> int:
        return int(self.label_ids().size)


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.size != self.spec.n_voxels:
            raise ValueError("payload length mismatch")
        values = values.astype(np.float64, copy=False).reshape(self.spec.shape)
        object.__setattr__(self, "values", _frozen(values))


@dataclass(frozen=True, eq=False)
class CentroidTable:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if points.shape[0] != labels.shape[0]:
            raise ValueError("points and labels differ in length")
        if np.unique(labels).size != labels.size:
            raise ValueError("labels must be distinct")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return int(self.labels.size)


class Axis(str, Enum):
    POS_X = "+X"
    NEG_X = "-X"
    POS_Y = "+Y"
    NEG_Y = "-Y"
    POS_Z = "+Z"
    NEG_Z = "-Z"

    @property
    def index(self) -> int:
        return "XYZ".index(self.value[1])

    @property
    def sign(self) -> int:
        return 1 if self.value[0] == "+" else -1

    @property
    def lateral(self) -> tuple[int, int]:
        return {0: (1, 2), 1: (0, 2), 2: (0, 1)}[self.index]

    @property
    def unit(self) -> np.ndarray:
        d = np.zeros(3)
        d[self.index] = self.sign
        return d


class AxialMetric(str, Enum):
    BIN = "bin"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class BetweenGate:
    s_vox: float = 0.5
    r_vox: float = 1.5
    phi_min: float = 0.6

    def __post_init__(self) -> None:
        if not self.s_vox > 0 or not self.r_vox > 0:
            raise ValueError("s_vox and r_vox must be > 0")
        if not 0.0 <= self.phi_min <= 1.0:
            raise ValueError("phi_min must lie in [0, 1]")


@dataclass(frozen=True)
class GraphParams:
    bin_grids: Vec3
    axis: Axis = Axis.POS_X
    a_max: int = 3
    r_side: int = 2
    k: int = 4
    deg_max: int = 6
    reverse_pass: bool = False
    cluster_tau: float | None = None
    between: BetweenGate | None = None
    axial_metric: AxialMetric = AxialMetric.CONTINUOUS
    extra_axes: tuple[Axis, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "bin_grids", _triple(self.bin_grids, "bin_grids"))
        object.__setattr__(self, "axis", Axis(self.axis))
        object.__setattr__(self, "axial_metric", AxialMetric(self.axial_metric))
        object.__setattr__(self, "extra_axes", tuple(Axis(a) for a in self.extra_axes))
        if not all(np.isfinite(u) and u > 0 for u in self.bin_grids):
            raise ValueError("bin grids must be > 0")
        if self.a_max < 1:
            raise ValueError("A_max must be >= 1")
        if self.r_side < 0:
            raise ValueError("R_side must be >= 0")
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.deg_max < 1:
            raise ValueError("deg_max must be >= 1")
        if self.cluster_tau is not None and not self.cluster_tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def axes(self) -> tuple[Axis, ...]:
        return (self.axis, *self.extra_axes)

    @property
    def gates_enabled(self) -> bool:
        return self.cluster_tau is not None or self.between is not None


@dataclass(frozen=True, eq=False)
class BinCoords:
    ijk: np.ndarray
    axis: Axis

    @property
    def a(self) -> np.ndarray:
        return self.ijk[:, self.axis.index]

    @property
    def u(self) -> np.ndarray:
        return self.ijk[:, self.axis.lateral[0]]

    @property
    def v(self) -> np.ndarray:
        return self.ijk[:, self.axis.lateral[1]]

    @property
    def sgn(self) -> int:
        return self.axis.sign


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    length: float

    def __post_init__(self) -> None:
        if not self.i < self.j:
            raise ValueError("edge requires i < j")


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    nodes: CentroidTable
    edges: tuple[Edge, ...]
    deg: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "deg", _frozen(np.asarray(self.deg, dtype=np.int64)))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", _frozen(vertices))
        object.__setattr__(self, "faces", _frozen(faces))


@dataclass(frozen=True)
class CellRecord:
    cell_id: int
    lx: float
    ly: float
    lz: float
    volume: float
    ar1: float
    ar2: float
    ar3: float
    node_ids: tuple[int, ...] = field(default=())

    @property
    def n_vertices(self) -> int:
        return len(self.node_ids)


@dataclass(frozen=True)
class SummaryStats:
    mu: float
    sigma: float
    median: float
    cv: float | None
    p5: float
    p95: float
    n: int


@dataclass(frozen=True)
class BoxplotStats:
    median: float
    mean: float
    whisker_lo: float
    whisker_hi: float


@dataclass(frozen=True, eq=False)
class DensityCurve1D:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    scale: float


@dataclass(frozen=True, eq=False)
class DensityGrid2D:
    x_grid: np.ndarray
    y_grid: np.ndarray
    density: np.ndarray
    bandwidths: tuple[float, float]
    scale: float
    log_x: bool = False


@dataclass(frozen=True)
class EllipsoidLatticeConfig:
    n_x: int = 60
    layout: tuple[int, int, int] = (5, 4, 3)
    semi_axes: Vec3 = (0.45, 0.40, 0.35)
    base_n: int = 240
    center_jitter: float = 0.04
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "layout", _triple(self.layout, "layout", int))
        object.__setattr__(self, "semi_axes", _triple(self.semi_axes, "semi_axes"))
        if self.n_x < 8:
            raise ValueError("n_x must be >= 8")
        if self.base_n < 1:
            raise ValueError("base_n must be >= 1")
        if any(c < 1 for c in self.layout):
            raise ValueError("layout counts must be >= 1")
        if not all(0 < s <= 0.5 for s in self.semi_axes):
            raise ValueError("semi-axes must lie in (0, 0.5] of pitch")
        if not 0 <= self.center_jitter < 0.5:
            raise ValueError("center_jitter must lie in [0, 0.5)")

    @property
    def n_objects(self) -> int:
        cx, cy, cz = self.layout
        return cx * cy * cz


@dataclass(frozen=True)
class GraphLatticeConfig:
    cells: tuple[int, int, int] = (2, 2, 2)
    pitch: int = 11
    jitter: float = 0.0
    trail_radius: float = 1.0
    blob_radius: float = 3.0
    walls: bool = True
    margin: int = 2
    spacing: Vec3 = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", _triple(self.cells, "cells", int))
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing"))
        if any(c < 1 for c in self.cells):
            raise ValueError("cells per axis must be >= 1")
        if self.pitch < 5 or self.pitch % 2 == 0:
            raise ValueError("pitch must be an odd voxel count >= 5")
        if not 0 <= self.jitter < 0.3:
            raise ValueError("jitter must lie in [0, 0.3)")
        if self.trail_radius < 1 or self.blob_radius < 1:
            raise ValueError("radii must be >= 1 voxel")
        if self.margin < 1:
            raise ValueError("margin must be >= 1")

    @property
    def vertex_counts(self) -> tuple[int, int, int]:
        mx, my, mz = self.cells
        return (mx + 1, my + 1, mz + 1)


@dataclass(frozen=True, eq=False)
class EllipsoidTruth:
    ids: np.ndarray
    centers: np.ndarray
    volumes: np.ndarray
    semi_axes: np.ndarray


@dataclass(frozen=True, eq=False)
class GraphTruth:
    ids: np.ndarray
    positions: np.ndarray
    edges: tuple[tuple[int, int], ...]
