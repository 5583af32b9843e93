from __future__ import annotations

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.spatial import ConvexHull, QhullError

from detlattice.domain import CellRecord, LabeledVolume, LatticeGraph, TriMesh
from detlattice.errors import CellExtractionError, DegenerateGeometryError
from detlattice.graph import to_networkx
from detlattice.spatial import PointIndex
from detlattice.volume import connected_components

logger = logging.getLogger(__name__)

COPLANAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ExtractedCell:
    node_ids: tuple[int, ...]
    mesh: TriMesh
    record: CellRecord


def _check_hull_input(points: np.ndarray) -> float:
    if points.shape[0] < 4:
        raise DegenerateGeometryError("convex hull needs at least 4 points")
    if not np.all(np.isfinite(points)):
        raise DegenerateGeometryError("points must be finite")
    diagonal = float(np.linalg.norm(np.ptp(points, axis=0)))
    if diagonal == 0.0:
        raise DegenerateGeometryError("points coincide")
    centered = points - points.mean(axis=0)
    normal = np.linalg.svd(centered, full_matrices=False)[2][-1]
    if np.max(np.abs(centered @ normal)) <= COPLANAR_TOL * diagonal:
        raise DegenerateGeometryError("points are coplanar")
    return diagonal


def _hull(points: np.ndarray) -> tuple[TriMesh, np.ndarray]:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    _check_hull_input(points)
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateGeometryError(f"degenerate hull input: {exc}") from exc

    used = np.unique(hull.simplices)
    remap = np.full(points.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    vertices = points[used]
    faces = remap[hull.simplices]

    # Qhull winding is arbitrary; point every face away from an interior point.
    inside = vertices.mean(axis=0)
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    normals = np.cross(b - a, c - a)
    outward = np.einsum("ij,ij->i", normals, (a + b + c) / 3.0 - inside) > 0
    faces[~outward] = faces[~outward][:, [0, 2, 1]]
    return TriMesh(vertices, faces), used


def convex_hull(points: np.ndarray) -> TriMesh:
    return _hull(points)[0]


def check_closed_manifold(mesh: TriMesh) -> None:
    faces = mesh.faces
    if faces.shape[0] < 4:
        raise DegenerateGeometryError("mesh is not closed")
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    n = np.int64(mesh.vertices.shape[0])
    forward = directed[:, 0] * n + directed[:, 1]
    backward = directed[:, 1] * n + directed[:, 0]
    if np.unique(forward).size != forward.size:
        raise DegenerateGeometryError("mesh has inconsistent orientation or non-manifold edges")
    if not np.array_equal(np.sort(forward), np.sort(backward)):
        raise DegenerateGeometryError("mesh is not closed")


def _signed_volume(mesh: TriMesh) -> float:
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def mesh_volume(mesh: TriMesh) -> float:
    check_closed_manifold(mesh)
    volume = abs(_signed_volume(mesh))
    if volume <= 0.0:
        raise DegenerateGeometryError("mesh encloses no volume")
    return volume


def mesh_surface_area(mesh: TriMesh) -> float:
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())


def axis_extents(mesh: TriMesh) -> tuple[float, float, float]:
    if mesh.vertices.shape[0] == 0:
        raise ValueError("empty mesh")
    lx, ly, lz = np.ptp(mesh.vertices, axis=0)
    return float(lx), float(ly), float(lz)


def aspect_ratios(lx: float, ly: float, lz: float) -> tuple[float, float, float]:
    if not (lx > 0 and ly > 0 and lz > 0):
        raise DegenerateGeometryError("zero extent")
    return lx / ly, lx / lz, ly / lz


def measure_cell(cell_id: int, mesh: TriMesh, node_ids: tuple[int, ...] = ()) -> CellRecord:
    volume = mesh_volume(mesh)
    lx, ly, lz = axis_extents(mesh)
    ar1, ar2, ar3 = aspect_ratios(lx, ly, lz)
    return CellRecord(
        cell_id=cell_id,
        lx=lx,
        ly=ly,
        lz=lz,
        volume=volume,
        ar1=ar1,
        ar2=ar2,
        ar3=ar3,
        node_ids=tuple(node_ids),
    )


def interior_voids(volume: LabeledVolume) -> list[np.ndarray]:
    """Flat voxel indices of each enclosed background component, in discovery order."""
    background = LabeledVolume(volume.spec, (volume.labels == 0).astype(np.uint32))
    components = connected_components(background, connectivity=6).labels
    faces = [
        components[0], components[-1],
        components[:, 0], components[:, -1],
        components[:, :, 0], components[:, :, -1],
    ]
    touching = np.unique(np.concatenate([f.ravel() for f in faces]))
    flat = components.ravel()
    inside = np.flatnonzero((flat != 0) & ~np.isin(flat, touching))
    if inside.size == 0:
        return []
    order = np.argsort(flat[inside], kind="stable")
    voxels = inside[order]
    _, starts = np.unique(flat[voxels], return_index=True)
    return np.split(voxels, starts[1:])


def extract_cells(
    graph: LatticeGraph,
    volume: LabeledVolume,
    tau_cell: float,
    min_nodes: int = 6,
    *,
    require_cells: bool = False,
) -> list[ExtractedCell]:
    if min_nodes < 4:
        raise ValueError("min_nodes must be >= 4")
    if not tau_cell > 0:
        raise ValueError("tau_cell must be > 0")
    spec = volume.spec
    points = graph.nodes.points
    topology = to_networkx(graph)
    voids = interior_voids(volume)
    logger.info("found %d interior voids", len(voids))

    cells: list[ExtractedCell] = []
    for void_no, voxels in enumerate(voids, start=1):
        if points.shape[0] == 0:
            break
        zyx = np.column_stack(np.unravel_index(voxels, spec.shape))
        near = PointIndex(spec.centers_from_zyx(zyx)).nearest_distances(points)
        nodes = np.flatnonzero(near <= tau_cell)
        if nodes.size < min_nodes:
            logger.debug("void %d: %d nodes, need %d", void_no, nodes.size, min_nodes)
            continue
        if not nx.is_connected(topology.subgraph(nodes.tolist())):
            logger.warning("void %d: node subgraph is disconnected, skipped", void_no)
            continue
        try:
            mesh, used = _hull(points[nodes])
        except DegenerateGeometryError as exc:
            logger.warning("void %d: %s, skipped", void_no, exc)
            continue
        node_ids = tuple(int(n) for n in nodes[used])
        record = measure_cell(len(cells) + 1, mesh, node_ids)
        cells.append(ExtractedCell(tuple(int(n) for n in nodes), mesh, record))

    if not cells:
        if require_cells:
            raise CellExtractionError("no qualifying voids")
        logger.warning("no qualifying voids; 0 cells extracted")
    logger.info("extracted %d cells", len(cells))
    return cells
