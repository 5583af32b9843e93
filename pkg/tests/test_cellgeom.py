from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from detlattice.cellgeom import (
    aspect_ratios,
    axis_extents,
    check_closed_manifold,
    convex_hull,
    extract_cells,
    interior_voids,
    measure_cell,
    mesh_surface_area,
    mesh_volume,
)
from detlattice.domain import (
    Axis,
    BetweenGate,
    CentroidTable,
    Edge,
    GraphLatticeConfig,
    GraphParams,
    GridSpec,
    LabeledVolume,
    LatticeGraph,
    TriMesh,
)
from detlattice.errors import CellExtractionError, DegenerateGeometryError
from detlattice.graph import build_graph
from detlattice.synthgen import generate_graph_lattice
from detlattice.volume import centroid_table

CUBE = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
TETRA = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def icosphere(radius: float, levels: int) -> TriMesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    points = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(levels):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = points[a] + points[b]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    return TriMesh(np.array(points) * radius, np.array(faces))


def shell_volume(inner: int = 6, wall: int = 1) -> LabeledVolume:
    side = inner + 2 * wall
    labels = np.ones((side + 2, side + 2, side + 2), dtype=np.uint32)
    labels[0], labels[-1] = 0, 0
    labels[:, 0], labels[:, -1] = 0, 0
    labels[:, :, 0], labels[:, :, -1] = 0, 0
    lo, hi = 1 + wall, 1 + wall + inner
    labels[lo:hi, lo:hi, lo:hi] = 0
    n = side + 2
    return LabeledVolume(GridSpec((n, n, n)), labels)


def test_cube_hull():
    mesh = convex_hull(CUBE)
    assert mesh.faces.shape == (12, 3)
    assert mesh_volume(mesh) == pytest.approx(1.0, rel=1e-12)
    check_closed_manifold(mesh)


def test_tetrahedron_hull():
    mesh = convex_hull(TETRA)
    assert mesh.faces.shape == (4, 3)
    assert mesh_volume(mesh) == pytest.approx(1.0 / 6.0, rel=1e-12)


def test_faces_point_outward():
    mesh = convex_hull(CUBE + 3.0)
    v = mesh.vertices
    center = v.mean(axis=0)
    for a, b, c in mesh.faces:
        normal = np.cross(v[b] - v[a], v[c] - v[a])
        assert np.dot(normal, (v[a] + v[b] + v[c]) / 3.0 - center) > 0


def test_ball_hull_contains_points_and_matches_monte_carlo():
    rng = np.random.default_rng(31)
    directions = rng.normal(size=(500, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    points = directions * rng.uniform(0.0, 1.0, size=(500, 1)) ** (1.0 / 3.0)
    mesh = convex_hull(points)
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    normals = np.cross(b - a, c - a)
    offsets = np.einsum("ij,ij->i", normals, a)

    assert np.all(points @ normals.T <= offsets + 1e-9)

    n_samples, hits = 1_000_000, 0
    for _ in range(n_samples // 50_000):
        d = rng.normal(size=(50_000, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        samples = d * rng.uniform(0.0, 1.0, size=(50_000, 1)) ** (1.0 / 3.0)
        hits += int(np.count_nonzero(np.all(samples @ normals.T <= offsets, axis=1)))
    ball = 4.0 / 3.0 * math.pi
    assert hits / n_samples * ball == pytest.approx(mesh_volume(mesh), rel=0.01)


def test_degenerate_hull_inputs():
    with pytest.raises(DegenerateGeometryError):
        convex_hull(TETRA[:3])
    with pytest.raises(DegenerateGeometryError):
        convex_hull(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 3, 0]], dtype=float))
    with pytest.raises(DegenerateGeometryError):
        convex_hull(np.zeros((5, 3)))


def test_icosphere_volume_within_refinement_deficit():
    r = 2.0
    mesh = icosphere(r, 3)
    exact = 4.0 / 3.0 * math.pi * r**3
    volume = mesh_volume(mesh)

    assert volume < exact
    assert (exact - volume) / exact < 0.01
    hull = convex_hull(mesh.vertices)
    assert mesh_volume(hull) == pytest.approx(volume, rel=1e-9)


def test_open_mesh_is_rejected():
    mesh = convex_hull(CUBE)
    opened = TriMesh(mesh.vertices, mesh.faces[:-1])
    with pytest.raises(DegenerateGeometryError):
        mesh_volume(opened)
    flipped = TriMesh(mesh.vertices, np.vstack([mesh.faces[:-1], mesh.faces[-1:, [0, 2, 1]]]))
    with pytest.raises(DegenerateGeometryError):
        check_closed_manifold(flipped)


def test_extents_and_area():
    mesh = convex_hull(CUBE * np.array([2.0, 1.0, 0.5]))
    assert axis_extents(mesh) == (2.0, 1.0, 0.5)
    assert axis_extents(convex_hull(CUBE)) == (1.0, 1.0, 1.0)
    assert mesh_surface_area(convex_hull(CUBE)) == pytest.approx(6.0, rel=1e-12)


def test_random_hull_extents_equal_vertex_scan():
    rng = np.random.default_rng(37)
    points = rng.normal(size=(80, 3)) * np.array([3.0, 1.0, 2.0])
    mesh = convex_hull(points)
    expected = points.max(axis=0) - points.min(axis=0)
    np.testing.assert_array_equal(axis_extents(mesh), expected)


@pytest.mark.parametrize(
    ("extents", "expected"),
    [
        ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0)),
        ((2.0, 1.0, 1.0), (2.0, 2.0, 1.0)),
        ((8.36e-3, 5.30e-3, 4.82e-3), (1.577, 1.734, 1.100)),
    ],
)
def test_aspect_ratios(extents, expected):
    assert aspect_ratios(*extents) == pytest.approx(expected, abs=5e-4)


def test_aspect_ratios_reject_zero_extent():
    with pytest.raises(DegenerateGeometryError, match="zero extent"):
        aspect_ratios(1.0, 0.0, 1.0)


def test_scaling_equivariance():
    rng = np.random.default_rng(41)
    points = rng.normal(size=(40, 3))
    base = measure_cell(1, convex_hull(points))
    scaled = measure_cell(1, convex_hull(points * 3.0))

    assert scaled.lx == pytest.approx(3.0 * base.lx, rel=1e-12)
    assert scaled.lz == pytest.approx(3.0 * base.lz, rel=1e-12)
    assert scaled.volume == pytest.approx(27.0 * base.volume, rel=1e-12)
    assert scaled.ar1 == pytest.approx(base.ar1, rel=1e-12)
    assert scaled.ar3 == pytest.approx(base.ar3, rel=1e-12)


def test_hull_volume_exceeds_any_inner_tetrahedron():
    rng = np.random.default_rng(43)
    mesh = convex_hull(rng.normal(size=(30, 3)))
    volume = mesh_volume(mesh)
    v = mesh.vertices
    for idx in itertools.combinations(range(min(len(v), 10)), 4):
        a, b, c, d = v[list(idx)]
        tetra = abs(np.dot(b - a, np.cross(c - a, d - a))) / 6.0
        assert volume >= tetra


def test_hollow_shell_gives_one_cell():
    volume = shell_volume(inner=6, wall=1)
    corners = np.array(list(itertools.product((1.5, 7.5), repeat=3)))[:, ::-1]
    table = CentroidTable(corners, np.arange(1, 9))
    edges = [
        Edge(i, j, float(np.linalg.norm(corners[i] - corners[j])))
        for i, j in itertools.combinations(range(8), 2)
    ]
    deg = np.full(8, 7)
    graph = LatticeGraph(table, tuple(edges), deg)

    assert len(interior_voids(volume)) == 1
    cells = extract_cells(graph, volume, tau_cell=3.0)
    assert len(cells) == 1
    record = cells[0].record
    assert (record.lx, record.ly, record.lz) == (6.0, 6.0, 6.0)
    assert record.n_vertices == 8
    assert record.cell_id == 1
    assert record.volume == pytest.approx(216.0, rel=1e-12)


def test_solid_volume_has_no_cells():
    volume = LabeledVolume(GridSpec((6, 6, 6)), np.ones((6, 6, 6), dtype=np.uint32))
    table = CentroidTable(np.array(list(itertools.product((0.0, 5.0), repeat=3))), np.arange(1, 9))
    graph = LatticeGraph(table, (), np.zeros(8))

    assert extract_cells(graph, volume, tau_cell=3.0) == []
    with pytest.raises(CellExtractionError):
        extract_cells(graph, volume, tau_cell=3.0, require_cells=True)


def test_disconnected_node_group_is_skipped():
    volume = shell_volume(inner=6, wall=1)
    corners = np.array(list(itertools.product((1.5, 7.5), repeat=3)))
    graph = LatticeGraph(CentroidTable(corners, np.arange(1, 9)), (), np.zeros(8))
    assert extract_cells(graph, volume, tau_cell=3.0) == []


@pytest.mark.parametrize("shape", [(2, 2, 2), (3, 3, 3), (4, 4, 4), (4, 3, 2)])
def test_graph_lattice_cells_match_pitch(shape):
    cfg = GraphLatticeConfig(cells=shape, pitch=11)
    volume, _ = generate_graph_lattice(cfg)
    table = centroid_table(volume)
    params = GraphParams(
        (9.9, 9.9, 9.9),
        axis=Axis.POS_X,
        extra_axes=(Axis.POS_Y, Axis.POS_Z),
        cluster_tau=6.6,
        between=BetweenGate(),
    )
    graph = build_graph(table, volume, params)
    cells = extract_cells(graph, volume, tau_cell=5.5)

    n_cells = math.prod(shape)
    assert len(interior_voids(volume)) == n_cells
    assert len(cells) == n_cells
    for cell in cells:
        check_closed_manifold(cell.mesh)
        for extent in (cell.record.lx, cell.record.ly, cell.record.lz):
            assert abs(extent - cfg.pitch) <= 0.5
        assert cell.record.volume > 0
    assert [c.record.cell_id for c in cells] == list(range(1, n_cells + 1))
