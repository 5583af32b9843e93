from __future__ import annotations

import math

import numpy as np
import pytest

from detlattice.domain import EllipsoidLatticeConfig, GraphLatticeConfig
from detlattice.store import payload_bytes
from detlattice.synthgen import (
    ellipsoid_truth,
    generate_ellipsoid_lattice,
    generate_graph_lattice,
    match_objects,
    predicted_volumes,
    synthetic_extents,
    volume_error,
)


def sweep_errors(nx_list) -> list[float]:
    errors = []
    for nx in nx_list:
        volume, truth = generate_ellipsoid_lattice(EllipsoidLatticeConfig(n_x=nx))
        _, volumes, centers = predicted_volumes(volume)
        matched = match_objects(centers, truth.centers)
        errors.append(volume_error(volumes[matched], truth.volumes)[0])
    return errors


@pytest.mark.parametrize("nx", [60, 120])
def test_ellipsoid_lattice_has_sixty_labels(nx):
    volume, truth = generate_ellipsoid_lattice(EllipsoidLatticeConfig(n_x=nx))
    assert volume.n_instances == 60
    assert len(truth.ids) == 60
    assert volume.spec.dims == (nx, nx, nx)


def test_payload_size_at_sixty():
    volume, _ = generate_ellipsoid_lattice(EllipsoidLatticeConfig(n_x=60))
    assert payload_bytes(volume.spec.dims) == 60**3 * 4 == 864_000


def test_truth_is_identical_across_resolutions():
    a = ellipsoid_truth(EllipsoidLatticeConfig(n_x=60))
    b = ellipsoid_truth(EllipsoidLatticeConfig(n_x=240))
    np.testing.assert_array_equal(a.centers, b.centers)
    np.testing.assert_array_equal(a.volumes, b.volumes)


def test_overlapping_semi_axes_are_rejected():
    with pytest.raises(ValueError):
        ellipsoid_truth(EllipsoidLatticeConfig(semi_axes=(0.49, 0.4, 0.35), center_jitter=0.04))


def test_single_sphere_volume_at_240():
    cfg = EllipsoidLatticeConfig(n_x=240, layout=(1, 1, 1), semi_axes=(0.3, 0.3, 0.3), center_jitter=0.0)
    volume, truth = generate_ellipsoid_lattice(cfg)
    _, volumes, _ = predicted_volumes(volume)
    radius = 0.3 * cfg.base_n
    assert truth.volumes[0] == pytest.approx(4.0 / 3.0 * math.pi * radius**3)
    assert abs(volumes[0] - truth.volumes[0]) / truth.volumes[0] < 0.01


def test_volume_error_examples():
    assert volume_error([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 0.0)
    mean, std = volume_error([1.1, 2.2, 3.3], [1.0, 2.0, 3.0])
    assert mean == pytest.approx(10.0)
    assert std == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        volume_error([1.0], [1.0, 2.0])


def test_match_objects_rejects_ambiguous_pairs():
    centers = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    np.testing.assert_array_equal(match_objects(centers[::-1], centers), [1, 0])
    with pytest.raises(ValueError, match="unmatched"):
        match_objects(np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]), centers)
    with pytest.raises(ValueError, match="unmatched"):
        match_objects(centers[:1], centers)


def test_match_objects_rejects_distant_pairs():
    truth = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]])
    shifted = truth + np.array([0.5, -0.5, 0.0])
    np.testing.assert_array_equal(match_objects(shifted, truth), [0, 1, 2])

    far = truth.copy()
    far[2] = [0.0, 30.0, 0.0]
    with pytest.raises(ValueError, match="unmatched"):
        match_objects(far, truth)
    with pytest.raises(ValueError, match="exceeds"):
        match_objects(shifted, truth, max_distance=0.5)
    single = match_objects(np.array([[3.0, 0.0, 0.0]]), truth[:1])
    np.testing.assert_array_equal(single, [0])


def test_error_decreases_with_resolution():
    errors = sweep_errors([60, 120, 240])
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 5.0


@pytest.mark.slow
def test_error_at_480_is_below_two_percent():
    errors = sweep_errors([240, 480])
    assert errors[1] < errors[0]
    assert errors[1] <= 2.0


def test_graph_lattice_counts():
    volume, truth = generate_graph_lattice(GraphLatticeConfig(cells=(2, 2, 2), jitter=0.0))
    assert volume.n_instances == 27
    assert len(truth.ids) == 27
    assert len(truth.edges) == 54
    for i, j in truth.edges:
        assert i < j
        delta = np.abs(truth.positions[j] - truth.positions[i])
        assert np.count_nonzero(delta) == 1
        assert delta.max() == pytest.approx(11.0)


def test_graph_lattice_is_seeded():
    cfg = GraphLatticeConfig(cells=(2, 2, 1), jitter=0.1, seed=5)
    a, ta = generate_graph_lattice(cfg)
    b, tb = generate_graph_lattice(cfg)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(ta.positions, tb.positions)

    c, _ = generate_graph_lattice(GraphLatticeConfig(cells=(2, 2, 1), jitter=0.1, seed=6))
    assert not np.array_equal(a.labels, c.labels)


def test_synthetic_extents_cv():
    extents = synthetic_extents((8.36e-3, 5.30e-3, 4.82e-3), cv=0.16, n=20_000, seed=1)
    cv = extents.std(axis=0, ddof=1) / extents.mean(axis=0)
    assert extents.shape == (20_000, 3)
    assert np.all((cv >= 0.15) & (cv <= 0.17))


def test_invalid_configs():
    with pytest.raises(ValueError):
        EllipsoidLatticeConfig(n_x=0)
    with pytest.raises(ValueError):
        GraphLatticeConfig(pitch=10)
    with pytest.raises(ValueError):
        GraphLatticeConfig(jitter=0.5)
