from __future__ import annotations

import logging
import math
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from detlattice.domain import (
    AxialMetric,
    Axis,
    BinCoords,
    CentroidTable,
    Edge,
    GraphParams,
    LabeledVolume,
    LatticeGraph,
)
from detlattice.spatial import LabelIndex, PointIndex

logger = logging.getLogger(__name__)


def bin_coords(table: CentroidTable, grids: Sequence[float], axis: Axis | str) -> BinCoords:
    grids = np.asarray(grids, dtype=np.float64)
    if grids.shape != (3,) or not np.all(grids > 0):
        raise ValueError("bin grids must be three values > 0")
    points = table.points
    if points.shape[0] == 0:
        return BinCoords(np.zeros((0, 3), dtype=np.int64), Axis(axis))
    ijk = np.floor((points - points.min(axis=0)) / grids).astype(np.int64)
    return BinCoords(ijk, Axis(axis))


def hit_fraction(p, q, index: PointIndex, s: float, r: float) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if not (s > 0 and r > 0):
        raise ValueError("step and radius must be > 0")
    length = float(np.linalg.norm(q - p))
    if length == 0.0:
        raise ValueError("segment endpoints coincide")
    m = max(2, math.ceil(length / s) + 1)
    t = np.linspace(0.0, 1.0, m)
    samples = p[None, :] + t[:, None] * (q - p)[None, :]
    hits = int(np.count_nonzero(index.nearest_distances(samples) <= r))
    return hits / m


def cluster_gate(i: int, j: int, label_index: LabelIndex, table: CentroidTable, tau: float) -> bool:
    li, lj = int(table.labels[i]), int(table.labels[j])
    d_ij = label_index.for_label(lj).nearest_distance(table.points[i])
    d_ji = label_index.for_label(li).nearest_distance(table.points[j])
    return min(d_ij, d_ji) <= tau


def pass_orders(bins: BinCoords, reverse_pass: bool) -> list[np.ndarray]:
    """Root visiting orders: forward by (sgn*A, U, V, index), reverse by (-sgn*A, U, V, index)."""
    index = np.arange(bins.ijk.shape[0])
    signed = bins.sgn * bins.a
    orders = [np.lexsort((index, bins.v, bins.u, signed))]
    if reverse_pass:
        orders.append(np.lexsort((index, bins.v, bins.u, -signed)))
    return orders


class _GraphBuilder:
    def __init__(
        self, table: CentroidTable, volume: LabeledVolume | None, params: GraphParams
    ) -> None:
        self.table = table
        self.params = params
        self.deg = np.zeros(len(table), dtype=np.int64)
        self.seen: set[tuple[int, int]] = set()
        self.edges: list[Edge] = []
        self.rejected = {"cluster": 0, "between": 0}
        self.label_index: LabelIndex | None = None
        if params.gates_enabled:
            if volume is None:
                raise ValueError("gate enabled without volume")
            self.label_index = LabelIndex(volume)
            h = volume.spec.min_spacing
            if params.between is not None:
                self.step = params.between.s_vox * h
                self.radius = params.between.r_vox * h

    def candidates(self, i: int, bins: BinCoords) -> np.ndarray:
        p = self.params
        points = self.table.points
        d_a = bins.a - bins.a[i]
        lateral_bins = np.abs(bins.u - bins.u[i]) + np.abs(bins.v - bins.v[i])
        ok = (bins.sgn * d_a > 0) & (np.abs(d_a) <= p.a_max) & (lateral_bins <= p.r_side)
        js = np.flatnonzero(ok)
        if js.size == 0:
            return js
        axis = bins.axis
        if p.axial_metric is AxialMetric.BIN:
            d_ax = np.abs(d_a[js]).astype(np.float64)
        else:
            d_ax = axis.sign * (points[js, axis.index] - points[i, axis.index])
        u_axis, v_axis = axis.lateral
        du = points[js, u_axis] - points[i, u_axis]
        dv = points[js, v_axis] - points[i, v_axis]
        lat = np.sqrt(du * du + dv * dv)
        ranked = js[np.lexsort((js, lat, d_ax))]
        return ranked[: p.k]

    def gates_pass(self, i: int, j: int) -> bool:
        p = self.params
        if p.cluster_tau is not None:
            if not cluster_gate(i, j, self.label_index, self.table, p.cluster_tau):
                self.rejected["cluster"] += 1
                logger.debug("edge %d-%d rejected by cluster gate", i, j)
                return False
        if p.between is not None:
            phi = hit_fraction(
                self.table.points[i],
                self.table.points[j],
                self.label_index.union,
                self.step,
                self.radius,
            )
            if phi < p.between.phi_min:
                self.rejected["between"] += 1
                logger.debug("edge %d-%d rejected by between gate: phi=%.3f", i, j, phi)
                return False
        return True

    def run_pass(self, order: np.ndarray, bins: BinCoords) -> None:
        deg_max = self.params.deg_max
        points = self.table.points
        for i in order:
            i = int(i)
            if self.deg[i] >= deg_max:
                continue
            candidates = self.candidates(i, bins)
            logger.debug("root %d: %d candidates", i, candidates.size)
            for j in candidates:
                j = int(j)
                if self.deg[i] >= deg_max or self.deg[j] >= deg_max:
                    continue
                key = (min(i, j), max(i, j))
                if key in self.seen:
                    continue
                if not self.gates_pass(i, j):
                    continue
                length = float(np.linalg.norm(points[j] - points[i]))
                self.edges.append(Edge(key[0], key[1], length))
                self.seen.add(key)
                self.deg[i] += 1
                self.deg[j] += 1

    def build(self) -> LatticeGraph:
        for axis in self.params.axes:
            bins = bin_coords(self.table, self.params.bin_grids, axis)
            for order in pass_orders(bins, self.params.reverse_pass):
                self.run_pass(order, bins)
            logger.debug("axis %s: %d edges so far", axis.value, len(self.edges))
        logger.info(
            "graph: %d nodes, %d edges (rejected cluster=%d, between=%d)",
            len(self.table),
            len(self.edges),
            self.rejected["cluster"],
            self.rejected["between"],
        )
        return LatticeGraph(self.table, tuple(self.edges), self.deg.copy())


def build_graph(
    table: CentroidTable, volume: LabeledVolume | None, params: GraphParams
) -> LatticeGraph:
    if len(table) < 1:
        raise ValueError("graph needs at least one node")
    return _GraphBuilder(table, volume, params).build()


def edge_pairs(graph: LatticeGraph) -> set[tuple[int, int]]:
    return {(e.i, e.j) for e in graph.edges}


def edge_recovery(
    graph: LatticeGraph, truth: Iterable[tuple[int, int]]
) -> tuple[float, float]:
    found = edge_pairs(graph)
    expected = {(min(i, j), max(i, j)) for i, j in truth}
    hits = len(found & expected)
    precision = hits / len(found) if found else 1.0
    recall = hits / len(expected) if expected else 1.0
    return precision, recall


def to_networkx(graph: LatticeGraph) -> nx.Graph:
    g = nx.Graph()
    for n, (label, point) in enumerate(zip(graph.nodes.labels, graph.nodes.points)):
        g.add_node(n, label=int(label), pos=tuple(float(c) for c in point))
    for e in graph.edges:
        g.add_edge(e.i, e.j, length=e.length)
    return g
