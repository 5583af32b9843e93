from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from detlattice import __version__, store
from detlattice.cellgeom import extract_cells, mesh_surface_area
from detlattice.config import RunConfig, load_config, resolve_length
from detlattice.domain import CellRecord, Edge, LabeledVolume, LatticeGraph
from detlattice.errors import ConfigError, DetLatticeError, StageError, VolumeFormatError
from detlattice.graph import build_graph, edge_recovery
from detlattice.stats import FEATURES, feature_summaries, features_from_cells, kde_1d, kde_2d
from detlattice.store import ArtifactStore
from detlattice.synthgen import (
    generate_ellipsoid_lattice,
    generate_graph_lattice,
    match_objects,
    predicted_volumes,
    volume_error,
)
from detlattice.volume import centroid_table

logger = logging.getLogger("detlattice.cli")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PRESETS = ("ellipsoid", "graphlattice")
VOLUME_NAME = "volume"


def configure_logging(*, quiet: bool = False, verbose: bool = False) -> None:
    package_logger = logging.getLogger("detlattice")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package_logger.addHandler(handler)
    if verbose:
        package_logger.setLevel(logging.DEBUG)
    elif quiet:
        package_logger.setLevel(logging.WARNING)
    else:
        package_logger.setLevel(logging.INFO)


@contextmanager
def stage(name: str) -> Iterator[None]:
    logger.info("stage %s: start", name)
    try:
        yield
    except (ConfigError, VolumeFormatError, OSError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    logger.info("stage %s: done", name)


# Stages ---------------------------------------------------------------------------


def _volume_path(config: RunConfig, out: ArtifactStore) -> Path:
    path = config.input if config.input is not None else out.path(VOLUME_NAME)
    header, _ = store.vlf_paths(path)
    if not header.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return path


def run_generate(config: RunConfig, out: ArtifactStore, preset: str) -> LabeledVolume:
    with stage("generate"):
        if preset == "ellipsoid":
            volume, truth = generate_ellipsoid_lattice(config.ellipsoid)
            out.save_volume(volume, VOLUME_NAME)
            out.write(store.write_ellipsoid_truth_csv, truth, "truth.csv")
        else:
            volume, truth = generate_graph_lattice(config.graphlattice)
            out.save_volume(volume, VOLUME_NAME)
            paths = store.write_graph_truth_csv(
                truth, out.path("truth_nodes.csv"), out.path("truth_edges.csv")
            )
            out.track(*paths)
    return volume


def run_centroids(config: RunConfig, out: ArtifactStore, volume: LabeledVolume | None = None):
    if volume is None:
        volume = store.load_labeled_volume(_volume_path(config, out))
    with stage("centroids"):
        table = centroid_table(volume)
        out.write(store.write_centroids_csv, table, "centroids.csv")
    return volume, table


def run_graph(config: RunConfig, out: ArtifactStore, volume=None, table=None) -> LatticeGraph:
    if volume is None:
        volume = store.load_labeled_volume(_volume_path(config, out))
    if table is None:
        table = store.read_centroids_csv(out.path("centroids.csv"))
    with stage("graph"):
        params = config.graph.params(volume.spec.min_spacing)
        graph = build_graph(table, volume, params)
        out.write(store.write_edges_csv, graph, "edges.csv")
        out.write(store.write_degrees_csv, graph, "degrees.csv")
        truth_path = out.path("truth_edges.csv")
        if truth_path.exists():
            precision, recall = edge_recovery(graph, store.read_truth_edges_csv(truth_path))
            logger.info("edge recovery: precision=%.3f recall=%.3f", precision, recall)
    return graph


def _read_graph(out: ArtifactStore) -> LatticeGraph:
    table = store.read_centroids_csv(out.path("centroids.csv"))
    edges = tuple(Edge(i, j, length) for i, j, length in store.read_edges_csv(out.path("edges.csv")))
    deg = np.zeros(len(table), dtype=np.int64)
    for e in edges:
        deg[e.i] += 1
        deg[e.j] += 1
    return LatticeGraph(table, edges, deg)


def run_cells(config: RunConfig, out: ArtifactStore, volume=None, graph=None) -> list[CellRecord]:
    if volume is None:
        volume = store.load_labeled_volume(_volume_path(config, out))
    if graph is None:
        graph = _read_graph(out)
    with stage("cells"):
        tau_cell = resolve_length(config.cells.tau_cell, volume.spec.min_spacing)
        cells = extract_cells(graph, volume, tau_cell, config.cells.min_nodes)
        records = [c.record for c in cells]
        out.write(store.write_cells_csv, records, "cells.csv")
        for cell in cells:
            comments = (
                f"cell {cell.record.cell_id}",
                f"area {store.fmt(mesh_surface_area(cell.mesh))}",
            )
            out.write(
                store.write_mesh,
                cell.mesh,
                f"meshes/cell_{cell.record.cell_id:04d}.obj",
                comments=comments,
            )
    return records


def run_stats(config: RunConfig, out: ArtifactStore, records=None) -> None:
    if records is None:
        records = store.read_cells_csv(out.path("cells.csv"))
    with stage("stats"):
        features = features_from_cells(records)
        summaries = feature_summaries(features)
        out.write(store.write_stats_json, summaries, "stats.json")
        if not records:
            return
        settings = config.stats
        bandwidth = settings.bandwidth_value()
        for name in ("Lx", "Ly", "Lz", "V"):
            curve = kde_1d(features[name], settings.grid_1d, bandwidth)
            out.write(store.write_curve_csv, curve, f"kde_{name}.csv")
        prefix = "logV" if settings.log_x else "V"
        for name in FEATURES[4:]:
            grid = kde_2d(
                features["V"],
                features[name],
                settings.grid_2d,
                bandwidth if bandwidth == "auto" else (bandwidth, bandwidth),
                log_x=settings.log_x,
            )
            out.write(store.write_grid_csv, grid, f"kde2d_{prefix}_{name}.csv")


def run_pipeline(config: RunConfig, out: ArtifactStore, preset: str | None) -> None:
    volume = None
    if config.input is None and preset is not None:
        volume = run_generate(config, out, preset)
    volume, table = run_centroids(config, out, volume)
    graph = run_graph(config, out, volume, table)
    records = run_cells(config, out, volume, graph)
    run_stats(config, out, records)


def run_sweep(config: RunConfig, out: ArtifactStore) -> list[tuple]:
    rows: list[tuple] = []
    for nx in config.nx_list:
        with stage(f"sweep nx={nx}"):
            cfg = replace(config.ellipsoid, n_x=nx)
            volume, truth = generate_ellipsoid_lattice(cfg)
            instances = volume.n_instances
            if instances != cfg.n_objects:
                logger.warning("nx=%d: %d instances, expected %d", nx, instances, cfg.n_objects)
            _, volumes, centers = predicted_volumes(volume)
            matched = match_objects(centers, truth.centers)
            mean, std = volume_error(volumes[matched], truth.volumes)
            rows.append((nx, mean, std, store.payload_bytes(volume.spec.dims), instances))
            logger.info("nx=%d: error %.3f%% +- %.3f%%", nx, mean, std)
    out.write(store.write_sweep_csv, rows, "sweep.csv")
    return rows


def format_sweep_table(rows: Sequence[tuple]) -> str:
    lines = [f"{'n_x':>6} {'error, %':>18} {'payload, B':>14} {'masks':>6}"]
    for nx, mean, std, size, instances in rows:
        lines.append(f"{nx:>6} {mean:>8.3f} +- {std:<6.3f} {size:>14} {instances:>6}")
    return "\n".join(lines)


# Entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to an INI run configuration.")
    common.add_argument("--seed", type=int, help="Seed for the synthetic generators.")
    common.add_argument("--out", help="Output directory.")
    common.add_argument("--input", help="Input VLF volume (header path or stem).")
    common.add_argument("--quiet", action="store_true", help="Only warnings and errors.")
    common.add_argument("--verbose", action="store_true", help="Debug logging and tracebacks.")

    parser = argparse.ArgumentParser(
        prog="detlattice",
        description="Reconstruct and measure detonation-cell lattices from labeled voxel volumes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", parents=[common], help="Write a synthetic volume and its truth.")
    generate.add_argument("--preset", choices=PRESETS, default="ellipsoid")
    generate.add_argument("--nx", type=int, help="Voxels per axis (ellipsoid preset).")
    generate.add_argument("--cells", help="Cells per axis, e.g. 2,2,2 (graphlattice preset).")
    generate.add_argument("--jitter", type=float, help="Vertex jitter, fraction of pitch.")

    for name, text in (
        ("centroids", "Centroid table of every instance."),
        ("graph", "Lattice graph from the centroid table."),
        ("cells", "Closed cells and their measurements."),
        ("stats", "Summary statistics and densities of the cells."),
    ):
        sub.add_parser(name, parents=[common], help=text)

    pipeline = sub.add_parser("pipeline", parents=[common], help="All stages in sequence.")
    pipeline.add_argument("--preset", choices=PRESETS, help="Generate the input first.")
    pipeline.add_argument("--nx", type=int)
    pipeline.add_argument("--cells")
    pipeline.add_argument("--jitter", type=float)

    sweep = sub.add_parser("sweep", parents=[common], help="Volume error against resolution.")
    sweep.add_argument("--preset", choices=PRESETS, default="ellipsoid")
    sweep.add_argument("--nx-list", help="Comma-separated resolutions, e.g. 60,120,240,480.")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    return {
        "seed": args.seed,
        "out": args.out,
        "input": args.input,
        "ellipsoid.nx": getattr(args, "nx", None),
        "graphlattice.cells": getattr(args, "cells", None),
        "graphlattice.jitter": getattr(args, "jitter", None),
        "sweep.nx_list": getattr(args, "nx_list", None),
    }


def _dispatch(args: argparse.Namespace, config: RunConfig, out: ArtifactStore) -> None:
    command = args.command
    if command == "generate":
        run_generate(config, out, args.preset)
    elif command == "centroids":
        run_centroids(config, out)
    elif command == "graph":
        run_graph(config, out)
    elif command == "cells":
        run_cells(config, out)
    elif command == "stats":
        run_stats(config, out)
    elif command == "pipeline":
        run_pipeline(config, out, args.preset)
    elif command == "sweep":
        if args.preset != "ellipsoid":
            raise ConfigError("sweep needs the ellipsoid preset")
        print(format_sweep_table(run_sweep(config, out)))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(quiet=args.quiet, verbose=args.verbose)
    out: ArtifactStore | None = None
    try:
        config = load_config(args.config, _overrides(args))
        out = ArtifactStore(config.out)
        _dispatch(args, config, out)
        out.write_manifest(
            command=args.command,
            config=config.as_dict(),
            seed=config.seed,
            version=__version__,
        )
    except Exception as exc:
        if out is not None:
            out.discard()
        if args.verbose:
            logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, (VolumeFormatError, OSError)):
        return 3
    if isinstance(exc, DetLatticeError):
        return 4
    return 1
