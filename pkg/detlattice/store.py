from __future__ import annotations

import csv
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from detlattice.domain import (
    CellRecord,
    CentroidTable,
    DensityCurve1D,
    DensityGrid2D,
    EllipsoidTruth,
    GraphTruth,
    GridSpec,
    LabeledVolume,
    LatticeGraph,
    ScalarField,
    SummaryStats,
    TriMesh,
)
from detlattice.errors import VolumeFormatError

logger = logging.getLogger(__name__)

VLF_DTYPES: dict[str, np.dtype] = {
    "u32": np.dtype("<u4"),
    "f32": np.dtype("<f4"),
}


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def vlf_paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def payload_bytes(dims: Sequence[int], dtype: str = "u32") -> int:
    count = 1
    for n in dims:
        count *= int(n)
    return count * VLF_DTYPES[dtype].itemsize


def save_volume(volume: LabeledVolume | ScalarField, path: str | Path) -> tuple[Path, Path]:
    header_path, payload_path = vlf_paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(volume, LabeledVolume):
        dtype, data = "u32", volume.labels
    else:
        dtype, data = "f32", volume.values
    spec = volume.spec
    header = {
        "dims": list(spec.dims),
        "spacing": list(spec.spacing),
        "origin": list(spec.origin),
        "dtype": dtype,
        "order": "x-fastest",
        "endian": "little",
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    np.ascontiguousarray(data, dtype=VLF_DTYPES[dtype]).tofile(payload_path)
    logger.info("wrote %s (%d bytes)", payload_path, payload_path.stat().st_size)
    return header_path, payload_path


def _read_header(header_path: Path) -> dict:
    if not header_path.exists():
        raise VolumeFormatError(f"missing header: {header_path}")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise VolumeFormatError(f"corrupt header: {header_path}") from exc
    if not isinstance(header, dict):
        raise VolumeFormatError(f"corrupt header: {header_path}")
    for key in ("dims", "spacing", "origin", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"corrupt header: missing '{key}'")
    if header.get("order", "x-fastest") != "x-fastest":
        raise VolumeFormatError(f"unsupported order: {header['order']}")
    if header.get("endian", "little") != "little":
        raise VolumeFormatError(f"unsupported endian: {header['endian']}")
    if header["dtype"] not in VLF_DTYPES:
        raise VolumeFormatError(f"unsupported dtype: {header['dtype']}")
    return header


def load_volume(path: str | Path) -> LabeledVolume | ScalarField:
    header_path, payload_path = vlf_paths(path)
    header = _read_header(header_path)
    try:
        spec = GridSpec(header["dims"], header["spacing"], header["origin"])
    except (TypeError, ValueError) as exc:
        raise VolumeFormatError(f"corrupt header: {exc}") from exc
    if not payload_path.exists():
        raise VolumeFormatError(f"missing payload: {payload_path}")
    dtype = VLF_DTYPES[header["dtype"]]
    expected = spec.n_voxels * dtype.itemsize
    actual = payload_path.stat().st_size
    if actual != expected:
        raise VolumeFormatError(
            f"payload length mismatch: expected {expected} bytes, found {actual}"
        )
    data = np.fromfile(payload_path, dtype=dtype).reshape(spec.shape)
    if header["dtype"] == "u32":
        return LabeledVolume(spec, data.astype(np.uint32))
    return ScalarField(spec, data.astype(np.float64))


def load_labeled_volume(path: str | Path) -> LabeledVolume:
    volume = load_volume(path)
    if not isinstance(volume, LabeledVolume):
        raise VolumeFormatError(f"expected a u32 labeled volume: {path}")
    return volume


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read_rows(path: Path, expected: Sequence[str]) -> list[dict[str, str]]:
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or list(reader.fieldnames)[: len(expected)] != list(expected):
            raise ValueError(f"unexpected CSV header in {path}")
        return list(reader)


def write_centroids_csv(table: CentroidTable, path: Path) -> Path:
    rows = (
        (int(label), float(p[0]), float(p[1]), float(p[2]))
        for label, p in zip(table.labels, table.points)
    )
    return _write_rows(path, ("label", "x", "y", "z"), rows)


def read_centroids_csv(path: Path) -> CentroidTable:
    rows = _read_rows(path, ("label", "x", "y", "z"))
    labels = [int(r["label"]) for r in rows]
    points = [(float(r["x"]), float(r["y"]), float(r["z"])) for r in rows]
    return CentroidTable(np.array(points, dtype=np.float64).reshape(-1, 3), labels)


def write_edges_csv(graph: LatticeGraph, path: Path) -> Path:
    rows = ((e.i, e.j, float(e.length)) for e in graph.edges)
    return _write_rows(path, ("i", "j", "length"), rows)


def read_edges_csv(path: Path) -> list[tuple[int, int, float]]:
    rows = _read_rows(path, ("i", "j", "length"))
    return [(int(r["i"]), int(r["j"]), float(r["length"])) for r in rows]


def write_degrees_csv(graph: LatticeGraph, path: Path) -> Path:
    rows = ((n, int(d)) for n, d in enumerate(graph.deg))
    return _write_rows(path, ("node", "degree"), rows)


CELL_COLUMNS = ("cell_id", "Lx", "Ly", "Lz", "V", "AR1", "AR2", "AR3", "n_vertices")


def write_cells_csv(records: Sequence[CellRecord], path: Path) -> Path:
    rows = (
        (r.cell_id, r.lx, r.ly, r.lz, r.volume, r.ar1, r.ar2, r.ar3, r.n_vertices)
        for r in records
    )
    return _write_rows(path, CELL_COLUMNS, rows)


def read_cells_csv(path: Path) -> list[CellRecord]:
    rows = _read_rows(path, CELL_COLUMNS)
    return [
        CellRecord(
            cell_id=int(r["cell_id"]),
            lx=float(r["Lx"]),
            ly=float(r["Ly"]),
            lz=float(r["Lz"]),
            volume=float(r["V"]),
            ar1=float(r["AR1"]),
            ar2=float(r["AR2"]),
            ar3=float(r["AR3"]),
            node_ids=tuple(range(int(r["n_vertices"]))),
        )
        for r in rows
    ]


def write_mesh(mesh: TriMesh, path: Path, *, comments: Sequence[str] = ()) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {c}" for c in comments]
    lines += [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_mesh(path: Path) -> TriMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
        elif parts[0] == "f":
            faces.append((int(parts[1]) - 1, int(parts[2]) - 1, int(parts[3]) - 1))
    return TriMesh(np.array(vertices).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def stats_to_dict(stats: SummaryStats) -> dict[str, float | int | None]:
    return {
        "mu": stats.mu,
        "sigma": stats.sigma,
        "median": stats.median,
        "cv": stats.cv,
        "p5": stats.p5,
        "p95": stats.p95,
        "n": stats.n,
    }


def write_json(payload: object, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_stats_json(stats: Mapping[str, SummaryStats], path: Path) -> Path:
    return write_json({name: stats_to_dict(s) for name, s in stats.items()}, path)


def write_curve_csv(curve: DensityCurve1D, path: Path) -> Path:
    rows = ((float(g), float(d)) for g, d in zip(curve.grid, curve.density))
    return _write_rows(path, ("grid", "density"), rows)


def write_grid_csv(grid: DensityGrid2D, path: Path) -> Path:
    rows = (
        (float(x), float(y), float(grid.density[ix, iy]))
        for ix, x in enumerate(grid.x_grid)
        for iy, y in enumerate(grid.y_grid)
    )
    return _write_rows(path, ("x", "y", "density"), rows)


def write_ellipsoid_truth_csv(truth: EllipsoidTruth, path: Path) -> Path:
    rows = (
        (int(i), float(c[0]), float(c[1]), float(c[2]), float(v))
        for i, c, v in zip(truth.ids, truth.centers, truth.volumes)
    )
    return _write_rows(path, ("id", "cx", "cy", "cz", "V_true"), rows)


def write_graph_truth_csv(truth: GraphTruth, nodes_path: Path, edges_path: Path) -> tuple[Path, Path]:
    nodes = (
        (int(i), float(p[0]), float(p[1]), float(p[2]))
        for i, p in zip(truth.ids, truth.positions)
    )
    _write_rows(nodes_path, ("id", "x", "y", "z"), nodes)
    _write_rows(edges_path, ("i", "j"), truth.edges)
    return nodes_path, edges_path


SWEEP_COLUMNS = ("nx", "mean_error_pct", "std_error_pct", "payload_bytes", "instances")


def write_sweep_csv(rows: Sequence[Sequence[object]], path: Path) -> Path:
    return _write_rows(path, SWEEP_COLUMNS, rows)


def read_truth_edges_csv(path: Path) -> list[tuple[int, int]]:
    rows = _read_rows(path, ("i", "j"))
    return [(int(r["i"]), int(r["j"])) for r in rows]


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def source_sha256() -> str:
    """SHA-256 over the package's own .py files, name and content, in name order."""
    digest = hashlib.sha256()
    for path in sorted(Path(__file__).resolve().parent.glob("*.py")):
        digest.update(path.name.encode("utf-8") + b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()


class ArtifactStore:
    """Output directory of one run; remembers what it wrote so a failed run can be undone."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def track(self, *paths: Path) -> None:
        for path in paths:
            if path not in self.written:
                self.written.append(path)

    def save_volume(self, volume: LabeledVolume | ScalarField, name: str) -> tuple[Path, Path]:
        paths = save_volume(volume, self.path(name))
        self.track(*paths)
        return paths

    def write(self, writer, payload, name: str, **kwargs) -> Path:
        path = writer(payload, self.path(name), **kwargs)
        self.track(path)
        return path

    def discard(self) -> None:
        for path in reversed(self.written):
            try:
                path.unlink()
            except FileNotFoundError:
                continue
        logger.warning("removed %d partial outputs from %s", len(self.written), self.out_dir)
        self.written.clear()

    def write_manifest(
        self,
        *,
        command: str,
        config: Mapping[str, object],
        seed: int,
        version: str,
    ) -> Path:
        config_text = json.dumps(config, sort_keys=True)
        manifest = {
            "command": command,
            "version": version,
            "source_sha256": source_sha256(),
            "seed": seed,
            "config": config,
            "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
            "created_at": datetime.now(timezone.utc).isoformat(),
            "artifacts": [
                {"path": p.relative_to(self.out_dir).as_posix(), "sha256": file_sha256(p)}
                for p in self.written
                if p.exists()
            ],
        }
        path = write_json(manifest, self.path("manifest.json"))
        return path
