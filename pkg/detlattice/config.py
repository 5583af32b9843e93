from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from detlattice.domain import (
    AxialMetric,
    Axis,
    BetweenGate,
    EllipsoidLatticeConfig,
    GraphLatticeConfig,
    GraphParams,
)
from detlattice.errors import ConfigError


class Defaults:
    SEED = 0
    OUT_DIR = "runs/latest"

    AXIS = "+X"
    EXTRA_AXES = ""
    BIN_GRID = "2*h"
    A_MAX = 3
    R_SIDE = 2
    K = 4
    DEG_MAX = 6
    REVERSE_PASS = False
    AXIAL_METRIC = "continuous"
    TAU = "2*h"
    S_VOX = 0.5
    R_VOX = 1.5
    PHI_MIN = 0.6

    TAU_CELL = "3*h"
    MIN_NODES = 6

    GRID_1D = 256
    GRID_2D = 128
    BANDWIDTH = "auto"
    LOG_X = True

    NX_LIST = "60,120,240,480"


OFF = ("off", "none", "")


def parse_length(text: str | float) -> tuple[float, bool]:
    """'3*h' -> (3.0, True) meaning 3 x min spacing; '0.25' -> (0.25, False)."""
    raw = str(text).strip().replace(" ", "")
    relative = raw.endswith("*h")
    number = raw[:-2] if relative else raw
    if raw == "h":
        number, relative = "1", True
    try:
        value = float(number)
    except ValueError as exc:
        raise ConfigError(f"invalid length: {text!r}") from exc
    if not value > 0:
        raise ConfigError(f"length must be > 0: {text!r}")
    return value, relative


def resolve_length(text: str | float, h: float) -> float:
    value, relative = parse_length(text)
    return value * h if relative else value


def _floats(text: str, name: str, n: int | None = 3) -> tuple[float, ...]:
    try:
        items = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: expected comma-separated numbers") from exc
    if n is not None and len(items) != n:
        raise ConfigError(f"{name}: expected {n} values")
    return items


def _ints(text: str, name: str, n: int | None = 3) -> tuple[int, ...]:
    values = _floats(text, name, n)
    if any(v != int(v) for v in values):
        raise ConfigError(f"{name}: expected integers")
    return tuple(int(v) for v in values)


@dataclass(frozen=True)
class GraphSection:
    axis: str = Defaults.AXIS
    extra_axes: tuple[str, ...] = ()
    bin_grids: tuple[str, str, str] = (Defaults.BIN_GRID,) * 3
    a_max: int = Defaults.A_MAX
    r_side: int = Defaults.R_SIDE
    k: int = Defaults.K
    deg_max: int = Defaults.DEG_MAX
    reverse_pass: bool = Defaults.REVERSE_PASS
    axial_metric: str = Defaults.AXIAL_METRIC
    tau: str | None = Defaults.TAU
    s_vox: float = Defaults.S_VOX
    r_vox: float = Defaults.R_VOX
    phi_min: float | None = Defaults.PHI_MIN

    def params(self, h: float) -> GraphParams:
        between = None
        if self.phi_min is not None:
            between = BetweenGate(self.s_vox, self.r_vox, self.phi_min)
        return GraphParams(
            bin_grids=tuple(resolve_length(u, h) for u in self.bin_grids),
            axis=Axis(self.axis),
            a_max=self.a_max,
            r_side=self.r_side,
            k=self.k,
            deg_max=self.deg_max,
            reverse_pass=self.reverse_pass,
            cluster_tau=resolve_length(self.tau, h) if self.tau is not None else None,
            between=between,
            axial_metric=AxialMetric(self.axial_metric),
            extra_axes=tuple(Axis(a) for a in self.extra_axes),
        )


@dataclass(frozen=True)
class CellSection:
    tau_cell: str = Defaults.TAU_CELL
    min_nodes: int = Defaults.MIN_NODES


@dataclass(frozen=True)
class StatsSection:
    grid_1d: int = Defaults.GRID_1D
    grid_2d: int = Defaults.GRID_2D
    bandwidth: str = Defaults.BANDWIDTH
    log_x: bool = Defaults.LOG_X

    def bandwidth_value(self) -> float | str:
        return "auto" if self.bandwidth == "auto" else float(self.bandwidth)


@dataclass(frozen=True)
class RunConfig:
    input: Path | None = None
    out: Path = Path(Defaults.OUT_DIR)
    seed: int = Defaults.SEED
    graph: GraphSection = field(default_factory=GraphSection)
    cells: CellSection = field(default_factory=CellSection)
    stats: StatsSection = field(default_factory=StatsSection)
    ellipsoid: EllipsoidLatticeConfig = field(default_factory=EllipsoidLatticeConfig)
    graphlattice: GraphLatticeConfig = field(default_factory=GraphLatticeConfig)
    nx_list: tuple[int, ...] = _ints(Defaults.NX_LIST, "nx_list", None)
    source: str = "<defaults>"

    def as_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["input"] = str(self.input) if self.input is not None else None
        data["out"] = str(self.out)
        return data


def _section(parser: configparser.ConfigParser, name: str) -> configparser.SectionProxy | dict:
    return parser[name] if parser.has_section(name) else {}


def _get(section, key: str, default):
    value = section.get(key) if section else None
    return default if value is None else value


def _bool(text, name: str) -> bool:
    if isinstance(text, bool):
        return text
    raw = str(text).strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean")


def _int(text, name: str) -> int:
    try:
        return int(str(text).strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: expected an integer") from exc


def _float(text, name: str) -> float:
    try:
        return float(str(text).strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: expected a number") from exc


def _optional(text, convert, name: str):
    if text is None or str(text).strip().lower() in OFF:
        return None
    return convert(text, name)


def _graph_section(parser: configparser.ConfigParser) -> GraphSection:
    s = _section(parser, "graph")
    default_u = _get(s, "u", Defaults.BIN_GRID)
    grids = tuple(str(_get(s, key, default_u)) for key in ("u_x", "u_y", "u_z"))
    for g in grids:
        parse_length(g)
    tau = _optional(_get(s, "tau", Defaults.TAU), lambda t, n: str(t).strip(), "tau")
    if tau is not None:
        parse_length(tau)
    extra = str(_get(s, "extra_axes", Defaults.EXTRA_AXES))
    return GraphSection(
        axis=str(_get(s, "axis", Defaults.AXIS)).strip().upper(),
        extra_axes=tuple(a.strip().upper() for a in extra.split(",") if a.strip()),
        bin_grids=grids,
        a_max=_int(_get(s, "a_max", Defaults.A_MAX), "A_max"),
        r_side=_int(_get(s, "r_side", Defaults.R_SIDE), "R_side"),
        k=_int(_get(s, "k", Defaults.K), "K"),
        deg_max=_int(_get(s, "deg_max", Defaults.DEG_MAX), "deg_max"),
        reverse_pass=_bool(_get(s, "reverse_pass", Defaults.REVERSE_PASS), "reverse_pass"),
        axial_metric=str(_get(s, "axial_metric", Defaults.AXIAL_METRIC)).strip().lower(),
        tau=tau,
        s_vox=_float(_get(s, "s_vox", Defaults.S_VOX), "s_vox"),
        r_vox=_float(_get(s, "r_vox", Defaults.R_VOX), "r_vox"),
        phi_min=_optional(_get(s, "phi_min", Defaults.PHI_MIN), _float, "phi_min"),
    )


def _cells_section(parser: configparser.ConfigParser) -> CellSection:
    s = _section(parser, "cells")
    tau_cell = str(_get(s, "tau_cell", Defaults.TAU_CELL))
    parse_length(tau_cell)
    return CellSection(tau_cell=tau_cell, min_nodes=_int(_get(s, "min_nodes", Defaults.MIN_NODES), "min_nodes"))


def _stats_section(parser: configparser.ConfigParser) -> StatsSection:
    s = _section(parser, "stats")
    bandwidth = str(_get(s, "bandwidth", Defaults.BANDWIDTH)).strip().lower()
    if bandwidth != "auto" and not _float(bandwidth, "bandwidth") > 0:
        raise ConfigError("bandwidth must be 'auto' or > 0")
    return StatsSection(
        grid_1d=_int(_get(s, "grid_1d", Defaults.GRID_1D), "grid_1d"),
        grid_2d=_int(_get(s, "grid_2d", Defaults.GRID_2D), "grid_2d"),
        bandwidth=bandwidth,
        log_x=_bool(_get(s, "log_x", Defaults.LOG_X), "log_x"),
    )


def _ellipsoid_section(parser: configparser.ConfigParser, seed: int) -> EllipsoidLatticeConfig:
    s = _section(parser, "ellipsoid")
    d = EllipsoidLatticeConfig()
    return EllipsoidLatticeConfig(
        n_x=_int(_get(s, "nx", d.n_x), "nx"),
        layout=_ints(_get(s, "layout", ",".join(map(str, d.layout))), "layout"),
        semi_axes=_floats(_get(s, "semi_axes", ",".join(map(str, d.semi_axes))), "semi_axes"),
        base_n=_int(_get(s, "base_n", d.base_n), "base_n"),
        center_jitter=_float(_get(s, "center_jitter", d.center_jitter), "center_jitter"),
        seed=seed,
    )


def _graphlattice_section(parser: configparser.ConfigParser, seed: int) -> GraphLatticeConfig:
    s = _section(parser, "graphlattice")
    d = GraphLatticeConfig()
    return GraphLatticeConfig(
        cells=_ints(_get(s, "cells", ",".join(map(str, d.cells))), "cells"),
        pitch=_int(_get(s, "pitch", d.pitch), "pitch"),
        jitter=_float(_get(s, "jitter", d.jitter), "jitter"),
        trail_radius=_float(_get(s, "trail_radius", d.trail_radius), "trail_radius"),
        blob_radius=_float(_get(s, "blob_radius", d.blob_radius), "blob_radius"),
        walls=_bool(_get(s, "walls", d.walls), "walls"),
        margin=_int(_get(s, "margin", d.margin), "margin"),
        spacing=_floats(_get(s, "spacing", ",".join(map(str, d.spacing))), "spacing"),
        seed=seed,
    )


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """Read an INI run configuration; ``overrides`` uses ``section.key`` names (``seed``, ``out``, ``input`` live in ``[run]``)."""
    parser = configparser.ConfigParser(interpolation=None)
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from exc
        source = str(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, option = key.rpartition(".")
        section = section or "run"
        if not parser.has_section(section):
            parser.add_section(section)
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        parser.set(section, option, str(value))

    run = _section(parser, "run")
    seed = _int(_get(run, "seed", Defaults.SEED), "seed")
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    raw_input = _get(run, "input", None)
    try:
        config = RunConfig(
            input=Path(raw_input) if raw_input else None,
            out=Path(_get(run, "out", Defaults.OUT_DIR)),
            seed=seed,
            graph=_graph_section(parser),
            cells=_cells_section(parser),
            stats=_stats_section(parser),
            ellipsoid=_ellipsoid_section(parser, seed),
            graphlattice=_graphlattice_section(parser, seed),
            nx_list=_ints(_get(_section(parser, "sweep"), "nx_list", Defaults.NX_LIST), "nx_list", None),
            source=source,
        )
        validate(config)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def validate(config: RunConfig) -> None:
    config.graph.params(1.0)
    if config.cells.min_nodes < 4:
        raise ConfigError("min_nodes must be >= 4")
    if config.stats.grid_1d < 2 or config.stats.grid_2d < 2:
        raise ConfigError("grid sizes must be >= 2")
    if not config.nx_list or any(n < 8 for n in config.nx_list):
        raise ConfigError("nx_list entries must be >= 8")
