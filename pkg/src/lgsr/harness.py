"""Experiment runner: config -> topology, tunnels, routing arm -> artifacts.

A run writes ``<output_dir>/run_<hash>/`` holding

* ``metrics.json``  deterministic metrics and run metadata
* ``timing.json``   wall-clock execution time (kept apart so metrics stay
  byte-identical across reruns)
* ``edges.csv``     per-link loads
* ``heatmap.svg``   link-load drawing
* ``config.echo``   the normalised config, loadable by ``load_config``
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .baselines import INTERPRETATIONS, BaselineRouter, RouterKind
from .forwarding import (
    EXPECTED,
    FIXED,
    ForwardingPolicy,
    ForwardTrace,
    LocalFailure,
    RoutingFault,
    TrafficMatrix,
)
from .hierarchy import TABLE, FallbackForwarder, activate_local_table, failure_scopes, local_skeletons_for
from .metrics import ALL_LINKS, BOUNDARY_LINKS, DelayParams, RunMetrics, collect
from .partition import NoPathError, Partition, build_skeleton, partition
from .planner import FlowTunnel, boundary_links, plan_all
from .svg import render_heatmap
from .topology import ConstellationParams, GridTopology, TopologyError, build_grid

log = logging.getLogger(__name__)

LGSR = "lgsr"
ALGORITHMS = (LGSR,) + tuple(k.value for k in RouterKind)

TRAFFIC_NOTE = "uniform random (src, dst) pairs with src != dst"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending fields."""


class FailureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    src: tuple[int, int]
    dst: tuple[int, int]
    # the failure is active from the tunnel with this index on
    step: int = Field(default=0, ge=0)


class RunConfig(BaseModel):
    """Flat run configuration; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    grid: tuple[int, int]
    seed: int
    wrap: bool = True
    region_side: int = Field(default=4, ge=1)
    sub_region_side: int | None = Field(default=None, ge=1)
    congested_regions: tuple[int, ...] = ()
    tunnel_count: int = Field(default=100, ge=1)
    tunnel_volume: str | float = "fixed 6"
    offsets: bool = True
    algorithm: Literal["lgsr", "dijkstra_hop", "dijkstra_load_aware", "greedy", "random"] = LGSR
    forwarding_mode: Literal["sampled", "expected"] = EXPECTED
    probability_rule: Literal["fixed_per_segment", "recompute_per_hop"] = FIXED
    batch: int | None = Field(default=100, ge=1)
    smoothing_alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    aggregate: bool = True
    local_routing: Literal["table", "source"] = TABLE
    delay_alpha: float = 0.2
    delay_beta: float = 0.8
    d_hop_unit: float = Field(default=1.0, ge=0.0)
    d_link_base: float = Field(default=1.0, ge=0.0)
    k: float = Field(default=1.0, ge=0.0)
    capacity: float = Field(default=100.0, gt=0.0)
    inclination_deg: float = 53.0
    phase_factor: int = Field(default=0, ge=0)
    gini_population: Literal["all", "boundary"] = ALL_LINKS
    failures: tuple[FailureSpec, ...] = ()
    output_dir: str = "runs"

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        if v[0] < 2 or v[1] < 2:
            raise ValueError("grid needs at least 2 planes and 2 satellites per plane")
        return v

    @field_validator("tunnel_volume")
    @classmethod
    def _volume(cls, v):
        parse_volume_spec(v)
        return v

    @model_validator(mode="after")
    def _consistent(self):
        w, h = self.grid
        if self.region_side > min(w, h):
            raise ValueError(f"region_side {self.region_side} exceeds grid {w}x{h}")
        if self.congested_regions and self.sub_region_side is None:
            raise ValueError("congested_regions needs sub_region_side")
        if self.phase_factor > w - 1:
            raise ValueError(f"phase_factor must be at most {w - 1}")
        return self

    def digest(self) -> str:
        body = self.model_dump(mode="json", exclude={"output_dir"})
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def policy(self) -> ForwardingPolicy:
        return ForwardingPolicy(self.forwarding_mode, self.probability_rule, self.seed)

    @property
    def delay(self) -> DelayParams:
        return DelayParams(self.delay_alpha, self.delay_beta, self.d_hop_unit, self.d_link_base, self.k)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<config>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def make_config(data: dict[str, Any] | None = None, **overrides) -> RunConfig:
    body = dict(data or {})
    body.update(overrides)
    try:
        return RunConfig.model_validate(body)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML (or JSON) mapping into a validated ``RunConfig``."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    return make_config(data)


def parse_volume_spec(spec: str | float) -> tuple[str, tuple[float, ...]]:
    """``"fixed 6"``, ``"uniform 0.75 24"``, ``"choice 0.75,1.5,3"`` or a number."""
    if isinstance(spec, (int, float)):
        if spec <= 0:
            raise ValueError("tunnel volume must be positive")
        return "fixed", (float(spec),)
    parts = str(spec).split(None, 1)
    kind = parts[0].lower() if parts else ""
    try:
        if kind == "fixed" and len(parts) == 2:
            vals = (float(parts[1]),)
        elif kind == "uniform" and len(parts) == 2:
            vals = tuple(float(x) for x in parts[1].split())
            if len(vals) != 2 or vals[0] > vals[1]:
                raise ValueError
        elif kind == "choice" and len(parts) == 2:
            vals = tuple(float(x) for x in parts[1].replace(",", " ").split())
            if not vals:
                raise ValueError
        else:
            raise ValueError
    except ValueError:
        raise ValueError(
            f"bad volume spec {spec!r}; use 'fixed V', 'uniform LO HI' or 'choice V1,V2,..'"
        ) from None
    if min(vals) <= 0:
        raise ValueError("tunnel volumes must be positive")
    return kind, vals


def generate_tunnels(config: RunConfig, regions: Partition | None = None, seed: int | None = None) -> list[FlowTunnel]:
    """Uniform random ``src != dst`` pairs with per-tunnel offsets and volumes."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    w, h = config.grid
    n_nodes = w * h
    count = config.tunnel_count
    src = rng.integers(0, n_nodes, size=count)
    # shift by 1..N-1 so the destination is uniform over the other nodes
    dst = (src + 1 + rng.integers(0, n_nodes - 1, size=count)) % n_nodes
    half = (regions.side if regions is not None else config.region_side) // 2
    if config.offsets and half > 0:
        offsets = rng.integers(-half, half + 1, size=(count, 2))
    else:
        offsets = np.zeros((count, 2), dtype=np.int64)
    kind, vals = parse_volume_spec(config.tunnel_volume)
    if kind == "fixed":
        volumes = np.full(count, vals[0])
    elif kind == "uniform":
        volumes = rng.uniform(vals[0], vals[1], size=count)
    else:
        volumes = np.asarray(vals)[rng.integers(0, len(vals), size=count)]
    out = []
    for i in range(count):
        s, d = int(src[i]), int(dst[i])
        out.append(
            FlowTunnel(
                id=i,
                src=(s // h, s % h),
                dst=(d // h, d % h),
                volume=float(volumes[i]),
                offset=(int(offsets[i, 0]), int(offsets[i, 1])),
            )
        )
    return out


@dataclass
class RunResult:
    config: RunConfig
    metrics: RunMetrics
    run_dir: Path
    edges_csv: Path
    heatmap_svg: Path
    status: str = "ok"
    error: str | None = None
    traces: list[ForwardTrace] = field(default_factory=list, repr=False)
    traffic: TrafficMatrix | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _FailureSchedule:
    def __init__(self, topo: GridTopology, failures: Sequence[FailureSpec]):
        self.topo = topo
        self.pending = sorted(failures, key=lambda f: f.step)
        self.active: list[int] = []

    def advance(self, index: int) -> bool:
        """Bring down every failure due by tunnel ``index``; True if any changed."""
        changed = False
        while self.pending and self.pending[0].step <= index:
            f = self.pending.pop(0)
            try:
                link = self.topo.fail_link(f.src, f.dst)
            except TopologyError as exc:
                raise ConfigError(f"failures: {exc}") from None
            self.active.append(link)
            changed = True
        return changed


def build_topology(config: RunConfig) -> GridTopology:
    w, h = config.grid
    params = ConstellationParams(w, h, config.inclination_deg, config.phase_factor)
    return build_grid(params, config.capacity, config.d_link_base, wrap_x=config.wrap, wrap_y=config.wrap)


def _route_lgsr(config, topo, regions, tunnels, traffic, schedule, traces):
    skeleton = build_skeleton(regions, topo)
    local = {}
    if config.congested_regions:
        bad = [r for r in config.congested_regions if not 0 <= r < len(regions)]
        if bad:
            raise ConfigError(f"congested_regions: unknown region ids {bad}")
        local = local_skeletons_for(topo, regions, skeleton, config.congested_regions, config.sub_region_side)
    fw = FallbackForwarder(
        topo, regions, config.policy, traffic, None, local, config.local_routing
    )
    index = {"i": 0}
    scopes: frozenset[int] = frozenset()

    def forward(tunnel, path, seglist):
        nonlocal scopes
        if schedule.advance(index["i"]):
            scopes = failure_scopes(topo, regions, schedule.active)
        index["i"] += 1
        fw.tables = activate_local_table(scopes, topo, [(tunnel, seglist)], regions) if scopes else None
        traces.append(fw.forward(tunnel, seglist))

    _, stats = plan_all(
        skeleton,
        tunnels,
        config.batch,
        config.smoothing_alpha,
        regions,
        forward=forward,
        traffic=traffic,
        topo=topo,
        aggregate=config.aggregate,
    )
    return stats.as_dict()


def _route_baseline(config, topo, tunnels, traffic, schedule, traces):
    router = BaselineRouter(topo, config.algorithm, traffic, config.seed)
    for i, tunnel in enumerate(tunnels):
        schedule.advance(i)
        traces.append(router.forward(tunnel))
    return {
        "dijkstra_relaxations": router.stats.relaxations,
        "paths_computed": router.stats.paths or len(tunnels),
    }


def run(config: RunConfig, *, write: bool = True) -> RunResult:
    """Execute one arm end to end; ``write=False`` skips the artifacts."""
    topo = build_topology(config)
    regions = partition(topo, config.region_side)
    tunnels = generate_tunnels(config, regions)
    traffic = TrafficMatrix(topo)
    schedule = _FailureSchedule(topo, config.failures)
    traces: list[ForwardTrace] = []
    status, error = "ok", None
    start = time.perf_counter()
    try:
        if config.algorithm == LGSR:
            stats = _route_lgsr(config, topo, regions, tunnels, traffic, schedule, traces)
        else:
            stats = _route_baseline(config, topo, tunnels, traffic, schedule, traces)
    except (LocalFailure, RoutingFault, NoPathError) as exc:
        status, error = "partial", f"{type(exc).__name__}: {exc}"
        stats = {}
        log.error("run %s aborted: %s", config.digest(), error)
    exec_time = time.perf_counter() - start
    boundary = None
    if config.gini_population == BOUNDARY_LINKS:
        boundary = [link for link, _ in boundary_links(topo, regions, build_skeleton(regions, topo))]
    metrics = collect(
        traffic,
        traces,
        config.delay,
        exec_time,
        stats,
        population=config.gini_population,
        boundary=boundary,
    )
    run_dir = Path(config.output_dir) / f"run_{config.digest()}"
    result = RunResult(
        config,
        metrics,
        run_dir,
        run_dir / "edges.csv",
        run_dir / "heatmap.svg",
        status,
        error,
        traces,
        traffic,
    )
    if write:
        write_artifacts(result)
    return result


def metrics_record(result: RunResult) -> dict:
    cfg = result.config
    if cfg.algorithm == LGSR:
        interpretation = "landmark-guided segment routing"
    else:
        interpretation = INTERPRETATIONS[RouterKind(cfg.algorithm)]
    return {
        "status": result.status,
        "error": result.error,
        "config_hash": cfg.digest(),
        "algorithm": cfg.algorithm,
        "algorithm_interpretation": interpretation,
        "traffic_generation": TRAFFIC_NOTE,
        "version": __version__,
        "metrics": result.metrics.deterministic_dict(),
    }


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_artifacts(result: RunResult) -> None:
    d = result.run_dir
    d.mkdir(parents=True, exist_ok=True)
    (d / "metrics.json").write_text(_dump_json(metrics_record(result)))
    (d / "timing.json").write_text(_dump_json({"exec_time": result.metrics.exec_time}))
    result.traffic.to_csv(result.edges_csv)
    export_heatmap(result.traffic, result.heatmap_svg)
    echo = result.config.model_dump(mode="json")
    (d / "config.echo").write_text(yaml.safe_dump(echo, sort_keys=True))


def export_heatmap(traffic: TrafficMatrix, path: str | Path, title: str | None = None) -> Path:
    topo = traffic.topo
    rows = [(link, traffic.loads[link]) for link in topo.iter_links()]
    svg = render_heatmap(topo, rows, title=title)
    path = Path(path)
    path.write_text(svg)
    return path


# -- sweeps ----------------------------------------------------------------

SWEEP_COLUMNS = [
    "scale",
    "tunnels",
    "volume",
    "algorithm",
    "region_side",
    "seed",
    "status",
    "gini",
    "avg_latency",
    "max_utilization",
    "exec_time",
    "run_dir",
]


def expand_grid(spec: dict[str, Any]) -> list[RunConfig]:
    """``{"base": {...}, "grid": {key: [values, ...]}}`` -> one config per combination."""
    if not isinstance(spec, dict) or "base" not in spec:
        raise ConfigError("grid spec needs a 'base' mapping and an optional 'grid' mapping")
    extra = set(spec) - {"base", "grid"}
    if extra:
        raise ConfigError(f"grid spec: unknown keys {sorted(extra)}")
    base = spec["base"] or {}
    axes = spec.get("grid") or {}
    keys = list(axes)
    out = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        out.append(make_config(base, **dict(zip(keys, combo))))
    return out


def load_sweep(target: str | Path) -> list[RunConfig]:
    """Configs from a directory of config files or a grid-spec file."""
    target = Path(target)
    if target.is_dir():
        files = sorted(p for p in target.iterdir() if p.suffix in (".yaml", ".yml", ".json"))
        if not files:
            raise ConfigError(f"{target}: no config files")
        return [load_config(p) for p in files]
    try:
        spec = yaml.safe_load(target.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{target}: {exc}") from None
    return expand_grid(spec)


def _sweep_one(config: RunConfig) -> dict:
    try:
        res = run(config)
    except ConfigError as exc:
        return _row(config, None, "config_error", str(exc))
    except Exception as exc:  # one broken run must not stop the sweep
        log.exception("run %s failed", config.digest())
        return _row(config, None, "error", f"{type(exc).__name__}: {exc}")
    return _row(config, res, res.status, res.error)


def _row(config: RunConfig, res: RunResult | None, status: str, error: str | None) -> dict:
    m = res.metrics if res is not None else None
    return {
        "scale": f"{config.grid[0]}x{config.grid[1]}",
        "tunnels": config.tunnel_count,
        "volume": config.tunnel_volume,
        "algorithm": config.algorithm,
        "region_side": config.region_side,
        "seed": config.seed,
        "status": status,
        "gini": "" if m is None else repr(m.gini),
        "avg_latency": "" if m is None or m.avg_latency is None else repr(m.avg_latency),
        "max_utilization": "" if m is None else repr(m.max_utilization),
        "exec_time": "" if m is None else f"{m.exec_time:.6f}",
        "run_dir": "" if res is None else str(res.run_dir),
    }


def sweep(configs: Sequence[RunConfig], out_csv: str | Path | None = None, workers: int = 1) -> list[dict]:
    """Run every config (in input order) and optionally write the combined table."""
    if not configs:
        raise ConfigError("sweep needs at least one config")
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, configs))
    else:
        rows = [_sweep_one(c) for c in configs]
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows
