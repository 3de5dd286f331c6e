"""Command line entry point: ``lgsr run|sweep|oracle|heatmap``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .forwarding import TrafficMatrix, read_edges_csv
from .harness import ConfigError, export_heatmap, load_config, load_sweep, metrics_record, run, sweep
from .oracles import bound_report_csv, bound_table
from .topology import GridTopology

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ROUTING = 3


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output_dir:
        config = config.model_copy(update={"output_dir": args.output_dir})
    result = run(config)
    print(json.dumps(metrics_record(result), sort_keys=True, indent=2))
    print(f"artifacts: {result.run_dir}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_ROUTING


def _cmd_sweep(args) -> int:
    configs = load_sweep(args.target)
    if args.output_dir:
        configs = [c.model_copy(update={"output_dir": args.output_dir}) for c in configs]
    out = args.out or Path(configs[0].output_dir) / "sweep.csv"
    rows = sweep(configs, out, workers=args.workers)
    bad = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} runs, {len(bad)} not ok; table: {out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    rows = bound_table(args.max_b)
    report = bound_report_csv(rows)
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    lhs = sum(r.lhs_strict for r in rows)
    dp = sum(r.dp_strict for r in rows)
    minor = sum(r.minor < r.bound for r in rows)
    literal = sum(r.literal < r.bound for r in rows)
    n = len(rows)
    print(
        f"pairs={n} binomial_sum<bound: {lhs}/{n}  dp_max<bound: {dp}/{n}  "
        f"minor_axis_sum<bound: {minor}/{n}  literal_variant<bound: {literal}/{n}",
        file=sys.stderr,
    )
    return EXIT_OK


def _grid_from_echo(edges: Path) -> tuple[int, int, bool] | None:
    echo = edges.parent / "config.echo"
    if not echo.exists():
        return None
    cfg = load_config(echo)
    return cfg.grid[0], cfg.grid[1], cfg.wrap


def _cmd_heatmap(args) -> int:
    edges = Path(args.edges)
    try:
        rows = read_edges_csv(edges)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    dims = None
    if args.width and args.height:
        dims = (args.width, args.height, not args.no_wrap)
    else:
        dims = _grid_from_echo(edges)
    if dims is None:
        if not rows:
            raise ConfigError("empty edges file; pass --width and --height")
        dims = (max(max(r[0], r[2]) for r in rows) + 1, max(max(r[1], r[3]) for r in rows) + 1, not args.no_wrap)
    w, h, wrap = dims
    topo = GridTopology(w, h, wrap_x=wrap, wrap_y=wrap)
    traffic = TrafficMatrix(topo)
    for sx, sy, dx, dy, load in rows:
        try:
            traffic.add(topo.find_link((sx, sy), (dx, dy)), load)
        except ValueError as exc:
            raise ConfigError(f"{edges}: {exc}") from None
    out = Path(args.out) if args.out else edges.with_suffix(".svg")
    export_heatmap(traffic, out, title=args.title)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgsr", description="Landmark-guided segment routing simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute one run config")
    r.add_argument("config", help="YAML or JSON config file")
    r.add_argument("--output-dir", help="override the config's output_dir")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a directory of configs or a grid spec")
    s.add_argument("target", help="directory of config files, or a file with 'base' and 'grid' keys")
    s.add_argument("--out", help="combined CSV path (default <output_dir>/sweep.csv)")
    s.add_argument("--output-dir", help="override every config's output_dir")
    s.add_argument("--workers", type=int, default=1, help="parallel runs")
    s.set_defaults(func=_cmd_sweep)

    o = sub.add_parser("oracle", help="edge-load bound oracle report (CSV)")
    o.add_argument("--max-b", type=int, default=12)
    o.add_argument("--out", help="write the CSV here instead of stdout")
    o.set_defaults(func=_cmd_oracle)

    h = sub.add_parser("heatmap", help="render an edges.csv as SVG")
    h.add_argument("edges")
    h.add_argument("--out")
    h.add_argument("--width", type=int)
    h.add_argument("--height", type=int)
    h.add_argument("--no-wrap", action="store_true")
    h.add_argument("--title")
    h.set_defaults(func=_cmd_heatmap)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
