"""Command-line interface.

Every subcommand reads an optional TOML config (``--config``); each config
field can be overridden by a flag with the same dotted name, for example
``--strategy.kind tree --fit.r0 auto``. Exit codes: 0 ok, 2 config error,
3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import io, synthetic
from .analysis import extend_leaves, filter_branches, project_dataset, pseudotime
from .energy import total_energy
from .ensemble import ConsensusFilters, bootstrap_ensemble, consensus_graph, filter_consensus
from .errors import ConfigError, DataError, ElasticGraphError, GraphValidationError, NumericError
from .fitter import FitConfig, PointCloud, partition_points
from .grammar import PrincipalGraphResult, grow_graph, make_strategy, resolve_workers
from .plot import render_svg
from .robust import estimate_trimming_radius, principal_forest, travel_maze_cluster

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("elasticgraph")

COMMANDS = ("fit", "ensemble", "consensus", "forest", "maze", "pseudotime", "render", "bench")


@dataclass(frozen=True)
class Field:
    kind: str
    default: object = None
    help: str = ""


# dotted name -> field; None defaults mean "unset"
SCHEMA: dict[str, Field] = {
    "input.path": Field("str", None, "data table (CSV or other delimited text)"),
    "input.delimiter": Field("str", ",", "column delimiter"),
    "input.header": Field("bool", False, "first row holds column names"),
    "input.weight_column": Field("int_or_str", None, "column holding point weights"),
    "strategy.kind": Field("str", "tree", "curve, circle or tree"),
    "strategy.target_nodes": Field("int", 20, "number of nodes of the final graph"),
    "strategy.alpha": Field("float", 0.0, "penalty on edges at branching nodes"),
    "fit.lam": Field("float", 0.01, "edge stretching modulus"),
    "fit.mu": Field("float", 0.1, "star bending modulus"),
    "fit.r0": Field("radius", math.inf, "trimming radius: a number, inf or auto"),
    "fit.epsilon": Field("float", 1e-2, "convergence tolerance while searching"),
    "fit.max_iter": Field("int", 10, "iteration cap while searching"),
    "fit.final_epsilon": Field("float", 1e-3, "convergence tolerance of accepted graphs"),
    "fit.final_max_iter": Field("int", 100, "iteration cap of accepted graphs"),
    "ensemble.k": Field("int", 100, "number of resampled fits"),
    "ensemble.p": Field("float", 0.9, "fraction of points in each sample"),
    "ensemble.seed": Field("int", 0, "sampling seed"),
    "ensemble.input": Field("str", None, "ensemble JSON to build the consensus from"),
    "consensus.M": Field("int", 20, "number of consensus nodes"),
    "consensus.edge_threshold": Field("int", 0, "keep edges seen more often than this"),
    "consensus.seed": Field("int", 0, "k-means seed"),
    "consensus.min_node_local_density": Field("float", None, "density filter on pooled nodes"),
    "consensus.density_radius": Field("float", None, "radius of the density filter"),
    "consensus.edge_len_min": Field("float", None, "drop shorter edges"),
    "consensus.edge_len_max": Field("float", None, "drop longer edges"),
    "consensus.drop_unconnected": Field("bool", False, "drop nodes left without edges"),
    "robust.density_radius": Field("float", None, "radius of the local density estimate"),
    "robust.min_remaining": Field("int", None, "stop when this few points are left"),
    "robust.max_graphs": Field("int", None, "cap on the number of forest graphs"),
    "robust.max_curves": Field("int", 10, "cap on the number of maze curves"),
    "robust.seed": Field("int", 0, "seed of the sampling heuristics"),
    "analysis.graph": Field("str", None, "graph JSON used by pseudotime and render"),
    "analysis.root": Field("int", None, "root node of the pseudotime path"),
    "analysis.leaf": Field("int", None, "end node of the pseudotime path"),
    "analysis.extend": Field("str", "none", "leaf extension: none, centroid or max"),
    "analysis.min_branch_points": Field("int", 0, "drop edges with fewer projected points"),
    "render.projection": Field("str", "0,1", "coordinate pair 'i,j' or 'pc:i,j'"),
    "render.labels": Field("str", None, "CSV with a label column used for colors"),
    "output.graph": Field("str", None, "JSON output"),
    "output.assignments": Field("str", None, "per-point assignment CSV"),
    "output.pseudotime": Field("str", None, "pseudotime CSV"),
    "output.svg": Field("str", None, "SVG plot"),
    "output.energy_trace": Field("str", None, "energy per accepted grammar step"),
    "output.bench": Field("str", None, "benchmark CSV"),
    "bench.nodes": Field("intlist", [10, 20, 30], "node counts to time"),
    "bench.points": Field("int", 2000, "points per benchmark dataset"),
    "bench.dims": Field("int", 3, "dimension of the benchmark data"),
    "bench.kinds": Field("strlist", ["curve", "tree"], "strategies to time"),
    "bench.seed": Field("int", 0, "seed of the benchmark data"),
}


def _convert(key: str, value):
    kind = SCHEMA[key].kind
    try:
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
                return value.lower() in ("true", "1", "yes")
            raise TypeError
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "radius":
            if isinstance(value, str) and value.lower() == "auto":
                return "auto"
            return float(value)
        if kind == "int_or_str":
            if isinstance(value, str):
                return int(value) if value.lstrip("-").isdigit() else value
            return int(value)
        if kind == "intlist":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [int(v) for v in value]
        if kind == "strlist":
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"invalid value {value!r} for {key} (expected {kind})")


def _flatten(d: dict, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the TOML file, then dotted overrides; values are type-checked."""
    cfg = {k: (list(f.default) if isinstance(f.default, list) else f.default)
           for k, f in SCHEMA.items()}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        for key, value in _flatten(data):
            if key not in SCHEMA:
                raise ConfigError(f"unknown config field {key}")
            cfg[key] = _convert(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = _convert(key, value)
    return cfg


def validate(cfg: dict, command: str) -> None:
    """Check everything the command needs before any computation starts."""
    needs_data = command not in ("bench",) and not (command == "consensus" and cfg["ensemble.input"])
    if needs_data and not cfg["input.path"]:
        raise ConfigError("input.path is required")
    if cfg["strategy.kind"] not in ("curve", "circle", "tree"):
        raise ConfigError(f"strategy.kind must be curve, circle or tree, got {cfg['strategy.kind']!r}")
    if cfg["strategy.target_nodes"] < 2:
        raise ConfigError("strategy.target_nodes must be at least 2")
    if cfg["strategy.alpha"] < 0:
        raise ConfigError("strategy.alpha must be nonnegative")
    r0 = cfg["fit.r0"]
    if r0 != "auto" and not r0 > 0:
        raise ConfigError("fit.r0 must be positive, inf or auto")
    if not 0 < cfg["ensemble.p"] <= 1:
        raise ConfigError("ensemble.p must lie in (0, 1]")
    if cfg["ensemble.k"] < 1:
        raise ConfigError("ensemble.k must be at least 1")
    if cfg["consensus.M"] < 2:
        raise ConfigError("consensus.M must be at least 2")
    if cfg["analysis.extend"] not in ("none", "centroid", "max"):
        raise ConfigError("analysis.extend must be none, centroid or max")
    if cfg["analysis.min_branch_points"] < 0:
        raise ConfigError("analysis.min_branch_points must be nonnegative")
    _projection(cfg["render.projection"])
    if command == "maze" and r0 != "auto" and math.isinf(r0):
        raise ConfigError("maze needs a finite fit.r0 (a number or auto)")
    want_pt = command == "pseudotime" or (command == "fit" and cfg["output.pseudotime"])
    if want_pt:
        if cfg["analysis.root"] is None or cfg["analysis.leaf"] is None:
            raise ConfigError("pseudotime needs analysis.root and analysis.leaf")
        if cfg["analysis.root"] == cfg["analysis.leaf"]:
            raise ConfigError("analysis.root and analysis.leaf must differ")
    if command == "pseudotime" and not cfg["analysis.graph"]:
        raise ConfigError("pseudotime needs analysis.graph (a fitted graph JSON)")
    if command == "pseudotime" and not cfg["output.pseudotime"]:
        raise ConfigError("pseudotime needs output.pseudotime")
    if command == "render" and not cfg["output.svg"]:
        raise ConfigError("render needs output.svg")
    if command == "bench":
        for k in cfg["bench.kinds"]:
            if k not in ("curve", "tree", "circle"):
                raise ConfigError(f"unknown bench kind {k!r}")
        if not cfg["bench.nodes"] or min(cfg["bench.nodes"]) < 4:
            raise ConfigError("bench.nodes must be a list of node counts >= 4")


def _projection(text: str):
    s = text.strip()
    try:
        if s.startswith("pc:"):
            i, j = (int(v) for v in s[3:].split(","))
            return ("pc", i, j)
        i, j = (int(v) for v in s.split(","))
        return (i, j)
    except ValueError:
        raise ConfigError(f"render.projection must look like '0,1' or 'pc:1,2', got {text!r}") from None


class Run:
    """Pipeline state shared by the subcommands."""

    def __init__(self, cfg: dict, workers: int, verbose: bool):
        self.cfg = cfg
        self.workers = workers
        self.verbose = verbose
        self.stage = "config"

    def say(self, msg: str) -> None:
        if self.verbose:
            print(msg, file=sys.stderr)

    def load(self) -> PointCloud:
        self.stage = "load"
        c = self.cfg
        cloud = io.load_matrix(c["input.path"], c["input.delimiter"], c["input.header"],
                               c["input.weight_column"])
        self.say(f"loaded {cloud.n} points in {cloud.dim} dimensions")
        return cloud

    def fit_config(self, cloud: PointCloud | None) -> FitConfig:
        c = self.cfg
        r0 = c["fit.r0"]
        if r0 == "auto":
            self.stage = "r0"
            r0 = estimate_trimming_radius(cloud, 1000, 0.5, seed=c["robust.seed"])
            self.say(f"trimming radius {r0:.6g}")
        try:
            return FitConfig(epsilon=c["fit.epsilon"], max_iter=c["fit.max_iter"], r0=r0,
                             alpha=c["strategy.alpha"], lam=c["fit.lam"], mu=c["fit.mu"],
                             final_epsilon=c["fit.final_epsilon"],
                             final_max_iter=c["fit.final_max_iter"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def strategy(self):
        c = self.cfg
        return make_strategy(c["strategy.kind"], c["strategy.target_nodes"], c["strategy.alpha"])

    def report(self, result: PrincipalGraphResult) -> None:
        for k, s in enumerate(result.history, start=1):
            self.say(f"step {k}: {s.kind} {s.target} nodes={s.n_nodes} energy={s.energy:.10g}")
        e = result.energy
        self.say(f"final: nodes={result.graph.n_nodes} edges={result.graph.n_edges} "
                 f"mse={e.mse:.10g} u_e={e.u_e:.10g} u_r={e.u_r:.10g} total={e.total:.10g}")


def _svg(run: Run, cloud, graphs, reference=None, labels=None):
    path = run.cfg["output.svg"]
    if path:
        run.stage = "render"
        render_svg(cloud, graphs, path, _projection(run.cfg["render.projection"]), labels, reference)


def cmd_fit(run: Run) -> None:
    c = run.cfg
    cloud = run.load()
    config = run.fit_config(cloud)
    strategy = run.strategy()
    run.stage = "fit"
    result = grow_graph(cloud, strategy, config, run.workers)
    run.report(result)
    graph, phi = result.graph, result.embedding
    if c["analysis.extend"] != "none" or c["analysis.min_branch_points"] > 0:
        run.stage = "postprocess"
        if c["analysis.extend"] != "none":
            graph, phi = extend_leaves(graph, phi, cloud, c["analysis.extend"],
                                       default_mu=config.mu)
        if c["analysis.min_branch_points"] > 0:
            graph, phi = filter_branches(graph, phi, cloud, c["analysis.min_branch_points"])
        part = partition_points(cloud, phi, config.r0)
        energy = total_energy(cloud, graph, phi, part, config.alpha, config.r0)
        result = PrincipalGraphResult(graph, phi, part, energy, result.alpha, result.r0,
                                      result.history, result.fit_trace)
    run.stage = "output"
    if c["output.graph"]:
        io.save_graph(result, c["output.graph"])
    if c["output.assignments"]:
        io.write_assignments(c["output.assignments"], result.partition)
    if c["output.energy_trace"]:
        io.write_energy_trace(c["output.energy_trace"], result)
    if c["output.pseudotime"]:
        run.stage = "pseudotime"
        table = pseudotime(graph, phi, project_dataset(graph, phi, cloud),
                           c["analysis.root"], c["analysis.leaf"])
        io.write_pseudotime(c["output.pseudotime"], table)
    _svg(run, cloud, [], (graph, phi))


def cmd_ensemble(run: Run):
    c = run.cfg
    cloud = run.load()
    config = run.fit_config(cloud)
    run.stage = "ensemble"
    ens = bootstrap_ensemble(cloud, run.strategy(), config, c["ensemble.k"], c["ensemble.p"],
                             c["ensemble.seed"], run.workers)
    for i, m in enumerate(ens.members):
        run.say(f"member {i}: nodes={m.graph.n_nodes} energy={m.result.energy.total:.10g}")
    run.stage = "output"
    if c["output.graph"]:
        io.save_graph(ens, c["output.graph"])
    _svg(run, cloud, [(m.graph, m.embedding) for m in ens.members])
    return cloud, ens


def _filters(c) -> ConsensusFilters:
    return ConsensusFilters(c["consensus.min_node_local_density"], c["consensus.density_radius"],
                            c["consensus.edge_len_min"], c["consensus.edge_len_max"],
                            c["consensus.drop_unconnected"])


def cmd_consensus(run: Run) -> None:
    c = run.cfg
    cloud = None
    if c["ensemble.input"]:
        run.stage = "load"
        ens = io.load_graph(c["ensemble.input"])
        if not hasattr(ens, "members"):
            raise DataError(f"{c['ensemble.input']} does not hold an ensemble")
        if c["input.path"]:
            cloud = run.load()
    else:
        cloud = run.load()
        config = run.fit_config(cloud)
        run.stage = "ensemble"
        ens = bootstrap_ensemble(cloud, run.strategy(), config, c["ensemble.k"], c["ensemble.p"],
                                 c["ensemble.seed"], run.workers)
    run.stage = "consensus"
    cons = consensus_graph(ens, c["consensus.M"], c["consensus.edge_threshold"],
                           c["consensus.seed"])
    cons = filter_consensus(cons, _filters(c))
    run.say(f"consensus: nodes={cons.n_nodes} edges={len(cons.edges)}")
    run.stage = "output"
    if c["output.graph"]:
        io.save_graph(cons, c["output.graph"])
    if cloud is not None:
        _svg(run, cloud, [(m.graph, m.embedding) for m in ens.members],
             (cons.to_graph(), cons.positions))


def cmd_forest(run: Run) -> None:
    c = run.cfg
    cloud = run.load()
    config = run.fit_config(cloud)
    run.stage = "forest"
    forest = principal_forest(cloud, run.strategy(), config, c["robust.min_remaining"],
                              c["robust.density_radius"], c["robust.max_graphs"], run.workers,
                              c["robust.seed"])
    for g in forest.graphs:
        run.report(g)
    run.stage = "output"
    if c["output.graph"]:
        io.save_graph(forest, c["output.graph"])
    if c["output.assignments"]:
        io.write_labels(c["output.assignments"], forest.point_labels, "graph")
    _svg(run, cloud, [(g.graph, g.embedding) for g in forest.graphs], labels=forest.point_labels)


def cmd_maze(run: Run) -> None:
    c = run.cfg
    cloud = run.load()
    config = run.fit_config(cloud)
    run.stage = "maze"
    maze = travel_maze_cluster(cloud, c["strategy.target_nodes"], config, c["robust.max_curves"],
                               c["robust.min_remaining"], c["robust.density_radius"],
                               run.workers, c["robust.seed"])
    for g in maze.curves:
        run.report(g)
    run.stage = "output"
    if c["output.graph"]:
        io.save_graph(maze, c["output.graph"])
    if c["output.assignments"]:
        io.write_labels(c["output.assignments"], maze.labels, "curve")
    _svg(run, cloud, [(g.graph, g.embedding) for g in maze.curves], labels=maze.labels)


def _loaded_graph(run: Run):
    run.stage = "load"
    obj = io.load_graph(run.cfg["analysis.graph"])
    if not isinstance(obj, PrincipalGraphResult):
        raise DataError(f"{run.cfg['analysis.graph']} does not hold a single fitted graph")
    return obj


def cmd_pseudotime(run: Run) -> None:
    c = run.cfg
    result = _loaded_graph(run)
    cloud = run.load()
    if cloud.dim != result.embedding.shape[1]:
        raise DataError("data and graph dimensions differ")
    run.stage = "pseudotime"
    table = pseudotime(result.graph, result.embedding,
                       project_dataset(result.graph, result.embedding, cloud),
                       c["analysis.root"], c["analysis.leaf"])
    run.say(f"path {list(table.path)}: {int(table.on_path.sum())} points on the path")
    run.stage = "output"
    io.write_pseudotime(c["output.pseudotime"], table)


def cmd_render(run: Run) -> None:
    c = run.cfg
    ref = None
    if c["analysis.graph"]:
        r = _loaded_graph(run)
        ref = (r.graph, r.embedding)
    cloud = run.load()
    labels = None
    if c["render.labels"]:
        run.stage = "load"
        table = io.load_matrix(c["render.labels"], ",", True)
        labels = table.x[:, -1].astype(np.int64)
        if len(labels) != cloud.n:
            raise DataError("label table and data have different lengths")
    _svg(run, cloud, [], ref, labels)


def bench_dataset(n: int, dims: int, seed: int) -> np.ndarray:
    """Three noisy arms in the first two coordinates, small noise elsewhere."""
    per = max(1, n // 3)
    x2, _, _ = synthetic.star(n_per_arm=per, noise=0.05, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = np.zeros((len(x2), dims))
    x[:, :2] = x2[:, :2] if dims >= 2 else x2[:, :1]
    if dims > 2:
        x[:, 2:] = rng.normal(scale=0.05, size=(len(x2), dims - 2))
    return x


def cmd_bench(run: Run) -> None:
    c = run.cfg
    cloud = PointCloud(bench_dataset(c["bench.points"], c["bench.dims"], c["bench.seed"]))
    config = run.fit_config(cloud)
    rows = []
    for kind in c["bench.kinds"]:
        for nodes in c["bench.nodes"]:
            run.stage = f"bench {kind} {nodes}"
            t0 = time.perf_counter()
            grow_graph(cloud, make_strategy(kind, nodes, c["strategy.alpha"]), config, run.workers)
            dt = time.perf_counter() - t0
            run.say(f"{kind} nodes={nodes} points={cloud.n} dims={cloud.dim} seconds={dt:.3f}")
            rows.append((kind, nodes, cloud.n, cloud.dim, dt))
    run.stage = "output"
    out = c["output.bench"]
    header = ["kind", "nodes", "points", "dims", "seconds"]
    if out:
        io.write_csv(out, header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(io._fmt(v) for v in r))


HANDLERS = {"fit": cmd_fit, "ensemble": cmd_ensemble, "consensus": cmd_consensus,
            "forest": cmd_forest, "maze": cmd_maze, "pseudotime": cmd_pseudotime,
            "render": cmd_render, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elasticgraph",
                                     description="Elastic principal graphs for point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: ELPI_THREADS or all cores)")
        p.add_argument("-v", "--verbose", action="store_true", help="print energies and progress")
        for key, f in SCHEMA.items():
            p.add_argument(f"--{key}", dest=key, default=None, metavar=f.kind.upper(), help=f.help)
    return parser


EXIT_CODES = ((ConfigError, 2), (DataError, 3), (GraphValidationError, 3), (NumericError, 4),
              (ElasticGraphError, 4))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        overrides = {k: getattr(args, k) for k in SCHEMA}
        cfg = load_config(args.config, overrides)
        validate(cfg, args.command)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        run = Run(cfg, resolve_workers(args.threads), args.verbose)
        HANDLERS[args.command](run)
    except ElasticGraphError as exc:
        stage = run.stage if run is not None else "config"
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
