"""Command-line entry point: ``regen expand|ground|solve|run|eval|plot|pipeline``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .assets import AssetDbError, load_asset_db
from .compiler import CompileError, ScenarioConfig, compile as compile_config
from .expansion import DEFAULT_ROUTE, BehaviorSpec, ExpansionBudget, enumerate_scenarios, expand, init_graph
from .graph import GraphError, ScenarioGraph
from .metrics import HashEmbedder, MetricError, RemoteEmbedder, load_corpus, sampled_diversity
from .oracle import OracleError, OracleHandle
from .sim import MapError
from .solver import ConcreteScenario, SearchParams, SolverError, apply_counterfactual, rollout, solve_placement

log = logging.getLogger("regen")

EXIT_OK, EXIT_ORACLE, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4, 5


# -- helpers -------------------------------------------------------------------
def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def slug(text: str, limit: int = 40) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")[:limit] or "scenario"


class Outputs:
    """Writes artifacts under one directory and records their hashes in manifest.json."""

    def __init__(self, root: Path, command: str, params: dict, inputs: dict[str, str]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = {"command": command, "params": params, "inputs": inputs, "artifacts": {}}

    def write(self, rel: str, data: str | bytes) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        raw = data.encode("utf-8") if isinstance(data, str) else data
        p.write_bytes(raw)
        self.manifest["artifacts"][rel] = sha256_bytes(raw)
        return p

    def close(self) -> Path:
        self.manifest["artifacts"] = dict(sorted(self.manifest["artifacts"].items()))
        p = self.root / "manifest.json"
        p.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _oracle(args) -> OracleHandle:
    return OracleHandle.from_spec(args.oracle)


def _oracle_digest(handle: OracleHandle) -> dict:
    if handle.backend != "scripted":
        return {"oracle": f"remote:{handle.endpoint}"}
    return {"transcript": sha256_bytes(handle.transcript().to_json().encode("utf-8"))}


def _db_digest(args) -> str:
    from .assets import dump_asset_db

    return sha256_bytes(dump_asset_db(load_asset_db(args.assets)).encode("utf-8"))


def _route_for(args, route_id: str) -> str:
    if args.map:
        return f"{args.map}/{route_id.rpartition('/')[2]}"
    return route_id


def _search(args) -> SearchParams:
    return SearchParams(grid_step=args.grid_step, speed_step=args.speed_step, max_candidates=args.max_candidates,
                        seed=args.seed, gap_min=args.gap_min, max_ticks=args.max_ticks)


def _search_params(args) -> dict:
    return {"grid_step": args.grid_step, "speed_step": args.speed_step, "max_candidates": args.max_candidates,
            "gap_min": args.gap_min, "max_ticks": args.max_ticks, "seed": args.seed}


def parse_counterfactual(spec: str) -> tuple[Optional[str], str, str]:
    """``[entity:]key=value`` with underscores in the key standing for spaces."""
    lhs, sep, value = spec.partition("=")
    if not sep or not lhs or not value:
        raise ValueError(f"counterfactual must look like key=value, got {spec!r}")
    entity, _, key = lhs.rpartition(":")
    return (entity or None), key.replace("_", " "), value.replace("_", " ")


TRACE_COLUMNS = ("tick", "actor", "x", "y", "heading", "speed", "properties", "gnss")


def trace_table(trace: list[dict]) -> str:
    """Flatten a trace into CSV rows, one per (tick, actor)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for snap in trace:
        for name in sorted(snap["actors"]):
            a = snap["actors"][name]
            gnss = "" if a.get("gnss") is None else json.dumps(a["gnss"])
            w.writerow([snap["tick"], name, repr(a["x"]), repr(a["y"]), repr(a["heading"]), repr(a["speed"]),
                        json.dumps(a.get("properties", {}), sort_keys=True), gnss])
    return buf.getvalue()


def _run_record(config: ScenarioConfig, result) -> dict:
    return {
        "route_id": config.route_id,
        "verdict": result.verdict,
        "stage_log": list(result.stage_log),
        "reached_stage": result.reached_stage,
        "stages": len(config.fsm.stages),
        "collisions": [list(c) for c in result.collisions],
        "ticks": result.ticks,
        "trace": result.trace,
    }


# -- commands ------------------------------------------------------------------
def cmd_expand(args) -> int:
    db = load_asset_db(args.assets)
    oracle = _oracle(args)
    route = _route_for(args, args.route)
    user = {args.behavior: args.user_cause} if args.user_cause else None
    if user is None and oracle.backend == "scripted" and oracle.transcript().user_causes:
        user = oracle.transcript().user_causes
    budget = ExpansionBudget(args.max_depth, args.max_events, args.max_nodes)
    graph = expand(init_graph(BehaviorSpec(args.behavior, route)), db, budget, oracle, args.prior, user)
    out = Outputs(args.out, "expand", {"behavior": args.behavior, "route": route, "prior": args.prior,
                                       "budget": [args.max_depth, args.max_events, args.max_nodes]},
                  {"assets": _db_digest(args), **_oracle_digest(oracle)})
    out.write("graph.json", graph.to_json())
    out.close()
    causes = len(graph.causes(graph.behavior_node_id))
    print(f"graph: {len(graph.nodes)} nodes, {causes} direct causes -> {Path(args.out) / 'graph.json'}")
    return EXIT_OK


def ground_graph(graph: ScenarioGraph, db, oracle, route: str) -> list[ScenarioConfig]:
    return [compile_config(sub, db, oracle, route) for sub in enumerate_scenarios(graph, simulatable_only=True)]


def cmd_ground(args) -> int:
    db = load_asset_db(args.assets)
    oracle = _oracle(args)
    graph_path = Path(args.graph)
    graph = ScenarioGraph.from_json(graph_path.read_text())
    configs = ground_graph(graph, db, oracle, _route_for(args, args.route))
    out = Outputs(args.out, "ground", {"route": _route_for(args, args.route)},
                  {"graph": sha256_file(graph_path), "assets": _db_digest(args), **_oracle_digest(oracle)})
    for i, cfg in enumerate(configs):
        out.write(f"configs/{i:02d}_{slug(cfg.causal_graph[0])}.config.json", cfg.to_json())
    out.close()
    if not configs:
        log.warning("graph has no simulatable cause path; no configs written")
    print(f"{len(configs)} config(s) -> {Path(args.out) / 'configs'}")
    return EXIT_OK


def _load_config(args, path: Path) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json(path.read_text())
    cfg.route_id = _route_for(args, cfg.route_id)
    for spec in args.counterfactual or []:
        entity, key, value = parse_counterfactual(spec)
        cfg = apply_counterfactual(cfg, key, value, entity)
    return cfg


def cmd_solve(args) -> int:
    db = load_asset_db(args.assets)
    path = Path(args.config)
    cfg = _load_config(args, path)
    params = _search(args)
    params = SearchParams(**{**params.__dict__, "jobs": args.jobs})
    result = solve_placement(cfg, db, params)
    out = Outputs(args.out, "solve", {**_search_params(args), "counterfactual": args.counterfactual or []},
                  {"config": sha256_file(path), "assets": _db_digest(args)})
    out.write("scenario.json", _dump(result.to_dict()))
    out.close()
    print(f"{result.verdict}: reached stage {result.reached_stage}/{len(cfg.fsm.stages)}, "
          f"{result.rollouts} rollout(s) -> {Path(args.out) / 'scenario.json'}")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def _parse_gnss(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, sigma = item.partition("=")
        if not sep:
            raise ValueError(f"--gnss expects NAME=SIGMA, got {item!r}")
        out[name] = float(sigma)
    return out


def cmd_run(args) -> int:
    db = load_asset_db(args.assets)
    path = Path(args.scenario)
    scen = ConcreteScenario.from_dict(json.loads(path.read_text()))
    if not scen.assignments:
        log.error("scenario has no placement to run")
        return EXIT_INFEASIBLE
    result = rollout(scen.config, scen.assignments, db, args.max_ticks, args.seed, _parse_gnss(args.gnss))
    out = Outputs(args.out, "run", {"max_ticks": args.max_ticks, "seed": args.seed, "gnss": args.gnss or []},
                  {"scenario": sha256_file(path), "assets": _db_digest(args)})
    out.write("run.json", _dump(_run_record(scen.config, result)))
    out.write("trace.csv", trace_table(result.trace))
    out.close()
    print(f"{result.verdict}: stage_log {result.stage_log} -> {Path(args.out) / 'run.json'}")
    return EXIT_OK if result.verdict == "accepted" else EXIT_INFEASIBLE


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    metric = args.metric.replace("-", "_")
    embedder = None
    if metric == "embedding":
        embedder = RemoteEmbedder.from_env() if args.embedder == "remote" else HashEmbedder()
    size = args.sample_size or len(corpus.texts)
    report = sampled_diversity(corpus, metric, size, args.repeats, args.seed, args.max_n, embedder)
    text = json.dumps({"corpus": corpus.source_label, **report.to_dict()}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_trace

    record = json.loads(Path(args.trace).read_text())
    Path(args.out).write_bytes(plot_trace(record))
    print(f"plot -> {args.out}")
    return EXIT_OK


def _solve_and_run(job):
    cfg_dict, assets, params = job
    db = load_asset_db(assets)
    cfg = ScenarioConfig.from_dict(cfg_dict)
    scen = solve_placement(cfg, db, params)
    record = None
    if scen.assignments:
        record = _run_record(cfg, rollout(cfg, scen.assignments, db, params.max_ticks, params.seed))
    return scen.to_dict(), record


def cmd_pipeline(args) -> int:
    from .plotting import plot_trace

    db = load_asset_db(args.assets)
    oracle = _oracle(args)
    route = _route_for(args, args.route)
    user = {args.behavior: args.user_cause} if args.user_cause else None
    if user is None and oracle.backend == "scripted" and oracle.transcript().user_causes:
        user = oracle.transcript().user_causes
    budget = ExpansionBudget(args.max_depth, args.max_events, args.max_nodes)
    graph = expand(init_graph(BehaviorSpec(args.behavior, route)), db, budget, oracle, args.prior, user)
    configs = ground_graph(graph, db, oracle, route)
    params = _search(args)
    jobs = [(c.to_dict(), args.assets, params) for c in configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_solve_and_run, jobs))
    else:
        results = [_solve_and_run(j) for j in jobs]
    out = Outputs(args.out, "pipeline",
                  {"behavior": args.behavior, "route": route, "prior": args.prior,
                   "budget": [args.max_depth, args.max_events, args.max_nodes], **_search_params(args)},
                  {"assets": _db_digest(args), **_oracle_digest(oracle)})
    out.write("graph.json", graph.to_json())
    summary = []
    for i, (cfg, (scen, record)) in enumerate(zip(configs, results)):
        stem = f"{i:02d}_{slug(cfg.causal_graph[0])}"
        out.write(f"configs/{stem}.config.json", cfg.to_json())
        out.write(f"scenarios/{stem}.scenario.json", _dump(scen))
        if record is not None:
            out.write(f"runs/{stem}.run.json", _dump(record))
            if not args.no_plots:
                out.write(f"plots/{stem}.png", plot_trace(record))
        summary.append({"scenario": stem, "narrative": cfg.narrative, "feasible": scen["feasible"],
                        "verdict": record["verdict"] if record else scen["verdict"]})
    out.write("summary.json", _dump(summary))
    out.close()
    for s in summary:
        print(f"{s['verdict']:>9}  {s['narrative']}")
    print(f"manifest -> {Path(args.out) / 'manifest.json'}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------
def _add_budget(p):
    p.add_argument("--max-depth", type=int, default=1, help="longest cause chain below the behavior")
    p.add_argument("--max-events", type=int, default=10, help="accepted causes per event")
    p.add_argument("--max-nodes", type=int, default=500, help="total node budget")


def _add_search(p):
    p.add_argument("--grid-step", type=float, default=5.0, help="placement grid spacing in m")
    p.add_argument("--speed-step", type=float, default=1.0, help="speed grid spacing in m/s")
    p.add_argument("--max-candidates", type=int, default=500)
    p.add_argument("--gap-min", type=float, default=8.0, help="minimum spawn gap to the ego in m")
    p.add_argument("--max-ticks", type=int, default=1200)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--oracle", default="scripted:abrupt_stop", help="scripted:NAME_OR_PATH or remote")
    common.add_argument("--assets", default="driving", help="asset database file or bundled name")
    common.add_argument("--map", default=None, help="map id overriding the route's map")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="regen", description="Behavior-conditioned scenario synthesis.",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", parents=[common], help="grow a scenario graph from a behavior")
    p.add_argument("--behavior", required=True)
    p.add_argument("--route", default=DEFAULT_ROUTE, help="ego route as map/route")
    p.add_argument("--prior", default=None)
    p.add_argument("--user-cause", action="append", help="extra candidate cause (repeatable)")
    _add_budget(p)
    p.add_argument("-o", "--out", default="out/expand")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("ground", parents=[common], help="compile each cause path into a config")
    p.add_argument("graph")
    p.add_argument("--route", default=DEFAULT_ROUTE)
    p.add_argument("-o", "--out", default="out/ground")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("solve", parents=[common], help="search placements for a config")
    p.add_argument("config")
    _add_search(p)
    p.add_argument("--counterfactual", action="append", metavar="[ENTITY:]KEY=VALUE",
                   help="change one static property before solving, e.g. brake_light=off")
    p.add_argument("-o", "--out", default="out/solve")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", parents=[common], help="roll out a solved scenario")
    p.add_argument("scenario")
    p.add_argument("--max-ticks", type=int, default=1200)
    p.add_argument("--gnss", action="append", metavar="NAME=SIGMA", help="GNSS noise for an actor in m")
    p.add_argument("-o", "--out", default="out/run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="diversity of a text corpus")
    p.add_argument("corpus", help="one description per line, or a bundled corpus name")
    p.add_argument("--metric", choices=["self-bleu", "embedding"], default="self-bleu")
    p.add_argument("--sample-size", type=int, default=None, help="defaults to the corpus size")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--max-n", type=int, default=4)
    p.add_argument("--embedder", choices=["hash", "remote"], default="hash")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common], help="draw a run trace")
    p.add_argument("trace", help="run.json written by `regen run`")
    p.add_argument("-o", "--out", default="trace.png")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pipeline", parents=[common], help="expand, ground, solve and run")
    p.add_argument("--behavior", required=True)
    p.add_argument("--route", default=DEFAULT_ROUTE)
    p.add_argument("--prior", default=None)
    p.add_argument("--user-cause", action="append")
    _add_budget(p)
    _add_search(p)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-o", "--out", default="out/pipeline")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OracleError as exc:
        log.error("oracle: %s", exc)
        return EXIT_ORACLE
    except (CompileError, GraphError, SolverError, KeyError, ValueError) as exc:
        if isinstance(exc, (AssetDbError, MapError, MetricError)) and "cannot read" in str(exc):
            log.error("%s", exc)
            return EXIT_IO
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("i/o: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
