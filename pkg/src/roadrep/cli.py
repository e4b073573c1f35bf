"""Command-line entry point: prepare, train, grid, eval, synth, inspect.

Every command takes ``--seed``; failures print a JSON error object on stderr
and exit nonzero (2 for usage and config errors, 1 otherwise).
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation as E
from . import graph as G
from . import pipeline as P
from . import synth, training
from .features import LabelMap, class_histogram
from .sampling import WalkConfig

log = logging.getLogger("roadrep")


class UsageError(ValueError):
    pass


def _read_config(path, overrides):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    cfg = training.TrainConfig.from_dict(raw)
    if "data" not in raw:
        raise training.ConfigError("missing config key: data")
    data_dir = Path(raw["data"])
    if not data_dir.is_absolute():
        data_dir = path.parent / data_dir
    run_dir = raw.get("run_dir")
    if run_dir is not None and not Path(run_dir).is_absolute():
        run_dir = path.parent / run_dir
    if overrides.seed is not None:
        cfg = replace(cfg, seed=overrides.seed)
    return cfg, data_dir, run_dir, raw


def cmd_prepare(args):
    walk = WalkConfig(num_walks=args.walks, local_len=args.local_len, seed=args.seed or 0)
    label_map = LabelMap.from_file(args.label_map) if args.label_map else None
    holdout = (args.val, args.test) if args.val is not None and args.test is not None else None
    manifest = P.prepare(
        args.inputs,
        args.out,
        task=args.task,
        seed=args.seed or 0,
        radius=args.radius,
        walk_config=walk,
        standardize=args.standardize,
        label_map=label_map,
        holdout=holdout,
    )
    data = P.load_dataset(args.out)
    return {
        "out": str(args.out),
        "task": manifest.task,
        "graphs": len(manifest.graphs),
        "lnodes": data.lg.num_nodes,
        "ledges": data.lg.num_edges(),
        "feature_dim": int(data.features.shape[1]),
        "split": [len(data.train_nodes), len(data.val_nodes), len(data._test_nodes)],
        "class_histogram": class_histogram(data.lg).tolist(),
    }


def cmd_train(args):
    cfg, data_dir, run_dir, _ = _read_config(args.config, args)
    run_dir = args.run_dir or run_dir
    if run_dir is None:
        raise training.ConfigError("missing config key: run_dir")
    data = P.load_dataset(data_dir)
    result = training.train(cfg, data, run_dir)
    _write_data_pointer(run_dir, data_dir)
    return {"run_dir": str(run_dir), **result.summary()}


def cmd_grid(args):
    cfg, data_dir, run_dir, raw = _read_config(args.config, args)
    run_dir = args.run_dir or run_dir
    if run_dir is None:
        raise training.ConfigError("missing config key: run_dir")
    workers = args.workers or int(raw.get("workers", 1))
    data = P.load_dataset(data_dir)
    grid = training.grid_search(cfg, data, run_dir, workers=workers)
    _write_data_pointer(run_dir, data_dir)
    return {
        "run_dir": str(run_dir),
        "runs": len(grid.runs),
        "best_run": grid.best.run_dir,
        "best": grid.best.summary(),
    }


def _write_data_pointer(run_dir, data_dir):
    Path(run_dir, "data.json").write_text(json.dumps({"data": str(Path(data_dir).resolve())}))


def _collect_run(path):
    """(summary, data dir) for a single run or a grid directory."""
    path = Path(path)
    pointer = path / "data.json"
    data_dir = json.loads(pointer.read_text())["data"] if pointer.is_file() else None
    if (path / "grid.json").is_file():
        summary = json.loads((path / "grid.json").read_text())["best"]
    elif (path / "metrics.json").is_file():
        summary = json.loads((path / "metrics.json").read_text())
    else:
        raise FileNotFoundError(f"no metrics.json or grid.json in {path}")
    if summary.get("test_micro_f1") is None:
        raise training.TrainingError(f"run {path} has no test score")
    return summary, data_dir


def cmd_eval(args):
    approaches = {}
    data_dir = args.data
    for run in args.runs:
        summary, run_data = _collect_run(run)
        data_dir = data_dir or run_data
        approaches.setdefault(summary["aggregator"], {})[summary["mode"]] = summary["test_micro_f1"]
    if data_dir is None:
        raise UsageError("cannot locate the dataset; pass --data")
    data = P.load_dataset(data_dir)
    test = data.test_nodes()
    test = test[data.labels[test] >= 0]
    seed = args.seed or 0
    rand = E.random_baseline(data.labels[test], seed=seed)
    raw = E.raw_feature_baseline(data.lg, data.train_nodes, test, runs=args.probe_runs, seed=seed)
    rows = E.results_table(rand, raw.mean, approaches)
    text = E.format_table(rows)
    csv_text = E.table_csv(rows)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    print(text)
    print()
    print(csv_text, end="")
    return None


def cmd_synth(args):
    g = synth.synthesize(args.kind, args.size, seed=args.seed or 0)
    G.save_graph(g, args.out)
    return {"out": str(args.out), "kind": args.kind, "nodes": len(g.nodes), "edges": len(g.edges)}


def cmd_inspect(args):
    path = Path(args.path)
    if path.is_dir():
        if (path / "manifest.json").is_file():
            data = P.load_dataset(path)
            return {
                "kind": "dataset",
                "lnodes": data.lg.num_nodes,
                "ledges": data.lg.num_edges(),
                "feature_dim": int(data.features.shape[1]),
                "split": [len(data.train_nodes), len(data.val_nodes), len(data._test_nodes)],
                "class_histogram": class_histogram(data.lg).tolist(),
            }
        summary, _ = _collect_run(path)
        return {"kind": "run", **summary}
    payload = json.loads(path.read_text(encoding="utf-8")) if path.suffix == ".json" else None
    if payload is not None and "lnodes" in payload:
        lg = G.line_graph_from_dict(payload)
        deg = lg.degrees()
        return {
            "kind": "line-graph",
            "lnodes": lg.num_nodes,
            "ledges": lg.num_edges(),
            "max_degree": int(deg.max()) if len(deg) else 0,
            "class_histogram": class_histogram(lg).tolist(),
        }
    g = G.load_graph(path)
    deg = np.array(list(g.degrees().values()))
    return {
        "kind": "road-graph",
        "nodes": len(g.nodes),
        "edges": len(g.edges),
        "degree_histogram": np.bincount(deg).tolist() if len(deg) else [],
        "violations": g.violations(strict=True),
    }


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random stream")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="roadrep", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="raw graph(s) -> prepared dataset directory")
    p.add_argument("inputs", nargs="+", help="graph files (graph-json or GraphML) or a JSON list of cities")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--task", choices=["transductive", "inductive"], default="transductive")
    p.add_argument("--radius", type=float, default=10.0, help="intersection consolidation radius in meters")
    p.add_argument("--walks", type=int, default=50, help="random walks per node")
    p.add_argument("--local-len", type=int, default=5, help="local walk length; global walks are twice as long")
    p.add_argument("--standardize", action="store_true", help="z-score features with training statistics")
    p.add_argument("--label-map", help="JSON file overriding the road-type to class table")
    p.add_argument("--val", type=int, help="validation nodes (transductive)")
    p.add_argument("--test", type=int, help="test nodes (transductive)")
    p.set_defaults(func=cmd_prepare)

    for name, func, helptext in (
        ("train", cmd_train, "train one model from a config file"),
        ("grid", cmd_grid, "grid search over learning rate and dimension"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config", help="JSON config with mode, task, aggregator, data, run_dir")
        p.add_argument("--run-dir", type=Path)
        if name == "grid":
            p.add_argument("--workers", type=int, default=None, help="concurrent grid cells")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[common], help="results table for finished runs")
    p.add_argument("runs", nargs="+", help="run or grid directories")
    p.add_argument("--data", help="prepared dataset directory (default: from the runs)")
    p.add_argument("--probe-runs", type=int, default=1000, help="classifier runs for the raw baseline")
    p.add_argument("--csv", help="also write the table as CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic road graph")
    p.add_argument("kind", choices=sorted(synth.GENERATORS))
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", parents=[common], help="summarize a graph, line graph, dataset or run")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return ap


USAGE_ERRORS = (UsageError, training.ConfigError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        out = args.func(args)
    except USAGE_ERRORS as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except (G.GraphError, P.PipelineError, training.TrainingError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    if out is not None:
        print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
