"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
failure. Option values resolve as command-line flag, then ``--config`` JSON
file, then built-in default; the resolved values are written to
``config.json`` next to the outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench, oracle
from .bench import atomic_write
from .data import LABEL, binarize_table, load_csv, make_synthetic, split_indices, write_csv
from .errors import CapacityError, ExplanationTimeout, IngestError, ModelFormatError, PreconditionError, StructureError, TreeDistillError
from .explain import ORDERS, bt_sufficient_reason, bt_tree_specific_reason, dt_sufficient_reason, explanation_to_rule
from .features import Instance
from .learn import Dataset, RetrainConfig, cart_learn, gbt_learn, retrain_correct
from .models import BoostedTree, DecisionTree, dumps_model, loads_model
from .rectify import DistillConfig, ExplanationCache, distill_stream, misclassified, relative_accuracy, shuffled

REPORT_DIR_ENV = "TREEDISTILL_REPORT_DIR"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_model(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DataError(f"{p}: {exc.strerror or exc}") from None
    try:
        return loads_model(text)
    except (ModelFormatError, StructureError) as exc:
        raise DataError(f"{p}: {exc}") from None


def _read_bt(path) -> BoostedTree:
    m = _read_model(path)
    if not isinstance(m, BoostedTree):
        raise DataError(f"{path}: expected a boosted-tree model")
    return m


def _read_dt(path) -> DecisionTree:
    m = _read_model(path)
    if not isinstance(m, DecisionTree):
        raise DataError(f"{path}: expected a decision-tree model")
    return m


def _read_table(path):
    try:
        return load_csv(path)
    except IngestError as exc:
        raise DataError(str(exc)) from None


def _same_space(a, b, pa, pb):
    if a.conditions != b.conditions:
        raise DataError(f"{pa} and {pb} are defined over different condition sets")


def _write_text(path, text: str):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(path, text)


def _dump_config(args, directory):
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    _write_text(Path(directory) / "config.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    return Path(path).resolve().parent


def _parse_instance(text: str, n: int):
    try:
        bits = tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError:
        raise DataError(f"instance {text!r} must be comma-separated 0/1 values") from None
    if len(bits) != n or any(b not in (0, 1) for b in bits):
        raise DataError(f"instance {text!r} must have {n} values in {{0, 1}}")
    return bits


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    table = make_synthetic(args.rows, args.seed, args.noise)
    _write_csv_atomic(table, args.out)
    return 0


def _write_csv_atomic(table, out):
    tmp = Path(out).resolve().parent / f".{Path(out).name}.tmp"
    write_csv(table, tmp)
    os.replace(tmp, out)


def cmd_train(args) -> int:
    table = _read_table(args.data)
    if table.labels is None:
        raise DataError(f"{args.data}: missing final '{LABEL}' column")
    if args.kind == "bt":
        model = gbt_learn(table, table.labels, args.depth, args.rounds, args.learning_rate, args.seed, args.subsample)
    else:
        if not args.bt:
            raise UsageError("train --kind dt needs --bt to fix the condition set")
        bt = _read_bt(args.bt)
        X = _bin(table, bt)
        model = cart_learn(Dataset(X, table.labels), args.max_depth, bt.conditions)
    _write_text(args.out, dumps_model(model))
    _dump_config(args, _out_dir(args.out))
    return 0


def _bin(table, bt) -> np.ndarray:
    try:
        return binarize_table(table, bt.conditions)
    except IngestError as exc:
        raise DataError(f"{table.source}: {exc}") from None


def _stream(args, bt) -> np.ndarray:
    X = _bin(_read_table(args.data), bt)
    if args.order == "seeded-shuffle":
        X = shuffled(X, args.seed)
    return X


def _check_trace(records):
    for a, b in zip(records, records[1:]):
        if not b.remaining < a.remaining:
            raise InvariantError(f"step {b.step} did not shrink the disagreement set")


def cmd_distill(args) -> int:
    bt, dt = _read_bt(args.bt), _read_dt(args.dt)
    _same_space(bt, dt, args.bt, args.dt)
    th = bt.conditions.theory
    X = _stream(args, bt)
    cfg = DistillConfig(args.explain_order, args.seed, not args.no_simplify, args.max_steps)
    final, records = distill_stream(dt, bt, X, th, cfg)
    _check_trace(records)
    _write_text(args.out, dumps_model(final))
    if args.trace_out:
        _write_text(args.trace_out, "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in records))
    _dump_config(args, _out_dir(args.out))
    print(json.dumps({"steps": len(records), "remaining": len(misclassified(final, bt, X)), "nodes": final.size(), "depth": final.depth()}, sort_keys=True))
    return 0


def cmd_retrain(args) -> int:
    bt, dt = _read_bt(args.bt), _read_dt(args.dt)
    _same_space(bt, dt, args.bt, args.dt)
    th = bt.conditions.theory
    train_tab = _read_table(args.train)
    if train_tab.labels is None:
        raise DataError(f"{args.train}: missing final '{LABEL}' column")
    train = Dataset(_bin(train_tab, bt), train_tab.labels)
    X = _stream(args, bt)
    cfg = RetrainConfig(args.ratio, args.cap, args.seed, args.sample_rule)
    rng = np.random.default_rng(args.seed)
    explain = ExplanationCache(bt, th, args.explain_order, args.seed)
    lines = []
    for x in X:
        if args.max_steps is not None and len(lines) >= args.max_steps:
            break
        if dt.classify(x) == bt.classify(x):
            continue
        start = time.perf_counter()
        rule = explanation_to_rule(explain(x), bt.classify(x))
        train, dt = retrain_correct(train, dt, bt, x, rule, cfg, th, args.max_depth, rng)
        if dt.classify(x) != bt.classify(x) and args.max_depth is None:
            raise InvariantError(f"retraining left {tuple(int(v) for v in x)} misclassified")
        lines.append({
            "step": len(lines) + 1,
            "instance": [int(v) for v in x],
            "rule": rule.to_json(),
            "relative_accuracy": relative_accuracy(dt, bt, X),
            "n_nodes": dt.size(),
            "depth": dt.depth(),
            "elapsed_ms": round((time.perf_counter() - start) * 1000.0, 3),
        })
    _write_text(args.out, dumps_model(dt))
    if args.trace_out:
        _write_text(args.trace_out, "".join(json.dumps(d, sort_keys=True) + "\n" for d in lines))
    _dump_config(args, _out_dir(args.out))
    print(json.dumps({"steps": len(lines), "remaining": len(misclassified(dt, bt, X))}, sort_keys=True))
    return 0


def cmd_explain(args) -> int:
    model = _read_model(args.model)
    n = len(model.conditions)
    th = model.conditions.theory
    if args.instance is not None:
        x = _parse_instance(args.instance, n)
    elif args.data is not None:
        X = _bin(_read_table(args.data), model)
        if not 0 <= args.row < len(X):
            raise DataError(f"{args.data}: row {args.row} out of range (0..{len(X) - 1})")
        x = tuple(int(v) for v in X[args.row])
    else:
        raise UsageError("explain needs --instance or --data")
    try:
        Instance.checked(x, th)
    except PreconditionError as exc:
        raise DataError(str(exc)) from None
    engine = args.engine
    if engine == "auto":
        engine = "tree-specific" if isinstance(model, BoostedTree) else "dt-sufficient"
    if isinstance(model, DecisionTree) and engine != "dt-sufficient":
        raise UsageError(f"engine {engine!r} needs a boosted-tree model")
    if isinstance(model, BoostedTree) and engine == "dt-sufficient":
        raise UsageError("engine 'dt-sufficient' needs a decision-tree model")
    fn = {"tree-specific": bt_tree_specific_reason, "bt-sufficient": bt_sufficient_reason, "dt-sufficient": dt_sufficient_reason}[engine]
    timeout = None if args.timeout_ms is None else args.timeout_ms / 1000.0
    start = time.perf_counter()
    try:
        reason = fn(model, x, th, args.explain_order, args.seed, timeout)
    except ExplanationTimeout:
        print(json.dumps({"instance": list(x), "engine": engine, "timeout": True}, sort_keys=True))
        return 0
    elapsed = time.perf_counter() - start
    doc = {
        "instance": list(x),
        "class": int(model.classify(x)),
        "reason": reason.to_signed(),
        "engine": engine,
        "elapsed_ms": round(elapsed * 1000.0, 3),
    }
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        _write_text(args.out, text + "\n")
    print(text)
    return 0


def cmd_diff(args) -> int:
    a, b = _read_model(args.a), _read_model(args.b)
    _same_space(a, b, args.a, args.b)
    th = a.conditions.theory
    n = len(a.conditions)
    if args.exhaustive and n <= args.limit:
        diff = oracle.exact_diff(a, b, th, args.limit)
        doc = {"mode": "exhaustive", "count": len(diff), "feasible": len(oracle.enumerate_instances(None, th, args.limit)), "instances": [list(x) for x in diff]}
    else:
        rng = np.random.default_rng(args.seed)
        X = rng.integers(0, 2, size=(args.samples, n), dtype=np.uint8)
        X = np.array([r for r in X if th.satisfied_by(r)], dtype=np.uint8).reshape(-1, n)
        X = np.unique(X, axis=0)
        bad = misclassified(a, b, X)
        doc = {"mode": "sampled", "count": len(bad), "sampled": len(X), "instances": [[int(v) for v in r] for r in bad]}
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        _write_text(args.out, text + "\n")
    print(text)
    return 0


def cmd_bench(args) -> int:
    if args.dataset == "synthetic":
        table = make_synthetic(args.rows, args.data_seed)
        name = "synthetic"
    else:
        table = _read_table(args.dataset)
        name = Path(args.dataset).stem
        if table.labels is None:
            raise DataError(f"{args.dataset}: missing final '{LABEL}' column")
    methods = bench.METHODS if args.method == "both" else (args.method,)
    policies = bench.DEPTH_POLICIES if args.depth_policy == "both" else (args.depth_policy,)
    out = Path(args.report_dir or os.environ.get(REPORT_DIR_ENV) or "reports")
    summaries, reports = [], []
    for seed in args.seeds:
        label = f"{name}@{seed}" if len(args.seeds) > 1 else name
        if args.bt:
            bt = _read_bt(args.bt)
        else:
            try:
                tr, _ = split_indices(len(table), args.train_fraction, np.random.default_rng(seed))
            except IngestError as exc:
                raise DataError(str(exc)) from None
            bt = gbt_learn(table.take(tr), table.labels[tr], args.depth, args.rounds, args.learning_rate, seed)
        try:
            w = bench.Workload.build(label, table, bt)
        except IngestError as exc:
            raise DataError(str(exc)) from None
        retrain = RetrainConfig(args.ratio, args.cap, seed, args.sample_rule)
        for policy in policies:
            cfg = bench.ProtocolConfig(policy, args.runs, args.train_fraction, 0.7, seed, retrain, args.explain_order, args.heldout_fraction)
            for m in methods:
                summaries.append(bench.run_protocol(w, m, cfg))
        if args.latency_queries > 0:
            cfg = bench.ProtocolConfig("default", 1, args.train_fraction, 0.7, seed, retrain, args.explain_order)
            dt, t_C, inst = bench.latency_workload(w, cfg, args.latency_queries, seed)
            reports.append(bench.run_sr_latency(bt, dt, inst, args.timeout_ms / 1000.0, t_C, label))
    written = bench.emit_report(summaries, reports, out)
    _dump_config(args, out)
    print(json.dumps({k: str(v) for k, v in written.items()}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> _Parser:
    p = _Parser(prog="treedistill", description="Distill boosted trees into decision trees by rule-based rectification.")
    p.add_argument("--config", help="JSON file with option defaults; command-line flags take precedence")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write the seeded synthetic dataset as CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--rows", type=_positive_int, default=600)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, default=0.1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="learn a boosted tree or a decision tree from a labelled CSV")
    s.add_argument("--kind", choices=("dt", "bt"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bt", help="boosted tree whose conditions define the space (decision trees only)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-depth", type=_positive_int, default=None)
    s.add_argument("--depth", type=_positive_int, default=3, help="boosted tree depth")
    s.add_argument("--rounds", type=int, default=20)
    s.add_argument("--learning-rate", type=float, default=0.3)
    s.add_argument("--subsample", type=float, default=1.0)
    s.set_defaults(func=cmd_train)

    def stream_flags(s):
        s.add_argument("--bt", required=True)
        s.add_argument("--dt", required=True)
        s.add_argument("--data", required=True, help="CSV of stream instances")
        s.add_argument("--out", required=True)
        s.add_argument("--trace-out")
        s.add_argument("--order", choices=("dataset-order", "seeded-shuffle"), default="dataset-order")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--max-steps", type=_positive_int, default=None)
        s.add_argument("--explain-order", choices=ORDERS, default="descending")

    s = sub.add_parser("distill", help="correct a decision tree on the instances it misclassifies")
    stream_flags(s)
    s.add_argument("--no-simplify", action="store_true")
    s.set_defaults(func=cmd_distill)

    s = sub.add_parser("retrain-correct", help="baseline: correct by adding samples and learning again")
    stream_flags(s)
    s.add_argument("--train", required=True, help="labelled CSV the decision tree was learned from")
    s.add_argument("--ratio", type=float, default=0.01)
    s.add_argument("--cap", type=_positive_int, default=100)
    s.add_argument("--sample-rule", choices=("cap", "max"), default="cap")
    s.add_argument("--max-depth", type=_positive_int, default=None)
    s.set_defaults(func=cmd_retrain)

    s = sub.add_parser("explain", help="abductive explanation of one prediction")
    s.add_argument("--model", required=True)
    s.add_argument("--instance", help="comma-separated bits, e.g. 0,1,1,1")
    s.add_argument("--data", help="CSV of raw rows")
    s.add_argument("--row", type=int, default=0)
    s.add_argument("--engine", choices=("auto", "tree-specific", "bt-sufficient", "dt-sufficient"), default="auto")
    s.add_argument("--explain-order", choices=ORDERS, default="descending")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--timeout-ms", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("diff", help="instances on which two models disagree")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--exhaustive", action="store_true")
    s.add_argument("--limit", type=int, default=oracle.DEFAULT_LIMIT)
    s.add_argument("--samples", type=_positive_int, default=100000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("bench", help="correction traces and explanation latency reports")
    s.add_argument("--dataset", default="synthetic", help="labelled CSV, or 'synthetic'")
    s.add_argument("--method", choices=("rectify", "retrain", "both"), default="both")
    s.add_argument("--depth-policy", choices=("default", "optimized", "both"), default="both")
    s.add_argument("--seeds", type=_seeds, default=[0])
    s.add_argument("--timeout-ms", type=float, default=10000.0)
    s.add_argument("--report-dir", default=None, help=f"defaults to ${REPORT_DIR_ENV}, then ./reports")
    s.add_argument("--bt", help="use this boosted tree instead of learning one")
    s.add_argument("--runs", type=_positive_int, default=10)
    s.add_argument("--train-fraction", type=float, default=0.7)
    s.add_argument("--heldout-fraction", type=float, default=0.0)
    s.add_argument("--latency-queries", type=int, default=100)
    s.add_argument("--rows", type=_positive_int, default=600, help="synthetic rows")
    s.add_argument("--data-seed", type=int, default=0, help="synthetic generator seed")
    s.add_argument("--depth", type=_positive_int, default=3)
    s.add_argument("--rounds", type=int, default=20)
    s.add_argument("--learning-rate", type=float, default=0.3)
    s.add_argument("--ratio", type=float, default=0.01)
    s.add_argument("--cap", type=_positive_int, default=100)
    s.add_argument("--sample-rule", choices=("cap", "max"), default="cap")
    s.add_argument("--explain-order", choices=ORDERS, default="descending")
    s.set_defaults(func=cmd_bench)
    return p


def _apply_config_file(parser: _Parser, argv: Sequence[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        doc = json.loads(Path(known.config).read_text())
    except OSError as exc:
        raise DataError(f"{known.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{known.config}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DataError(f"{known.config}: expected a JSON object")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subs.choices.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in doc.items() if k.replace("-", "_") in dests})
        # required flags satisfied by the file become optional
        for a in sp._actions:
            if a.required and a.dest in doc:
                a.required = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DataError, IngestError, ModelFormatError, StructureError, PreconditionError, CapacityError) as exc:
        print(f"treedistill: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"treedistill: data error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except (InvariantError, AssertionError, TreeDistillError) as exc:
        print(f"treedistill: internal invariant failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # out-of-range option values rejected by config constructors
        print(f"treedistill: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
