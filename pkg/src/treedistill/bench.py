"""Measurement harness: correction traces for rectification and retraining,
and the sufficient-reason latency comparison between a distilled decision
tree and its boosted source.

Everything random is driven by explicit seeds. Wall-clock values only appear
in timing columns; every other column is reproducible byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import RawTable, binarize_table, split_indices
from .errors import ExplanationTimeout, IngestError
from .explain import bt_sufficient_reason, dt_sufficient_reason, explanation_to_rule
from .features import DomainTheory
from .learn import Dataset, RetrainConfig, cart_learn, retrain_correct, tune_depth
from .models import BoostedTree, DecisionTree
from .rectify import DistillConfig, ExplanationCache, distill_stream, misclassified, relative_accuracy

METHODS = ("rectify", "retrain")
DEPTH_POLICIES = ("default", "optimized")
REPORT_STEPS = ("0", "1", "2", "final")


@dataclass
class ProtocolConfig:
    depth_policy: str = "default"
    n_runs: int = 10
    train_fraction: float = 0.7
    subsample: float = 0.7
    split_seed: int = 0
    retrain: RetrainConfig = field(default_factory=RetrainConfig)
    explain_order: str = "descending"
    # carve a held-out part off T that never triggers corrections
    heldout_fraction: float = 0.0

    def __post_init__(self):
        if self.depth_policy not in DEPTH_POLICIES:
            raise ValueError(f"depth_policy must be one of {DEPTH_POLICIES}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if not 0 <= self.heldout_fraction < 1:
            raise ValueError("heldout_fraction must be in [0, 1)")


@dataclass
class RunTrace:
    """One initial tree followed through its corrections; index 0 is before any step."""

    accuracy: list[float]
    nodes: list[int]
    depth: list[int]
    instances: list[tuple[int, ...]]
    elapsed: float
    heldout_accuracy: Optional[float] = None

    @property
    def steps(self) -> int:
        return len(self.accuracy) - 1

    def at(self, step: str) -> tuple[float, int, int]:
        # runs shorter than the requested step report their final state
        k = self.steps if step == "final" else min(int(step), self.steps)
        return self.accuracy[k], self.nodes[k], self.depth[k]


@dataclass
class RunSummary:
    dataset: str
    method: str
    depth_policy: str
    runs: list[RunTrace]
    initial_diff: list[int]
    max_depth: Optional[int] = None

    def median_at(self, step: str) -> tuple[float, float, float]:
        vals = [r.at(step) for r in self.runs]
        return tuple(float(statistics.median(v[j] for v in vals)) for j in range(3))

    @property
    def f(self) -> float:
        return float(statistics.median(r.steps for r in self.runs))

    @property
    def cumulative_time(self) -> float:
        return float(statistics.fmean(r.elapsed for r in self.runs))


@dataclass
class LatencyReport:
    times_dt: list[Optional[float]]
    times_bt: list[Optional[float]]
    t_C: float
    dataset: str = ""

    @staticmethod
    def _mean(ts) -> Optional[float]:
        done = [t for t in ts if t is not None]
        return float(statistics.fmean(done)) if done else None

    @property
    def t_I(self) -> Optional[float]:
        return self._mean(self.times_dt)

    @property
    def t_P(self) -> Optional[float]:
        return self._mean(self.times_bt)

    @property
    def to_I(self) -> int:
        return sum(t is None for t in self.times_dt)

    @property
    def to_P(self) -> int:
        return sum(t is None for t in self.times_bt)

    @property
    def alpha(self) -> Optional[float]:
        if self.t_I is None or self.t_P is None or self.t_I == 0:
            return None
        return self.t_P / self.t_I

    @property
    def beta(self) -> Optional[int]:
        if self.t_I is None or self.t_P is None or self.t_P <= self.t_I:
            return None
        return max(1, math.ceil(self.t_C / (self.t_P - self.t_I)))

    def curve(self, engine: str) -> list[tuple[float, int]]:
        """(time, instances still without a reason) after each completion."""
        ts = self.times_dt if engine == "dt" else self.times_bt
        left = len(ts)
        out = [(0.0, left)]
        for t in sorted(t for t in ts if t is not None):
            left -= 1
            out.append((t, left))
        return out


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------


@dataclass
class Workload:
    """A raw table binarized against a boosted tree's condition set."""

    name: str
    table: RawTable
    bt: BoostedTree
    X: np.ndarray
    y: np.ndarray

    @property
    def th(self) -> DomainTheory:
        return self.bt.conditions.theory

    @classmethod
    def build(cls, name: str, table: RawTable, bt: BoostedTree) -> "Workload":
        if table.labels is None:
            raise IngestError(f"{name}: dataset has no label column")
        return cls(name, table, bt, binarize_table(table, bt.conditions), table.labels)


def _initial_trees(L: Dataset, cfg: ProtocolConfig, rng: np.random.Generator) -> tuple[list[tuple[Dataset, DecisionTree]], Optional[int]]:
    max_depth = tune_depth(L, seed=cfg.split_seed) if cfg.depth_policy == "optimized" else None
    size = max(1, int(round(cfg.subsample * len(L))))
    out = []
    for _ in range(cfg.n_runs):
        idx = np.sort(rng.choice(len(L), size=size, replace=False))
        sub = L.subset(idx)
        out.append((sub, cart_learn(sub, max_depth)))
    return out, max_depth


def _split(w: Workload, cfg: ProtocolConfig):
    rng = np.random.default_rng(cfg.split_seed)
    tr, te = split_indices(len(w.y), cfg.train_fraction, rng)
    L = Dataset(w.X[tr], w.y[tr], f"{w.name}:train")
    T = w.X[te]
    H = None
    if cfg.heldout_fraction > 0:
        keep, held = split_indices(len(te), 1.0 - cfg.heldout_fraction, rng)
        T, H = w.X[te][keep], w.X[te][held]
    return rng, L, T, H


def run_protocol(w: Workload, method: str, cfg: Optional[ProtocolConfig] = None) -> RunSummary:
    """Correct ``cfg.n_runs`` sub-sampled initial trees over the misclassified
    part of the test split, measuring accuracy relative to the boosted tree
    on the test split after each correction."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    cfg = cfg or ProtocolConfig()
    rng, L, T, H = _split(w, cfg)
    th, bt = w.th, w.bt
    inits, max_depth = _initial_trees(L, cfg, rng)
    explain = ExplanationCache(bt, th, cfg.explain_order)
    runs, diffs = [], []
    for k, (sub, dt0) in enumerate(inits):
        diffs.append(len(misclassified(dt0, bt, T)))
        if method == "rectify":
            start = time.perf_counter()
            dt, records = distill_stream(dt0, bt, T, th, DistillConfig(cfg.explain_order), eval_set=T, explain=explain)
            elapsed = time.perf_counter() - start
            trace = RunTrace(
                [relative_accuracy(dt0, bt, T)] + [r.relative_accuracy for r in records],
                [dt0.size()] + [r.n_nodes for r in records],
                [dt0.depth()] + [r.depth for r in records],
                [r.instance for r in records],
                elapsed,
            )
        else:
            trace, dt = _retrain_run(sub, dt0, bt, T, th, explain, cfg, max_depth, k)
        if H is not None:
            trace.heldout_accuracy = relative_accuracy(dt, bt, H)
        runs.append(trace)
    return RunSummary(w.name, method, cfg.depth_policy, runs, diffs, max_depth)


def _retrain_run(train, dt0, bt, T, th, explain, cfg: ProtocolConfig, max_depth, k: int):
    rng = np.random.default_rng([cfg.retrain.seed, cfg.split_seed, k])
    dt = dt0
    acc, nodes, depth, inst = [relative_accuracy(dt, bt, T)], [dt.size()], [dt.depth()], []
    start = time.perf_counter()
    for x in T:
        if dt.classify(x) == bt.classify(x):
            continue
        rule = explanation_to_rule(explain(x), bt.classify(x))
        train, dt = retrain_correct(train, dt, bt, x, rule, cfg.retrain, th, max_depth, rng)
        acc.append(relative_accuracy(dt, bt, T))
        nodes.append(dt.size())
        depth.append(dt.depth())
        inst.append(tuple(int(v) for v in x))
    return RunTrace(acc, nodes, depth, inst, time.perf_counter() - start), dt


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------


def _timed(fn, timeout: float) -> Optional[float]:
    start = time.monotonic()
    try:
        fn(timeout)
    except ExplanationTimeout:
        return None
    elapsed = time.monotonic() - start
    return elapsed if elapsed <= timeout else None


def run_sr_latency(
    bt: BoostedTree,
    dt: DecisionTree,
    instances: Sequence[Sequence],
    timeout: float,
    t_C: float,
    dataset: str = "",
) -> LatencyReport:
    """Time sufficient-reason queries on the distilled tree and on the boosted tree.

    Each engine gets one untimed warm-up query. Queries that exceed
    ``timeout`` seconds count as timeouts and are left out of the means.
    """
    th = bt.conditions.theory
    rows = [tuple(int(v) for v in x) for x in instances]
    if rows:
        dt_sufficient_reason(dt, rows[0], th)
        _timed(lambda b: bt_sufficient_reason(bt, rows[0], th, timeout=b), timeout)
    times_dt = [_timed(lambda b, x=x: dt_sufficient_reason(dt, x, th, timeout=b), timeout) for x in rows]
    times_bt = [_timed(lambda b, x=x: bt_sufficient_reason(bt, x, th, timeout=b), timeout) for x in rows]
    return LatencyReport(times_dt, times_bt, t_C, dataset)


def latency_workload(w: Workload, cfg: ProtocolConfig, count: int, seed: int) -> tuple[DecisionTree, float, np.ndarray]:
    """Distill the first initial tree of the protocol and pick query instances
    uniformly from the test split. Returns (tree, distillation seconds, instances)."""
    rng, L, T, _ = _split(w, cfg)
    inits, _ = _initial_trees(L, replace(cfg, n_runs=1), rng)
    dt0 = inits[0][1]
    start = time.perf_counter()
    dt, _ = distill_stream(dt0, w.bt, T, w.th, DistillConfig(cfg.explain_order), eval_set=T)
    t_C = time.perf_counter() - start
    pick = np.random.default_rng(seed).choice(len(T), size=min(count, len(T)), replace=False)
    return dt, t_C, T[np.sort(pick)]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

SUMMARY_HEADER = ["dataset", "depth_policy", "method", "step", "relative_accuracy", "nodes", "depth", "f", "initial_diff"]
TIMES_HEADER = ["dataset", "d_rec", "d_ret", "o_rec", "o_ret"]
LATENCY_HEADER = ["dataset", "t_C_s", "t_I_s", "to_I", "t_P_s", "to_P", "alpha", "beta", "queries"]
CURVES_HEADER = ["dataset", "engine", "time_s", "unresolved"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_rows(summaries: Sequence[RunSummary]) -> list[list]:
    rows = []
    for s in summaries:
        for step in REPORT_STEPS:
            a, n, d = s.median_at(step)
            rows.append([s.dataset, s.depth_policy, s.method, step, a, n, d, s.f, float(statistics.median(s.initial_diff))])
    return rows


def times_rows(summaries: Sequence[RunSummary]) -> list[list]:
    cols = {("default", "rectify"): 1, ("default", "retrain"): 2, ("optimized", "rectify"): 3, ("optimized", "retrain"): 4}
    by_ds: dict[str, list] = {}
    for s in summaries:
        row = by_ds.setdefault(s.dataset, [s.dataset, None, None, None, None])
        row[cols[(s.depth_policy, s.method)]] = s.cumulative_time
    return list(by_ds.values())


def emit_report(summaries: Sequence[RunSummary], reports: Sequence[LatencyReport], out_dir) -> dict[str, Path]:
    """Write summary.csv, times.csv, latency.csv, curves.csv and trace.jsonl into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc.strerror or exc}") from None
    lat_rows, curve_rows = [], []
    for r in reports:
        lat_rows.append([r.dataset, r.t_C, r.t_I, r.to_I, r.t_P, r.to_P, r.alpha, r.beta, len(r.times_dt)])
        for engine in ("dt", "bt"):
            curve_rows.extend([r.dataset, engine, t, left] for t, left in r.curve(engine))
    trace_lines = []
    for s in summaries:
        for k, run in enumerate(s.runs):
            for step in range(run.steps + 1):
                doc = {
                    "dataset": s.dataset,
                    "depth_policy": s.depth_policy,
                    "method": s.method,
                    "run": k,
                    "step": step,
                    "relative_accuracy": run.accuracy[step],
                    "nodes": run.nodes[step],
                    "depth": run.depth[step],
                }
                if step:
                    doc["instance"] = list(run.instances[step - 1])
                if run.heldout_accuracy is not None and step == run.steps:
                    doc["heldout_accuracy"] = run.heldout_accuracy
                trace_lines.append(json.dumps(doc, sort_keys=True))
    files = {
        "summary.csv": _csv_text(SUMMARY_HEADER, summary_rows(summaries)),
        "times.csv": _csv_text(TIMES_HEADER, times_rows(summaries)),
        "latency.csv": _csv_text(LATENCY_HEADER, lat_rows),
        "curves.csv": _csv_text(CURVES_HEADER, curve_rows),
        "trace.jsonl": "".join(line + "\n" for line in trace_lines),
    }
    written = {}
    for name, text in files.items():
        try:
            atomic_write(out / name, text)
        except OSError as exc:
            raise OSError(f"cannot write {out / name}: {exc.strerror or exc}") from None
        written[name] = out / name
    return written
