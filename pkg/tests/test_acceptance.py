"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line
with its elapsed time; the lines are repeated in the terminal summary."""

import csv
import io
import itertools
import json
import statistics
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import (
    ACCEPTANCE,
    LOAN,
    brute_completions,
    loan_conditions,
    loan_rectified_unsimplified,
    loan_rectified,
    loan_I,
    loan_P,
    raw_feasible,
)
from treedistill import oracle
from treedistill.bench import LatencyReport, ProtocolConfig, Workload, latency_workload, run_protocol, run_sr_latency
from treedistill.cli import main
from treedistill.data import make_synthetic
from treedistill.explain import bt_tree_specific_reason, dt_sufficient_reason, explanation_to_rule
from treedistill.features import Term
from treedistill.learn import Dataset, RetrainConfig, cart_learn, gbt_learn, retrain_correct
from treedistill.models import ClassificationRule, rules_conflicting
from treedistill.rectify import ExplanationCache, distill_step, distill_stream, rectify_by_rule, simplify
from treedistill.synth import random_bt, random_condition_set, random_dt, random_feasible_instance


@contextmanager
def criterion(number: int, title: str, budget: float):
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {title} ({elapsed:.2f}s)"
        ACCEPTANCE.append(line)
        print(line)


def _instance_term(rng, x, density=0.35):
    return Term((i, bool(v)) for i, v in enumerate(x) if rng.random() < density)


# ---------------------------------------------------------------------------


def test_01_loan_example_golden():
    with criterion(1, "loan example golden suite", 1.0):
        th = loan_conditions().theory
        I, P = loan_I(), loan_P()
        assert set(oracle.exact_diff(I, P, th)) == {(0, 1, 1, 1), (0, 1, 0, 1), (1, 1, 1, 0)}
        assert bt_tree_specific_reason(P, (0, 1, 1, 1), th) == Term([(0, False)])
        out, _ = distill_step(I, P, (0, 1, 1, 1), th)
        assert oracle.semantically_equal(out, loan_rectified(), th)
        assert oracle.exact_diff(out, P, th) == [(1, 1, 1, 0)]
        r = rectify_by_rule(I, ClassificationRule(Term([(3, False)]), False), th)
        for x in raw_feasible(loan_conditions()):
            assert r.classify(x) == bool(((x[0] and x[2]) or x[1]) and x[3])
        final, _ = distill_stream(I, P, [(0, 1, 1, 1), (0, 1, 0, 1), (1, 1, 1, 0)], th)
        assert oracle.semantically_equal(final, P, th)


def test_02_rectification_is_disjunction_or_conjunction():
    with criterion(2, "rule rectification equals boolean combination (500 cases)", 30.0):
        rng = np.random.default_rng(2002)
        for _ in range(500):
            cs = random_condition_set(rng, int(rng.integers(1, 15)), categorical=False)
            th = cs.theory
            dt = random_dt(rng, cs, depth=int(rng.integers(1, 7)), repeat=bool(rng.integers(0, 2)))
            rule = ClassificationRule(_instance_term(rng, random_feasible_instance(rng, cs)), bool(rng.integers(0, 2)))
            out = rectify_by_rule(dt, rule, th)
            for y in oracle.enumerate_instances(cs, th).tuples():
                covered = all(y[i] == int(v) for i, v in rule.premises)
                want = (dt.classify(y) or covered) if rule.conclusion else (dt.classify(y) and not covered)
                assert out.classify(y) == want


def test_03_rule_order_invariance():
    with criterion(3, "application order invariance (100 cases)", 60.0):
        rng = np.random.default_rng(2003)
        for _ in range(100):
            cs = random_condition_set(rng, int(rng.integers(2, 11)))
            th = cs.theory
            bt = random_bt(rng, cs, m=int(rng.integers(1, 6)))
            dt = random_dt(rng, cs, depth=4)
            explain = ExplanationCache(bt, th)
            xs = [random_feasible_instance(rng, cs) for _ in range(int(rng.integers(1, 6)))]
            rules = [explanation_to_rule(explain(x), bt.classify(x)) for x in xs]
            a, b = dt, dt
            for r in [rules[i] for i in rng.permutation(len(rules))]:
                a = rectify_by_rule(a, r, th)
            for r in [rules[i] for i in rng.permutation(len(rules))]:
                b = rectify_by_rule(b, r, th)
            assert oracle.semantically_equal(a, b, th)


def test_04_strict_shrinkage():
    with criterion(4, "each step shrinks the disagreement set (300 steps)", 60.0):
        rng = np.random.default_rng(2004)
        done = 0
        while done < 300:
            cs = random_condition_set(rng, int(rng.integers(2, 11)))
            th = cs.theory
            dt, bt = random_dt(rng, cs, depth=4), random_bt(rng, cs, m=int(rng.integers(1, 6)))
            before = oracle.exact_diff(dt, bt, th)
            if not before:
                continue
            x = before[int(rng.integers(0, len(before)))]
            out, _ = distill_step(dt, bt, x, th)
            after = oracle.exact_diff(out, bt, th)
            assert out.classify(x) == bt.classify(x)
            assert len(after) < len(before) and set(after) < set(before)
            done += 1


def test_05_explanation_rules_never_conflict():
    with criterion(5, "explanation rules never conflict (100 boosted trees)", 30.0):
        rng = np.random.default_rng(2005)
        for _ in range(100):
            cs = random_condition_set(rng, int(rng.integers(2, 9)))
            th = cs.theory
            bt = random_bt(rng, cs, m=int(rng.integers(1, 6)))
            space = sorted(raw_feasible(cs))
            pick = rng.choice(len(space), size=min(16, len(space)), replace=False)
            rules = {explanation_to_rule(bt_tree_specific_reason(bt, space[i], th), bt.classify(space[i])) for i in pick}
            for r1, r2 in itertools.combinations(rules, 2):
                if r1.conclusion == r2.conclusion:
                    continue
                assert not rules_conflicting(r1, r2, th)
                # independent check against raw attribute values
                merged = dict(r1.premises)
                if all(merged.get(i, v) == v for i, v in r2.premises):
                    assert not brute_completions(r1.premises.union(r2.premises), cs)


def test_06_explanations_sound_and_minimal():
    with criterion(6, "explanations abductive and minimal (3 x 200 cases)", 120.0):
        rng = np.random.default_rng(2006)
        for _ in range(200):
            cs = random_condition_set(rng, int(rng.integers(2, 13)))
            th = cs.theory
            bt = random_bt(rng, cs, m=int(rng.integers(1, 6)))
            x = random_feasible_instance(rng, cs)
            t = bt_tree_specific_reason(bt, x, th)
            assert t <= Term.of_instance(x) and oracle.is_abductive_exact(bt, t, bt.classify(x), th)
        for _ in range(200):
            cs = random_condition_set(rng, int(rng.integers(2, 13)))
            th = cs.theory
            dt = random_dt(rng, cs, depth=5)
            x = random_feasible_instance(rng, cs)
            cls = dt.classify(x)
            t = dt_sufficient_reason(dt, x, th)
            assert oracle.is_abductive_exact(dt, t, cls, th)
            for i, _ in t:
                assert not oracle.is_abductive_exact(dt, t.without(i), cls, th)
        for _ in range(200):
            cs = random_condition_set(rng, int(rng.integers(2, 13)))
            th = cs.theory
            dt = random_dt(rng, cs, depth=5)
            x = random_feasible_instance(rng, cs)
            assert dt_sufficient_reason(dt, x, th) in oracle.min_explanations_exact(dt, x, th)


def test_07_simplification():
    with criterion(7, "simplification preserves semantics, idempotent, never grows", 10.0):
        th = loan_conditions().theory
        right = simplify(loan_rectified_unsimplified(), th)
        assert right == loan_rectified() and (right.size(), right.depth()) == (7, 3)
        rng = np.random.default_rng(2007)
        for _ in range(200):
            cs = random_condition_set(rng, int(rng.integers(1, 11)))
            dt = random_dt(rng, cs, depth=6, repeat=True)
            out = simplify(dt, cs.theory)
            assert oracle.semantically_equal(out, dt, cs.theory)
            assert out.size() <= dt.size() and simplify(out, cs.theory) == out


@pytest.fixture(scope="module")
def synthetic():
    tab = make_synthetic(600, seed=0)
    bt = gbt_learn(tab, tab.labels, depth=3, n_estimators=20, seed=0)
    return Workload.build("synthetic", tab, bt)


def test_08_end_to_end_distillation(synthetic):
    with criterion(8, "synthetic distillation empties the disagreement set", 60.0):
        assert len(synthetic.table.attributes) == 10 and len(synthetic.bt.conditions) <= 18
        s = run_protocol(synthetic, "rectify", ProtocolConfig(n_runs=10))
        for run, d in zip(s.runs, s.initial_diff):
            assert run.accuracy[-1] == 1.0
            assert run.steps <= d
            assert all(a < b for a, b in zip(run.accuracy, run.accuracy[1:]))


def test_09_retraining_fixes_trigger_and_finishes(synthetic):
    with criterion(9, "retraining fixes each trigger and reaches stream end", 600.0):
        w = synthetic
        rng = np.random.default_rng(0)
        idx = rng.permutation(len(w.y))
        cut = int(0.7 * len(idx))
        train, T = Dataset(w.X[idx[:cut]], w.y[idx[:cut]]), w.X[idx[cut:]]
        dt = cart_learn(train)
        explain = ExplanationCache(w.bt, w.th)
        seen = 0
        for x in T:
            seen += 1
            if dt.classify(x) == w.bt.classify(x):
                continue
            rule = explanation_to_rule(explain(x), w.bt.classify(x))
            train, dt = retrain_correct(train, dt, w.bt, x, rule, RetrainConfig(), w.th, rng=rng)
            assert dt.classify(x) == w.bt.classify(x)
        assert seen == len(T)


def test_10_latency(synthetic):
    with criterion(10, "sufficient reasons faster on the distilled tree", 600.0):
        assert len(synthetic.bt.conditions) == 18
        dt, t_C, inst = latency_workload(synthetic, ProtocolConfig(n_runs=1), 100, seed=0)
        assert len(inst) == 100
        r = run_sr_latency(synthetic.bt, dt, inst, timeout=10.0, t_C=t_C)
        assert r.to_I == 0
        assert statistics.median(t for t in r.times_dt if t is not None) < 0.010
        assert r.alpha is not None and r.alpha > 1
        if r.t_P - r.t_I > t_C:
            assert r.beta == 1
        probe = LatencyReport(r.times_dt, r.times_bt, t_C=0.0)
        assert probe.beta == 1


TIMING_COLUMNS = {"times.csv": {"d_rec", "d_ret", "o_rec", "o_ret"}, "latency.csv": {"t_C_s", "t_I_s", "t_P_s", "alpha", "beta"}, "curves.csv": {"time_s"}}


def _masked_csv(path, drop):
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    return [{k: v for k, v in r.items() if k not in drop} for r in rows]


def _untimed_json(path):
    return [{k: v for k, v in json.loads(line).items() if k != "elapsed_ms"} for line in path.read_text().splitlines()]


def _pipeline(d, capsys):
    bt, dt, stream = str(LOAN / "p.json"), str(LOAN / "i.json"), str(LOAN / "stream.csv")
    calls = [
        ["synth", "--out", d / "syn.csv", "--rows", 200, "--seed", 4],
        ["train", "--kind", "bt", "--data", d / "syn.csv", "--out", d / "bt.json", "--rounds", 6, "--seed", 4, "--subsample", 0.8],
        ["train", "--kind", "dt", "--data", d / "syn.csv", "--bt", d / "bt.json", "--out", d / "dt.json"],
        ["distill", "--bt", d / "bt.json", "--dt", d / "dt.json", "--data", d / "syn.csv", "--out", d / "final.json",
         "--trace-out", d / "distill.jsonl", "--order", "seeded-shuffle", "--seed", 9],
        ["retrain-correct", "--bt", d / "bt.json", "--dt", d / "dt.json", "--data", d / "syn.csv", "--train", d / "syn.csv",
         "--out", d / "retrained.json", "--trace-out", d / "retrain.jsonl", "--seed", 9],
        ["diff", "--a", dt, "--b", bt, "--exhaustive", "--out", d / "diff.json"],
        ["explain", "--model", bt, "--data", stream, "--row", 2, "--out", d / "explain.json"],
        ["bench", "--rows", 200, "--runs", 2, "--rounds", 4, "--latency-queries", 5, "--report-dir", d / "reports"],
    ]
    for argv in calls:
        assert main([str(a) for a in argv]) == 0, argv
        capsys.readouterr()


def test_11_reproducibility(tmp_path, capsys):
    with criterion(11, "subcommands repeat byte for byte", 600.0):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            d.mkdir()
            _pipeline(d, capsys)
        for name in ("syn.csv", "bt.json", "dt.json", "final.json", "retrained.json", "diff.json",
                     "reports/summary.csv", "reports/trace.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        for name in ("distill.jsonl", "retrain.jsonl", "explain.json"):
            assert _untimed_json(a / name) == _untimed_json(b / name), name
        for name, drop in TIMING_COLUMNS.items():
            assert _masked_csv(a / "reports" / name, drop) == _masked_csv(b / "reports" / name, drop), name
