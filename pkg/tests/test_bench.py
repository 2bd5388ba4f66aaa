import csv
import json

import pytest

from conftest import loan_I, loan_P
from treedistill.bench import (
    LatencyReport,
    ProtocolConfig,
    RunSummary,
    RunTrace,
    Workload,
    emit_report,
    run_protocol,
    run_sr_latency,
)
from treedistill.data import make_synthetic
from treedistill.learn import gbt_learn


def test_latency_ratios():
    r = LatencyReport([0.001, 0.003], [0.02, None, 0.04], t_C=0.1)
    assert r.t_I == pytest.approx(0.002) and r.t_P == pytest.approx(0.03)
    assert (r.to_I, r.to_P) == (0, 1)
    assert r.alpha == pytest.approx(15.0)
    # ceil(0.1 / 0.028) = 4
    assert r.beta == 4
    assert LatencyReport([0.01], [0.5], t_C=0.1).beta == 1


def test_latency_undefined_cases():
    assert LatencyReport([0.02], [0.01], 1.0).beta is None
    r = LatencyReport([None], [None], 1.0)
    assert r.t_I is None and r.alpha is None and r.beta is None


def test_curve_counts_down_over_completions():
    r = LatencyReport([0.3, None, 0.1], [], 0.0)
    assert r.curve("dt") == [(0.0, 3), (0.1, 2), (0.3, 1)]


def test_short_runs_report_final_state():
    t = RunTrace([0.5, 1.0], [5, 7], [2, 3], [(0,)], 0.1)
    assert t.at("0") == (0.5, 5, 2)
    assert t.at("2") == t.at("final") == (1.0, 7, 3)
    s = RunSummary("d", "rectify", "default", [t, RunTrace([0.8], [3], [1], [], 0.3)], [1, 0])
    assert s.f == 0.5
    assert s.cumulative_time == pytest.approx(0.2)


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(depth_policy="deep")
    with pytest.raises(ValueError):
        ProtocolConfig(n_runs=0)
    with pytest.raises(ValueError):
        ProtocolConfig(heldout_fraction=1.0)


def test_empty_report_has_headers_only(tmp_path):
    files = emit_report([], [], tmp_path / "r")
    for name, path in files.items():
        lines = path.read_text().splitlines()
        assert len(lines) == (0 if name == "trace.jsonl" else 1)


def test_latency_on_loan_example():
    r = run_sr_latency(loan_P(), loan_I(), [(0, 1, 1, 1), (1, 1, 0, 1)], timeout=5.0, t_C=0.0)
    assert r.to_I == 0 and r.to_P == 0 and len(r.times_dt) == 2


@pytest.fixture(scope="module")
def workload():
    tab = make_synthetic(300, seed=1)
    bt = gbt_learn(tab, tab.labels, n_estimators=8, seed=1)
    return Workload.build("syn", tab, bt)


def test_protocol_is_deterministic(workload, tmp_path):
    cfg = ProtocolConfig(n_runs=2, heldout_fraction=0.2)
    a = [run_protocol(workload, m, cfg) for m in ("rectify", "retrain")]
    b = [run_protocol(workload, m, cfg) for m in ("rectify", "retrain")]
    for x, y in zip(a, b):
        assert [r.accuracy for r in x.runs] == [r.accuracy for r in y.runs]
        assert [r.instances for r in x.runs] == [r.instances for r in y.runs]
    emit_report(a, [], tmp_path / "a")
    emit_report(b, [], tmp_path / "b")
    for name in ("summary.csv", "trace.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rectify_protocol_empties_diff(workload, tmp_path):
    s = run_protocol(workload, "rectify", ProtocolConfig(n_runs=2))
    for run, d in zip(s.runs, s.initial_diff):
        assert run.accuracy[-1] == 1.0 and run.steps <= d
    emit_report([s], [], tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert [r["step"] for r in rows] == ["0", "1", "2", "final"]
    assert float(rows[-1]["relative_accuracy"]) == 1.0
    first = json.loads((tmp_path / "trace.jsonl").read_text().splitlines()[0])
    assert first["step"] == 0 and "instance" not in first


def test_unknown_method_rejected(workload):
    with pytest.raises(ValueError):
        run_protocol(workload, "prune")
