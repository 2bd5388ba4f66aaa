import itertools
from importlib.resources import files

import numpy as np
import pytest

from treedistill.features import BOOLEAN, CATEGORICAL, NUMERIC, ConditionKey, ConditionSet, Term
from treedistill.models import BoostedTree, DecisionTree, RegressionTree, TreeBuilder

LOAN = files("treedistill") / "fixtures" / "loan"


def loan_conditions():
    return ConditionSet.from_keys([
        ConditionKey("S", NUMERIC, threshold=30.0),
        ConditionKey("S", NUMERIC, threshold=20.0),
        ConditionKey("R", BOOLEAN),
        ConditionKey("PP", BOOLEAN),
    ])


def loan_I():
    cs = loan_conditions()
    b = TreeBuilder()
    pp = b.split(3, b.leaf(False), b.leaf(True))
    return b.build(b.split(0, b.split(1, b.leaf(False), pp), b.split(2, pp, b.leaf(True))), DecisionTree, cs)


def loan_P():
    cs = loan_conditions()
    b = TreeBuilder()
    t1 = b.build(b.split(0, b.leaf(-1.0), b.split(2, b.leaf(-1.0), b.leaf(1.0))), RegressionTree, cs)
    b = TreeBuilder()
    t2 = b.build(b.split(0, b.split(1, b.leaf(-2.0), b.leaf(1.0)), b.split(3, b.leaf(-1.0), b.leaf(2.0))), RegressionTree, cs)
    return BoostedTree([t1, t2], cs)


def loan_rectified_unsimplified():
    # the tree after rectifying by ~x1 => ~y, before simplification
    b = TreeBuilder()
    zero, one = b.leaf(False), b.leaf(True)
    dead = b.split(3, zero, zero)
    live = b.split(3, zero, one)
    return b.build(b.split(0, b.split(1, zero, dead), b.split(2, live, one)), DecisionTree, loan_conditions())


def loan_rectified():
    b = TreeBuilder()
    zero, one = b.leaf(False), b.leaf(True)
    return b.build(b.split(0, zero, b.split(2, b.split(3, zero, one), one)), DecisionTree, loan_conditions())


@pytest.fixture
def loan():
    cs = loan_conditions()
    return {"I": loan_I(), "P": loan_P(), "cs": cs, "th": cs.theory}


def raw_feasible(cs):
    """Feasible instances computed from raw attribute values alone.

    Every instance that some raw row binarizes to is feasible and vice versa,
    so this is ground truth that never looks at the derived theory.
    """
    domains = {}
    cuts = {}
    for c in cs:
        dom = domains.setdefault(c.attribute, set())
        if c.kind == NUMERIC:
            cuts.setdefault(c.attribute, set()).add(c.threshold)
        elif c.kind == CATEGORICAL:
            dom.update((c.value, "\0other"))
        else:
            dom.update((False, True))
    for a, ts in cuts.items():
        ts = sorted(ts)
        # one raw value per interval between consecutive thresholds
        domains[a].update([ts[0] - 1.0, ts[-1] + 1.0] + [(x + y) / 2.0 for x, y in zip(ts, ts[1:])])
    attrs = sorted(domains)
    out = set()
    for combo in itertools.product(*(sorted(domains[a], key=str) for a in attrs)):
        raw = dict(zip(attrs, combo))
        out.add(tuple(int(c.holds(raw[c.attribute])) for c in cs))
    return out


def brute_completions(t, cs):
    return [x for x in raw_feasible(cs) if all(x[i] == int(p) for i, p in t)]


def random_term(rng, n, density=0.4):
    return Term((i, bool(rng.integers(0, 2))) for i in range(n) if rng.random() < density)


def models_equal_on(a, b, instances):
    X = np.array(sorted(instances), dtype=np.uint8)
    return bool(np.all(np.asarray(a.predict(X)) == np.asarray(b.predict(X))))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
