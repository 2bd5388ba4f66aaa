import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import loan_conditions, loan_rectified, loan_I, loan_P
from treedistill.errors import ModelFormatError, StructureError
from treedistill.features import Term
from treedistill.models import (
    BoostedTree,
    ClassificationRule,
    DecisionTree,
    Node,
    RegressionTree,
    TreeBuilder,
    bt_classify,
    dt_classify,
    dt_depth,
    dt_paths,
    dt_size,
    dumps_model,
    loads_model,
    rule_classify,
    rules_conflicting,
)
from treedistill.synth import random_bt, random_condition_set, random_dt

# the twelve feasible instances: x1 implies x2
ALL4 = [x for x in itertools.product((0, 1), repeat=4) if x[0] <= x[1]]


def test_loan_example_decision_tree():
    I = loan_I()
    for x in ALL4:
        assert dt_classify(I, x) == bool((x[0] and x[2]) or (x[1] and x[3]))


def test_loan_example_boosted_tree_margins():
    P = loan_P()
    assert P.margin((0, 1, 1, 1)) == -1.0 + 1.0
    assert not bt_classify(P, (0, 1, 1, 1))
    assert bt_classify(P, (1, 1, 0, 1))
    assert P.margin((1, 1, 1, 0)) == 0.0
    assert not bt_classify(P, (1, 1, 1, 0))


def test_empty_booster_is_class_zero():
    assert not BoostedTree([], loan_conditions()).classify((1, 1, 1, 1))


def test_leaf_only_tree():
    dt = DecisionTree.leaf(True)
    assert dt.size() == 1 and dt.depth() == 0
    assert dt.classify(())


def test_size_and_depth_count_the_unfolded_tree():
    I = loan_I()
    # the PP node is shared in the arena but appears twice in the tree
    assert len(I.nodes) < dt_size(I)
    assert dt_size(I) == 11
    assert dt_depth(I) == 3
    assert dt_size(loan_rectified()) == 7


def test_paths_of_loan_example():
    paths = dt_paths(loan_I(), loan_conditions().theory)
    assert len(paths) == 6
    assert all(p.feasible for p in paths)
    terms = {p.term.to_signed().__str__(): p.value for p in paths}
    assert terms["[-1, 2, 4]"] is True
    assert terms["[-1, -2]"] is False


def test_infeasible_path_is_flagged():
    b = TreeBuilder()
    # S>30 true then S>20 false contradicts the theory
    dt = b.build(b.split(0, b.leaf(False), b.split(1, b.leaf(True), b.leaf(False))), DecisionTree, loan_conditions())
    flags = [(p.term.to_signed(), p.feasible) for p in dt.paths(loan_conditions().theory)]
    assert flags == [([-1], True), ([1, -2], False), ([1, 2], True)]


def test_repeated_test_with_opposite_outcome_is_infeasible():
    b = TreeBuilder()
    dt = b.build(b.split(2, b.leaf(False), b.split(2, b.leaf(True), b.leaf(False))), DecisionTree, loan_conditions())
    assert [p.feasible for p in dt.paths()] == [True, False, True]


def test_builder_shares_identical_subtrees():
    b = TreeBuilder()
    x = b.split(1, b.leaf(False), b.leaf(True))
    y = b.split(1, b.leaf(False), b.leaf(True))
    assert x == y
    assert b.leaf(1.0) != b.leaf(True)


def test_invalid_structures_rejected():
    with pytest.raises(StructureError):
        DecisionTree((Node(0, 1, 5, None), Node(None, -1, -1, False)), 0, loan_conditions())
    with pytest.raises(StructureError):
        DecisionTree((Node(0, 0, 0, None),), 0, loan_conditions())
    with pytest.raises(StructureError):
        DecisionTree((Node(None, -1, -1, 0.5),), 0)
    with pytest.raises(StructureError):
        DecisionTree((Node(None, -1, -1, True), Node(None, -1, -1, False)), 0)
    with pytest.raises(StructureError):
        DecisionTree((Node(9, 1, 1, None), Node(None, -1, -1, False)), 0, loan_conditions())


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_json_round_trip(seed):
    rng = np.random.default_rng(seed)
    cs = random_condition_set(rng, int(rng.integers(1, 12)))
    dt = random_dt(rng, cs, depth=5)
    bt = random_bt(rng, cs, m=int(rng.integers(0, 5)))
    assert loads_model(dumps_model(dt)) == dt
    again = loads_model(dumps_model(bt))
    assert again == bt and again.conditions == cs
    assert dumps_model(again) == dumps_model(bt)


def test_fixture_files_match_code_built_models():
    from conftest import LOAN

    assert loads_model((LOAN / "i.json").read_text()) == loan_I()
    assert loads_model((LOAN / "p.json").read_text()) == loan_P()


def _doc():
    return json.loads(dumps_model(loan_I()))


def test_schema_errors_carry_node_paths():
    doc = _doc()
    doc["trees"][0]["nodes"][0]["left"] = 99
    with pytest.raises(ModelFormatError, match=r"trees\[0\]\.nodes\[0\]\.left"):
        loads_model(json.dumps(doc))
    doc = _doc()
    doc["trees"][0]["nodes"][0]["cond"] = 4
    with pytest.raises(ModelFormatError, match=r"nodes\[0\]\.cond"):
        loads_model(json.dumps(doc))
    doc = _doc()
    leaf = next(i for i, n in enumerate(doc["trees"][0]["nodes"]) if "leaf" in n)
    doc["trees"][0]["nodes"][leaf]["leaf"] = 0.5
    with pytest.raises(ModelFormatError, match=rf"nodes\[{leaf}\]\.leaf"):
        loads_model(json.dumps(doc))


def test_cycle_and_kind_errors():
    doc = _doc()
    doc["trees"][0]["nodes"][1] = {"cond": 1, "left": 0, "right": 0}
    with pytest.raises(ModelFormatError, match="cycle"):
        loads_model(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="kind"):
        loads_model('{"kind": "forest"}')
    with pytest.raises(ModelFormatError, match="invalid JSON"):
        loads_model("{")


def test_boolean_leaves_accepted():
    doc = _doc()
    for n in doc["trees"][0]["nodes"]:
        if "leaf" in n:
            n["leaf"] = bool(n["leaf"])
    assert loads_model(json.dumps(doc)) == loan_I()


def test_matrix_evaluation_matches_scalar():
    rng = np.random.default_rng(1)
    cs = random_condition_set(rng, 10)
    dt, bt = random_dt(rng, cs, depth=6), random_bt(rng, cs, m=6)
    X = rng.integers(0, 2, size=(200, 10)).astype(np.uint8)
    assert list(dt.predict(X)) == [dt.classify(x) for x in X]
    assert np.allclose(bt.margins(X), [bt.margin(x) for x in X])
    assert list(bt.predict(X)) == [bt.classify(x) for x in X]


def test_margin_sums_in_tree_order():
    cs = loan_conditions()
    vals = [0.1, 0.2, -0.3]
    trees = []
    for v in vals:
        b = TreeBuilder()
        trees.append(b.build(b.leaf(v), RegressionTree, cs))
    assert BoostedTree(trees, cs).margin((0, 0, 0, 0)) == (0.1 + 0.2) + -0.3


def test_rule_classification():
    r = ClassificationRule(Term([(0, False)]), False)
    assert rule_classify(r, (0, 1, 1, 1)) is False
    assert rule_classify(r, (1, 1, 1, 1)) is None


def test_conflicting_rules():
    th = loan_conditions().theory
    r1 = ClassificationRule(Term([(0, True)]), True)
    assert rules_conflicting(r1, ClassificationRule(Term([(3, True)]), False), th)
    assert not rules_conflicting(r1, ClassificationRule(Term([(1, False)]), False), th)
    assert not rules_conflicting(r1, ClassificationRule(Term([(0, False)]), False), th)
    assert not rules_conflicting(r1, ClassificationRule(Term([(3, True)]), True), th)
