"""Rectification of decision trees by classification rules, and the
distillation loop built on it.

Rectifying a tree by ``phi => y`` yields ``tree or phi``; by ``phi => not y``
it yields ``tree and not phi``. Both are realized by path surgery: a leaf
whose path is compatible with ``phi`` and disagrees with the conclusion is
replaced by a chain testing the premise literals its path has not already
decided.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import PreconditionError
from .explain import bt_tree_specific_reason, explanation_to_rule
from .features import DomainTheory, Term
from .models import BoostedTree, ClassificationRule, DecisionTree, TreeBuilder


def _graft(b: TreeBuilder, chain: Sequence[tuple[int, bool]], old_leaf: int, new_leaf: int) -> int:
    # built bottom-up: the last literal tested sits right above the new leaf
    node = new_leaf
    for cond, pol in reversed(chain):
        node = b.split(cond, old_leaf, node) if pol else b.split(cond, node, old_leaf)
    return node


def rectify_by_rule(dt: DecisionTree, rule: ClassificationRule, th: DomainTheory) -> DecisionTree:
    premises = th.propagate(rule.premises.as_dict())
    if premises is None:
        raise PreconditionError(f"premises of {rule!r} are inconsistent with the domain theory")
    target = rule.conclusion
    b = TreeBuilder()
    copy_memo: dict[int, int] = {}

    def go(i: int, ctx: Optional[dict]) -> int:
        # ctx is the closed path term, or None once the path is infeasible
        node = dt.nodes[i]
        if ctx is None:
            return b.copy_from(dt, i, copy_memo)
        if node.is_leaf:
            if bool(node.value) == target:
                return b.leaf(bool(node.value))
            chain = sorted((j, p) for j, p in premises.items() if j not in ctx)
            return _graft(b, chain, b.leaf(bool(node.value)), b.leaf(target))
        kids = []
        for pol, child in ((False, node.left), (True, node.right)):
            have = ctx.get(node.cond)
            if have is not None:
                sub = ctx if have == pol else None
            else:
                sub = th.extend(ctx, (node.cond, pol))
            # paths incompatible with the premises are left untouched
            if sub is not None and any(sub.get(j, p) != p for j, p in premises.items()):
                sub = None
            kids.append(go(child, sub) if sub is not None else b.copy_from(dt, child, copy_memo))
        return b.split(node.cond, kids[0], kids[1])

    root_ctx = {}
    if any(root_ctx.get(j, p) != p for j, p in premises.items()):
        root_ctx = None
    return b.build(go(dt.root, root_ctx), DecisionTree, dt.conditions)


def simplify(dt: DecisionTree, th: DomainTheory) -> DecisionTree:
    """Drop Th-entailed tests, prune infeasible branches, merge equal children.

    Semantics on feasible instances are preserved. Repeats until the arena no
    longer changes.
    """
    while True:
        out = _simplify_once(dt, th)
        if out == dt:
            return out
        dt = out


def _simplify_once(dt: DecisionTree, th: DomainTheory) -> DecisionTree:
    b = TreeBuilder()
    memo: dict[tuple, int] = {}

    def go(i: int, ctx: dict) -> int:
        node = dt.nodes[i]
        if node.is_leaf:
            return b.leaf(node.value)
        pol = ctx.get(node.cond)
        if pol is not None:
            # the arc label is entailed by the rest of the path
            return go(node.right if pol else node.left, ctx)
        key = (i, tuple(sorted(ctx.items())))
        hit = memo.get(key)
        if hit is not None:
            return hit
        left_ctx = th.extend(ctx, (node.cond, False))
        right_ctx = th.extend(ctx, (node.cond, True))
        if left_ctx is None and right_ctx is None:
            # unreachable: callers only descend through consistent contexts
            out = b.leaf(False)
        elif left_ctx is None:
            out = go(node.right, right_ctx)
        elif right_ctx is None:
            out = go(node.left, left_ctx)
        else:
            lo = go(node.left, left_ctx)
            hi = go(node.right, right_ctx)
            out = lo if lo == hi else b.split(node.cond, lo, hi)
        memo[key] = out
        return out

    return b.build(go(dt.root, {}), DecisionTree, dt.conditions)


# ---------------------------------------------------------------------------
# distillation
# ---------------------------------------------------------------------------


@dataclass
class DistillConfig:
    explain_order: str = "descending"
    explain_seed: Optional[int] = None
    simplify: bool = True
    max_steps: Optional[int] = None
    stop_on_empty_diff: bool = True

    def __post_init__(self):
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class StepRecord:
    step: int
    instance: tuple[int, ...]
    rule: ClassificationRule
    relative_accuracy: float
    n_nodes: int
    depth: int
    elapsed: float
    remaining: int

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "instance": list(self.instance),
            "rule": self.rule.to_json(),
            "relative_accuracy": self.relative_accuracy,
            "n_nodes": self.n_nodes,
            "depth": self.depth,
            "remaining": self.remaining,
            "elapsed_ms": round(self.elapsed * 1000.0, 3),
        }


class ExplanationCache:
    """Memoizes boosted-tree explanations per instance."""

    def __init__(self, bt: BoostedTree, th: DomainTheory, order: str = "descending", seed: Optional[int] = None):
        self.bt, self.th, self.order, self.seed = bt, th, order, seed
        self._memo: dict[tuple, Term] = {}

    def __call__(self, x: Sequence) -> Term:
        key = tuple(int(v) for v in x)
        t = self._memo.get(key)
        if t is None:
            t = bt_tree_specific_reason(self.bt, key, self.th, self.order, self.seed)
            self._memo[key] = t
        return t


def distill_step(
    dt: DecisionTree,
    bt: BoostedTree,
    x: Sequence,
    th: DomainTheory,
    explain=None,
    do_simplify: bool = True,
) -> tuple[DecisionTree, ClassificationRule]:
    target = bt.classify(x)
    if dt.classify(x) == target:
        raise PreconditionError(f"instance {tuple(x)} is not misclassified")
    t = explain(x) if explain is not None else bt_tree_specific_reason(bt, x, th)
    rule = explanation_to_rule(t, target)
    out = rectify_by_rule(dt, rule, th)
    if do_simplify:
        out = simplify(out, th)
    return out, rule


def misclassified(dt, bt, X) -> np.ndarray:
    """Rows of ``X`` on which the two classifiers disagree."""
    X = np.asarray(X)
    if X.shape[0] == 0:
        return X
    return X[dt.predict(X) != bt.predict(X)]


def relative_accuracy(dt, bt, X) -> float:
    X = np.asarray(X)
    if X.shape[0] == 0:
        return 1.0
    return 1.0 - float(np.count_nonzero(dt.predict(X) != bt.predict(X))) / X.shape[0]


def distill_stream(
    dt0: DecisionTree,
    bt: BoostedTree,
    stream: Iterable[Sequence],
    th: DomainTheory,
    cfg: Optional[DistillConfig] = None,
    eval_set=None,
    explain=None,
) -> tuple[DecisionTree, list[StepRecord]]:
    """Correct ``dt0`` on every stream instance it misclassifies.

    Relative accuracy is measured on ``eval_set`` (the stream itself when not
    given) after each correction. ``len(records)`` is the step count f.
    """
    cfg = cfg or DistillConfig()
    stream = np.asarray(list(stream), dtype=np.uint8).reshape(-1, th.n)
    eval_X = stream if eval_set is None else np.asarray(eval_set, dtype=np.uint8).reshape(-1, th.n)
    if explain is None:
        explain = ExplanationCache(bt, th, cfg.explain_order, cfg.explain_seed)
    dt = dt0
    records: list[StepRecord] = []
    if cfg.stop_on_empty_diff and eval_set is not None and len(misclassified(dt, bt, eval_X)) == 0:
        return dt, records
    for x in stream:
        if cfg.max_steps is not None and len(records) >= cfg.max_steps:
            break
        if dt.classify(x) == bt.classify(x):
            continue
        start = time.perf_counter()
        dt, rule = distill_step(dt, bt, x, th, explain, cfg.simplify)
        elapsed = time.perf_counter() - start
        remaining = len(misclassified(dt, bt, eval_X))
        records.append(
            StepRecord(
                step=len(records) + 1,
                instance=tuple(int(v) for v in x),
                rule=rule,
                relative_accuracy=1.0 - remaining / eval_X.shape[0] if eval_X.shape[0] else 1.0,
                n_nodes=dt.size(),
                depth=dt.depth(),
                elapsed=elapsed,
                remaining=remaining,
            )
        )
        if cfg.stop_on_empty_diff and remaining == 0:
            break
    return dt, records


def shuffled(stream, seed: int) -> np.ndarray:
    """Seeded permutation of a stream, for order-policy experiments."""
    X = np.asarray(stream)
    idx = list(range(X.shape[0]))
    random.Random(seed).shuffle(idx)
    return X[idx]
