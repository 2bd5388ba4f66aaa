"""Abductive explanations for boosted trees and decision trees.

Two engines feed the distillation loop and the latency harness:

* tree-specific reasons for boosted trees, certified by per-tree worst-case
  margin bounds (polynomial, possibly redundant);
* sufficient reasons for decision trees, by deletion with an exact test
  (polynomial, subset-minimal).

A third, exponential engine computes sufficient reasons for boosted trees by
deletion with an exhaustive test; it exists as the slow side of the latency
comparison.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import oracle
from .errors import ExplanationTimeout, PreconditionError
from .features import DomainTheory, Term
from .models import BoostedTree, ClassificationRule, DecisionTree

ORDERS = ("descending", "ascending", "random")


@dataclass(frozen=True)
class MarginBounds:
    lo: float
    hi: float

    def certifies(self, cls: bool) -> bool:
        return self.lo > 0.0 if cls else self.hi <= 0.0


class _Deadline:
    def __init__(self, timeout: Optional[float]):
        self.end = None if timeout is None else time.monotonic() + timeout

    def check(self):
        if self.end is not None and time.monotonic() > self.end:
            raise ExplanationTimeout("explanation budget exhausted")


def deletion_order(ids: Sequence[int], order: str = "descending", seed: Optional[int] = None) -> list[int]:
    ids = sorted(ids)
    if order == "descending":
        return ids[::-1]
    if order == "ascending":
        return ids
    if order == "random":
        random.Random(seed).shuffle(ids)
        return ids
    raise ValueError(f"unknown deletion order {order!r}; expected one of {ORDERS}")


# ---------------------------------------------------------------------------
# boosted trees: tree-specific reasons
# ---------------------------------------------------------------------------


def _tree_range(tree, fixed: dict) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    stack = [tree.root]
    seen = set()
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        node = tree.nodes[i]
        if node.is_leaf:
            v = float(node.value)
            lo, hi = min(lo, v), max(hi, v)
            continue
        pol = fixed.get(node.cond)
        if pol is None:
            stack.append(node.left)
            stack.append(node.right)
        else:
            stack.append(node.right if pol else node.left)
    return lo, hi


def _bounds_closed(bt: BoostedTree, closed: dict) -> MarginBounds:
    lo = hi = 0.0
    for tree in bt.trees:
        a, b = _tree_range(tree, closed)
        lo += a
        hi += b
    return MarginBounds(lo, hi)


def bt_margin_bounds(bt: BoostedTree, t: Term, th: DomainTheory) -> MarginBounds:
    """Sound bounds on the margin over every feasible instance covered by ``t``.

    Each tree is relaxed independently: a node whose condition is decided by
    the closure of ``t`` follows its forced branch, any other node keeps both.
    """
    closed = th.propagate(t.as_dict())
    if closed is None:
        raise PreconditionError(f"{t!r} is inconsistent with the domain theory")
    return _bounds_closed(bt, closed)


def bt_tree_specific_reason(
    bt: BoostedTree,
    x: Sequence,
    th: DomainTheory,
    order: str = "descending",
    seed: Optional[int] = None,
    timeout: Optional[float] = None,
) -> Term:
    deadline = _Deadline(timeout)
    cls = bt.classify(x)
    current = {i: bool(b) for i, b in enumerate(x)}
    for i in deletion_order(current, order, seed):
        deadline.check()
        trial = dict(current)
        del trial[i]
        closed = th.propagate(trial)
        if closed is not None and _bounds_closed(bt, closed).certifies(cls):
            current = trial
    return Term(current)


# ---------------------------------------------------------------------------
# decision trees: sufficient reasons
# ---------------------------------------------------------------------------


def dt_reachable_classes(dt: DecisionTree, t: Term, th: DomainTheory, stop_on: Optional[bool] = None) -> set[bool]:
    """Labels of the leaves reachable by some feasible instance covered by ``t``.

    With ``stop_on`` set, returns as soon as that label is found.
    """
    closed = th.propagate(t.as_dict())
    if closed is None:
        return set()
    found: set[bool] = set()
    stack = [(dt.root, closed)]
    while stack:
        i, ctx = stack.pop()
        node = dt.nodes[i]
        if node.is_leaf:
            found.add(bool(node.value))
            if stop_on is not None and bool(node.value) == stop_on:
                return found
            continue
        pol = ctx.get(node.cond)
        if pol is not None:
            stack.append((node.right if pol else node.left, ctx))
            continue
        for p, child in ((True, node.right), (False, node.left)):
            ext = th.extend(ctx, (node.cond, p))
            if ext is not None:
                stack.append((child, ext))
    return found


def dt_is_abductive(dt: DecisionTree, t: Term, cls: bool, th: DomainTheory) -> bool:
    return (not cls) not in dt_reachable_classes(dt, t, th, stop_on=not cls)


def dt_sufficient_reason(
    dt: DecisionTree,
    x: Sequence,
    th: DomainTheory,
    order: str = "descending",
    seed: Optional[int] = None,
    timeout: Optional[float] = None,
) -> Term:
    deadline = _Deadline(timeout)
    cls = dt.classify(x)
    current = Term.of_instance(x)
    for i in deletion_order([i for i, _ in current], order, seed):
        deadline.check()
        trial = current.without(i)
        if dt_is_abductive(dt, trial, cls, th):
            current = trial
    return current


# ---------------------------------------------------------------------------
# boosted trees: exact sufficient reasons (exponential)
# ---------------------------------------------------------------------------


def _bt_abductive_exhaustive(bt: BoostedTree, t: Term, cls: bool, th: DomainTheory, deadline: _Deadline, chunk_bits: int) -> bool:
    free = [i for i in range(th.n) if t.get(i) is None]
    if len(free) <= chunk_bits:
        return oracle.is_abductive_exact(bt, t, cls, th, limit=th.n)
    # split the enumeration on the leading free variables so the deadline is polled
    head = free[: len(free) - chunk_bits]
    for k in range(1 << len(head)):
        deadline.check()
        sub = dict(t.as_dict())
        for pos, i in enumerate(head):
            sub[i] = bool((k >> (len(head) - 1 - pos)) & 1)
        if not oracle.is_abductive_exact(bt, Term(sub), cls, th, limit=th.n):
            return False
    return True


def bt_sufficient_reason(
    bt: BoostedTree,
    x: Sequence,
    th: DomainTheory,
    order: str = "descending",
    seed: Optional[int] = None,
    timeout: Optional[float] = None,
    chunk_bits: int = 14,
) -> Term:
    """Subset-minimal reason for a boosted tree by deletion with exhaustive checks."""
    deadline = _Deadline(timeout)
    cls = bt.classify(x)
    current = Term.of_instance(x)
    for i in deletion_order([i for i, _ in current], order, seed):
        deadline.check()
        trial = current.without(i)
        if _bt_abductive_exhaustive(bt, trial, cls, th, deadline, chunk_bits):
            current = trial
    return current


def explanation_to_rule(t: Term, cls: bool) -> ClassificationRule:
    return ClassificationRule(t, bool(cls))
