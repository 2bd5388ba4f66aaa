"""Seeded random condition sets and tree models for property suites and
benchmarks."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .features import BOOLEAN, CATEGORICAL, NUMERIC, ConditionKey, ConditionSet
from .models import BoostedTree, DecisionTree, RegressionTree, TreeBuilder


def random_condition_set(rng: np.random.Generator, n: int, chain_max: int = 3, categorical: bool = True) -> ConditionSet:
    """``n`` conditions grouped into threshold chains, categorical groups and
    Booleans, so the derived theory has implications and exclusions."""
    keys: list[ConditionKey] = []
    attr = 0
    while len(keys) < n:
        room = n - len(keys)
        kind = rng.integers(0, 3 if categorical else 2)
        size = int(rng.integers(1, min(chain_max, room) + 1))
        name = f"a{attr}"
        attr += 1
        if kind == 0:
            keys.append(ConditionKey(name, BOOLEAN))
        elif kind == 1:
            keys.extend(ConditionKey(name, NUMERIC, threshold=float(t)) for t in range(size, 0, -1))
        else:
            keys.extend(ConditionKey(name, CATEGORICAL, value=f"v{v}") for v in range(size))
    return ConditionSet.from_keys(keys)


def random_feasible_instance(rng: np.random.Generator, cs: ConditionSet) -> tuple[int, ...]:
    """Draw raw attribute values and binarize them, so the result satisfies Th."""
    raw = {}
    for c in cs:
        if c.attribute in raw:
            continue
        if c.kind == NUMERIC:
            ts = [d.threshold for d in cs if d.attribute == c.attribute]
            raw[c.attribute] = float(rng.integers(0, int(max(ts)) + 2)) - 0.5
        elif c.kind == CATEGORICAL:
            vals = [d.value for d in cs if d.attribute == c.attribute]
            raw[c.attribute] = vals[int(rng.integers(0, len(vals)))] if rng.random() < 0.75 else "other"
        else:
            raw[c.attribute] = bool(rng.integers(0, 2))
    return tuple(int(c.holds(raw[c.attribute])) for c in cs)


def _random_tree(rng, n: int, depth: int, leaf, b: TreeBuilder, stop: float, allowed: Optional[list] = None) -> int:
    if depth == 0 or n == 0 or (allowed is not None and not allowed) or rng.random() < stop:
        return b.leaf(leaf())
    pool = list(range(n)) if allowed is None else allowed
    cond = int(pool[int(rng.integers(0, len(pool)))])
    rest = None if allowed is None else [c for c in pool if c != cond]
    lo = _random_tree(rng, n, depth - 1, leaf, b, stop, rest)
    hi = _random_tree(rng, n, depth - 1, leaf, b, stop, rest)
    return lo if lo == hi else b.split(cond, lo, hi)


def random_dt(rng: np.random.Generator, cs: ConditionSet, depth: int = 4, stop: float = 0.15, repeat: bool = False) -> DecisionTree:
    """A random decision tree; with ``repeat`` a path may test a condition twice."""
    b = TreeBuilder()
    root = _random_tree(rng, len(cs), depth, lambda: bool(rng.integers(0, 2)), b, stop, None if repeat else list(range(len(cs))))
    return b.build(root, DecisionTree, cs)


def random_regression_tree(rng: np.random.Generator, cs: ConditionSet, depth: int = 3, stop: float = 0.1) -> RegressionTree:
    b = TreeBuilder()
    # quarter-integer leaves keep margin sums exact in binary floating point
    root = _random_tree(rng, len(cs), depth, lambda: float(rng.integers(-8, 9)) / 4.0, b, stop, list(range(len(cs))))
    return b.build(root, RegressionTree, cs)


def random_bt(rng: np.random.Generator, cs: ConditionSet, m: int = 5, depth: int = 3, stop: float = 0.1) -> BoostedTree:
    return BoostedTree([random_regression_tree(rng, cs, depth, stop) for _ in range(m)], cs)
