"""Brute-force ground truth over small condition spaces.

Everything here enumerates assignments and checks the domain theory clause
by clause. Nothing calls the closure machinery of :mod:`features`, so the
oracle can be used to test it.

Instances are enumerated in binary counting order with x_0 as the most
significant bit, so a tuple such as ``(0, 1, 1, 1)`` reads left to right.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import CapacityError
from .features import ConditionSet, DomainTheory, Term

DEFAULT_LIMIT = 20
MIN_EXPLANATIONS_LIMIT = 12


@dataclass(frozen=True)
class FeasibleSpace:
    n: int
    instances: np.ndarray

    def __len__(self):
        return self.instances.shape[0]

    def tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(b) for b in row) for row in self.instances]


def _clauses_by_last_var(th: DomainTheory) -> dict[int, list]:
    out: dict[int, list] = {}
    for (a, pa), (b, pb) in th.clauses():
        out.setdefault(max(a, b), []).append((a, pa, b, pb))
    return out


def enumerate_completions(t: Term, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> np.ndarray:
    """All Th-feasible instances covered by ``t``, as a uint8 matrix.

    Rows violating a clause are dropped as soon as both of its variables are
    assigned, so infeasible prefixes are never expanded.
    """
    n = th.n
    free = sum(1 for i in range(n) if t.get(i) is None)
    if free > limit:
        raise CapacityError(f"{free} free conditions exceed the enumeration limit {limit}")
    by_last = _clauses_by_last_var(th)
    rows = np.zeros((1, 0), dtype=np.uint8)
    for j in range(n):
        fixed = t.get(j)
        if fixed is None:
            rows = np.repeat(rows, 2, axis=0)
            col = np.tile(np.array([0, 1], dtype=np.uint8), rows.shape[0] // 2)
        else:
            col = np.full(rows.shape[0], int(fixed), dtype=np.uint8)
        rows = np.column_stack([rows, col])
        for a, pa, b, pb in by_last.get(j, ()):
            ok = (rows[:, a] == pa) | (rows[:, b] == pb)
            if not ok.all():
                rows = rows[ok]
        if rows.shape[0] == 0:
            return np.zeros((0, n), dtype=np.uint8)
    return rows


def enumerate_instances(cs: Union[ConditionSet, int, None], th: DomainTheory, limit: int = DEFAULT_LIMIT) -> FeasibleSpace:
    n = th.n if cs is None else (cs if isinstance(cs, int) else len(cs))
    if n != th.n:
        raise ValueError(f"condition set has {n} conditions but the theory covers {th.n}")
    if n > limit:
        raise CapacityError(f"{n} conditions exceed the enumeration limit {limit}")
    return FeasibleSpace(n, enumerate_completions(Term(), th, limit))


def predict(c, X: np.ndarray) -> np.ndarray:
    """Evaluate a classifier on every row: models expose ``predict``; plain
    callables are applied row by row."""
    if hasattr(c, "predict"):
        return np.asarray(c.predict(X), dtype=bool)
    return np.array([bool(c(tuple(int(b) for b in row))) for row in X], dtype=bool)


def exact_diff(c1, c2, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> list[tuple[int, ...]]:
    space = enumerate_instances(None, th, limit).instances
    mask = predict(c1, space) != predict(c2, space)
    return [tuple(int(b) for b in row) for row in space[mask]]


def semantically_equal(c1, c2, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> bool:
    return not exact_diff(c1, c2, th, limit)


def positive_set(c, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> set[tuple[int, ...]]:
    space = enumerate_instances(None, th, limit).instances
    return {tuple(int(b) for b in row) for row in space[predict(c, space)]}


def is_abductive_exact(c, t: Term, cls: bool, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> bool:
    rows = enumerate_completions(t, th, limit)
    return bool(np.all(predict(c, rows) == bool(cls)))


def abductive_witness(c, t: Term, cls: bool, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> Optional[tuple[int, ...]]:
    """A covered feasible instance whose class differs from ``cls``, if any."""
    rows = enumerate_completions(t, th, limit)
    bad = rows[predict(c, rows) != bool(cls)]
    return tuple(int(b) for b in bad[0]) if len(bad) else None


def min_explanations_exact(c, x: Sequence, th: DomainTheory, limit: int = MIN_EXPLANATIONS_LIMIT) -> set[Term]:
    """Every subset-minimal abductive explanation of ``x`` given ``c``.

    A subset S of t_x fails to be abductive exactly when some feasible
    instance of the other class agrees with x on all of S. Marking the
    agreement mask of each such instance and pushing the marks down to all
    subsets (a sum-over-subsets sweep) yields the non-abductive family.
    """
    n = th.n
    if n > limit:
        raise CapacityError(f"{n} conditions exceed the limit {limit} for minimal-explanation enumeration")
    x = np.asarray(x, dtype=np.uint8)
    space = enumerate_instances(None, th, limit).instances
    cls = bool(predict(c, x.reshape(1, -1))[0])
    bad = space[predict(c, space) != cls]
    weights = (1 << np.arange(n - 1, -1, -1)).astype(np.int64) if n else np.zeros(0, dtype=np.int64)
    agree = ((bad == x) * weights).sum(axis=1) if len(bad) else np.zeros(0, dtype=np.int64)
    nonabd = np.zeros(1 << n, dtype=bool)
    nonabd[agree] = True
    masks = np.arange(1 << n)
    for bit in range(n):
        b = 1 << bit
        has = (masks & b) != 0
        nonabd[masks[has] ^ b] |= nonabd[masks[has]]
    abd = ~nonabd
    out = set()
    for m in np.flatnonzero(abd):
        m = int(m)
        minimal = True
        for bit in range(n):
            b = 1 << bit
            if m & b and abd[m ^ b]:
                minimal = False
                break
        if minimal:
            lits = [(i, bool(x[i])) for i in range(n) if m & (1 << (n - 1 - i))]
            out.add(Term(lits))
    return out


def brute_force_margin_range(bt, t: Term, th: DomainTheory, limit: int = DEFAULT_LIMIT) -> tuple[float, float]:
    """True min/max of the boosted-tree margin over covered feasible instances."""
    rows = enumerate_completions(t, th, limit)
    m = np.array([sum(float(tree.evaluate(row)) for tree in bt.trees) for row in rows])
    return float(m.min()), float(m.max())


def as_callable(c) -> Callable[[Sequence], bool]:
    return c.classify if hasattr(c, "classify") else c
