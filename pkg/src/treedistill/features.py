"""Binarized feature space: conditions, domain theory, terms and instances.

A condition is a Boolean test on one primitive attribute. Conditions coming
from the same attribute are not independent: ``S > 30`` entails ``S > 20``,
and ``colour = red`` excludes ``colour = blue``. Those links form the domain
theory, a conjunction of binary clauses, so unit propagation over its
implication graph is complete for both consistency and entailment.

Literals are ``(condition_id, polarity)`` pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import IngestError, PreconditionError, StructureError

NUMERIC = "numeric-greater"
CATEGORICAL = "categorical-equal"
BOOLEAN = "boolean"
KINDS = (BOOLEAN, CATEGORICAL, NUMERIC)

Literal = tuple[int, bool]


def neg(lit: Literal) -> Literal:
    return (lit[0], not lit[1])


# ---------------------------------------------------------------------------
# conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionKey:
    """Identity of a condition independent of its position in X."""

    attribute: str
    kind: str
    threshold: Optional[float] = None
    value: Optional[str] = None

    def __post_init__(self):
        if not self.attribute:
            raise StructureError("split condition without attribute")
        if self.kind not in KINDS:
            raise StructureError(f"unknown condition kind {self.kind!r}")
        if self.kind == NUMERIC:
            if self.threshold is None or not math.isfinite(self.threshold):
                raise StructureError(f"numeric condition on {self.attribute!r} needs a finite threshold")
            # -0.0 and 0.0 define the same test
            object.__setattr__(self, "threshold", float(self.threshold) + 0.0)
        elif self.kind == CATEGORICAL:
            if self.value is None:
                raise StructureError(f"categorical condition on {self.attribute!r} needs a value")
            object.__setattr__(self, "value", str(self.value))

    @property
    def name(self) -> str:
        if self.kind == NUMERIC:
            return f"{self.attribute}>{self.threshold:g}"
        if self.kind == CATEGORICAL:
            return f"{self.attribute}={self.value}"
        return self.attribute

    def holds(self, raw) -> bool:
        """Evaluate the condition on one raw attribute value."""
        if self.kind == NUMERIC:
            return float(raw) > self.threshold
        if self.kind == CATEGORICAL:
            return str(raw) == self.value
        return _as_bool(raw)


@dataclass(frozen=True)
class Condition(ConditionKey):
    id: int = -1

    @property
    def key(self) -> ConditionKey:
        return ConditionKey(self.attribute, self.kind, self.threshold, self.value)

    def to_json(self) -> dict:
        doc = {"id": self.id, "attribute": self.attribute, "kind": self.kind}
        if self.kind == NUMERIC:
            doc["threshold"] = self.threshold
        elif self.kind == CATEGORICAL:
            doc["value"] = self.value
        return doc


def _as_bool(raw) -> bool:
    if isinstance(raw, str):
        s = raw.strip().lower()
        if s in ("1", "true", "t", "yes", "1.0"):
            return True
        if s in ("0", "false", "f", "no", "0.0", ""):
            return False
        raise IngestError(f"cannot read {raw!r} as a Boolean")
    return bool(raw)


class ConditionSet(Sequence[Condition]):
    """The ordered set X of Boolean conditions, ids dense from 0."""

    def __init__(self, conditions: Iterable[Condition]):
        conds = tuple(conditions)
        for i, c in enumerate(conds):
            if c.id != i:
                raise StructureError(f"condition ids must be dense and ordered; position {i} holds id {c.id}")
        index = {}
        for c in conds:
            if c.key in index:
                raise StructureError(f"duplicate condition {c.name}")
            index[c.key] = c.id
        self._conds = conds
        self._index = index

    @classmethod
    def from_keys(cls, keys: Iterable[ConditionKey]) -> "ConditionSet":
        return cls(Condition(k.attribute, k.kind, k.threshold, k.value, id=i) for i, k in enumerate(keys))

    def __getitem__(self, i):
        return self._conds[i]

    def __len__(self) -> int:
        return len(self._conds)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConditionSet) and self._conds == other._conds

    def __hash__(self):
        return hash(self._conds)

    def __repr__(self):
        return f"ConditionSet([{', '.join(c.name for c in self._conds)}])"

    def index(self, key: ConditionKey) -> int:
        try:
            return self._index[ConditionKey(key.attribute, key.kind, key.threshold, key.value)]
        except KeyError:
            raise StructureError(f"condition {key.name} is not in the condition set") from None

    @property
    def attributes(self) -> list[str]:
        return sorted({c.attribute for c in self._conds})

    @cached_property
    def theory(self) -> "DomainTheory":
        return derive_theory(self)

    def to_json(self) -> list[dict]:
        return [c.to_json() for c in self._conds]

    @classmethod
    def from_json(cls, doc) -> "ConditionSet":
        if not isinstance(doc, list):
            raise StructureError("conditions must be a list")
        conds = []
        for pos, item in enumerate(doc):
            try:
                conds.append(
                    Condition(
                        item["attribute"],
                        item["kind"],
                        item.get("threshold"),
                        item.get("value"),
                        id=int(item["id"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise StructureError(f"conditions[{pos}]: missing or malformed field {exc}") from None
        conds.sort(key=lambda c: c.id)
        return cls(conds)

    def names(self) -> list[str]:
        return [c.name for c in self._conds]


def _condition_sort_key(key: ConditionKey):
    # numeric thresholds descending, so S>30 precedes S>20
    if key.kind == NUMERIC:
        tail = (-key.threshold, "")
    elif key.kind == CATEGORICAL:
        tail = (0.0, key.value)
    else:
        tail = (0.0, "")
    return (key.attribute, key.kind, tail)


def build_condition_set(model) -> ConditionSet:
    """Collect every distinct split condition of an un-indexed tree model.

    ``model`` is a boosted tree (or a single tree, or any iterable of trees)
    whose split nodes carry :class:`ConditionKey` objects.
    """
    trees = getattr(model, "trees", None)
    if trees is None:
        trees = [model] if hasattr(model, "nodes") else list(model)
    keys = set()
    for t_pos, tree in enumerate(trees):
        for n_pos, node in enumerate(tree.nodes):
            if node.is_leaf:
                continue
            cond = node.cond
            if not isinstance(cond, ConditionKey):
                raise StructureError(f"trees[{t_pos}].nodes[{n_pos}]: split does not name an attribute")
            keys.add(ConditionKey(cond.attribute, cond.kind, cond.threshold, cond.value))
    return ConditionSet.from_keys(sorted(keys, key=_condition_sort_key))


# ---------------------------------------------------------------------------
# domain theory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainTheory:
    """Threshold implications and categorical exclusions over n conditions."""

    n: int
    implications: frozenset = frozenset()
    exclusions: frozenset = frozenset()
    _reach: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        succ: dict[Literal, set[Literal]] = {}
        for a, b in self.implications:
            succ.setdefault(a, set()).add(b)
            succ.setdefault(neg(b), set()).add(neg(a))
        for i, j in self.exclusions:
            succ.setdefault((i, True), set()).add((j, False))
            succ.setdefault((j, True), set()).add((i, False))
        reach = {}
        for lit in succ:
            seen = {lit}
            stack = [lit]
            while stack:
                for nxt in succ.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            seen.discard(lit)
            reach[lit] = tuple(sorted(seen))
        object.__setattr__(self, "_reach", reach)

    @property
    def is_empty(self) -> bool:
        return not self.implications and not self.exclusions

    def clauses(self) -> list[tuple[Literal, Literal]]:
        """The theory as binary clauses ``l1 or l2``."""
        out = [(neg(a), b) for a, b in self.implications]
        out += [((i, False), (j, False)) for i, j in self.exclusions]
        return sorted(out)

    def satisfied_by(self, bits: Sequence) -> bool:
        return all(bool(bits[a]) == pa or bool(bits[b]) == pb for (a, pa), (b, pb) in self.clauses())

    def implied(self, lit: Literal) -> tuple[Literal, ...]:
        """Literals entailed by ``lit`` together with the theory (excluding ``lit``)."""
        return self._reach.get(lit, ())

    def propagate(self, assignment: Mapping[int, bool]) -> Optional[dict[int, bool]]:
        """Closure of a partial assignment, or ``None`` on contradiction."""
        out = dict(assignment)
        for lit in assignment.items():
            for i, pol in self._reach.get(lit, ()):
                if out.setdefault(i, pol) != pol:
                    return None
        return out

    def extend(self, closed: Mapping[int, bool], lit: Literal) -> Optional[dict[int, bool]]:
        """Add one literal to an already closed assignment."""
        i, pol = lit
        have = closed.get(i)
        if have is not None:
            return dict(closed) if have == pol else None
        out = dict(closed)
        out[i] = pol
        for j, q in self._reach.get(lit, ()):
            if out.setdefault(j, q) != q:
                return None
        return out


def derive_theory(cs: ConditionSet) -> DomainTheory:
    numeric: dict[str, list[Condition]] = {}
    categorical: dict[str, list[Condition]] = {}
    for c in cs:
        if c.kind == NUMERIC:
            numeric.setdefault(c.attribute, []).append(c)
        elif c.kind == CATEGORICAL:
            categorical.setdefault(c.attribute, []).append(c)
    implications = set()
    for group in numeric.values():
        for hi in group:
            for lo in group:
                if hi.threshold > lo.threshold:
                    implications.add(((hi.id, True), (lo.id, True)))
    exclusions = set()
    for group in categorical.values():
        for a in group:
            for b in group:
                if a.id < b.id:
                    exclusions.add((a.id, b.id))
    return DomainTheory(len(cs), frozenset(implications), frozenset(exclusions))


# ---------------------------------------------------------------------------
# terms and instances
# ---------------------------------------------------------------------------


class Term:
    """A consistent conjunction of literals, iterated in condition-id order."""

    __slots__ = ("_lits", "_hash")

    def __init__(self, literals: Iterable[Literal] = ()):
        if isinstance(literals, Mapping):
            literals = literals.items()
        lits: dict[int, bool] = {}
        for i, pol in literals:
            i, pol = int(i), bool(pol)
            if lits.setdefault(i, pol) != pol:
                raise ValueError(f"condition {i} appears with both polarities")
        self._lits = lits
        self._hash = None

    @classmethod
    def from_signed(cls, ints: Iterable[int]) -> "Term":
        """Build from 1-based signed ids: ``3`` is x_2, ``-1`` is not x_0."""
        out = []
        for v in ints:
            v = int(v)
            if v == 0:
                raise ValueError("signed literal ids are 1-based; 0 is not allowed")
            out.append((abs(v) - 1, v > 0))
        return cls(out)

    @classmethod
    def of_instance(cls, bits: Sequence) -> "Term":
        return cls((i, bool(b)) for i, b in enumerate(bits))

    def to_signed(self) -> list[int]:
        return [(i + 1) if pol else -(i + 1) for i, pol in self]

    @property
    def literals(self) -> tuple[Literal, ...]:
        return tuple(sorted(self._lits.items()))

    def as_dict(self) -> dict[int, bool]:
        return dict(self._lits)

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.literals)

    def __len__(self) -> int:
        return len(self._lits)

    def __contains__(self, lit) -> bool:
        return self._lits.get(lit[0]) == lit[1]

    def get(self, i: int) -> Optional[bool]:
        return self._lits.get(i)

    def __eq__(self, other) -> bool:
        return isinstance(other, Term) and self._lits == other._lits

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._lits.items()))
        return self._hash

    def __le__(self, other: "Term") -> bool:
        return self.issubset(other)

    def issubset(self, other: "Term") -> bool:
        return all(other._lits.get(i) == pol for i, pol in self._lits.items())

    def union(self, other: "Term") -> "Term":
        return Term(list(self._lits.items()) + list(other._lits.items()))

    def clashes(self, other: "Term") -> bool:
        return any(other._lits.get(i, pol) != pol for i, pol in self._lits.items())

    def difference(self, other: "Term") -> "Term":
        return Term((i, p) for i, p in self._lits.items() if other._lits.get(i) != p)

    def without(self, i: int) -> "Term":
        return Term((j, p) for j, p in self._lits.items() if j != i)

    def with_literal(self, lit: Literal) -> "Term":
        return Term(list(self._lits.items()) + [lit])

    def covers(self, bits: Sequence) -> bool:
        return all(bool(bits[i]) == pol for i, pol in self._lits.items())

    def __repr__(self) -> str:
        body = ", ".join(f"x{i}" if p else f"~x{i}" for i, p in self)
        return f"Term({body})"

    def describe(self, cs: Optional[ConditionSet] = None) -> str:
        if not self._lits:
            return "true"
        parts = []
        for i, p in self:
            name = cs[i].name if cs is not None else f"x{i}"
            parts.append(name if p else f"not({name})")
        return " and ".join(parts)


@dataclass(frozen=True)
class Instance:
    """A total, Th-feasible assignment over X."""

    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(bool(b)) for b in self.bits))

    @classmethod
    def checked(cls, bits: Sequence, th: DomainTheory) -> "Instance":
        inst = cls(tuple(bits))
        if len(inst.bits) != th.n:
            raise PreconditionError(f"instance has {len(inst.bits)} bits, expected {th.n}")
        if not th.satisfied_by(inst.bits):
            raise PreconditionError(f"instance {inst.bits} violates the domain theory")
        return inst

    @classmethod
    def from_term(cls, t: Term, n: int) -> "Instance":
        if len(t) != n or any(t.get(i) is None for i in range(n)):
            raise PreconditionError("term is not total")
        return cls(tuple(int(t.get(i)) for i in range(n)))

    @property
    def term(self) -> Term:
        return Term.of_instance(self.bits)

    def __len__(self):
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __iter__(self):
        return iter(self.bits)


def th_consistent(t: Term, th: DomainTheory) -> bool:
    return th.propagate(t.as_dict()) is not None


def closure(t: Term, th: DomainTheory) -> Term:
    out = th.propagate(t.as_dict())
    if out is None:
        raise PreconditionError(f"{t!r} is inconsistent with the domain theory")
    return Term(out)


def binarize(raw_row: Mapping, cs: ConditionSet) -> Instance:
    bits = []
    for c in cs:
        if c.attribute not in raw_row:
            raise IngestError(f"missing value for attribute {c.attribute!r}")
        try:
            bits.append(c.holds(raw_row[c.attribute]))
        except ValueError as exc:
            raise IngestError(f"attribute {c.attribute!r}: {exc}") from None
    return Instance(tuple(bits))


def binarize_rows(rows: Iterable[Mapping], cs: ConditionSet) -> np.ndarray:
    """Binarize many raw rows into a ``(rows, n)`` uint8 matrix."""
    out = [binarize(r, cs).bits for r in rows]
    return np.array(out, dtype=np.uint8).reshape(len(out), len(cs))
