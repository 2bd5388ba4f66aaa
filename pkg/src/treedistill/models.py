"""Decision trees, regression trees, boosted trees and classification rules.

Trees live in immutable index arenas. Every arena is produced by a
hash-consing :class:`TreeBuilder`, so structurally identical subtrees share
one node index and comparing two subtrees is an integer comparison. Node
counts and paths are always taken over the unfolded tree.

Left child = condition false, right child = condition true.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import ModelFormatError, StructureError
from .features import ConditionKey, ConditionSet, DomainTheory, Term, th_consistent

Cond = Union[int, ConditionKey]


class Node(NamedTuple):
    cond: Optional[Cond]
    left: int
    right: int
    value: Any

    @property
    def is_leaf(self) -> bool:
        return self.cond is None


class TreeBuilder:
    """Hash-consing node factory."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._memo: dict[tuple, int] = {}

    def leaf(self, value) -> int:
        return self._intern(Node(None, -1, -1, value), ("leaf", type(value).__name__, value))

    def split(self, cond: Cond, left: int, right: int) -> int:
        return self._intern(Node(cond, left, right, None), ("split", cond, left, right))

    def _intern(self, node: Node, key) -> int:
        idx = self._memo.get(key)
        if idx is None:
            idx = len(self.nodes)
            self.nodes.append(node)
            self._memo[key] = idx
        return idx

    def copy_from(self, tree: "Tree", idx: Optional[int] = None, _memo=None) -> int:
        """Import a subtree of another arena."""
        memo = {} if _memo is None else _memo
        idx = tree.root if idx is None else idx
        out = memo.get(idx)
        if out is not None:
            return out
        node = tree.nodes[idx]
        if node.is_leaf:
            out = self.leaf(node.value)
        else:
            out = self.split(node.cond, self.copy_from(tree, node.left, memo), self.copy_from(tree, node.right, memo))
        memo[idx] = out
        return out

    def build(self, root: int, cls=None, conditions: Optional[ConditionSet] = None) -> "Tree":
        """Compact the nodes reachable from ``root`` in false-first preorder."""
        cls = cls or Tree
        order: list[int] = []
        renum: dict[int, int] = {}
        stack = [root]
        while stack:
            i = stack.pop()
            if i in renum:
                continue
            renum[i] = len(order)
            order.append(i)
            node = self.nodes[i]
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        nodes = []
        for i in order:
            node = self.nodes[i]
            if node.is_leaf:
                nodes.append(node)
            else:
                nodes.append(Node(node.cond, renum[node.left], renum[node.right], None))
        return cls(tuple(nodes), 0, conditions)


@dataclass(frozen=True)
class PathTerm:
    term: Term
    value: Any
    nodes: tuple[int, ...]
    feasible: bool


class Tree:
    """Immutable arena tree. Use :class:`DecisionTree` or :class:`RegressionTree`."""

    __slots__ = ("nodes", "root", "conditions", "_arrays")

    def __init__(self, nodes: Sequence[Node], root: int = 0, conditions: Optional[ConditionSet] = None):
        self.nodes = tuple(nodes)
        self.root = root
        self.conditions = conditions
        self._arrays = None
        self._validate()

    def _validate(self):
        n = len(self.nodes)
        if not 0 <= self.root < n:
            raise StructureError("root index out of range")
        for i, node in enumerate(self.nodes):
            if node.is_leaf:
                self._check_leaf(node.value, i)
            elif not (0 <= node.left < n and 0 <= node.right < n):
                raise StructureError(f"node {i}: child index out of range")
            elif self.conditions is not None:
                if not isinstance(node.cond, (int, np.integer)) or not 0 <= node.cond < len(self.conditions):
                    raise StructureError(f"node {i}: condition {node.cond!r} not in the condition set")
        order = self._postorder()
        if len(order) != n:
            raise StructureError("every node must be reachable from the root")

    def _postorder(self) -> list[int]:
        """Children before parents; raises on cycles."""
        state = [0] * len(self.nodes)
        order: list[int] = []
        stack = [(self.root, False)]
        while stack:
            i, done = stack.pop()
            if done:
                state[i] = 2
                order.append(i)
                continue
            if state[i] == 2:
                continue
            if state[i] == 1:
                raise StructureError(f"cycle through node {i}")
            state[i] = 1
            stack.append((i, True))
            node = self.nodes[i]
            if not node.is_leaf:
                for c in (node.right, node.left):
                    if state[c] == 1:
                        raise StructureError(f"cycle through node {c}")
                    if state[c] == 0:
                        stack.append((c, False))
        return order

    def _check_leaf(self, value, i):
        pass

    # -- equality --------------------------------------------------------
    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.root == other.root and self.nodes == other.nodes

    def __hash__(self):
        return hash((type(self).__name__, self.nodes, self.root))

    def __repr__(self):
        return f"{type(self).__name__}(size={self.size()}, depth={self.depth()})"

    # -- evaluation ------------------------------------------------------
    def evaluate(self, bits: Sequence):
        node = self.nodes[self.root]
        while not node.is_leaf:
            node = self.nodes[node.right if bits[node.cond] else node.left]
        return node.value

    def leaf_of(self, bits: Sequence) -> int:
        i = self.root
        node = self.nodes[i]
        while not node.is_leaf:
            i = node.right if bits[node.cond] else node.left
            node = self.nodes[i]
        return i

    def _get_arrays(self):
        if self._arrays is None:
            cond = np.array([-1 if n.is_leaf else n.cond for n in self.nodes], dtype=np.int64)
            left = np.array([n.left for n in self.nodes], dtype=np.int64)
            right = np.array([n.right for n in self.nodes], dtype=np.int64)
            value = np.array([n.value if n.is_leaf else 0 for n in self.nodes], dtype=np.float64)
            self._arrays = (cond, left, right, value)
        return self._arrays

    def evaluate_matrix(self, X) -> np.ndarray:
        """Leaf values for each row of a 0/1 matrix."""
        X = np.asarray(X)
        cond, left, right, value = self._get_arrays()
        idx = np.full(X.shape[0], self.root, dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = cond[idx] >= 0
        while active.any():
            r = rows[active]
            i = idx[r]
            go_right = X[r, cond[i]].astype(bool)
            idx[r] = np.where(go_right, right[i], left[i])
            active = cond[idx] >= 0
        return value[idx]

    # -- structure -------------------------------------------------------
    def size(self) -> int:
        """Node count of the unfolded tree, leaves included."""
        sizes = [0] * len(self.nodes)
        for i in self._postorder():
            n = self.nodes[i]
            sizes[i] = 1 if n.is_leaf else 1 + sizes[n.left] + sizes[n.right]
        return sizes[self.root]

    def depth(self) -> int:
        depths = [0] * len(self.nodes)
        for i in self._postorder():
            n = self.nodes[i]
            depths[i] = 0 if n.is_leaf else 1 + max(depths[n.left], depths[n.right])
        return depths[self.root]

    def used_conditions(self) -> set:
        return {n.cond for n in self.nodes if not n.is_leaf}

    def paths(self, th: Optional[DomainTheory] = None) -> list[PathTerm]:
        """Root-to-leaf paths in false-first depth-first order.

        A path testing a condition twice with opposite outcomes, or whose
        term contradicts ``th``, is returned with ``feasible=False``; its
        term omits the contradicting literal.
        """
        out: list[PathTerm] = []

        def walk(i, lits: dict, trail: tuple, ok: bool):
            node = self.nodes[i]
            trail = trail + (i,)
            if node.is_leaf:
                t = Term(lits)
                feasible = ok and (th is None or th_consistent(t, th))
                out.append(PathTerm(t, node.value, trail, feasible))
                return
            for pol, child in ((False, node.left), (True, node.right)):
                have = lits.get(node.cond)
                if have is not None and have != pol:
                    walk(child, lits, trail, False)
                else:
                    walk(child, {**lits, node.cond: pol}, trail, ok)

        walk(self.root, {}, (), True)
        return out

    def iter_splits(self) -> Iterator[tuple[int, Node]]:
        for i, n in enumerate(self.nodes):
            if not n.is_leaf:
                yield i, n

    def with_conditions(self, conditions: Optional[ConditionSet]):
        return type(self)(self.nodes, self.root, conditions)


class DecisionTree(Tree):
    __slots__ = ()

    def _check_leaf(self, value, i):
        if not isinstance(value, (bool, np.bool_)):
            raise StructureError(f"node {i}: decision tree leaves must be Boolean, got {value!r}")

    def classify(self, bits: Sequence) -> bool:
        return bool(self.evaluate(bits))

    def predict(self, X) -> np.ndarray:
        return self.evaluate_matrix(X) > 0.5

    @classmethod
    def leaf(cls, value: bool, conditions=None) -> "DecisionTree":
        b = TreeBuilder()
        return b.build(b.leaf(bool(value)), cls, conditions)


class RegressionTree(Tree):
    __slots__ = ()

    def _check_leaf(self, value, i):
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.floating, np.integer)):
            raise StructureError(f"node {i}: regression tree leaves must be real numbers, got {value!r}")


class BoostedTree:
    """Ordered list of regression trees; class 1 iff the margin is > 0."""

    __slots__ = ("trees", "conditions")

    def __init__(self, trees: Sequence[RegressionTree], conditions: Optional[ConditionSet] = None):
        self.trees = tuple(trees)
        self.conditions = conditions
        for k, t in enumerate(self.trees):
            if not isinstance(t, RegressionTree):
                raise StructureError(f"trees[{k}] is not a regression tree")
            if t.conditions is not conditions and t.conditions != conditions:
                raise StructureError(f"trees[{k}] uses a different condition set")

    def __eq__(self, other):
        return isinstance(other, BoostedTree) and self.trees == other.trees and self.conditions == other.conditions

    def __hash__(self):
        return hash(self.trees)

    def __repr__(self):
        return f"BoostedTree(m={len(self.trees)}, nodes={self.size()})"

    def margin(self, bits: Sequence) -> float:
        total = 0.0
        for t in self.trees:
            total += float(t.evaluate(bits))
        return total

    def classify(self, bits: Sequence) -> bool:
        return self.margin(bits) > 0.0

    def margins(self, X) -> np.ndarray:
        X = np.asarray(X)
        total = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            total = total + t.evaluate_matrix(X)
        return total

    def predict(self, X) -> np.ndarray:
        return self.margins(X) > 0.0

    def size(self) -> int:
        return sum(t.size() for t in self.trees)

    def used_conditions(self) -> set:
        out = set()
        for t in self.trees:
            out |= t.used_conditions()
        return out


def reindex(model, cs: ConditionSet):
    """Map ConditionKey splits of an un-indexed model onto ids of ``cs``."""
    if isinstance(model, BoostedTree):
        return BoostedTree([reindex(t, cs) for t in model.trees], cs)
    b = TreeBuilder()
    memo: dict[int, int] = {}

    def go(i):
        if i in memo:
            return memo[i]
        n = model.nodes[i]
        if n.is_leaf:
            out = b.leaf(n.value)
        else:
            cond = n.cond if isinstance(n.cond, (int, np.integer)) else cs.index(n.cond)
            out = b.split(int(cond), go(n.left), go(n.right))
        memo[i] = out
        return out

    return b.build(go(model.root), type(model), cs)


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassificationRule:
    """``premises => y`` when ``conclusion`` is True, ``premises => not y`` otherwise."""

    premises: Term
    conclusion: bool

    def __post_init__(self):
        object.__setattr__(self, "conclusion", bool(self.conclusion))

    def covers(self, bits: Sequence) -> bool:
        return self.premises.covers(bits)

    def classify(self, bits: Sequence) -> Optional[bool]:
        return self.conclusion if self.premises.covers(bits) else None

    def __repr__(self):
        head = repr(self.premises)[5:-1] or "true"
        return f"Rule({head} => {'y' if self.conclusion else '~y'})"

    def to_json(self) -> dict:
        return {"premises": self.premises.to_signed(), "conclusion": int(self.conclusion)}


def dt_classify(dt: DecisionTree, x: Sequence) -> bool:
    return dt.classify(x)


def bt_classify(bt: BoostedTree, x: Sequence) -> bool:
    return bt.classify(x)


def dt_paths(dt: DecisionTree, th: Optional[DomainTheory] = None) -> list[PathTerm]:
    return dt.paths(th)


def dt_size(dt: Tree) -> int:
    return dt.size()


def dt_depth(dt: Tree) -> int:
    return dt.depth()


def rule_classify(r: ClassificationRule, x: Sequence) -> Optional[bool]:
    return r.classify(x)


def rules_conflicting(r1: ClassificationRule, r2: ClassificationRule, th: DomainTheory) -> bool:
    if r1.conclusion == r2.conclusion or r1.premises.clashes(r2.premises):
        return False
    return th_consistent(r1.premises.union(r2.premises), th)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _tree_to_json(tree: Tree, boolean: bool) -> dict:
    nodes = []
    for n in tree.nodes:
        if n.is_leaf:
            nodes.append({"leaf": int(n.value) if boolean else float(n.value)})
        else:
            nodes.append({"cond": int(n.cond), "left": n.left, "right": n.right})
    return {"nodes": nodes, "root": tree.root}


def _tree_from_json(doc, cls, cs: ConditionSet, path: str) -> Tree:
    if not isinstance(doc, dict):
        raise ModelFormatError("tree must be an object", path)
    raw = doc.get("nodes")
    if not isinstance(raw, list) or not raw:
        raise ModelFormatError("missing or empty node list", f"{path}.nodes")
    root = doc.get("root", 0)
    if not isinstance(root, int) or isinstance(root, bool) or not 0 <= root < len(raw):
        raise ModelFormatError("root index out of range", f"{path}.root")
    n_cond = len(cs)
    b = TreeBuilder()
    memo: dict[int, int] = {}
    state: dict[int, int] = {}

    def go(i: int, where: str) -> int:
        if i in memo:
            return memo[i]
        if state.get(i) == 1:
            raise ModelFormatError("cycle detected", where)
        state[i] = 1
        item = raw[i]
        npath = f"{path}.nodes[{i}]"
        if not isinstance(item, dict):
            raise ModelFormatError("node must be an object", npath)
        if "leaf" in item:
            v = item["leaf"]
            if cls is DecisionTree:
                if v not in (0, 1) or isinstance(v, float) and v not in (0.0, 1.0):
                    raise ModelFormatError(f"decision leaf must be 0/1 or boolean, got {v!r}", f"{npath}.leaf")
                out = b.leaf(bool(v))
            else:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ModelFormatError(f"regression leaf must be a number, got {v!r}", f"{npath}.leaf")
                out = b.leaf(float(v))
        else:
            for key in ("cond", "left", "right"):
                v = item.get(key)
                if not isinstance(v, int) or isinstance(v, bool):
                    raise ModelFormatError(f"missing or non-integer {key!r}", f"{npath}.{key}")
            if not 0 <= item["cond"] < n_cond:
                raise ModelFormatError(f"condition id {item['cond']} out of range", f"{npath}.cond")
            for key in ("left", "right"):
                if not 0 <= item[key] < len(raw):
                    raise ModelFormatError("child index out of range", f"{npath}.{key}")
            out = b.split(item["cond"], go(item["left"], f"{npath}.left"), go(item["right"], f"{npath}.right"))
        state[i] = 2
        memo[i] = out
        return out

    return b.build(go(root, f"{path}.root"), cls, cs)


def dt_to_json(dt: DecisionTree) -> dict:
    if dt.conditions is None:
        raise StructureError("cannot serialize a tree without a condition set")
    return {"kind": "decision-tree", "conditions": dt.conditions.to_json(), "trees": [_tree_to_json(dt, True)]}


def bt_to_json(bt: BoostedTree) -> dict:
    if bt.conditions is None:
        raise StructureError("cannot serialize a model without a condition set")
    return {
        "kind": "boosted-tree",
        "conditions": bt.conditions.to_json(),
        "trees": [_tree_to_json(t, False) for t in bt.trees],
    }


def _conditions_from_doc(doc) -> ConditionSet:
    try:
        return ConditionSet.from_json(doc.get("conditions"))
    except StructureError as exc:
        raise ModelFormatError(str(exc), "conditions") from None


def dt_from_json(doc) -> DecisionTree:
    if not isinstance(doc, dict) or doc.get("kind") != "decision-tree":
        raise ModelFormatError("expected kind 'decision-tree'", "kind")
    cs = _conditions_from_doc(doc)
    trees = doc.get("trees")
    if not isinstance(trees, list) or len(trees) != 1:
        raise ModelFormatError("a decision tree document holds exactly one tree", "trees")
    return _tree_from_json(trees[0], DecisionTree, cs, "trees[0]")


def bt_from_json(doc) -> BoostedTree:
    if not isinstance(doc, dict) or doc.get("kind") != "boosted-tree":
        raise ModelFormatError("expected kind 'boosted-tree'", "kind")
    cs = _conditions_from_doc(doc)
    trees = doc.get("trees")
    if not isinstance(trees, list):
        raise ModelFormatError("trees must be a list", "trees")
    return BoostedTree([_tree_from_json(t, RegressionTree, cs, f"trees[{k}]") for k, t in enumerate(trees)], cs)


def model_to_json(model) -> dict:
    if isinstance(model, BoostedTree):
        return bt_to_json(model)
    if isinstance(model, DecisionTree):
        return dt_to_json(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(doc):
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "boosted-tree":
        return bt_from_json(doc)
    if kind == "decision-tree":
        return dt_from_json(doc)
    raise ModelFormatError(f"unknown model kind {kind!r}", "kind")


def dumps_model(model) -> str:
    return json.dumps(model_to_json(model), indent=1, sort_keys=True) + "\n"


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from None
    return model_from_json(doc)
