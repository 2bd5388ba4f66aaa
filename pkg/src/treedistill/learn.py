"""Learners: Gini CART over binarized data, a small logistic booster over raw
attributes, and the retraining-based correction baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import RawTable, binarize_table
from .errors import PreconditionError
from .features import BOOLEAN, CATEGORICAL, NUMERIC, ConditionKey, DomainTheory, build_condition_set
from .models import BoostedTree, ClassificationRule, DecisionTree, RegressionTree, TreeBuilder, reindex


@dataclass
class Dataset:
    """Binarized instances with Boolean labels."""

    X: np.ndarray
    y: np.ndarray
    note: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.uint8)
        self.y = np.asarray(self.y, dtype=bool).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (rows, n) and y must have one label per row")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.note)

    def check_feasible(self, th: DomainTheory):
        for row in self.X:
            if not th.satisfied_by(row):
                raise PreconditionError(f"instance {tuple(int(v) for v in row)} violates the domain theory")


@dataclass
class RetrainConfig:
    ratio: float = 0.01
    cap: int = 100
    seed: int = 0
    sample_rule: str = "cap"

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must be in (0, 1]")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")
        if self.sample_rule not in ("cap", "max"):
            raise ValueError("sample_rule must be 'cap' or 'max'")


# ---------------------------------------------------------------------------
# CART
# ---------------------------------------------------------------------------


def _majority(y: np.ndarray) -> bool:
    pos = int(np.count_nonzero(y))
    return pos > len(y) - pos


def _best_gini_split(X: np.ndarray, y: np.ndarray) -> Optional[int]:
    """Condition id with the lowest weighted child Gini; ties go to the lowest id.

    Only conditions that separate the rows are candidates. Zero-gain splits
    are accepted so that impure nodes keep splitting until pure.
    """
    total = X.shape[0]
    ones = X.sum(axis=0, dtype=np.int64)
    valid = (ones > 0) & (ones < total)
    if not valid.any():
        return None
    pos_ones = X[y].sum(axis=0, dtype=np.int64)
    pos_total = int(np.count_nonzero(y))
    zeros = total - ones
    pos_zeros = pos_total - pos_ones
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = 1.0 - (pos_ones / ones) ** 2 - ((ones - pos_ones) / ones) ** 2
        g0 = 1.0 - (pos_zeros / zeros) ** 2 - ((zeros - pos_zeros) / zeros) ** 2
        score = (ones * g1 + zeros * g0) / total
    score = np.where(valid, score, np.inf)
    return int(np.argmin(score))


def cart_learn(train: Dataset, max_depth: Optional[int] = None, conditions=None) -> DecisionTree:
    """Greedy Gini decision tree.

    With ``max_depth=None`` nodes split until pure or until no condition
    separates their rows. Leaves take the majority label; ties give class 0.
    """
    if len(train) == 0:
        raise ValueError("cannot learn a decision tree from an empty dataset")
    X, y = train.X, train.y
    b = TreeBuilder()

    def grow(idx: np.ndarray, depth: int) -> int:
        ys = y[idx]
        pos = int(np.count_nonzero(ys))
        if pos == 0 or pos == len(ys) or (max_depth is not None and depth >= max_depth):
            return b.leaf(_majority(ys))
        cond = _best_gini_split(X[idx], ys)
        if cond is None:
            return b.leaf(_majority(ys))
        right = X[idx, cond].astype(bool)
        lo = grow(idx[~right], depth + 1)
        hi = grow(idx[right], depth + 1)
        return lo if lo == hi else b.split(cond, lo, hi)

    return b.build(grow(np.arange(len(train)), 0), DecisionTree, conditions)


def tune_depth(train: Dataset, candidates: Sequence[int] = tuple(range(2, 11)), seed: int = 0, holdout: float = 0.3) -> int:
    """Pick the depth bound with the best accuracy on a held-out part of ``train``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(train))
    cut = max(1, int(round(len(train) * (1 - holdout))))
    fit, val = train.subset(perm[:cut]), train.subset(perm[cut:])
    if len(val) == 0:
        return max(candidates)
    best, best_acc = None, -1.0
    for d in candidates:
        acc = float(np.mean(cart_learn(fit, d).predict(val.X) == val.y))
        if acc > best_acc:
            best, best_acc = d, acc
    return best


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------


def candidate_conditions(table: RawTable, max_thresholds: int = 32) -> list[ConditionKey]:
    """Split candidates: midpoints for numeric attributes, equality tests for
    categorical ones, the attribute itself for Booleans."""
    out = []
    for name in table.attributes:
        kind = table.kinds[name]
        col = table.columns[name]
        if kind == BOOLEAN:
            out.append(ConditionKey(name, BOOLEAN))
        elif kind == CATEGORICAL:
            for v in sorted(set(col.tolist())):
                out.append(ConditionKey(name, CATEGORICAL, value=v))
        else:
            vals = np.unique(col.astype(np.float64))
            mids = (vals[:-1] + vals[1:]) / 2.0
            if len(mids) > max_thresholds:
                mids = np.unique(np.quantile(mids, np.linspace(0, 1, max_thresholds)))
            out.extend(ConditionKey(name, NUMERIC, threshold=float(m)) for m in mids)
    return out


def _fit_regression_tree(B, keys, grad, hess, idx, depth, l2, b: TreeBuilder) -> int:
    """Variance-reduction splits on the pseudo-residuals, Newton leaf values."""
    r = grad[idx]
    if depth == 0 or len(idx) < 2 or np.ptp(r) == 0.0:
        return b.leaf(float(r.sum() / (hess[idx].sum() + l2)))
    Xn = B[idx].astype(bool)
    ones = Xn.sum(axis=0)
    valid = (ones > 0) & (ones < len(idx))
    if not valid.any():
        return b.leaf(float(r.sum() / (hess[idx].sum() + l2)))
    s1 = r @ Xn
    s0 = r.sum() - s1
    n1 = ones.astype(np.float64)
    n0 = len(idx) - n1
    with np.errstate(divide="ignore", invalid="ignore"):
        explained = s1 ** 2 / n1 + s0 ** 2 / n0
    explained = np.where(valid, explained, -np.inf)
    best = int(np.argmax(explained))
    go_right = Xn[:, best]
    lo = _fit_regression_tree(B, keys, grad, hess, idx[~go_right], depth - 1, l2, b)
    hi = _fit_regression_tree(B, keys, grad, hess, idx[go_right], depth - 1, l2, b)
    return lo if lo == hi else b.split(keys[best], lo, hi)


def gbt_learn(
    table: RawTable,
    labels: Sequence,
    depth: int = 3,
    n_estimators: int = 20,
    learning_rate: float = 0.3,
    seed: int = 0,
    subsample: float = 1.0,
    l2: float = 1.0,
    max_thresholds: int = 32,
) -> BoostedTree:
    """Logistic-loss gradient boosting over raw attributes.

    The returned model is indexed over the conditions its trees actually use;
    that condition set defines the binarized feature space.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(y) == 0:
        raise ValueError("cannot learn a boosted tree from an empty dataset")
    keys = candidate_conditions(table, max_thresholds)
    B = binarize_table(table, keys)
    rng = np.random.default_rng(seed)
    margin = np.zeros(len(y))
    raw_trees = []
    for _ in range(n_estimators):
        p = 1.0 / (1.0 + np.exp(-margin))
        grad = y - p
        hess = p * (1.0 - p)
        if subsample < 1.0:
            idx = np.sort(rng.choice(len(y), size=max(1, int(round(subsample * len(y)))), replace=False))
        else:
            idx = np.arange(len(y))
        b = TreeBuilder()
        root = _fit_regression_tree(B, keys, grad, hess, idx, depth, l2, b)
        # shrink leaves before interning so arena values are final
        shrunk = TreeBuilder()
        memo = {}

        def scale(i):
            if i in memo:
                return memo[i]
            n = b.nodes[i]
            out = shrunk.leaf(float(n.value) * learning_rate) if n.is_leaf else shrunk.split(n.cond, scale(n.left), scale(n.right))
            memo[i] = out
            return out

        tree = shrunk.build(scale(root), RegressionTree)
        raw_trees.append(tree)
        margin = margin + _raw_tree_values(tree, table, keys, B)
    raw = BoostedTree(raw_trees)
    cs = build_condition_set(raw)
    return reindex(raw, cs)


def _raw_tree_values(tree: RegressionTree, table, keys, B) -> np.ndarray:
    pos = {k: i for i, k in enumerate(keys)}
    cond = np.array([-1 if n.is_leaf else pos[n.cond] for n in tree.nodes])
    left = np.array([n.left for n in tree.nodes])
    right = np.array([n.right for n in tree.nodes])
    value = np.array([n.value if n.is_leaf else 0.0 for n in tree.nodes], dtype=np.float64)
    idx = np.full(B.shape[0], tree.root)
    rows = np.arange(B.shape[0])
    active = cond[idx] >= 0
    while active.any():
        r = rows[active]
        i = idx[r]
        idx[r] = np.where(B[r, cond[i]] != 0, right[i], left[i])
        active = cond[idx] >= 0
    return value[idx]


# ---------------------------------------------------------------------------
# retraining baseline
# ---------------------------------------------------------------------------


def sample_size(n: int, k: int, cfg: RetrainConfig) -> int:
    """Number of covered instances to draw for a rule with ``k`` premises over n conditions."""
    raw = cfg.ratio * (2.0 ** (n - k))
    if cfg.sample_rule == "max":
        return int(max(math.ceil(raw), cfg.cap))
    return int(min(max(math.ceil(raw), 1), cfg.cap))


def sample_covered(x: Sequence, rule: ClassificationRule, th: DomainTheory, size: int, rng: np.random.Generator, max_tries: Optional[int] = None) -> np.ndarray:
    """Feasible instances covered by the rule premises, ``x`` first, no duplicates.

    Conditions outside the premises are drawn uniformly; infeasible draws are
    discarded. Stops early when the draw budget runs out.
    """
    n = th.n
    x = tuple(int(v) for v in x)
    out = [x]
    seen = {x}
    free = [i for i in range(n) if rule.premises.get(i) is None]
    base = np.zeros(n, dtype=np.uint8)
    for i, p in rule.premises:
        base[i] = int(p)
    tries = 0
    budget = max_tries if max_tries is not None else 50 * size
    while len(out) < size and tries < budget and free:
        tries += 1
        cand = base.copy()
        cand[free] = rng.integers(0, 2, size=len(free), dtype=np.uint8)
        key = tuple(int(v) for v in cand)
        if key in seen or not th.satisfied_by(key):
            continue
        seen.add(key)
        out.append(key)
    return np.array(out, dtype=np.uint8).reshape(-1, n)


def retrain_correct(
    train: Dataset,
    dt: DecisionTree,
    bt: BoostedTree,
    x: Sequence,
    rule: ClassificationRule,
    cfg: RetrainConfig,
    th: DomainTheory,
    max_depth: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Dataset, DecisionTree]:
    """Add rule-labelled covered samples, drop conflicting rows, learn again."""
    if dt.classify(x) == bt.classify(x):
        raise PreconditionError(f"instance {tuple(x)} is not misclassified")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    size = sample_size(th.n, len(rule.premises), cfg)
    sample = sample_covered(x, rule, th, size, rng)
    covered = np.ones(len(train), dtype=bool)
    for i, p in rule.premises:
        covered &= train.X[:, i] == int(p)
    keep = ~(covered & (train.y != rule.conclusion))
    X = np.vstack([train.X[keep], sample])
    y = np.concatenate([train.y[keep], np.full(len(sample), rule.conclusion)])
    new = Dataset(X, y, train.note)
    return new, cart_learn(new, max_depth, dt.conditions)
