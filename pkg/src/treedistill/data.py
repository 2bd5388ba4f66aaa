"""Raw tabular data: CSV ingestion, a seeded synthetic generator, and
vectorized binarization against a condition set."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import IngestError
from .features import BOOLEAN, CATEGORICAL, NUMERIC, ConditionKey

LABEL = "label"


@dataclass
class RawTable:
    """Column-oriented primitive attributes.

    Numeric columns are float64, Boolean columns uint8, categorical columns
    str arrays. ``attributes`` fixes the column order.
    """

    attributes: list[str]
    kinds: dict[str, str]
    columns: dict[str, np.ndarray]
    labels: Optional[np.ndarray] = None
    source: str = ""

    def __post_init__(self):
        lengths = {len(self.columns[a]) for a in self.attributes}
        if len(lengths) > 1:
            raise IngestError(f"columns of {self.source or 'table'} have different lengths")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if lengths and len(self.labels) not in lengths:
                raise IngestError("label column length differs from the attribute columns")

    def __len__(self) -> int:
        if self.attributes:
            return len(self.columns[self.attributes[0]])
        return 0 if self.labels is None else len(self.labels)

    def row(self, i: int) -> dict:
        return {a: self.columns[a][i].item() for a in self.attributes}

    def rows(self) -> Iterator[dict]:
        for i in range(len(self)):
            yield self.row(i)

    def take(self, idx) -> "RawTable":
        idx = np.asarray(idx, dtype=np.int64)
        return RawTable(
            list(self.attributes),
            dict(self.kinds),
            {a: self.columns[a][idx] for a in self.attributes},
            None if self.labels is None else self.labels[idx],
            self.source,
        )


def _infer_kind(values: Sequence[str]) -> str:
    stripped = [v.strip() for v in values]
    if stripped and all(v in ("0", "1") for v in stripped):
        return BOOLEAN
    try:
        for v in stripped:
            if not math.isfinite(float(v)):
                return CATEGORICAL
    except ValueError:
        return CATEGORICAL
    return NUMERIC


def _column(values: Sequence[str], kind: str) -> np.ndarray:
    if kind == NUMERIC:
        return np.array([float(v) for v in values], dtype=np.float64)
    if kind == BOOLEAN:
        return np.array([int(v.strip()) for v in values], dtype=np.uint8)
    return np.array([v.strip() for v in values], dtype=str)


def table_from_records(header: Sequence[str], records: Sequence[Sequence[str]], source: str = "", kinds: Optional[Mapping[str, str]] = None) -> RawTable:
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise IngestError(f"{source}: duplicate column names")
    has_label = bool(header) and header[-1] == LABEL
    attrs = header[:-1] if has_label else list(header)
    for k, rec in enumerate(records):
        if len(rec) != len(header):
            raise IngestError(f"{source}: row {k + 2} has {len(rec)} fields, expected {len(header)}")
    cols, kinds_out = {}, {}
    for j, a in enumerate(attrs):
        raw = [rec[j] for rec in records]
        kind = (kinds or {}).get(a) or _infer_kind(raw)
        try:
            cols[a] = _column(raw, kind)
        except ValueError as exc:
            raise IngestError(f"{source}: column {a!r}: {exc}") from None
        kinds_out[a] = kind
    labels = None
    if has_label:
        raw = [rec[-1].strip() for rec in records]
        bad = [v for v in raw if v not in ("0", "1")]
        if bad:
            raise IngestError(f"{source}: label values must be 0 or 1, got {bad[0]!r}")
        labels = np.array([v == "1" for v in raw], dtype=bool)
    return RawTable(attrs, kinds_out, cols, labels, source)


def load_csv(path, kinds: Optional[Mapping[str, str]] = None) -> RawTable:
    """Read a CSV with a header row; a final ``label`` column is optional."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise IngestError(f"{path}: empty file")
            records = [r for r in reader if r]
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from None
    return table_from_records(header, records, str(path), kinds)


def write_csv(table: RawTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(table.attributes) + ([LABEL] if table.labels is not None else [])
        w.writerow(header)
        for i in range(len(table)):
            row = []
            for a in table.attributes:
                v = table.columns[a][i].item()
                row.append(repr(v) if isinstance(v, float) else str(v))
            if table.labels is not None:
                row.append("1" if table.labels[i] else "0")
            w.writerow(row)


def binarize_table(table: RawTable, keys: Iterable[ConditionKey]) -> np.ndarray:
    """Vectorized binarization; agrees with :func:`features.binarize` row by row."""
    keys = list(keys)
    out = np.zeros((len(table), len(keys)), dtype=np.uint8)
    for j, k in enumerate(keys):
        if k.attribute not in table.columns:
            raise IngestError(f"missing value for attribute {k.attribute!r}")
        col = table.columns[k.attribute]
        try:
            if k.kind == NUMERIC:
                out[:, j] = col.astype(np.float64) > k.threshold
            elif k.kind == CATEGORICAL:
                out[:, j] = col.astype(str) == k.value
            else:
                out[:, j] = col.astype(np.float64) != 0
        except ValueError as exc:
            raise IngestError(f"attribute {k.attribute!r}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# synthetic workload
# ---------------------------------------------------------------------------

SYNTH_BOOLEAN = tuple(f"b{i}" for i in range(6))
SYNTH_NUMERIC = ("n0", "n1")
SYNTH_CATEGORICAL = ("c0", "c1")
SYNTH_COLORS = ("r", "g", "b")


def make_synthetic(rows: int = 600, seed: int = 0, noise: float = 0.1) -> RawTable:
    """Ten primitive attributes: six Booleans, two integers in 0..3, two
    colors. Any tree learned on it uses at most 18 conditions.

    The label is a noisy threshold of an interaction-heavy score, so boosted
    trees and CART disagree on a fair share of instances.
    """
    rng = np.random.default_rng(seed)
    b = rng.integers(0, 2, size=(rows, 6)).astype(np.uint8)
    n = rng.integers(0, 4, size=(rows, 2)).astype(np.float64)
    c = rng.integers(0, 3, size=(rows, 2))
    score = (
        1.2 * (b[:, 0] ^ b[:, 1])
        + 0.8 * b[:, 2] * (n[:, 0] >= 2)
        - 0.9 * (c[:, 0] == 2)
        + 0.5 * n[:, 1] * b[:, 3]
        - 0.6 * (b[:, 4] & (c[:, 1] == 0))
        + 0.3 * b[:, 5]
        - 1.0
    )
    score = score + rng.normal(0.0, noise * 3.0, size=rows)
    labels = score > 0
    cols: dict[str, np.ndarray] = {}
    kinds: dict[str, str] = {}
    for j, a in enumerate(SYNTH_BOOLEAN):
        cols[a], kinds[a] = b[:, j], BOOLEAN
    for j, a in enumerate(SYNTH_NUMERIC):
        cols[a], kinds[a] = n[:, j], NUMERIC
    for j, a in enumerate(SYNTH_CATEGORICAL):
        cols[a] = np.array([SYNTH_COLORS[v] for v in c[:, j]], dtype=str)
        kinds[a] = CATEGORICAL
    attrs = list(SYNTH_BOOLEAN + SYNTH_NUMERIC + SYNTH_CATEGORICAL)
    return RawTable(attrs, kinds, cols, labels, f"synthetic(rows={rows}, seed={seed})")


def split_indices(count: int, train_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded partition into a training part and the rest; both sides nonempty."""
    cut = int(round(count * train_fraction))
    if cut <= 0 or cut >= count:
        raise IngestError(f"a {train_fraction:.0%} split of {count} rows leaves one side empty")
    perm = rng.permutation(count)
    return np.sort(perm[:cut]), np.sort(perm[cut:])
