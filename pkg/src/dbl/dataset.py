"""Tabular ingestion, MDL discretisation and categorical encoding.

Raw cells are kept as ``float`` (numeric), ``str`` (categorical) or
``None`` (missing). Encoding turns a :class:`RawDataset` into integer value
indices, reserving one extra index per attribute for missing values and for
categorical labels that were not seen when the encoder was fitted.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = None
DEFAULT_MISSING_TOKENS = ("?", "")

Cell = float | str | None
CutPoints = dict[str, list[float]]


class DatasetError(ValueError):
    """Malformed input data or schema."""


@dataclass(frozen=True)
class AttributeMeta:
    name: str
    kind: str  # "numeric" | "categorical"
    categories: tuple[str, ...] = ()
    has_missing: bool = False
    missing_tokens: tuple[str, ...] = DEFAULT_MISSING_TOKENS

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise DatasetError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if len(set(self.categories)) != len(self.categories):
            raise DatasetError(f"attribute {self.name!r}: duplicate category labels")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "categories": list(self.categories),
            "has_missing": self.has_missing,
            "missing_tokens": list(self.missing_tokens),
        }

    @classmethod
    def from_json(cls, d: dict) -> "AttributeMeta":
        return cls(
            name=d["name"],
            kind=d["kind"],
            categories=tuple(d.get("categories", ())),
            has_missing=bool(d.get("has_missing", False)),
            missing_tokens=tuple(d.get("missing_tokens", DEFAULT_MISSING_TOKENS)),
        )


@dataclass(frozen=True)
class Schema:
    """Column kinds and missing tokens, normally read from a JSON sidecar."""

    attributes: tuple[AttributeMeta, ...]
    class_name: str

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.attributes]


@dataclass(frozen=True)
class RawDataset:
    meta: tuple[AttributeMeta, ...]
    class_meta: AttributeMeta
    rows: tuple[tuple[Cell, ...], ...]
    labels: tuple[str, ...]

    @property
    def a(self) -> int:
        return len(self.meta)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def class_index(self) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.class_meta.categories)}
        return np.array([lookup[c] for c in self.labels], dtype=np.int64)

    def subset(self, rows: Iterable[int]) -> "RawDataset":
        idx = list(rows)
        return RawDataset(
            meta=self.meta,
            class_meta=self.class_meta,
            rows=tuple(self.rows[i] for i in idx),
            labels=tuple(self.labels[i] for i in idx),
        )


@dataclass(frozen=True)
class DiscretizedDataset:
    X: np.ndarray  # (N, a) int64 value indices
    y: np.ndarray  # (N,) int64 class indices
    cardinalities: tuple[int, ...]
    class_count: int
    attribute_names: tuple[str, ...] = ()
    class_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.class_count < 1:
            raise DatasetError("class_count must be >= 1")
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DatasetError(f"shape mismatch: X {self.X.shape}, y {self.y.shape}")
        if self.X.shape[1] != len(self.cardinalities):
            raise DatasetError("cardinalities do not match attribute count")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise DatasetError("class index out of range")
        if self.X.size and ((self.X < 0).any() or (self.X >= np.asarray(self.cardinalities)).any()):
            raise DatasetError("value index out of range")

    @property
    def a(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def instances(self) -> list[tuple[np.ndarray, int]]:
        return [(self.X[i], int(self.y[i])) for i in range(len(self))]

    def take(self, rows: Sequence[int] | np.ndarray) -> "DiscretizedDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return DiscretizedDataset(
            X=self.X[rows], y=self.y[rows], cardinalities=self.cardinalities,
            class_count=self.class_count, attribute_names=self.attribute_names,
            class_labels=self.class_labels,
        )


# ----------------------------------------------------------------------------
# loading

def load_schema(path: str | Path) -> Schema:
    """Read a JSON sidecar ``{attributes: [{name, kind, missing_tokens}], class: {name}}``."""
    try:
        sidecar = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DatasetError(f"cannot read sidecar {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"sidecar {path} is not valid JSON: {exc}") from exc
    try:
        attrs = tuple(
            AttributeMeta(
                name=a["name"],
                kind=a["kind"],
                missing_tokens=tuple(a.get("missing_tokens", DEFAULT_MISSING_TOKENS)),
            )
            for a in sidecar["attributes"]
        )
        class_name = sidecar["class"]["name"]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"sidecar {path} is missing field {exc}") from exc
    return Schema(attributes=attrs, class_name=class_name)


def _parse_float(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(
    path: str | Path,
    schema: Schema | None = None,
    *,
    missing_tokens: Sequence[str] = DEFAULT_MISSING_TOKENS,
    allow_empty: bool = False,
    require_class: bool = True,
) -> RawDataset:
    """Parse a headered CSV file.

    Without a schema every column but the last is an attribute, and a column
    is numeric when all its non-missing cells parse as floats. With
    ``require_class=False`` a file lacking the schema's class column is
    accepted and every label is the empty string.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    lines = [(i + 1, r) for i, r in enumerate(lines) if r and any(c.strip() for c in r)]
    if not lines:
        raise DatasetError(f"{path}: no header row")
    header = [h.strip() for h in lines[0][1]]
    body = lines[1:]
    if not body and not allow_empty:
        raise DatasetError(f"{path}: dataset is empty")
    width = len(header)
    for lineno, r in body:
        if len(r) != width:
            raise DatasetError(f"{path}: line {lineno}: expected {width} cells, got {len(r)}")

    if schema is None:
        class_col = width - 1
        attr_cols = list(range(width - 1))
        tokens = {c: tuple(missing_tokens) for c in range(width)}
        kinds = {}
        for c in attr_cols:
            numeric = all(
                _parse_float(r[c].strip()) is not None
                for _, r in body if r[c].strip() not in tokens[c]
            )
            kinds[c] = "numeric" if numeric else "categorical"
    else:
        if schema.class_name in header:
            class_col = header.index(schema.class_name)
        elif not require_class:
            class_col = None
        else:
            raise DatasetError(f"{path}: class column {schema.class_name!r} not in header")
        by_name = {m.name: m for m in schema.attributes}
        attr_cols = [c for c in range(width) if c != class_col]
        unknown = [header[c] for c in attr_cols if header[c] not in by_name]
        absent = [m.name for m in schema.attributes if m.name not in header]
        if unknown or absent:
            raise DatasetError(
                f"{path}: header does not match schema (not in schema: {unknown}, not in file: {absent})"
            )
        tokens = {c: by_name[header[c]].missing_tokens for c in attr_cols}
        tokens[class_col] = tuple(missing_tokens)
        # keep the schema's attribute order
        attr_cols.sort(key=lambda c: schema.names.index(header[c]))
        kinds = {c: by_name[header[c]].kind for c in attr_cols}

    rows: list[tuple[Cell, ...]] = []
    labels: list[str] = []
    for lineno, r in body:
        cells: list[Cell] = []
        for c in attr_cols:
            tok = r[c].strip()
            if tok in tokens[c]:
                cells.append(MISSING)
            elif kinds[c] == "numeric":
                v = _parse_float(tok)
                if v is None:
                    raise DatasetError(
                        f"{path}: line {lineno}: cannot parse {tok!r} as a number for {header[c]!r}"
                    )
                cells.append(v)
            else:
                cells.append(tok)
        label = r[class_col].strip() if class_col is not None else ""
        if class_col is not None and label in tokens[class_col]:
            raise DatasetError(f"{path}: line {lineno}: class value is missing")
        rows.append(tuple(cells))
        labels.append(label)

    meta = []
    for j, c in enumerate(attr_cols):
        column = [row[j] for row in rows]
        cats = tuple(sorted({v for v in column if isinstance(v, str)})) if kinds[c] == "categorical" else ()
        meta.append(
            AttributeMeta(
                name=header[c], kind=kinds[c], categories=cats,
                has_missing=any(v is MISSING for v in column), missing_tokens=tuple(tokens[c]),
            )
        )
    class_meta = AttributeMeta(
        name=header[class_col] if class_col is not None else schema.class_name,
        kind="categorical",
        categories=tuple(sorted(set(labels))) if class_col is not None else (),
    )
    return RawDataset(meta=tuple(meta), class_meta=class_meta, rows=tuple(rows), labels=tuple(labels))


# ----------------------------------------------------------------------------
# MDL discretisation (Fayyad & Irani)

def _entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _mdl_split(values: np.ndarray, y: np.ndarray, n_classes: int) -> list[float]:
    """Recursive MDL-accepted cuts for ``values`` already sorted ascending."""
    n = len(values)
    if n < 2:
        return []
    distinct, starts = np.unique(values, return_index=True)
    if len(distinct) < 2:
        return []
    # per distinct-value class histograms
    group = np.searchsorted(distinct, values)
    hist = np.zeros((len(distinct), n_classes), dtype=np.int64)
    np.add.at(hist, (group, y), 1)
    left = np.cumsum(hist, axis=0)[:-1]
    total = hist.sum(axis=0)
    right = total - left

    pure_class = np.where((hist > 0).sum(axis=1) == 1, hist.argmax(axis=1), -1)
    boundary = ~((pure_class[:-1] >= 0) & (pure_class[:-1] == pure_class[1:]))

    best = None
    for g in np.flatnonzero(boundary):
        n1 = left[g].sum()
        e = (n1 * _entropy(left[g]) + (n - n1) * _entropy(right[g])) / n
        if best is None or e < best[0] - 1e-12:
            best = (e, g)
    if best is None:
        return []
    e_split, g = best
    e_all = _entropy(total)
    gain = e_all - e_split
    k = int((total > 0).sum())
    k1 = int((left[g] > 0).sum())
    k2 = int((right[g] > 0).sum())
    delta = math.log2(3**k - 2) - (k * e_all - k1 * _entropy(left[g]) - k2 * _entropy(right[g]))
    if gain <= (math.log2(n - 1) + delta) / n:
        return []
    cut = float((distinct[g] + distinct[g + 1]) / 2.0)
    split = starts[g + 1]
    return _mdl_split(values[:split], y[:split], n_classes) + [cut] + _mdl_split(
        values[split:], y[split:], n_classes
    )


def fit_mdl_cuts(raw: RawDataset, train_rows: Sequence[int] | None = None) -> CutPoints:
    """Fayyad-Irani MDL cut points for every numeric attribute, fitted on ``train_rows``."""
    rows = range(len(raw)) if train_rows is None else list(train_rows)
    if len(rows) == 0:
        raise DatasetError("cannot fit cut points on an empty training set")
    y_all = raw.class_index
    n_classes = len(raw.class_meta.categories)
    cuts: CutPoints = {}
    for j, m in enumerate(raw.meta):
        if m.kind != "numeric":
            continue
        pairs = [(raw.rows[i][j], y_all[i]) for i in rows if raw.rows[i][j] is not MISSING]
        if not pairs:
            cuts[m.name] = []
            continue
        v = np.array([p[0] for p in pairs], dtype=float)
        y = np.array([p[1] for p in pairs], dtype=np.int64)
        order = np.argsort(v, kind="stable")
        cuts[m.name] = _mdl_split(v[order], y[order], n_classes)
    return cuts


def save_cuts(cuts: CutPoints, path: str | Path) -> None:
    Path(path).write_text(json.dumps({k: [float(t) for t in v] for k, v in cuts.items()}, indent=2) + "\n")


def load_cuts(path: str | Path) -> CutPoints:
    data = json.loads(Path(path).read_text())
    return {k: [float(t) for t in v] for k, v in data.items()}


# ----------------------------------------------------------------------------
# encoding

@dataclass(frozen=True)
class Encoder:
    """Fitted mapping from raw cells to value indices.

    ``categories`` holds the training labels of each categorical attribute;
    ``reserved[j]`` is true when attribute ``j`` had missing values in the
    training rows, so its reserved index is part of the fitted cardinality.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    cuts: CutPoints
    categories: dict[str, tuple[str, ...]]
    reserved: tuple[bool, ...]
    class_labels: tuple[str, ...]

    @property
    def base_cardinalities(self) -> tuple[int, ...]:
        return tuple(
            len(self.cuts[n]) + 1 if k == "numeric" else len(self.categories[n])
            for n, k in zip(self.names, self.kinds)
        )

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(b + int(r) for b, r in zip(self.base_cardinalities, self.reserved))

    def to_json(self) -> dict:
        return {
            "names": list(self.names),
            "kinds": list(self.kinds),
            "cuts": {k: [float(t) for t in v] for k, v in self.cuts.items()},
            "categories": {k: list(v) for k, v in self.categories.items()},
            "reserved": list(self.reserved),
            "class_labels": list(self.class_labels),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Encoder":
        return cls(
            names=tuple(d["names"]),
            kinds=tuple(d["kinds"]),
            cuts={k: [float(t) for t in v] for k, v in d["cuts"].items()},
            categories={k: tuple(v) for k, v in d["categories"].items()},
            reserved=tuple(bool(r) for r in d["reserved"]),
            class_labels=tuple(d["class_labels"]),
        )


def fit_encoder(raw: RawDataset, train_rows: Sequence[int] | None = None, cuts: CutPoints | None = None) -> Encoder:
    rows = range(len(raw)) if train_rows is None else list(train_rows)
    if cuts is None:
        cuts = fit_mdl_cuts(raw, rows)
    cats: dict[str, tuple[str, ...]] = {}
    reserved = []
    for j, m in enumerate(raw.meta):
        column = [raw.rows[i][j] for i in rows]
        if m.kind == "categorical":
            cats[m.name] = tuple(sorted({v for v in column if v is not MISSING}))
        reserved.append(any(v is MISSING for v in column))
    return Encoder(
        names=tuple(m.name for m in raw.meta),
        kinds=tuple(m.kind for m in raw.meta),
        cuts={m.name: list(cuts[m.name]) for m in raw.meta if m.kind == "numeric"},
        categories=cats,
        reserved=tuple(reserved),
        class_labels=raw.class_meta.categories,
    )


def _encoder_from_meta(raw: RawDataset, cuts: CutPoints) -> Encoder:
    missing = [m.name for m in raw.meta if m.kind == "numeric" and m.name not in cuts]
    if missing:
        raise DatasetError(f"no cut points for numeric attributes {missing}")
    return Encoder(
        names=tuple(m.name for m in raw.meta),
        kinds=tuple(m.kind for m in raw.meta),
        cuts={m.name: list(cuts[m.name]) for m in raw.meta if m.kind == "numeric"},
        categories={m.name: m.categories for m in raw.meta if m.kind == "categorical"},
        reserved=tuple(m.has_missing for m in raw.meta),
        class_labels=raw.class_meta.categories,
    )


def apply_discretization(
    raw: RawDataset, cuts: CutPoints | Encoder, rows: Sequence[int] | None = None
) -> DiscretizedDataset:
    """Encode ``raw`` (optionally only ``rows``) as value indices.

    A numeric value maps to the number of thresholds below it. Missing
    values and unseen labels map to the attribute's reserved index, which is
    allocated here if the encoder did not already include it.
    """
    enc = cuts if isinstance(cuts, Encoder) else _encoder_from_meta(raw, cuts)
    idx = range(len(raw)) if rows is None else list(rows)
    X, cards = encode_features(raw, enc, idx)
    class_lookup = {c: k for k, c in enumerate(enc.class_labels)}
    try:
        y = np.array([class_lookup[raw.labels[i]] for i in idx], dtype=np.int64)
    except KeyError as exc:
        raise DatasetError(f"class label {exc.args[0]!r} unknown to the encoder") from exc
    return DiscretizedDataset(
        X=X, y=y, cardinalities=cards, class_count=len(enc.class_labels),
        attribute_names=enc.names, class_labels=enc.class_labels,
    )


def encode_features(
    raw: RawDataset, enc: Encoder, rows: Sequence[int] | None = None
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Value-index matrix for ``rows`` and the cardinalities it needs."""
    diff = sorted(set(enc.names) ^ {m.name for m in raw.meta})
    if diff or list(enc.names) != [m.name for m in raw.meta]:
        raise DatasetError(
            f"attribute names differ from the encoder's (mismatched: {diff or 'order only'})"
        )
    idx = range(len(raw)) if rows is None else list(rows)
    base = enc.base_cardinalities
    X = np.empty((len(idx), raw.a), dtype=np.int64)
    cards = list(enc.cardinalities)
    for j, (name, kind) in enumerate(zip(enc.names, enc.kinds)):
        if kind == "numeric":
            thresholds = np.asarray(enc.cuts[name], dtype=float)
            for r, i in enumerate(idx):
                v = raw.rows[i][j]
                X[r, j] = base[j] if v is MISSING else int(np.searchsorted(thresholds, v, side="left"))
        else:
            lookup = {c: k for k, c in enumerate(enc.categories[name])}
            for r, i in enumerate(idx):
                v = raw.rows[i][j]
                X[r, j] = lookup.get(v, base[j]) if v is not MISSING else base[j]
        if len(idx) and X[:, j].max() >= cards[j]:
            cards[j] = base[j] + 1
    return X, tuple(cards)
