"""Tabular ingestion and ranking-task synthesis.

A schema file describes how to read a classification CSV: which column is
the binary label, which holds the protected attribute, and how each
feature column is encoded (numeric, ordinal with a declared category
order, or one-hot with declared categories).  Declaring categories in the
schema, rather than inferring them from data, keeps feature counts and
column order reproducible across splits and machines.

Ranking tasks follow the query-construction protocol: every query draws M
candidates with replacement from the source rows; each slot is relevant
with probability p_rel and the item comes from the matching label pool,
so a query mixes relevant and irrelevant individuals and carries their
protected attributes as group labels.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import RankingProblem
from .errors import InvalidInputError, SchemaError

_MISSING_DEFAULT = ("", "?", "NA", "N/A", "nan")


@dataclass(frozen=True)
class DatasetSchema:
    """Parsed schema: label/protected columns and per-column encodings."""

    name: str
    label: str
    label_positive: str
    protected: str
    protected_positive: tuple
    numeric: tuple = ()
    ordinal: dict = field(default_factory=dict)  # col -> ordered categories
    onehot: dict = field(default_factory=dict)  # col -> categories
    drop: tuple = ()
    missing: tuple = _MISSING_DEFAULT

    @property
    def n_features(self) -> int:
        return (len(self.numeric) + len(self.ordinal)
                + sum(len(v) for v in self.onehot.values()))

    def feature_names(self) -> list:
        names = list(self.numeric) + list(self.ordinal)
        for col, cats in self.onehot.items():
            names.extend(f"{col}={c}" for c in cats)
        return names


def parse_schema(text: str, name: str = "") -> DatasetSchema:
    """Parse the flat key-value schema format.

    Lines are `key = value`; `#` starts a comment.  Encodings use dotted
    keys: `ordinal.<col> = v1, v2, ...` (order defines the integer code)
    and `onehot.<col> = v1, v2, ...`.  Remaining keys: label,
    label_positive, protected, protected_positive, numeric, drop, missing.
    """
    fields = {"ordinal": {}, "onehot": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("ordinal.") or key.startswith("onehot."):
            kind, col = key.split(".", 1)
            cats = [v.strip() for v in value.split(",") if v.strip()]
            if len(cats) < 2:
                raise SchemaError(f"{key}: need at least two categories")
            fields[kind][col] = cats
        else:
            fields[key] = value
    try:
        return DatasetSchema(
            name=fields.get("name", name),
            label=fields["label"],
            label_positive=fields["label_positive"],
            protected=fields["protected"],
            protected_positive=tuple(
                v.strip() for v in fields["protected_positive"].split(",")),
            numeric=tuple(v.strip() for v in fields.get("numeric", "").split(",")
                          if v.strip()),
            ordinal=fields["ordinal"],
            onehot=fields["onehot"],
            drop=tuple(v.strip() for v in fields.get("drop", "").split(",")
                       if v.strip()),
            missing=tuple(v.strip() for v in fields.get("missing", "").split("|"))
            if "missing" in fields else _MISSING_DEFAULT,
        )
    except KeyError as exc:
        raise SchemaError(f"schema is missing required key {exc}") from None


def load_schema(path_or_name) -> DatasetSchema:
    """Load a schema from a file path or a packaged name (adult/compas/german)."""
    path = str(path_or_name)
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return parse_schema(fh.read(), os.path.splitext(os.path.basename(path))[0])
    from importlib import resources

    ref = resources.files("fairrank").joinpath(f"schemas/{path}.schema")
    if not ref.is_file():
        raise SchemaError(f"no such schema file or packaged schema: {path!r}")
    return parse_schema(ref.read_text(encoding="utf-8"), path)


@dataclass(frozen=True)
class TabularDataset:
    """Encoded rows ready for task synthesis."""

    features: np.ndarray  # (n, L) float
    labels: np.ndarray  # (n,) in {0, 1}
    protected: np.ndarray  # (n,) in {0, 1}
    feature_names: tuple
    schema_name: str = ""

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.labels) != len(self.features) \
                or len(self.protected) != len(self.features):
            raise InvalidInputError("misaligned dataset arrays")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "TabularDataset":
        idx = np.asarray(idx)
        return TabularDataset(self.features[idx], self.labels[idx],
                              self.protected[idx], self.feature_names,
                              self.schema_name)


def load_csv(path, schema: DatasetSchema) -> TabularDataset:
    """Read and encode a CSV per the schema; rows with missing values drop."""
    if isinstance(path, (str, os.PathLike)):
        if not os.path.exists(path):
            raise SchemaError(f"no such file: {path}")
        df = pd.read_csv(path, dtype=str, keep_default_na=False,
                         skipinitialspace=True)
    else:  # file-like, mostly for tests
        df = pd.read_csv(io.TextIOWrapper(path) if isinstance(path, io.RawIOBase)
                         else path, dtype=str, keep_default_na=False,
                         skipinitialspace=True)
    needed = ({schema.label, schema.protected} | set(schema.numeric)
              | set(schema.ordinal) | set(schema.onehot))
    missing_cols = needed - set(df.columns)
    if missing_cols:
        raise SchemaError(f"CSV lacks schema columns: {sorted(missing_cols)}")
    df = df.drop(columns=[c for c in schema.drop if c in df.columns])
    mask = np.ones(len(df), dtype=bool)
    for col in needed:
        mask &= ~df[col].isin(schema.missing)
    df = df[mask]
    if len(df) == 0:
        raise SchemaError("no rows left after dropping missing values")

    cols = []
    for col in schema.numeric:
        try:
            cols.append(df[col].astype(float).to_numpy())
        except ValueError as exc:
            raise SchemaError(f"numeric column {col!r}: {exc}") from None
    for col, cats in schema.ordinal.items():
        code = {c: i for i, c in enumerate(cats)}
        vals = df[col].map(code)
        if vals.isna().any():
            bad = sorted(set(df[col][vals.isna()]))[:5]
            raise SchemaError(f"ordinal column {col!r} has undeclared values {bad}")
        cols.append(vals.to_numpy(dtype=float))
    for col, cats in schema.onehot.items():
        known = df[col].isin(cats)
        if not known.all():
            bad = sorted(set(df[col][~known]))[:5]
            raise SchemaError(f"one-hot column {col!r} has undeclared values {bad}")
        for c in cats:
            cols.append((df[col] == c).to_numpy(dtype=float))

    labels = df[schema.label].eq(schema.label_positive).to_numpy(dtype=int)
    if labels.min() == labels.max():
        raise SchemaError("label column has a single class after cleaning")
    protected = df[schema.protected].isin(schema.protected_positive)
    return TabularDataset(
        features=np.column_stack(cols) if cols else np.zeros((len(df), 0)),
        labels=labels,
        protected=protected.to_numpy(dtype=int),
        feature_names=tuple(schema.feature_names()),
        schema_name=schema.name,
    )


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine transform fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray  # zero-variance features carry std 1 (they map to 0)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


def standardize(train: TabularDataset, *others):
    """Z-score features with train-split statistics; returns datasets + scaler."""
    if len(train) == 0:
        raise InvalidInputError("empty training split")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    scaler = Scaler(mean=mean, std=std)

    def apply(ds: TabularDataset) -> TabularDataset:
        return TabularDataset(scaler.transform(ds.features), ds.labels,
                              ds.protected, ds.feature_names, ds.schema_name)

    out = [apply(train)] + [apply(ds) for ds in others]
    return (*out, scaler)


def split(dataset: TabularDataset, test_fraction: float, seed):
    """Seeded disjoint row split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_test = int(round(test_fraction * len(dataset)))
    if n_test == 0 or n_test == len(dataset):
        raise InvalidInputError("split leaves an empty side")
    return dataset.subset(order[n_test:]), dataset.subset(order[:n_test])


@dataclass(frozen=True)
class RankingTaskSet:
    """Synthesized queries plus the provenance needed to regenerate them."""

    problems: tuple
    seed: object
    source: str
    n_items: int
    p_rel: float

    def __len__(self) -> int:
        return len(self.problems)


def make_ranking_problems(dataset: TabularDataset, n_queries: int, m: int = 10,
                          p_rel: float = 0.4, seed=0) -> RankingTaskSet:
    """Draw n_queries queries of m candidates each from a labeled dataset.

    Each slot is Bernoulli(p_rel) relevant, then filled by a uniform draw
    (with replacement) from the matching label pool; group labels copy the
    drawn row's protected attribute.  With p_rel = 0.4 and m = 10 a query
    averages four relevant candidates.
    """
    if m < 2:
        raise InvalidInputError("need at least two items per query")
    pools = {c: np.flatnonzero(dataset.labels == c) for c in (0, 1)}
    if any(len(p) == 0 for p in pools.values()):
        raise InvalidInputError("both label classes must be present")
    problems = []
    root = (seed if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed))
    seqs = root.spawn(n_queries)
    for qi, seq in enumerate(seqs):
        rng = np.random.default_rng(seq)
        rel = (rng.random(m) < p_rel).astype(int)
        idx = np.array([rng.choice(pools[c]) for c in rel])
        problems.append(RankingProblem(
            features=dataset.features[idx],
            relevance=rel,
            groups=dataset.protected[idx],
            query_id=f"{dataset.schema_name or 'q'}-{qi:05d}",
        ))
    return RankingTaskSet(problems=tuple(problems), seed=seed,
                          source=dataset.schema_name, n_items=m, p_rel=p_rel)


# ---------------------------------------------------------------------------
# Task-set serialization: one flat text file per query plus a manifest.


def save_task_set(task_set: RankingTaskSet, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"source = {task_set.source}\n"
                 f"seed = {task_set.seed}\n"
                 f"n_queries = {len(task_set)}\n"
                 f"n_items = {task_set.n_items}\n"
                 f"p_rel = {task_set.p_rel!r}\n")
    for i, prob in enumerate(task_set.problems):
        with open(os.path.join(directory, f"query-{i:05d}.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(f"query_id {prob.query_id}\n")
            fh.write("relevance " + " ".join(str(int(u)) for u in prob.relevance)
                     + "\n")
            fh.write("groups " + " ".join(str(int(g)) for g in prob.groups) + "\n")
            for row in prob.features:
                fh.write("x " + " ".join(repr(float(x)) for x in row) + "\n")


def load_task_set(directory) -> RankingTaskSet:
    manifest_path = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest_path):
        raise InvalidInputError(f"no manifest.txt under {directory}")
    manifest = {}
    with open(manifest_path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                manifest[k.strip()] = v.strip()
    n = int(manifest["n_queries"])
    problems = []
    for i in range(n):
        path = os.path.join(directory, f"query-{i:05d}.txt")
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        query_id = lines[0].split(" ", 1)[1] if " " in lines[0] else ""
        relevance = np.array(lines[1].split()[1:], dtype=int)
        groups = np.array(lines[2].split()[1:], dtype=int)
        feats = np.array([line.split()[1:] for line in lines[3:]], dtype=float)
        problems.append(RankingProblem(feats, relevance, groups, query_id))
    return RankingTaskSet(problems=tuple(problems), seed=manifest.get("seed"),
                          source=manifest.get("source", ""),
                          n_items=int(manifest.get("n_items", 0)),
                          p_rel=float(manifest.get("p_rel", 0.4)))
