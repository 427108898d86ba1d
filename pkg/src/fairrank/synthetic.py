"""Synthetic stand-in datasets shaped like the three benchmark CSVs.

The real census-income, recidivism, and credit-scoring files cannot be
bundled, so these generators produce CSVs with the same columns, category
vocabularies, row counts, label rates, and protected-attribute structure,
plus a latent qualification factor that makes the label learnable from
the features at roughly the difficulty of the original data.  They parse
against the packaged schemas bit-for-bit, which keeps the whole
experiment pipeline runnable end to end; anyone with the original CSVs
can substitute them without code changes.

The signal constants below were calibrated once against the published
operating points (ridge-regression ranking quality per dataset) and are
not meant to be tuned per run.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataprep import load_schema
from .errors import InvalidInputError

# n_rows matches the cleaned row counts of the originals; p_pos the label
# rate; the protected attribute is drawn conditionally on the label so
# utility ranking induces a realistic exposure gap between groups.
_SPECS = {
    "adult": dict(n_rows=45222, p_pos=0.248, p_prot_pos=0.13, p_prot_neg=0.42,
                  label_signal=1.4, prot_signal=0.35, feat_noise=1.0,
                  protected_values=("Female", "Male"),
                  label_values=(">50K", "<=50K"), n_dirty_rows=58),
    "compas": dict(n_rows=6167, p_pos=0.455, p_prot_pos=0.66, p_prot_neg=0.38,
                   label_signal=0.95, prot_signal=0.30, feat_noise=1.3,
                   protected_values=("African-American", "Caucasian"),
                   label_values=("1", "0"), n_dirty_rows=0),
    "german": dict(n_rows=1000, p_pos=0.70, p_prot_pos=0.24, p_prot_neg=0.40,
                   label_signal=1.7, prot_signal=0.25, feat_noise=0.9,
                   protected_values=("female", "male"),
                   label_values=("1", "2"), n_dirty_rows=0),
}

# personal_status codes: females are A92/A95, males A91/A93/A94.
_GERMAN_STATUS = {"female": ("A92", "A95"), "male": ("A91", "A93", "A94")}


def generate_standin(name: str, seed=0) -> pd.DataFrame:
    """Build the stand-in table for one of adult/compas/german."""
    if name not in _SPECS:
        raise InvalidInputError(f"unknown stand-in dataset {name!r}")
    spec = _SPECS[name]
    schema = load_schema(name)
    name_key = sum(ord(c) for c in name)  # stable across processes
    rng = np.random.default_rng(np.random.SeedSequence((name_key, seed)))
    n = spec["n_rows"] + spec["n_dirty_rows"]

    label = (rng.random(n) < spec["p_pos"]).astype(int)
    p_prot = np.where(label == 1, spec["p_prot_pos"], spec["p_prot_neg"])
    prot = (rng.random(n) < p_prot).astype(int)

    # One latent qualification factor drives every feature column.
    t = (spec["label_signal"] * (label - label.mean())
         - spec["prot_signal"] * (prot - prot.mean())
         + rng.normal(size=n))

    columns = {}
    feature_cols = (list(schema.numeric) + list(schema.ordinal)
                    + list(schema.onehot))
    for col in feature_cols:
        loading = rng.uniform(0.35, 1.0) * rng.choice((-1.0, 1.0))
        raw = loading * t + spec["feat_noise"] * rng.normal(size=n)
        if col in schema.ordinal or col in schema.onehot:
            cats = (schema.ordinal.get(col) or schema.onehot[col])
            edges = np.quantile(raw, np.linspace(0, 1, len(cats) + 1)[1:-1])
            columns[col] = [cats[i] for i in np.searchsorted(edges, raw)]
        else:
            columns[col] = np.round(raw, 6)

    pos_lab, neg_lab = spec["label_values"]
    columns[schema.label] = np.where(label == 1, pos_lab, neg_lab)
    prot_pos, prot_neg = spec["protected_values"]
    if name == "german":
        # protected attribute is embedded in the personal-status codes
        codes = [rng.choice(_GERMAN_STATUS["female" if p else "male"])
                 for p in prot]
        columns[schema.protected] = codes
    else:
        columns[schema.protected] = np.where(prot == 1, prot_pos, prot_neg)
    if name == "adult":
        columns["fnlwgt"] = rng.integers(20000, 500000, size=n)

    df = pd.DataFrame(columns)
    if spec["n_dirty_rows"]:
        # a sprinkle of missing markers exercises the row-drop path
        dirty = rng.choice(n, size=spec["n_dirty_rows"], replace=False)
        col = list(schema.ordinal)[0]
        df.loc[dirty, col] = "?"
    return df


def write_standin_csv(name: str, path, seed=0):
    generate_standin(name, seed).to_csv(path, index=False)
    return path
