"""Synthetic Gaussian benchmark data and delimited-file ingestion.

The Gaussian classes share the equicorrelated covariance
(1 - r) I + r 11', so draws use its rank-one structure,

    x = mu + sqrt(1 - r) z + sqrt(r) g 1,   z ~ N(0, I_p), g ~ N(0, 1),

which is exact and costs O(p) per draw instead of O(p^2). Class means are
blockwise constant: class i has value ``mean_value`` on feature block i.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .errors import (
    NonNumericField,
    RaggedRows,
    SpecInvalid,
    TooFewSamples,
    UnknownLabel,
)

_SPLIT_TRAIN, _SPLIT_TEST = 0, 1


@dataclass(frozen=True)
class GaussianSpec:
    """Parameters of the equicorrelated Gaussian class mixture."""

    K: int
    r: float
    p: int
    block: int = 100
    mean_value: float = 0.7
    n_train_per_class: int = 100
    n_test_per_class: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.p < 1 or self.block < 1:
            raise SpecInvalid("K, p and block must be positive")
        if self.K * self.block > self.p:
            raise SpecInvalid(f"K*block={self.K * self.block} exceeds p={self.p}")
        if not 0.0 <= self.r < 1.0:
            raise SpecInvalid("r must lie in [0, 1)")
        if self.n_train_per_class < 1 or self.n_test_per_class < 1:
            raise SpecInvalid("per-class sample counts must be positive")
        if self.seed < 0:
            raise SpecInvalid("seed must be unsigned")

    def class_mean(self, k):
        """Mean vector of class k (1-based): mean_value on its block."""
        mu = np.zeros(self.p)
        mu[self.block * (k - 1): self.block * k] = self.mean_value
        return mu


def _sample_class(spec, k, n, split):
    rng = np.random.default_rng((spec.seed, split, k))
    z = rng.standard_normal((n, spec.p))
    g = rng.standard_normal((n, 1))
    return spec.class_mean(k) + math.sqrt(1.0 - spec.r) * z + math.sqrt(spec.r) * g


def generate_gaussians(spec):
    """Sample (train, test) datasets; deterministic and per-class seeded."""
    out = []
    for split, n_per in (
        (_SPLIT_TRAIN, spec.n_train_per_class),
        (_SPLIT_TEST, spec.n_test_per_class),
    ):
        rows = [_sample_class(spec, k, n_per, split) for k in range(1, spec.K + 1)]
        labels = np.repeat(np.arange(1, spec.K + 1), n_per)
        out.append(Dataset(X=np.vstack(rows), labels=labels, K=spec.K))
    return tuple(out)


def _canonical_label(x):
    f = float(x)
    return int(f) if f.is_integer() else f


def build_label_map(raw_labels):
    """Remap raw labels to contiguous 1..K preserving sorted original order."""
    return {lab: i + 1 for i, lab in enumerate(sorted(set(raw_labels)))}


def load_delimited(path, fmt="label_first_tsv", K_hint=None, label_map=None):
    """Read a delimited classification file into a Dataset.

    ``fmt`` is "label_first_tsv" (tab separated, label in the first field)
    or "label_last_csv" (comma separated, label in the last field). Labels
    are remapped to contiguous 1..K in sorted original order unless an
    explicit ``label_map`` is given, in which case labels outside the map
    raise UnknownLabel. ``K_hint`` cross-checks the resulting class count.
    """
    if fmt == "label_first_tsv":
        delim, label_col = "\t", 0
    elif fmt == "label_last_csv":
        delim, label_col = ",", -1
    else:
        raise SpecInvalid(f"unknown format {fmt!r}")

    raw_labels, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh, delimiter=delim), start=1):
            if not fields:
                continue
            if width is None:
                width = len(fields)
                if width < 2:
                    raise RaggedRows(line_no)
            elif len(fields) != width:
                raise RaggedRows(line_no)
            feat = fields[1:] if label_col == 0 else fields[:-1]
            try:
                raw_labels.append(_canonical_label(fields[label_col]))
            except ValueError:
                col = 1 if label_col == 0 else width
                raise NonNumericField(line_no, col) from None
            try:
                rows.append([float(f) for f in feat])
            except ValueError:
                bad = next(i for i, f in enumerate(feat) if not _is_float(f))
                col = bad + 2 if label_col == 0 else bad + 1
                raise NonNumericField(line_no, col) from None
    if not rows:
        raise RaggedRows(0)

    if label_map is None:
        label_map = build_label_map(raw_labels)
    unknown = [lab for lab in raw_labels if lab not in label_map]
    if unknown:
        raise UnknownLabel(f"label {unknown[0]!r} not in the training remap")
    labels = np.array([label_map[lab] for lab in raw_labels], dtype=int)
    K = max(label_map.values())
    if K_hint is not None and K != K_hint:
        raise UnknownLabel(f"expected {K_hint} classes, file maps to {K}")
    return Dataset(X=np.array(rows), labels=labels, K=K)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def save_delimited(dataset, path, fmt="label_first_tsv"):
    """Write a Dataset back out; numeric fields carry 17 significant digits
    so a reload reproduces the matrix bit for bit."""
    if fmt == "label_first_tsv":
        delim, label_first = "\t", True
    elif fmt == "label_last_csv":
        delim, label_first = ",", False
    else:
        raise SpecInvalid(f"unknown format {fmt!r}")
    with open(path, "w", newline="") as fh:
        for i in range(dataset.n):
            feats = ["%.17g" % v for v in dataset.X[i]]
            lab = str(int(dataset.labels[i]))
            fields = [lab] + feats if label_first else feats + [lab]
            fh.write(delim.join(fields) + "\n")


def kfold_split(labels, folds, seed):
    """Stratified k-fold indices: list of (train_idx, val_idx) pairs.

    Each class's indices are shuffled once and dealt round-robin, so the
    validation folds partition 0..n-1 and every class appears in every
    fold. Raises TooFewSamples if a class has fewer members than ``folds``.
    """
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    if folds > n:
        raise TooFewSamples(f"folds={folds} exceeds n={n}")
    if folds < 2:
        raise SpecInvalid("folds must be at least 2")
    rng = np.random.default_rng(seed)
    val_sets = [[] for _ in range(folds)]
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        if idx.size < folds:
            raise TooFewSamples(f"class {k} has {idx.size} members < folds={folds}")
        rng.shuffle(idx)
        for f in range(folds):
            val_sets[f].extend(idx[f::folds])
    out = []
    everything = np.arange(n)
    for f in range(folds):
        val = np.sort(np.array(val_sets[f], dtype=int))
        train = np.setdiff1d(everything, val)
        out.append((train, val))
    return out
