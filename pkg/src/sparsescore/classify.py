"""Nearest-centroid classification in the discriminant subspace, plus the
evaluation metrics reported by the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass, ShapeMismatch


@dataclass(frozen=True)
class CentroidModel:
    """Class centroids in discriminant space with the projection that maps
    raw features into it (column means removed first)."""

    centroids: np.ndarray
    Beta: np.ndarray
    column_means: np.ndarray

    def __post_init__(self):
        if self.Beta.shape[1] != self.centroids.shape[1]:
            raise ShapeMismatch("centroid and Beta column counts differ")
        if self.column_means.shape != (self.Beta.shape[0],):
            raise ShapeMismatch("column_means length must match Beta rows")

    @property
    def K(self):
        return self.centroids.shape[0]

    @property
    def q(self):
        return self.Beta.shape[1]


def project(X, Beta, column_means):
    """Scores (X - 1 means') Beta."""
    X = np.asarray(X, dtype=float)
    Beta = np.asarray(Beta, dtype=float)
    column_means = np.asarray(column_means, dtype=float)
    if X.shape[1] != Beta.shape[0] or column_means.shape != (X.shape[1],):
        raise ShapeMismatch(
            f"X has {X.shape[1]} features, Beta has {Beta.shape[0]} rows"
        )
    return (X - column_means) @ Beta


def fit_centroids(scores, labels, K, Beta=None, column_means=None):
    """Per-class means of the score rows.

    ``Beta`` and ``column_means`` populate the returned model's projection;
    they default to the identity on score space (for callers that project
    themselves).
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float).T).T
    labels = np.asarray(labels, dtype=int)
    q = scores.shape[1]
    centroids = np.empty((K, q))
    for k in range(1, K + 1):
        mask = labels == k
        if not mask.any():
            raise EmptyClass(k)
        centroids[k - 1] = scores[mask].mean(axis=0)
    if Beta is None:
        Beta = np.eye(q)
    if column_means is None:
        column_means = np.zeros(Beta.shape[0])
    return CentroidModel(centroids=centroids, Beta=np.asarray(Beta, dtype=float),
                         column_means=np.asarray(column_means, dtype=float))


def predict_nearest_centroid(model, X_test):
    """Assign each row to the class of the nearest centroid in score space.

    Distance ties break to the smallest class index.
    """
    scores = project(X_test, model.Beta, model.column_means)
    diff = scores[:, None, :] - model.centroids[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    return d2.argmin(axis=1) + 1


def knn_predict(X_train, labels, X_test, k):
    """Majority vote among the k Euclidean-nearest training rows.

    Vote ties break to the smallest class index; neighbour-distance ties
    break to the lower row index.
    """
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if k > X_train.shape[0]:
        raise ShapeMismatch(f"k={k} exceeds the training set size {X_train.shape[0]}")
    K = labels.max()
    out = np.empty(X_test.shape[0], dtype=int)
    for i in range(X_test.shape[0]):
        d2 = ((X_train - X_test[i]) ** 2).sum(axis=1)
        nearest = np.argsort(d2, kind="stable")[:k]
        votes = np.bincount(labels[nearest], minlength=K + 1)[1:]
        out[i] = votes.argmax() + 1
    return out


def metrics(pred, truth, Beta):
    """Accuracy and the fraction of features used by any discriminant.

    ``cardinality`` counts rows of Beta with an exact nonzero entry;
    ``cardinality_entrywise`` (secondary) counts nonzero entries over p*q.
    """
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ShapeMismatch("prediction and truth lengths differ")
    Beta = np.atleast_2d(np.asarray(Beta, dtype=float).T).T
    rows_used = np.any(Beta != 0.0, axis=1)
    return {
        "accuracy": float((pred == truth).mean()),
        "cardinality": float(rows_used.mean()),
        "cardinality_entrywise": float((Beta != 0.0).mean()),
    }


def prediction_cosine(pred_a, pred_b):
    """Cosine of the two integer-encoded label vectors."""
    a = np.asarray(pred_a, dtype=float)
    b = np.asarray(pred_b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch("prediction lengths differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    assert na > 0 and nb > 0, "labels are >= 1 so norms cannot vanish"
    return float(a @ b / (na * nb))


def prediction_cosine_onehot(pred_a, pred_b, K):
    """Cosine of one-hot encodings; insensitive to the label ordering that
    the integer encoding bakes in."""
    a = np.asarray(pred_a, dtype=int)
    b = np.asarray(pred_b, dtype=int)
    if a.shape != b.shape:
        raise ShapeMismatch("prediction lengths differ")
    return float((a == b).mean())
