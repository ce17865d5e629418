"""Shared domain types and objective evaluation for sparse optimal scoring.

Every solver in the toolkit works with the same objects: a labelled data
matrix, the one-hot class indicator Y together with its diagonal Gram
summary D = Y'Y/n, and a fitted pair of matrices (Theta, Beta) holding the
scoring vectors (K x q) and discriminant vectors (p x q). The elastic-net
objective evaluated here,

    sum_i ||Y theta_i - X beta_i||^2 + gamma ||beta_i||^2 + lam ||beta_i||_1,

is the quantity all fit traces report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EmptyClass, LabelOutOfRange, ShapeMismatch, SpecInvalid


class Method(str, Enum):
    """Fitting algorithms supported by the toolkit."""

    DEFLATION_APG = "apg"
    DEFLATION_ADMM = "admm"
    DFSOS_V1 = "dfsos1"
    DFSOS_V2 = "dfsos2"

    @property
    def display_name(self):
        return _DISPLAY[self]


_DISPLAY = {
    Method.DEFLATION_APG: "APG",
    Method.DEFLATION_ADMM: "ADMM",
    Method.DFSOS_V1: "DFSOS-1",
    Method.DFSOS_V2: "DFSOS-2",
}

# Constraint enforcement differs: the splitting solvers satisfy the scoring
# constraint only through the auxiliary orthonormal variable, the deflationary
# solver in closed form. Validation tolerance reflects that.
ORTH_TOL = {
    Method.DEFLATION_APG: 1e-8,
    Method.DEFLATION_ADMM: 1e-8,
    Method.DFSOS_V1: 1e-6,
    Method.DFSOS_V2: 1e-6,
}


def _readonly(a, dtype=None):
    v = np.asarray(a, dtype=dtype).view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class Dataset:
    """Observation matrix with 1-based integer class labels.

    Invariants enforced at construction: labels lie in 1..K with every class
    populated, and X is finite. Instances are immutable and safe to share.
    """

    X: np.ndarray
    labels: np.ndarray
    K: int
    feature_names: list | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or labels.ndim != 1 or X.shape[0] != labels.shape[0]:
            raise ShapeMismatch(
                f"X is {X.shape}, labels has length {labels.shape}"
            )
        if X.size == 0:
            raise SpecInvalid("empty data matrix")
        if not np.isfinite(X).all():
            raise SpecInvalid("X contains non-finite entries")
        if self.K < 1:
            raise SpecInvalid("K must be at least 1")
        if labels.min() < 1 or labels.max() > self.K:
            raise LabelOutOfRange(
                f"labels must lie in 1..{self.K}, saw [{labels.min()}, {labels.max()}]"
            )
        counts = np.bincount(labels, minlength=self.K + 1)[1:]
        if (counts == 0).any():
            raise EmptyClass(int(np.flatnonzero(counts == 0)[0] + 1))
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ShapeMismatch("feature_names length does not match p")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class IndicatorMatrix:
    """One-hot class membership Y (n x K) with D = Y'Y/n."""

    Y: np.ndarray
    class_counts: np.ndarray
    D: np.ndarray

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def K(self):
        return self.Y.shape[1]

    @property
    def d(self):
        """Diagonal of D as a vector (class frequencies n_k/n)."""
        return np.diag(self.D)


def build_indicator(labels, K):
    """Build the one-hot indicator Y and its diagonal Gram summary.

    Parameters
    ----------
    labels : int vector with values in 1..K, every class non-empty
    K : number of classes

    Returns
    -------
    IndicatorMatrix with Y one-hot per row and D = Y'Y/n.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1 or labels.size == 0:
        raise ShapeMismatch("labels must be a non-empty vector")
    if labels.min() < 1 or labels.max() > K:
        raise LabelOutOfRange(f"labels must lie in 1..{K}")
    counts = np.bincount(labels, minlength=K + 1)[1:]
    if (counts == 0).any():
        raise EmptyClass(int(np.flatnonzero(counts == 0)[0] + 1))
    n = labels.size
    Y = np.zeros((n, K))
    Y[np.arange(n), labels - 1] = 1.0
    D = np.diag(counts / n)
    return IndicatorMatrix(_readonly(Y), _readonly(counts), _readonly(D))


@dataclass(frozen=True)
class SosModel:
    """Fitted scoring matrix Theta (K x q) and discriminant matrix Beta (p x q).

    The scoring constraint (1/n) Theta' Y'Y Theta = I holds within
    ORTH_TOL[method]; check with ``orthogonality_defect``.
    """

    Theta: np.ndarray
    Beta: np.ndarray
    q: int
    lam: float
    gamma: float
    method: Method

    def __post_init__(self):
        Theta = np.asarray(self.Theta, dtype=float)
        Beta = np.asarray(self.Beta, dtype=float)
        if Theta.ndim != 2 or Beta.ndim != 2:
            raise ShapeMismatch("Theta and Beta must be matrices")
        if Theta.shape[1] != self.q or Beta.shape[1] != self.q:
            raise ShapeMismatch("column counts must equal q")
        K = Theta.shape[0]
        if not 1 <= self.q <= max(K - 1, 1):
            raise SpecInvalid(f"q={self.q} outside 1..K-1 for K={K}")
        if self.lam < 0 or self.gamma <= 0:
            raise SpecInvalid("lam must be >= 0 and gamma > 0")
        object.__setattr__(self, "Theta", _readonly(Theta))
        object.__setattr__(self, "Beta", _readonly(Beta))

    @property
    def K(self):
        return self.Theta.shape[0]

    @property
    def p(self):
        return self.Beta.shape[0]

    def orthogonality_defect(self, Y):
        """Frobenius norm of (1/n) Theta' Y'Y Theta - I."""
        n = Y.shape[0]
        G = self.Theta.T @ (Y.T @ Y) @ self.Theta / n
        return float(np.linalg.norm(G - np.eye(self.q)))


@dataclass(frozen=True)
class SolverConfig:
    """All tolerances, iteration caps and penalty parameters a fit needs.

    ``lam`` may be a number or "auto"; solvers resolve "auto" against the
    largest l1 weight that still admits a nontrivial discriminant.
    """

    gamma: float = 0.1
    lam: float | str = "auto"
    rho0: float = 5.0
    eta: float = 0.25
    sigma: float = 2.0
    tol_inner_beta: float = 1e-4
    max_inner_beta: int = 100
    tol_outer: float = 1e-4
    max_outer: int = 500
    mu_admm: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise SpecInvalid("gamma must be positive")
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise SpecInvalid("lam must be a number or 'auto'")
        elif self.lam < 0:
            raise SpecInvalid("lam must be nonnegative")
        if self.rho0 <= 0 or self.mu_admm <= 0:
            raise SpecInvalid("rho0 and mu_admm must be positive")
        if not 0 < self.eta < 1:
            raise SpecInvalid("eta must lie in (0,1)")
        if self.sigma <= 1:
            raise SpecInvalid("sigma must exceed 1")
        if min(self.tol_inner_beta, self.tol_outer) <= 0:
            raise SpecInvalid("tolerances must be positive")
        if min(self.max_inner_beta, self.max_outer) < 1:
            raise SpecInvalid("iteration caps must be at least 1")
        if self.seed < 0:
            raise SpecInvalid("seed must be unsigned")


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration convergence diagnostics.

    ``orth_residual`` holds the constraint violation native to the method:
    ||L Theta - P||_F for the splitting solver, ||Theta'D Theta - I||_F over
    the columns accepted so far for the deflationary one. ``rho`` is zero for
    deflation fits. ``columns`` (deflation only) maps each entry to the
    discriminant column being fitted.
    """

    objective: np.ndarray
    orth_residual: np.ndarray
    rho: np.ndarray
    iterations: int
    wall_time_s: float
    columns: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("objective", "orth_residual", "rho"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (self.iterations,):
                raise ShapeMismatch(f"{name} must have length iterations")
            object.__setattr__(self, name, _readonly(v))
        if self.columns is not None:
            c = np.asarray(self.columns, dtype=int)
            if c.shape != (self.iterations,):
                raise ShapeMismatch("columns must have length iterations")
            object.__setattr__(self, "columns", _readonly(c))


def sos_objective(X, Y, Theta, Beta, gamma, lam):
    """Elastic-net optimal scoring objective, summed over columns.

    Returns sum_i ||Y theta_i - X beta_i||^2 + gamma ||beta_i||^2
    + lam ||beta_i||_1.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float).T).T
    Beta = np.atleast_2d(np.asarray(Beta, dtype=float).T).T
    if X.shape[0] != Y.shape[0]:
        raise ShapeMismatch("X and Y must have the same row count")
    if Y.shape[1] != Theta.shape[0] or X.shape[1] != Beta.shape[0]:
        raise ShapeMismatch("Theta/Beta rows must match Y/X columns")
    if Theta.shape[1] != Beta.shape[1]:
        raise ShapeMismatch("Theta and Beta must have the same column count")
    R = Y @ Theta - X @ Beta
    val = float((R * R).sum() + gamma * (Beta * Beta).sum() + lam * np.abs(Beta).sum())
    return val


def center_columns(X):
    """Remove column means; returns (X_centered, column_means).

    The means are retained so test data can be shifted identically.
    """
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    return X - means, means
