"""Elastic-net penalized least squares for the discriminant subproblem.

Both fitting algorithms repeatedly minimize, for a fixed target t = Y theta_i,

    ||t - X beta||^2 + gamma ||beta||^2 + lam ||beta||_1        (gamma > 0)

over one discriminant column at a time. Two solvers are provided: an
accelerated proximal gradient method with function-value adaptive restart,
and a beta-z consensus ADMM with the l1 term carried by z. Both return the
best iterate seen (so the objective never rises above the warm start) and
stop on the l1 subgradient optimality residual or on primal/dual residuals.

Coordinates zeroed by soft-thresholding stay exactly zero, which keeps
cardinality counts unambiguous downstream.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FactorizationFailure, MaxIterExceeded, NonFiniteEncountered

# Build X'X for the gradient when it is no bigger than ~2 gradient passes
# through X itself.
_GRAM_RATIO = 2


@dataclass
class EnetProblem:
    """One penalized least-squares instance.

    ``gram`` (X'X) and ``lipschitz`` may be shared across problems on the
    same X; they are filled in lazily otherwise.
    """

    X: np.ndarray
    target: np.ndarray
    gamma: float
    lam: float
    gram: np.ndarray | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.target = np.asarray(self.target, dtype=float).ravel()
        n, p = self.X.shape
        if self.target.shape != (n,):
            raise ValueError("target length must match rows of X")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.gram is None and p <= _GRAM_RATIO * n:
            self.gram = self.X.T @ self.X
        if self.lipschitz is None:
            self.lipschitz = lipschitz_bound(self.X, self.gamma, gram=self.gram)


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0), elementwise; the prox of t*|.|."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz_bound(X, gamma, gram=None, iters=30, headroom=1.05):
    """Upper bound on the gradient Lipschitz constant 2 (sigma_max(X'X) + gamma).

    sigma_max is estimated with a fixed number of power-iteration steps on
    X'X; ``headroom`` covers the estimate being a slight underestimate so the
    proximal step 1/L stays safe.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = gram @ v if gram is not None else X.T @ (X @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 2.0 * gamma
        v = w / nrm
        est = nrm
    return 2.0 * (headroom * est + gamma)


def _objective(prob, beta):
    r = prob.X @ beta - prob.target
    smooth = r @ r + prob.gamma * (beta @ beta)
    return smooth + prob.lam * np.abs(beta).sum()


def _kkt_violation(beta, grad, lam):
    """Max violation of the l1 subgradient optimality conditions.

    On zero coordinates |g_j| may not exceed lam; on nonzeros g_j must equal
    -lam * sign(beta_j).
    """
    zero = beta == 0.0
    viol = 0.0
    if zero.any():
        viol = max(viol, float(np.abs(grad[zero]).max(initial=0.0) - lam))
    nz = ~zero
    if nz.any():
        viol = max(viol, float(np.abs(grad[nz] + lam * np.sign(beta[nz])).max()))
    return max(viol, 0.0)


def apg_solve(prob, beta0, tol, max_iter):
    """Accelerated proximal gradient solve of an elastic-net problem.

    Uses step 1/L with L from ``lipschitz_bound`` and restarts the momentum
    whenever the composite objective rises. Returns ``(beta, iters)`` where
    beta is the best iterate seen; it satisfies the subgradient optimality
    conditions within ``tol`` unless the iteration cap was hit (then a
    MaxIterExceeded warning is issued and the best iterate returned).
    """
    X, t, gamma, lam = prob.X, prob.target, prob.gamma, prob.lam
    gram = prob.gram
    L = prob.lipschitz
    step = 1.0 / L
    ct = X.T @ t
    tt = t @ t

    def grad_and_obj(b):
        if gram is not None:
            gb = gram @ b
            g = 2.0 * (gb - ct) + 2.0 * gamma * b
            smooth = b @ gb - 2.0 * (ct @ b) + tt + gamma * (b @ b)
        else:
            r = X @ b - t
            g = 2.0 * (X.T @ r) + 2.0 * gamma * b
            smooth = r @ r + gamma * (b @ b)
        return g, smooth + lam * np.abs(b).sum()

    x = np.asarray(beta0, dtype=float).copy()
    g, f = grad_and_obj(x)
    if not np.isfinite(f):
        raise NonFiniteEncountered("objective at warm start is not finite")
    best_x, best_f, best_viol = x, f, _kkt_violation(x, g, lam)
    if best_viol <= tol:
        return best_x.copy(), 0

    y = x.copy()
    g_y = g
    tmom = 1.0
    x_prev = x
    for k in range(1, max_iter + 1):
        x_new = soft_threshold(y - step * g_y, step * lam)
        g_new, f_new = grad_and_obj(x_new)
        if not np.isfinite(f_new):
            raise NonFiniteEncountered(f"objective became non-finite at iteration {k}")
        viol_new = _kkt_violation(x_new, g_new, lam)
        if f_new < best_f:
            best_x, best_f, best_viol = x_new, f_new, viol_new
        if viol_new <= tol and f_new <= best_f + 1e-14 * (1.0 + abs(best_f)):
            return x_new.copy(), k
        if best_viol <= tol:
            return best_x.copy(), k
        if f_new > f and tmom > 1.0:
            # adaptive restart: the momentum step overshot, retry as a plain
            # proximal step from the last accepted iterate
            tmom = 1.0
            y = x_prev
            g_y, _ = grad_and_obj(y)
            continue
        tmom_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tmom * tmom))
        y = x_new + ((tmom - 1.0) / tmom_new) * (x_new - x_prev)
        g_y, _ = grad_and_obj(y)
        tmom = tmom_new
        x_prev = x_new
        f = f_new

    warnings.warn(
        f"apg_solve hit max_iter={max_iter} (kkt violation {best_viol:.3e} > {tol:.3e})",
        MaxIterExceeded,
    )
    return best_x.copy(), max_iter


class AdmmFactor:
    """Cached solve of (2 X'X + (2 gamma + mu) I) b = rhs.

    Factorizes on whichever side of X is smaller: a p x p Cholesky when
    p <= n, otherwise an n x n Cholesky through the matrix-inversion lemma.
    Reusable across columns and iterations for fixed (X, gamma, mu).
    """

    def __init__(self, X, gamma, mu, gram=None):
        X = np.asarray(X, dtype=float)
        n, p = X.shape
        self.X = X
        self.diag = 2.0 * gamma + mu
        self.small_side_is_p = p <= n
        try:
            if self.small_side_is_p:
                A = 2.0 * (gram if gram is not None else X.T @ X)
                A[np.diag_indices_from(A)] += self.diag
                self.factor = scipy.linalg.cho_factor(A)
            else:
                # (dI + 2X'X)^-1 = (1/d)(I - X'((d/2)I + XX')^-1 X)
                G = X @ X.T
                G[np.diag_indices_from(G)] += self.diag / 2.0
                self.factor = scipy.linalg.cho_factor(G)
        except scipy.linalg.LinAlgError as e:  # pragma: no cover - SPD by construction
            raise FactorizationFailure(str(e)) from e

    def solve(self, rhs):
        if self.small_side_is_p:
            return scipy.linalg.cho_solve(self.factor, rhs)
        inner = scipy.linalg.cho_solve(self.factor, self.X @ rhs)
        return (rhs - self.X.T @ inner) / self.diag


def admm_solve(prob, beta0, mu, tol, max_iter, factor=None):
    """Consensus ADMM solve of an elastic-net problem.

    Splits beta = z with z carrying the l1 term; ``mu`` is the (fixed)
    augmented Lagrangian parameter. Stops when the primal residual
    ||beta - z|| and the dual residual mu ||z - z_prev|| both fall below
    ``tol``. Returns ``(beta, iters)`` with beta the best z iterate by
    objective (z carries the exact zeros).
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    X, t, lam = prob.X, prob.target, prob.lam
    if factor is None:
        factor = AdmmFactor(X, prob.gamma, mu, gram=prob.gram)
    base_rhs = 2.0 * (X.T @ t)

    z = np.asarray(beta0, dtype=float).copy()
    u = np.zeros_like(z)
    best_z = z.copy()
    best_f = _objective(prob, z)
    if not np.isfinite(best_f):
        raise NonFiniteEncountered("objective at warm start is not finite")

    for k in range(1, max_iter + 1):
        b = factor.solve(base_rhs + mu * (z - u))
        z_new = soft_threshold(b + u, lam / mu)
        u = u + b - z_new
        primal = np.linalg.norm(b - z_new)
        dual = mu * np.linalg.norm(z_new - z)
        z = z_new
        f = _objective(prob, z)
        if not np.isfinite(f):
            raise NonFiniteEncountered(f"objective became non-finite at iteration {k}")
        if f < best_f:
            best_f, best_z = f, z.copy()
        if primal <= tol and dual <= tol:
            return best_z, k

    warnings.warn(
        f"admm_solve hit max_iter={max_iter} (primal {primal:.3e}, dual {dual:.3e})",
        MaxIterExceeded,
    )
    return best_z, max_iter
