"""Deflationary sparse optimal scoring: one scoring/discriminant pair at a time.

Column j is fit by block coordinate descent, alternating an elastic-net
solve for the discriminant with a closed-form scoring update

    w = (I - Q_j Q_j' D) D^-1 Y'X beta,    theta = w / sqrt(w'D w),

where Q_j collects the all-ones vector and the previously accepted scoring
vectors (all D-orthonormal). Each accepted column is appended to Q_j, so
later columns are constrained against earlier ones; errors in early columns
therefore propagate, which is the structural cost of deflation.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    FitTrace,
    Method,
    SosModel,
    build_indicator,
    center_columns,
)
from .dfsos import init_theta, resolve_lambda
from .enet import AdmmFactor, EnetProblem, admm_solve, apg_solve, lipschitz_bound
from .errors import DegenerateColumn, DegenerateDirection, NotConverged, SpecInvalid


@dataclass(frozen=True)
class DeflationState:
    """Accepted D-orthonormal directions: the all-ones column plus the
    scoring vectors found so far."""

    Qj: np.ndarray
    D: np.ndarray


def theta_update_deflation(state, X, Y, beta_j):
    """Closed-form scoring update for the current discriminant.

    Projects D^-1 Y'X beta_j against the accepted directions and
    D-normalizes. Raises DegenerateDirection when the projected direction
    has no usable D-norm (w'D w <= 1e-14).
    """
    Q, D = state.Qj, state.D
    d = np.diag(D)
    w = (Y.T @ (X @ beta_j)) / d
    w = w - Q @ (Q.T @ (D @ w))
    w = w - Q @ (Q.T @ (D @ w))  # second pass tightens orthogonality
    a = float(w @ (D @ w))
    if a <= 1e-14:
        raise DegenerateDirection("discriminant produced no usable scoring direction")
    return w / math.sqrt(a)


def _init_column(rng, Q, d, D):
    """Randomized feasible start for one scoring column."""
    for _ in range(10):
        z = rng.uniform(size=d.size)
        w = z / d
        w = w - Q @ (Q.T @ (D @ w))
        w = w - Q @ (Q.T @ (D @ w))
        a = float(w @ (D @ w))
        if a > 1e-12:
            return w / math.sqrt(a)
    raise DegenerateDirection("could not initialize a feasible scoring vector")


def fit_deflation(data, cfg, q=None, beta_solver="apg"):
    """Fit scoring/discriminant pairs sequentially with block coordinate descent.

    Parameters
    ----------
    data : Dataset
    cfg : SolverConfig
    q : discriminant count, default K - 1
    beta_solver : "apg" or "admm" for the elastic-net subproblem

    Returns
    -------
    (SosModel, FitTrace). Columns whose scoring direction degenerates are
    skipped with a DegenerateColumn warning and q is reduced; if every
    column degenerates DegenerateDirection is raised. The trace holds the
    per-column objective per inner iteration (``columns`` maps entries to
    their column).
    """
    if beta_solver not in ("apg", "admm"):
        raise SpecInvalid(f"unknown beta solver {beta_solver!r}")
    K = data.K
    q = K - 1 if q is None else q
    if not 1 <= q <= K - 1:
        raise SpecInvalid(f"q={q} outside 1..K-1 for K={K}")
    start = time.perf_counter()
    ind = build_indicator(data.labels, K)
    Xc, _ = center_columns(data.X)
    Y, D = ind.Y, ind.D
    d = np.diag(D)
    n, p = Xc.shape

    if isinstance(cfg.lam, str):
        theta_ref = init_theta(K, q, D, cfg.seed)
        lam = resolve_lambda(cfg, Xc, Y, theta_ref)
    else:
        lam = float(cfg.lam)

    gram = Xc.T @ Xc if p <= 2 * n else None
    lip = lipschitz_bound(Xc, cfg.gamma, gram=gram)
    admm_factor = (
        AdmmFactor(Xc, cfg.gamma, cfg.mu_admm, gram=gram) if beta_solver == "admm" else None
    )

    Q = np.ones((K, 1))
    thetas, betas = [], []
    obj_trace, orth_trace, col_trace = [], [], []

    for j in range(1, q + 1):
        rng = np.random.default_rng(cfg.seed + j)
        state = DeflationState(Qj=Q, D=D)
        try:
            theta = _init_column(rng, Q, d, D)
            beta = np.zeros(p)
            converged = False
            for _ in range(cfg.max_outer):
                prob = EnetProblem(
                    X=Xc, target=Y @ theta, gamma=cfg.gamma, lam=lam,
                    gram=gram, lipschitz=lip,
                )
                if beta_solver == "apg":
                    beta_new, _ = apg_solve(
                        prob, beta, tol=cfg.tol_inner_beta, max_iter=cfg.max_inner_beta
                    )
                else:
                    beta_new, _ = admm_solve(
                        prob, beta, mu=cfg.mu_admm, tol=cfg.tol_inner_beta,
                        max_iter=cfg.max_inner_beta, factor=admm_factor,
                    )
                theta_new = theta_update_deflation(state, Xc, Y, beta_new)

                r = Y @ theta_new - Xc @ beta_new
                obj = float(
                    r @ r + cfg.gamma * (beta_new @ beta_new) + lam * np.abs(beta_new).sum()
                )
                obj_trace.append(obj)
                cols_so_far = np.column_stack(thetas + [theta_new]) if thetas else theta_new[:, None]
                G = cols_so_far.T @ (D @ cols_so_far)
                orth_trace.append(float(np.linalg.norm(G - np.eye(G.shape[0]))))
                col_trace.append(j)

                rel_theta = np.linalg.norm(theta_new - theta) / max(np.linalg.norm(theta_new), 1e-30)
                rel_beta = np.linalg.norm(beta_new - beta) / max(np.linalg.norm(beta_new), 1e-30)
                theta, beta = theta_new, beta_new
                if max(rel_theta, rel_beta) < cfg.tol_outer:
                    converged = True
                    break
            if not converged:
                warnings.warn(f"column {j} hit max_outer={cfg.max_outer}", NotConverged)
        except DegenerateDirection as e:
            warnings.warn(f"column {j} skipped: {e}", DegenerateColumn)
            continue

        # fix the sign ambiguity: first nonzero coordinate of theta positive
        nz = np.flatnonzero(np.abs(theta) > 1e-12)
        if nz.size and theta[nz[0]] < 0:
            theta = -theta
            beta = -beta
        thetas.append(theta)
        betas.append(beta)
        Q = np.column_stack([Q, theta])

    if not thetas:
        raise DegenerateDirection("every scoring column degenerated")

    method = Method.DEFLATION_APG if beta_solver == "apg" else Method.DEFLATION_ADMM
    model = SosModel(
        Theta=np.column_stack(thetas),
        Beta=np.column_stack(betas),
        q=len(thetas),
        lam=lam,
        gamma=cfg.gamma,
        method=method,
    )
    trace = FitTrace(
        objective=np.array(obj_trace),
        orth_residual=np.array(orth_trace),
        rho=np.zeros(len(obj_trace)),
        iterations=len(obj_trace),
        wall_time_s=time.perf_counter() - start,
        columns=np.array(col_trace),
        metadata={"beta_warm_start": "previous-iterate", "beta_solver": beta_solver},
    )
    return model, trace
