"""Deflation-free sparse optimal scoring via splitting and Bregman iteration.

All q scoring/discriminant pairs are estimated jointly under the global
constraint (1/n) Theta' Y'Y Theta = I. The constraint is split off through an
auxiliary variable P = L Theta with P'P = I, where L'L = Y'Y/n. Each outer
iteration performs, in order,

    theta:  per-column equality-constrained quadratic solve (KKT system),
    beta:   per-column elastic-net solve, warm-started,
    P:      projection of L Theta + B onto matrices with orthonormal columns
            (thin SVD, P = U V'),
    B:      B + L Theta - P (running sum of constraint residuals),
    rho:    increase by sigma when the residual ||P - L Theta||_F^2 stops
            shrinking by the factor eta.

Two split factors are supported: the scaled indicator (1/sqrt(n)) Y itself
(variant "v1", P is n x q) and the K x K diagonal square root
(1/sqrt(n)) diag(sqrt(n_1)..sqrt(n_K)) (variant "v2", P is K x q), which is
cheaper since products with it are row scalings.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .core import (
    FitTrace,
    Method,
    SolverConfig,
    SosModel,
    build_indicator,
    center_columns,
    sos_objective,
)
from .enet import EnetProblem, apg_solve, lipschitz_bound
from .errors import (
    FactorizationFailure,
    NotConverged,
    RankCollapse,
    RankDeficient,
    ShapeMismatch,
    SingularSystem,
    SpecInvalid,
    ZeroBeta,
)
from .parallel import map_indexed


@dataclass(frozen=True)
class SplitVariant:
    """Split factor L with L'L = Y'Y/n."""

    kind: str
    L: np.ndarray


def split_variant(kind, indicator):
    """Build the split factor for ``kind`` in {"v1", "v2"}."""
    n = indicator.n
    if kind == "v1":
        L = indicator.Y / math.sqrt(n)
    elif kind == "v2":
        L = np.diag(np.sqrt(indicator.class_counts / n))
    else:
        raise SpecInvalid(f"unknown split variant {kind!r}")
    return SplitVariant(kind=kind, L=L)


@dataclass(frozen=True)
class BregmanState:
    """Iterates of the splitting scheme.

    ``B`` is the running residual (Bregman/dual) variable, same shape as P.
    ``v_track`` is the residual tracker driving the rho schedule.
    """

    Theta: np.ndarray
    Beta: np.ndarray
    P: np.ndarray
    B: np.ndarray
    rho: float
    v_track: float
    variant: SplitVariant


class KktFactor:
    """LU factorization of the per-column scoring KKT system.

    The system for one scoring column theta_i with multiplier v_i is

        [ (2 + rho/n) Y'Y   -Y'Y 1 ] [theta_i]   [rhs_i]
        [      1' Y'Y          0   ] [  v_i  ] = [  0  ]

    The coefficient matrix depends only on (rho, Y'Y), so one factorization
    serves all columns and all iterations until rho changes.
    """

    def __init__(self, class_counts, n, rho):
        counts = np.asarray(class_counts, dtype=float)
        if (counts <= 0).any():
            raise SingularSystem("class counts must be positive")
        K = counts.size
        S = np.zeros((K + 1, K + 1))
        S[:K, :K] = (2.0 + rho / n) * np.diag(counts)
        S[:K, K] = -counts
        S[K, :K] = counts
        self.n = n
        self.rho = rho
        self._lu = scipy.linalg.lu_factor(S)

    def solve(self, rhs):
        """Solve for one column (rhs is a K-vector) or a stack (K x q)."""
        rhs = np.asarray(rhs, dtype=float)
        single = rhs.ndim == 1
        R = rhs.reshape(-1, 1) if single else rhs
        full = np.vstack([R, np.zeros((1, R.shape[1]))])
        sol = scipy.linalg.lu_solve(self._lu, full)
        theta = sol[:-1]
        v = sol[-1]
        if single:
            return theta[:, 0], float(v[0])
        return theta, v


def theta_update_kkt(Y, X, beta_i, P_i, B_i, rho, L=None):
    """Solve the equality-constrained quadratic for one scoring column.

    Minimizes ||Y theta - X beta_i||^2 + (rho/2) ||L theta - P_i + B_i||^2
    subject to theta' Y'Y 1 = 0. ``L`` defaults to (1/sqrt(n)) Y.
    """
    Y = np.asarray(Y, dtype=float)
    n, K = Y.shape
    if L is None:
        L = Y / math.sqrt(n)
    P_i = np.asarray(P_i, dtype=float)
    B_i = np.asarray(B_i, dtype=float)
    if P_i.shape != B_i.shape or P_i.shape[0] != L.shape[0]:
        raise ShapeMismatch("P_i and B_i must match the rows of L")
    counts = Y.sum(axis=0)
    rhs = 2.0 * (Y.T @ (X @ beta_i)) + rho * (L.T @ (P_i - B_i))
    theta, _ = KktFactor(counts, n, rho).solve(rhs)
    return theta


def beta_update(X, Y, Theta, gamma, lam, Beta_prev, cfg, gram=None, lipschitz=None):
    """Solve the elastic-net subproblem for every discriminant column.

    Columns are independent; each is solved by the accelerated proximal
    gradient method warm-started at the corresponding column of Beta_prev.
    """
    Theta = np.asarray(Theta, dtype=float)
    Beta_prev = np.asarray(Beta_prev, dtype=float)
    targets = Y @ Theta
    if lipschitz is None:
        lipschitz = lipschitz_bound(X, gamma, gram=gram)

    def solve_col(i):
        prob = EnetProblem(
            X=X, target=targets[:, i], gamma=gamma, lam=lam,
            gram=gram, lipschitz=lipschitz,
        )
        beta, _ = apg_solve(
            prob, Beta_prev[:, i], tol=cfg.tol_inner_beta, max_iter=cfg.max_inner_beta
        )
        return beta

    cols = map_indexed(solve_col, Theta.shape[1])
    return np.column_stack(cols)


def p_update(L, Theta, B):
    """Project L Theta + B onto the set of matrices with orthonormal columns.

    Thin SVD of M = L Theta + B gives the Frobenius-nearest orthonormal
    factor U V'. Warns RankDeficient when M is (numerically) column rank
    deficient, in which case the minimizer is not unique and the SVD's
    choice is returned.
    """
    M = L @ Theta + B
    if not np.isfinite(M).all():
        raise SpecInvalid("projection target contains non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.min(initial=np.inf) < 1e-12:
        warnings.warn("projection target is rank deficient", RankDeficient)
    return U @ Vt


def dual_update(B_prev, L, Theta, P):
    """Bregman residual accumulation: B = B_prev + L Theta - P."""
    B_prev = np.asarray(B_prev, dtype=float)
    step = L @ Theta
    if B_prev.shape != step.shape or P.shape != step.shape:
        raise ShapeMismatch("B, L Theta and P must share a shape")
    return B_prev + step - P


def rho_schedule(state, eta, sigma):
    """One step of the penalty parameter schedule.

    With v = ||P - L Theta||_F^2: if v < eta * v_track the tracker is
    lowered to v and rho is kept; otherwise rho is scaled by sigma and the
    tracker is kept. Returns the updated state.
    """
    v = float(np.linalg.norm(state.P - state.variant.L @ state.Theta) ** 2)
    if v < eta * state.v_track:
        return replace(state, v_track=v)
    return replace(state, rho=sigma * state.rho)


def lambda_max(X, Y, Theta, gamma):
    """Largest l1 weight that still admits a nontrivial discriminant.

    Evaluated at the ridge solution beta* of the lam = 0 subproblem
    (computed through the n x n factorization of ``init_beta``):

        |sum_i beta_i'(X'X + gamma I) beta_i - 2 beta_i' X'Y theta_i| / ||beta*||_1.

    At beta* the numerator is nonpositive in exact arithmetic; its magnitude
    is returned so the value is usable as an l1 weight. Fitting at this
    weight is guaranteed an objective no worse than beta = 0. Returns +inf
    (with a ZeroBeta warning) when beta* is identically zero.
    """
    Beta = init_beta(X, Y, Theta, gamma)
    l1 = np.abs(Beta).sum()
    if l1 == 0.0:
        warnings.warn("ridge solution is zero; any l1 weight is admissible", ZeroBeta)
        return math.inf
    XB = X @ Beta
    YT = Y @ np.atleast_2d(np.asarray(Theta, dtype=float).T).T
    raw = (XB * XB).sum() + gamma * (Beta * Beta).sum() - 2.0 * (XB * YT).sum()
    return abs(raw) / l1


def init_theta(K, q, D, seed):
    """Random D-orthonormal scoring start, orthogonal to the all-ones vector.

    Gram-Schmidt in the D inner product against a basis seeded with the
    all-ones vector (which has unit D-norm). Columns whose projection
    collapses are resampled, up to 10 times, before RankCollapse is raised.
    """
    if q > K - 1:
        raise SpecInvalid(f"q={q} exceeds K-1={K - 1}")
    D = np.asarray(D, dtype=float)
    rng = np.random.default_rng(seed)
    basis = np.ones((K, 1))
    cols = []
    for _ in range(q):
        for _attempt in range(10):
            u = rng.standard_normal(K)
            t = u - basis @ (basis.T @ (D @ u))
            t = t - basis @ (basis.T @ (D @ t))  # second pass tightens orthogonality
            a = float(t @ (D @ t))
            if a > 1e-12:
                break
        else:
            raise RankCollapse("no independent direction found in 10 resamples")
        theta = t / math.sqrt(a)
        basis = np.column_stack([basis, theta])
        cols.append(theta)
    return np.column_stack(cols)


def init_beta(X, Y, Theta, gamma):
    """Ridge warm start (X'X + gamma I)^-1 X'Y Theta without p x p systems.

    Uses the matrix inversion lemma: with M = X'Y Theta,

        Beta = (1/gamma) (M - (1/gamma) X' (I + (1/gamma) X X')^-1 X M),

    so only an n x n Cholesky factorization is formed.
    """
    if gamma <= 0:
        raise SpecInvalid("gamma must be positive")
    X = np.asarray(X, dtype=float)
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float).T).T
    n = X.shape[0]
    M = X.T @ (Y @ Theta)
    G = X @ X.T / gamma
    G[np.diag_indices_from(G)] += 1.0
    try:
        factor = scipy.linalg.cho_factor(G)
    except scipy.linalg.LinAlgError as e:  # pragma: no cover - SPD for finite X
        raise FactorizationFailure(str(e)) from e
    V = scipy.linalg.cho_solve(factor, X @ M)
    return (M - X.T @ V / gamma) / gamma


def resolve_lambda(cfg, X, Y, Theta):
    """Concrete l1 weight for a fit: numbers pass through, "auto" maps to
    half the nontriviality bound computed from the initial scoring matrix."""
    if not isinstance(cfg.lam, str):
        return float(cfg.lam)
    lam_max = lambda_max(X, Y, Theta, cfg.gamma)
    if math.isinf(lam_max):
        return 0.0
    return 0.5 * lam_max


def _reproject(Theta, D):
    """D-weighted polar step Theta (Theta'D Theta)^(-1/2)."""
    S = Theta.T @ (D @ Theta)
    vals, vecs = np.linalg.eigh(S)
    if vals.min() < 1e-12:
        warnings.warn("scoring matrix nearly rank deficient at re-projection", RankDeficient)
        vals = np.maximum(vals, 1e-12)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    return Theta @ inv_sqrt


def fit_dfsos(data, cfg, q=None, variant="v1", theta0=None, beta0=None):
    """Fit all scoring/discriminant pairs jointly.

    Parameters
    ----------
    data : Dataset
    cfg : SolverConfig
    q : discriminant count, default K - 1
    variant : "v1" (split factor (1/sqrt(n)) Y) or "v2" (diagonal square
        root factor), or a prebuilt SplitVariant
    theta0, beta0 : optional explicit starts overriding the random
        D-orthonormal start and its ridge solution

    Returns
    -------
    (SosModel, FitTrace). The returned Theta is re-projected onto the
    scoring constraint set; the trace records the objective, the splitting
    residual ||L Theta - P||_F and rho per outer iteration.
    """
    K = data.K
    q = K - 1 if q is None else q
    if not 1 <= q <= K - 1:
        raise SpecInvalid(f"q={q} outside 1..K-1 for K={K}")
    start = time.perf_counter()
    ind = build_indicator(data.labels, K)
    Xc, _ = center_columns(data.X)
    Y = ind.Y
    n = data.n
    sv = variant if isinstance(variant, SplitVariant) else split_variant(variant, ind)
    L = sv.L

    Theta = init_theta(K, q, ind.D, cfg.seed) if theta0 is None else np.array(theta0, dtype=float)
    lam = resolve_lambda(cfg, Xc, Y, Theta)
    Beta = init_beta(Xc, Y, Theta, cfg.gamma) if beta0 is None else np.array(beta0, dtype=float)
    P = L @ Theta
    B = np.zeros_like(P)
    rho = cfg.rho0
    v_track = 2.0 * float(np.linalg.norm(P) ** 2)

    gram = Xc.T @ Xc if data.p <= 2 * n else None
    lip = lipschitz_bound(Xc, cfg.gamma, gram=gram)
    kkt = KktFactor(ind.class_counts, n, rho)
    YtX = Y.T @ Xc

    obj_trace, orth_trace, rho_trace = [], [], []
    converged = False
    for _ in range(cfg.max_outer):
        Theta_prev, Beta_prev = Theta, Beta

        rhs = 2.0 * (YtX @ Beta) + rho * (L.T @ (P - B))
        Theta, _ = kkt.solve(rhs)
        Beta = beta_update(Xc, Y, Theta, cfg.gamma, lam, Beta, cfg, gram=gram, lipschitz=lip)
        P = p_update(L, Theta, B)
        B = dual_update(B, L, Theta, P)

        v = float(np.linalg.norm(P - L @ Theta) ** 2)
        if v < cfg.eta * v_track:
            v_track = v
        else:
            rho = cfg.sigma * rho
            kkt = KktFactor(ind.class_counts, n, rho)

        obj_trace.append(sos_objective(Xc, Y, Theta, Beta, cfg.gamma, lam))
        orth_trace.append(math.sqrt(v))
        rho_trace.append(rho)

        rel_theta = np.linalg.norm(Theta - Theta_prev) / max(np.linalg.norm(Theta), 1e-30)
        rel_beta = np.linalg.norm(Beta - Beta_prev) / max(np.linalg.norm(Beta), 1e-30)
        if max(rel_theta, rel_beta) < cfg.tol_outer:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"splitting loop hit max_outer={cfg.max_outer}", NotConverged
        )

    Theta = _reproject(Theta, ind.D)
    method = Method.DFSOS_V1 if sv.kind == "v1" else Method.DFSOS_V2
    model = SosModel(Theta=Theta, Beta=Beta, q=q, lam=lam, gamma=cfg.gamma, method=method)
    trace = FitTrace(
        objective=np.array(obj_trace),
        orth_residual=np.array(orth_trace),
        rho=np.array(rho_trace),
        iterations=len(obj_trace),
        wall_time_s=time.perf_counter() - start,
        metadata={"beta_warm_start": "previous-iterate", "converged": str(converged)},
    )
    return model, trace
