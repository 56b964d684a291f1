"""Dominant service allocation.

Maps rate estimates to a bistochastic matrix whose induced per-queue clear
rates strictly dominate the arrival rates, via a strongly convex log-barrier
program solved by projected subgradient descent with iterate averaging.
The projection onto the constraint set uses Dykstra's cyclic scheme over
its closed-form pieces (row sums, column sums, nonnegativity, and one
margin half-space per queue).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import rate_margin

SQRT_E = math.sqrt(math.e)


class InfeasibleMargin(ValueError):
    """Projection requested while the estimated margin is not positive."""


@dataclass(frozen=True)
class PhiConfig:
    """Iteration budgets for the allocation solver.

    ``refresh_threshold`` is consumed by callers that cache solutions: a
    cached allocation is only recomputed once the rate estimates moved by at
    least this much in sup norm (0 disables the throttle and recomputes on
    every estimate change).
    """

    max_outer_iters: int = 200
    dykstra_iters: int = 100
    target_gap: float = 1e-4
    warm_start: np.ndarray | None = None
    refresh_threshold: float = 0.0
    step_offset: int = 0

    def __post_init__(self) -> None:
        if self.target_gap <= 0:
            raise ValueError("target_gap must be positive")
        if self.max_outer_iters <= 0 or self.dykstra_iters <= 0:
            raise ValueError("iteration budgets must be positive")
        if self.step_offset < 0:
            raise ValueError("step_offset must be nonnegative")


def empirical_margin(lambda_hat: np.ndarray, mu_hat: np.ndarray) -> float:
    """Additive rate margin evaluated on estimates (may be <= 0)."""
    return rate_margin(lambda_hat, mu_hat)


def barrier_objective(
    P: np.ndarray, lam: np.ndarray, mu: np.ndarray
) -> tuple[float, np.ndarray | None]:
    """Value and one subgradient of the barrier objective at P.

    The objective is the worst-queue negative log clearing margin plus a
    small quadratic term.  Returns (+inf, None) outside the barrier domain.
    Ties in the max are broken toward the smallest queue index so the
    subgradient is deterministic.
    """
    P = np.asarray(P, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = lam.size
    k = mu.size
    margins = P[:n] @ mu - lam
    if margins.min() <= 0.0:
        return math.inf, None
    logs = -np.log(margins)
    i_star = int(np.argmax(logs))
    value = float(logs[i_star] + (P * P).sum() / (2.0 * k))
    grad = P / k
    grad[i_star] -= mu / margins[i_star]
    return value, grad


def _violation(P: np.ndarray, lam: np.ndarray, mu: np.ndarray, tau: float) -> float:
    n = lam.size
    row = np.abs(P.sum(axis=1) - 1.0).max()
    col = np.abs(P.sum(axis=0) - 1.0).max()
    neg = max(0.0, float(-P.min()))
    deficit = float(np.max((lam + tau) - P[:n] @ mu, initial=0.0))
    return max(row, col, neg, deficit)


def _affine_project(P: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto {X : all row sums and column sums 1}."""
    k = P.shape[0]
    a = 1.0 - P.sum(axis=1)
    b = 1.0 - P.sum(axis=0)
    s = a.sum() / (2.0 * k)
    return P + (a - s)[:, None] / k + (b - s)[None, :] / k


def _dykstra(
    P: np.ndarray,
    lam: np.ndarray,
    mu: np.ndarray,
    tau: float,
    iters: int,
    tol: float,
) -> np.ndarray:
    n = lam.size
    X = np.array(P, dtype=float, copy=True)
    bound = lam + tau
    mu_norm2 = float(mu @ mu)
    e_orth = np.zeros_like(X)
    e_marg = np.zeros_like(X)
    for cycle in range(iters):
        if cycle % 4 == 0 and _violation(X, lam, mu, tau) <= tol:
            break
        # The affine block needs no correction term in Dykstra's scheme.
        X = _affine_project(X)
        Y = X + e_orth
        X = np.maximum(Y, 0.0)
        e_orth = Y - X
        Y = X + e_marg
        X = Y.copy()
        if mu_norm2 > 0.0:
            deficit = bound - Y[:n] @ mu
            hit = deficit > 0.0
            if np.any(hit):
                X[:n][hit] += np.outer(deficit[hit] / mu_norm2, mu)
        e_marg = Y - X
    return np.clip(X, 0.0, 1.0)


def project_feasible(
    P: np.ndarray,
    lam: np.ndarray,
    mu: np.ndarray,
    margin_est: float,
    iters: int,
    tol: float = 1e-9,
) -> np.ndarray:
    """Approximate Euclidean projection onto the solver's constraint set:
    bistochastic matrices whose per-queue clear rate exceeds the arrival
    rate by at least ``margin_est / sqrt(e)``.

    Runs up to ``iters`` Dykstra cycles over three blocks (the doubly-affine
    sum set, projected exactly in closed form; the nonnegative orthant; and
    the per-queue margin half-spaces), stopping early once the worst
    constraint violation drops below ``tol``.  Feasible inputs are returned
    unchanged.
    """
    if margin_est <= 0.0:
        raise InfeasibleMargin(f"margin estimate {margin_est} is not positive")
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return _dykstra(P, lam, mu, margin_est / SQRT_E, iters, tol)


def _slsqp_project(
    P: np.ndarray, lam: np.ndarray, mu: np.ndarray, tau: float, start: np.ndarray
) -> np.ndarray | None:
    """Exact projection via a small SQP solve; returns None on failure."""
    from scipy.optimize import minimize

    n = lam.size
    k = mu.size
    target = np.asarray(P, dtype=float).ravel()
    a_eq = np.zeros((2 * k, k * k))
    for i in range(k):
        a_eq[i, i * k : (i + 1) * k] = 1.0
        a_eq[k + i, i::k] = 1.0
    m_ineq = np.zeros((n, k * k))
    for i in range(n):
        m_ineq[i, i * k : (i + 1) * k] = mu
    bound = lam + tau
    res = minimize(
        lambda x: float(((x - target) ** 2).sum()),
        start.ravel(),
        jac=lambda x: 2.0 * (x - target),
        bounds=[(0.0, 1.0)] * (k * k),
        constraints=[
            {"type": "eq", "fun": lambda x: a_eq @ x - 1.0, "jac": lambda x: a_eq},
            {"type": "ineq", "fun": lambda x: m_ineq @ x - bound, "jac": lambda x: m_ineq},
        ],
        method="SLSQP",
        options={"maxiter": 300, "ftol": 1e-14},
    )
    # The iteration cap may stop the objective polish early; what matters
    # here is certified feasibility of the returned point.
    out = np.clip(res.x.reshape(k, k), 0.0, 1.0)
    return out if _violation(out, lam, mu, tau) <= 1e-7 else None


def _tight_feasible(
    P: np.ndarray, lam: np.ndarray, mu: np.ndarray, margin_est: float, iters: int
) -> np.ndarray:
    """Projection that prioritizes clean row/column sums.

    Dykstra's linear rate collapses when the margin half-spaces sit at a
    shallow angle to the sum constraints (margin_est barely positive), so a
    stalled run falls back to an exact small-QP solve, and as a last resort
    to Dykstra with the margin threshold relaxed by most of the 1e-3
    contract slack (that set is always fat in the margin direction).
    """
    tau = margin_est / SQRT_E
    out = _dykstra(P, lam, mu, tau, iters, tol=1e-11)
    if _violation(out, lam, mu, tau) > 1e-8:
        exact = _slsqp_project(P, lam, mu, tau, start=out)
        out = exact if exact is not None else _dykstra(P, lam, mu, tau - 9e-4, iters, tol=1e-11)
    return out


def compute_phi(
    lam: np.ndarray,
    mu: np.ndarray,
    cfg: PhiConfig | None = None,
    history: list[float] | None = None,
) -> np.ndarray:
    """Dominant allocation for the given rates.

    Returns the identity matrix when the estimated margin is not positive.
    Otherwise runs projected subgradient descent with step 2N/(t+1) and
    iterate averaging, starting from ``cfg.warm_start`` or the uniform
    matrix, and returns the averaged iterate once its objective is within
    ``cfg.target_gap`` of the best iterate seen (falling back to the best
    iterate if averaging has not caught up by the last iteration).
    ``cfg.step_offset`` shifts t in the step schedule so warm-started calls
    continue the previous run's schedule instead of leaping away from the
    warm point.  When a ``history`` list is supplied, the best objective
    value seen so far is appended at every outer iteration.
    """
    if cfg is None:
        cfg = PhiConfig()
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = lam.size
    k = mu.size
    margin_est = empirical_margin(lam, mu)
    if margin_est <= 0.0:
        return np.eye(k)

    if cfg.warm_start is not None and cfg.warm_start.shape == (k, k):
        start = cfg.warm_start
    else:
        start = np.full((k, k), 1.0 / k)
    tau = margin_est / SQRT_E
    # Feasibility beyond this threshold makes barrier values untrustworthy
    # (slightly deflated sums shrink the norm term), so objectives are only
    # compared between points at least this feasible.
    trust = 1e-7
    P = project_feasible(start, lam, mu, margin_est, max(cfg.dykstra_iters, 2000))
    avg = P.copy()
    best = P
    best_val = math.inf
    if _violation(P, lam, mu, tau) <= trust:
        best_val, _ = barrier_objective(P, lam, mu)
    converged = False
    for t in range(1, cfg.max_outer_iters + 1):
        val, grad = barrier_objective(P, lam, mu)
        if grad is None:
            # A sloppy approximate projection left the barrier domain; pull
            # the iterate tightly feasible before continuing.
            P = _tight_feasible(P, lam, mu, margin_est, 2000)
            val, grad = barrier_objective(P, lam, mu)
            if grad is None:
                break
        if val < best_val and _violation(P, lam, mu, tau) <= trust:
            best_val = val
            best = P
        if history is not None:
            history.append(best_val)
        step = 2.0 * n / (t + cfg.step_offset + 1.0)
        P = project_feasible(P - step * grad, lam, mu, margin_est, cfg.dykstra_iters)
        avg = (t / (t + 2.0)) * avg + (2.0 / (t + 2.0)) * P
        if _violation(avg, lam, mu, tau) <= trust:
            avg_val, _ = barrier_objective(avg, lam, mu)
            if avg_val - best_val <= cfg.target_gap:
                converged = True
                break
    val, _ = barrier_objective(P, lam, mu)
    if val < best_val and _violation(P, lam, mu, tau) <= trust:
        best_val = val
        best = P
    # Tight final projection so downstream consumers see clean sums/margins;
    # when averaging did not provably catch up, return whichever of the
    # projected averaged/best iterates is feasible with the lower objective.
    out = _tight_feasible(avg, lam, mu, margin_est, 3000)
    if converged:
        return out
    out_val, _ = barrier_objective(out, lam, mu)
    if out_val - best_val <= cfg.target_gap:
        return out
    alt = _tight_feasible(best, lam, mu, margin_est, 3000)
    alt_val, _ = barrier_objective(alt, lam, mu)
    out_feas = _violation(out, lam, mu, tau - 1e-3) <= 1e-7
    alt_feas = _violation(alt, lam, mu, tau - 1e-3) <= 1e-7
    if out_feas and not alt_feas:
        return out
    if alt_feas and not out_feas:
        return alt
    return alt if alt_val < out_val else out


def verify_domination(P: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Per-queue clearing margin (P mu)_i - lam_i."""
    P = np.asarray(P, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return P[: lam.size] @ mu - lam


def is_bistochastic(P: np.ndarray, tol: float = 1e-9) -> bool:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    return (
        np.abs(P.sum(axis=1) - 1.0).max() <= tol
        and np.abs(P.sum(axis=0) - 1.0).max() <= tol
        and P.min() >= -1e-12
    )
