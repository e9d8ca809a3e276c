"""Minimization over the routing posterior q with the scorers held fixed.

Two flavors: a closed-form separable solution with a scalar dual for the
KL-regularized objective, and a consensus ADMM for the symmetrized
squared-log-odds objective (whose q-subproblems are non-convex).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import F0Scores, logistic_loss, logit, sigmoid

# Dual variable cap: sigmoid(x - 1e5) underflows to exactly 0.0 for any
# realistic score range, which realizes an unreachable routing budget of 0.
# The bisection target sits far below the stated 1e-8 constraint tolerance:
# the returned q overshoots the budget by at most _MEAN_TOL, and the outer
# alternation's descent guarantee leaks by beta * overshoot, which must stay
# well under the 1e-9 monotonicity slack.
_BETA_CAP = 1e5
_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class GatingPosterior:
    """Per-example probability of routing to the full model, plus the dual."""

    q: np.ndarray
    beta: float
    converged: bool = True

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class PerExampleTerms:
    """Loss accumulated on the cheap route (a) and the full route (b)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("term arrays must be 1-d and equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("terms must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.rho <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ValueError("AdmmConfig requires rho > 0, max_iters >= 1, tol > 0")


def compute_terms_kl(margins_f1, gate_scores, f0: F0Scores) -> PerExampleTerms:
    """Per-example routing terms for the KL objective.

    a_i: loss if kept local  = loss(y_i f1(x_i)) + log(1 + e^{g(x_i)})
    b_i: loss if routed      = -log p(y_i | full) + log(1 + e^{-g(x_i)})
    """
    margins_f1 = np.asarray(margins_f1, dtype=float)
    gate_scores = np.asarray(gate_scores, dtype=float)
    if not (margins_f1.shape == gate_scores.shape == f0.logp.shape):
        raise ValueError("margins, gate scores, and f0 scores must have equal length")
    a = logistic_loss(margins_f1) + logistic_loss(-gate_scores)
    b = -f0.logp + logistic_loss(gate_scores)
    return PerExampleTerms(a, b)


def i_project_kl(terms: PerExampleTerms, p_full: float) -> GatingPosterior:
    """Closed-form entropic projection under the mean routing constraint.

    Each coordinate minimizes (1-q)a + q b - H(q) + beta*q, giving
    q = sigmoid(a - b - beta). beta = 0 if the unconstrained mean already
    satisfies the budget; otherwise beta is found by bisection from the
    infeasible side, so the returned q never over-satisfies the constraint
    (mean(q) in [p_full, p_full + 1e-8]) and descent of the outer objective
    is preserved exactly.
    """
    if not 0.0 <= p_full <= 1.0:
        raise ValueError(f"p_full must lie in [0, 1], got {p_full}")
    logits = terms.a - terms.b

    def mean_q(beta: float) -> float:
        return float(np.mean(sigmoid(logits - beta)))

    if mean_q(0.0) <= p_full:
        return GatingPosterior(sigmoid(logits), 0.0)

    hi = 100.0
    while mean_q(hi) > p_full and hi < _BETA_CAP:
        hi *= 2.0
    if mean_q(hi) > p_full:
        # Budget unreachable for finite beta (e.g. p_full = 0): cap the dual.
        return GatingPosterior(sigmoid(logits - hi), hi)

    lo = 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mean_q(mid) > p_full:
            lo = mid
        else:
            hi = mid
        if mean_q(lo) - p_full <= _MEAN_TOL:
            break
    return GatingPosterior(sigmoid(logits - lo), lo)


def _sym_objective(q, a, gate_scores):
    """Symmetrized projection objective, summed over examples."""
    return float(np.sum((1.0 - q) * a + (logit(q) - gate_scores) ** 2))


def _golden_vec(fun, lo, hi, iters: int = 48):
    """Vectorized golden-section minimization over per-coordinate brackets."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a = lo.copy()
    b = hi.copy()
    for _ in range(iters):
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        take_left = fun(c) < fun(d)
        b = np.where(take_left, d, b)
        a = np.where(take_left, a, c)
    mid = 0.5 * (a + b)
    better = fun(a) < fun(mid)
    return np.where(better, a, mid)


def _solve_scalar_subproblems(a, gate_scores, rho, v):
    """Per-coordinate minimizers of the augmented routing subproblem.

    The 1-d objective (1-q)a + (logit(q) - g)^2 + rho/2 (q - v)^2 can have
    several local minima, so golden-section runs on three covering brackets
    plus a bracket seeded from a coarse scan; the best result wins per
    coordinate.
    """
    eps = 1e-9

    def fun(q):
        return (1.0 - q) * a + (logit(q) - gate_scores) ** 2 + 0.5 * rho * (q - v) ** 2

    n = len(a)
    grid = np.linspace(eps, 1.0 - eps, 33)
    values = fun(grid[:, None] * np.ones((1, n)))
    best_cell = np.argmin(values, axis=0)
    lo_seed = grid[np.maximum(best_cell - 1, 0)]
    hi_seed = grid[np.minimum(best_cell + 1, len(grid) - 1)]

    brackets = [
        (np.full(n, eps), np.full(n, 0.34)),
        (np.full(n, 0.33), np.full(n, 0.67)),
        (np.full(n, 0.66), np.full(n, 1.0 - eps)),
        (lo_seed, hi_seed),
    ]
    best_q = None
    best_val = None
    for lo, hi in brackets:
        q = _golden_vec(fun, lo, hi)
        val = fun(q)
        if best_q is None:
            best_q, best_val = q, val
        else:
            improve = val < best_val
            best_q = np.where(improve, q, best_q)
            best_val = np.where(improve, val, best_val)
    return best_q


def _project_box_mean(v, p_full: float):
    """Euclidean projection onto {q in [0,1]^n : mean(q) <= p_full}."""
    w = np.clip(v, 0.0, 1.0)
    if w.mean() <= p_full:
        return w
    lo, hi = 0.0, float(np.max(v))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, 1.0).mean() > p_full:
            lo = mid
        else:
            hi = mid
    return np.clip(v - hi, 0.0, 1.0)


def project_symmetrized(a, gate_scores, p_full: float, cfg: AdmmConfig) -> GatingPosterior:
    """ADMM projection for the symmetrized squared-log-odds objective.

    Consensus split: the x-block solves the separable augmented scalar
    subproblems, the z-block projects onto the box intersected with the mean
    budget, and scaled duals couple them. Non-convergence within
    cfg.max_iters is reported via the converged flag, never silently. The
    returned q is feasible and never worse (in objective) than the scaled
    warm start q = sigmoid(gate_scores).
    """
    if not 0.0 <= p_full <= 1.0:
        raise ValueError(f"p_full must lie in [0, 1], got {p_full}")
    a = np.asarray(a, dtype=float)
    gate_scores = np.asarray(gate_scores, dtype=float)
    if a.shape != gate_scores.shape or a.ndim != 1:
        raise ValueError("a and gate_scores must be 1-d and equal length")
    if not np.all(np.isfinite(a)):
        raise ValueError("a must be finite")
    n = len(a)

    warm = sigmoid(gate_scores)
    warm_mean = warm.mean()
    if warm_mean > p_full:
        warm = warm * (p_full / warm_mean) if warm_mean > 0 else np.zeros(n)

    z = warm.copy()
    u = np.zeros(n)
    x = warm.copy()
    rho = cfg.rho
    converged = False
    for _ in range(cfg.max_iters):
        x = _solve_scalar_subproblems(a, gate_scores, rho, z - u)
        z_old = z
        z = _project_box_mean(x + u, p_full)
        u = u + x - z
        primal = float(np.linalg.norm(x - z) / np.sqrt(n))
        dual = float(rho * np.linalg.norm(z - z_old) / np.sqrt(n))
        if primal < cfg.tol and dual < cfg.tol:
            converged = True
            break
        # residual balancing: a stronger penalty also convexifies the
        # scalar subproblems, which is what breaks primal plateaus here
        if primal > 10.0 * dual and rho < 1e6:
            rho *= 2.0
            u /= 2.0
        elif dual > 10.0 * primal and rho > 1e-6:
            rho /= 2.0
            u *= 2.0

    candidates = [warm, z, _project_box_mean(x, p_full)]
    if x.mean() <= p_full + 1e-6:
        candidates.append(np.clip(x, 0.0, 1.0))
    best = min(candidates, key=lambda q: _sym_objective(q, a, gate_scores))
    return GatingPosterior(best, 0.0, converged=converged)
