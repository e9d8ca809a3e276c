"""Linear-model solvers: weighted logistic regression, the L1 logistic
support path, the joint group-lasso over (gate, predictor), and ridge
least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import CostVector
from .losses import logistic_loss, sigmoid


@dataclass(frozen=True)
class LinearPair:
    """Gate and cheap-predictor weight vectors over a shared feature space.

    Both vectors have d+1 entries: d feature weights plus a free intercept.
    A feature counts as used when either model gives it nonzero weight.
    """

    g: np.ndarray
    f1: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        f1 = np.asarray(self.f1, dtype=float)
        if g.shape != f1.shape or g.ndim != 1 or len(g) < 2:
            raise ValueError("g and f1 must be equal-length vectors of size d+1")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(f1))):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "f1", f1)

    @property
    def features_used(self) -> frozenset[int]:
        return frozenset(np.flatnonzero((self.g[:-1] != 0) | (self.f1[:-1] != 0)).tolist())


@dataclass(frozen=True)
class ProxConfig:
    max_iters: int = 2000
    tol: float = 1e-9
    step0: float = 1.0
    backtrack: float = 0.5

    def __post_init__(self):
        if self.tol <= 0 or not 0.0 < self.backtrack < 1.0 or self.step0 <= 0:
            raise ValueError("ProxConfig requires tol > 0, step0 > 0, backtrack in (0,1)")


def _with_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.column_stack([X, np.ones(len(X))])


def standardize_columns(X):
    """Column-wise zero-mean/unit-variance transform; constant columns keep sd 1."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd


def weights_to_raw(w, mu, sd):
    """Map a standardized-space weight vector (with intercept) to raw space."""
    w = np.asarray(w, dtype=float)
    raw = np.empty_like(w)
    raw[:-1] = w[:-1] / sd
    raw[-1] = w[-1] - float(np.sum(w[:-1] * mu / sd))
    return raw


def weights_to_std(w, mu, sd):
    """Inverse of weights_to_raw."""
    w = np.asarray(w, dtype=float)
    std = np.empty_like(w)
    std[:-1] = w[:-1] * sd
    std[-1] = w[-1] + float(np.sum(w[:-1] * mu))
    return std


def fit_weighted_logistic(X, y, weights, l2: float = 0.0,
                          max_iters: int = 100, grad_tol: float = 1e-8) -> np.ndarray:
    """Newton minimization of (1/N) sum_i w_i log(1+e^{-y_i f.x_i}) + l2 ||f||^2 / 2.

    Returns the d+1 weight vector (intercept last). Deterministic from the
    zero initialization; converges to gradient norm <= grad_tol whenever a
    finite minimizer exists (l2 > 0 or non-separable data).
    """
    y = np.asarray(y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(weights > 0):
        raise ValueError("at least one weight must be positive")
    X1 = _with_intercept(X)
    n, k = X1.shape
    sw = weights / n
    w = np.zeros(k)

    def objective(wv):
        return float(np.sum(sw * logistic_loss(y * (X1 @ wv)))) + 0.5 * l2 * float(wv @ wv)

    obj = objective(w)
    for _ in range(max_iters):
        m = y * (X1 @ w)
        p = sigmoid(-m)
        grad = -(X1.T @ (sw * p * y)) + l2 * w
        if np.linalg.norm(grad) <= grad_tol:
            break
        h = sw * p * sigmoid(m)
        hess = X1.T @ (X1 * h[:, None]) + l2 * np.eye(k)
        try:
            step = scipy.linalg.solve(hess, grad, assume_a="pos")
        except scipy.linalg.LinAlgError:
            hess = hess + 1e-10 * (1.0 + np.trace(hess) / k) * np.eye(k)
            step = scipy.linalg.solve(hess, grad, assume_a="pos")
        t = 1.0
        descent = float(grad @ step)
        while t > 1e-12:
            cand = w - t * step
            cand_obj = objective(cand)
            if cand_obj <= obj - 1e-4 * t * descent:
                break
            t *= 0.5
        w = w - t * step
        obj = objective(w)
    return w


def _soften_l1(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_l1_logistic_path(X, y, c_grid) -> list[tuple[int, ...]]:
    """L1-regularized logistic path and the nested supports it induces.

    For each C, minimizes (1/N) sum_i log(1+e^{-y_i w.x_i}) + (1/(N C)) |w|_1
    (intercept free) by proximal gradient on standardized features, then
    emits every support obtained by thresholding |weights| at each distinct
    nonzero magnitude; the union over the grid is de-duplicated in order of
    first appearance.
    """
    c_grid = [float(c) for c in c_grid]
    if not c_grid or any(c <= 0 for c in c_grid):
        raise ValueError("c_grid must be nonempty and positive")
    y = np.asarray(y, dtype=float)
    Xs, _, _ = standardize_columns(X)
    X1 = _with_intercept(Xs)
    n, k = X1.shape

    def smooth(wv):
        m = y * (X1 @ wv)
        val = float(np.mean(logistic_loss(m)))
        grad = -(X1.T @ (sigmoid(-m) * y)) / n
        return val, grad

    supports: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()

    def emit(sup: tuple[int, ...]) -> None:
        if sup not in seen:
            seen.add(sup)
            supports.append(sup)

    w = np.zeros(k)
    for c in sorted(c_grid):
        lam = 1.0 / (n * c)
        step = 1.0
        val, grad = smooth(w)
        for _ in range(3000):
            while True:
                cand = w - step * grad
                cand[:-1] = _soften_l1(cand[:-1], step * lam)
                diff = cand - w
                cand_val, cand_grad = smooth(cand)
                if cand_val <= val + float(grad @ diff) + float(diff @ diff) / (2 * step):
                    break
                step *= 0.5
            old_total = val + lam * float(np.abs(w[:-1]).sum())
            w, val, grad = cand, cand_val, cand_grad
            new_total = val + lam * float(np.abs(w[:-1]).sum())
            if abs(old_total - new_total) <= 1e-10 * max(1.0, abs(old_total)):
                break
            step = min(step * 2.0, 1e4)
        mags = np.abs(w[:-1])
        nonzero = np.flatnonzero(mags)
        if len(nonzero) == 0:
            emit(())
        for t in sorted(set(mags[nonzero]), reverse=True):
            emit(tuple(np.flatnonzero(mags >= t).tolist()))
    return supports


def group_soft_threshold(pair_alpha: tuple[float, float], t: float) -> tuple[float, float]:
    """Proximal map of t * ||(g_a, f1_a)||_2: shrink the pair toward zero jointly."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    ga, fa = float(pair_alpha[0]), float(pair_alpha[1])
    norm = float(np.hypot(ga, fa))
    if norm <= t:
        return (0.0, 0.0)
    scale = 1.0 - t / norm
    return (scale * ga, scale * fa)


def joint_smooth_loss(g_w, f1_w, X, y, q):
    """Smooth part of the joint gate/predictor objective, with gradients.

    value = (1/N) sum_i [ (1-q_i)(loss(y_i f1.x_i) + log(1+e^{g.x_i}))
                          + q_i log(1+e^{-g.x_i}) ]
    Returns (value, grad wrt g, grad wrt f1), both gradients of length d+1.
    """
    X1 = _with_intercept(X)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    n = len(y)
    m1 = X1 @ np.asarray(f1_w, dtype=float)
    mg = X1 @ np.asarray(g_w, dtype=float)
    keep = 1.0 - q
    value = float(np.mean(keep * (logistic_loss(y * m1) + logistic_loss(-mg))
                          + q * logistic_loss(mg)))
    grad_f1 = -(X1.T @ (keep * y * sigmoid(-y * m1))) / n
    grad_g = (X1.T @ (keep * sigmoid(mg) - q * sigmoid(-mg))) / n
    return value, grad_g, grad_f1


def fit_joint_group_lasso(X, y, q, f0, gamma: float, costs: CostVector,
                          cfg: ProxConfig, init: LinearPair | None = None) -> LinearPair:
    """Joint gate/predictor fit with a cost-weighted group-lasso penalty.

    Minimizes the smooth routing-weighted log-loss plus
    gamma * sum_a c_a sqrt(g_a^2 + f1_a^2) by proximal gradient with
    backtracking (monotone by construction). Features are standardized
    internally and the returned pair is mapped back to the caller's
    coordinates; intercepts are never penalized. The full-model scores f0
    enter the alternating objective only as an additive constant, so they do
    not affect this subproblem.
    """
    del f0  # constant w.r.t. (g, f1); kept for a uniform solver signature
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    X = np.asarray(X, dtype=float)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if X.shape[0] != len(y) or len(q) != len(y):
        raise ValueError("X, y, q must agree on the number of examples")
    if len(costs.c) != X.shape[1]:
        raise ValueError("costs length must match feature count")

    Xs, mu, sd = standardize_columns(X)
    d = X.shape[1]
    if init is None:
        g_w = np.zeros(d + 1)
        f1_w = np.zeros(d + 1)
    else:
        g_w = weights_to_std(init.g, mu, sd)
        f1_w = weights_to_std(init.f1, mu, sd)

    group_cost = gamma * costs.c

    def penalty(gv, fv):
        return float(np.sum(group_cost * np.hypot(gv[:-1], fv[:-1])))

    def prox(gv, fv, step):
        norms = np.hypot(gv[:-1], fv[:-1])
        shrink = np.zeros(d)
        np.divide(np.maximum(norms - step * group_cost, 0.0), norms,
                  out=shrink, where=norms > 0)
        out_g = gv.copy()
        out_f = fv.copy()
        out_g[:-1] *= shrink
        out_f[:-1] *= shrink
        return out_g, out_f

    value, grad_g, grad_f1 = joint_smooth_loss(g_w, f1_w, Xs, y, q)
    total = value + penalty(g_w, f1_w)
    step = cfg.step0
    for _ in range(cfg.max_iters):
        while True:
            cand_g, cand_f1 = prox(g_w - step * grad_g, f1_w - step * grad_f1, step)
            dg = cand_g - g_w
            df = cand_f1 - f1_w
            cand_value, cand_grad_g, cand_grad_f1 = joint_smooth_loss(cand_g, cand_f1, Xs, y, q)
            bound = value + float(grad_g @ dg) + float(grad_f1 @ df) \
                + (float(dg @ dg) + float(df @ df)) / (2 * step)
            if cand_value <= bound + 1e-14 * max(1.0, abs(value)):
                break
            step *= cfg.backtrack
            if step < 1e-16:
                break
        new_total = cand_value + penalty(cand_g, cand_f1)
        if not np.isfinite(new_total):
            raise FloatingPointError("joint objective became non-finite")
        if new_total > total + 1e-12 * max(1.0, abs(total)):
            # Backtracking guarantees descent; a violation means the step
            # underflowed, so stop at the current iterate.
            break
        g_w, f1_w = cand_g, cand_f1
        value, grad_g, grad_f1 = cand_value, cand_grad_g, cand_grad_f1
        converged = abs(total - new_total) <= cfg.tol * max(1.0, abs(total))
        total = new_total
        if converged:
            break
        step = min(step * 2.0, 1e4)

    return LinearPair(weights_to_raw(g_w, mu, sd), weights_to_raw(f1_w, mu, sd))


def fit_least_squares(phi, targets, ridge: float = 0.0) -> np.ndarray:
    """Solve min_w sum_i (target_i - w.phi_i)^2 + ridge ||w||^2 by normal equations."""
    phi = np.asarray(phi, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != len(targets) or phi.shape[0] < 1:
        raise ValueError("phi must be n x k with one target per row")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    k = phi.shape[1]
    gram = phi.T @ phi + ridge * np.eye(k)
    rhs = phi.T @ targets
    try:
        w = scipy.linalg.solve(gram, rhs, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("singular least-squares system (ridge = 0?)") from exc
    resid = float(np.linalg.norm(gram @ w - rhs))
    if not np.isfinite(resid) or resid > 1e-8 * max(1.0, float(np.linalg.norm(rhs))):
        raise ValueError("least-squares solve failed the residual check; system near singular")
    return w
