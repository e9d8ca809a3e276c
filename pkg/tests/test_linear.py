import numpy as np
import pytest

from dynamod import (
    CostVector,
    F0Scores,
    LinearPair,
    ProxConfig,
    fit_joint_group_lasso,
    fit_l1_logistic_path,
    fit_least_squares,
    fit_weighted_logistic,
    gen_synthetic,
    group_soft_threshold,
    joint_smooth_loss,
    logistic_loss,
)


def _weighted_objective(w, X, y, weights, l2):
    X1 = np.column_stack([X, np.ones(len(X))])
    return float(np.sum(weights / len(y) * logistic_loss(y * (X1 @ w)))) + 0.5 * l2 * float(w @ w)


# --- weighted logistic --------------------------------------------------------

def test_weighted_logistic_separable_signs():
    X = np.array([[1.0], [-1.0]])
    y = np.array([1.0, -1.0])
    w = fit_weighted_logistic(X, y, np.ones(2), l2=0.1)
    margins = y * (X @ w[:-1] + w[-1])
    assert np.all(margins > 0)


def test_weighted_logistic_degenerate_weights():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
    weights = np.where(y > 0, 0.0, 1.0)  # only the -1 class counts
    w = fit_weighted_logistic(X, y, weights, l2=0.01)
    preds = X @ w[:-1] + w[-1]
    assert np.all(preds[y < 0] < 0)
    assert np.mean(preds < 0) > 0.9


def test_weighted_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = np.where(rng.random(30) > 0.4, 1.0, -1.0)
    weights = rng.uniform(0.1, 2.0, 30)
    l2 = 0.05
    w = fit_weighted_logistic(X, y, weights, l2=l2)
    h = 1e-5
    grad_fd = np.zeros(len(w))
    for j in range(len(w)):
        e = np.zeros(len(w))
        e[j] = h
        grad_fd[j] = (_weighted_objective(w + e, X, y, weights, l2)
                      - _weighted_objective(w - e, X, y, weights, l2)) / (2 * h)
    # at the optimum both the analytic and FD gradients are ~0
    assert np.max(np.abs(grad_fd)) < 1e-5


def test_weighted_logistic_gradient_norm_at_solution():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = np.where(rng.random(50) > 0.5, 1.0, -1.0)
    w = fit_weighted_logistic(X, y, np.ones(50), l2=0.1)
    X1 = np.column_stack([X, np.ones(50)])
    m = y * (X1 @ w)
    from dynamod import sigmoid
    grad = -(X1.T @ ((1 / 50) * sigmoid(-m) * y)) + 0.1 * w
    assert np.linalg.norm(grad) <= 1e-6


def test_weighted_logistic_uniform_weights_deterministic():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(25, 2))
    y = np.where(rng.random(25) > 0.5, 1.0, -1.0)
    w1 = fit_weighted_logistic(X, y, np.ones(25), l2=0.2)
    w2 = fit_weighted_logistic(X, y, np.full(25, 1.0), l2=0.2)
    assert np.array_equal(w1, w2)
    # and it matches an independent scipy minimization of the same objective
    import scipy.optimize
    res = scipy.optimize.minimize(
        lambda v: _weighted_objective(v, X, y, np.ones(25), 0.2),
        np.zeros(3), method="BFGS", options={"gtol": 1e-10})
    assert np.max(np.abs(w1 - res.x)) < 1e-5


def test_weighted_logistic_rejects_zero_weights():
    with pytest.raises(ValueError):
        fit_weighted_logistic(np.ones((3, 1)), np.ones(3), np.zeros(3))


# --- L1 path --------------------------------------------------------------------

def test_l1_path_heavy_penalty_gives_empty_and_singletons():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    w_true = np.array([2.0, 0.5, 0.0])
    y = np.where(X @ w_true + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
    supports = fit_l1_logistic_path(X, y, np.logspace(-4, 1, 15))
    assert () in supports
    assert any(len(s) == 1 for s in supports)


def test_l1_path_synthetic_first_feature_support():
    ds = gen_synthetic(0)
    supports = fit_l1_logistic_path(ds.X, ds.y, np.logspace(-3, 1, 20))
    assert (0,) in supports


def test_l1_path_enumeration_bound_d2():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    supports = fit_l1_logistic_path(X, y, np.logspace(-3, 1, 10))
    allowed = {(), (0,), (1,), (0, 1)}
    assert set(supports) <= allowed


def test_l1_path_rejects_bad_grid():
    with pytest.raises(ValueError):
        fit_l1_logistic_path(np.ones((3, 1)), np.ones(3), [])


# --- group soft threshold -------------------------------------------------------

def test_group_soft_threshold_zero_vector():
    assert group_soft_threshold((0.0, 0.0), 5.0) == (0.0, 0.0)


def test_group_soft_threshold_annihilation():
    assert group_soft_threshold((1.2, 1.6), 3.0) == (0.0, 0.0)  # norm 2 <= 3


def test_group_soft_threshold_shrinks_toward_zero():
    got = group_soft_threshold((3.0, 4.0), 2.5)
    assert got == pytest.approx((1.5, 2.0), abs=1e-12)
    # numeric oracle: minimize 0.5||x - v||^2 + t ||x|| over a local grid
    v = np.array([3.0, 4.0])
    t = 2.5
    span = np.linspace(-0.5, 3.5, 161)
    xs, ys = np.meshgrid(span, span + 1.0, indexing="ij")
    vals = 0.5 * ((xs - v[0]) ** 2 + (ys - v[1]) ** 2) + t * np.hypot(xs, ys)
    best = np.unravel_index(np.argmin(vals), vals.shape)
    assert abs(xs[best] - got[0]) < 0.05 and abs(ys[best] - got[1]) < 0.05


# --- joint group lasso ----------------------------------------------------------

def _random_problem(seed, n=80, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w_true = rng.normal(size=d)
    y = np.where(X @ w_true + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    q = rng.uniform(0, 1, n)
    f0 = F0Scores(-rng.uniform(0, 1, n))
    return X, y, q, f0


def test_joint_smooth_loss_gradient_finite_differences():
    rng = np.random.default_rng(6)
    X, y, q, _ = _random_problem(6)
    h = 1e-5
    for _ in range(20):
        g_w = rng.normal(size=5)
        f1_w = rng.normal(size=5)
        _, grad_g, grad_f1 = joint_smooth_loss(g_w, f1_w, X, y, q)
        for grad, w_sel in ((grad_g, "g"), (grad_f1, "f")):
            fd = np.zeros(5)
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                if w_sel == "g":
                    up = joint_smooth_loss(g_w + e, f1_w, X, y, q)[0]
                    dn = joint_smooth_loss(g_w - e, f1_w, X, y, q)[0]
                else:
                    up = joint_smooth_loss(g_w, f1_w + e, X, y, q)[0]
                    dn = joint_smooth_loss(g_w, f1_w - e, X, y, q)[0]
                fd[j] = (up - dn) / (2 * h)
            denom = max(1.0, float(np.linalg.norm(fd)))
            assert np.linalg.norm(grad - fd) / denom < 1e-5


def test_group_lasso_gamma_zero_q_zero_matches_plain_logistic():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(100, 3))
    w_true = np.array([1.0, -2.0, 0.5])
    flip = rng.random(100) < 0.15
    y = np.where((X @ w_true > 0) ^ flip, 1.0, -1.0)
    costs = CostVector.unit(3)
    pair = fit_joint_group_lasso(X, y, np.zeros(100), None, 0.0, costs,
                                 ProxConfig(max_iters=5000, tol=1e-12))
    ref = fit_weighted_logistic(X, y, np.ones(100), l2=0.0)
    assert np.max(np.abs(pair.f1 - ref)) < 1e-3


def test_group_lasso_huge_gamma_kills_all_features():
    X, y, q, f0 = _random_problem(8)
    costs = CostVector.unit(4)
    pair = fit_joint_group_lasso(X, y, q, f0, 1e6, costs, ProxConfig())
    assert np.all(pair.g[:-1] == 0.0)
    assert np.all(pair.f1[:-1] == 0.0)
    assert pair.features_used == frozenset()


def test_group_lasso_beats_random_points():
    X, y, q, f0 = _random_problem(9)
    costs = CostVector(np.array([1.0, 2.0, 0.5, 1.5]))
    gamma = 0.05
    Xs = (X - X.mean(0)) / X.std(0)  # evaluate in the solver's coordinates

    def objective(pair):
        val, _, _ = joint_smooth_loss(pair.g, pair.f1, Xs, y, q)
        return val + gamma * float(np.sum(costs.c * np.hypot(pair.g[:-1], pair.f1[:-1])))

    fitted = fit_joint_group_lasso(Xs, y, q, f0, gamma, costs,
                                   ProxConfig(max_iters=4000, tol=1e-12))
    rng = np.random.default_rng(10)
    candidates = [LinearPair(np.zeros(5), np.zeros(5))]
    candidates += [LinearPair(rng.normal(size=5), rng.normal(size=5)) for _ in range(10)]
    fitted_obj = objective(fitted)
    for cand in candidates:
        assert fitted_obj <= objective(cand) + 1e-9


def test_group_lasso_zero_group_means_both_zero():
    X, y, q, f0 = _random_problem(11)
    costs = CostVector.unit(4)
    pair = fit_joint_group_lasso(X, y, q, f0, 0.3, costs, ProxConfig())
    for alpha in range(4):
        in_group = alpha in pair.features_used
        if not in_group:
            assert pair.g[alpha] == 0.0 and pair.f1[alpha] == 0.0


def test_group_lasso_dimension_mismatch():
    X, y, q, f0 = _random_problem(12)
    with pytest.raises(ValueError):
        fit_joint_group_lasso(X, y, q[:-1], f0, 0.1, CostVector.unit(4), ProxConfig())


# --- least squares ---------------------------------------------------------------

def test_least_squares_exact_recovery():
    rng = np.random.default_rng(13)
    phi = rng.normal(size=(20, 4))
    w_true = rng.normal(size=4)
    targets = phi @ w_true
    w = fit_least_squares(phi, targets, ridge=0.0)
    assert np.max(np.abs(w - w_true)) < 1e-8
    assert np.max(np.abs(phi @ w - targets)) < 1e-8


def test_least_squares_huge_ridge_shrinks_to_zero():
    rng = np.random.default_rng(14)
    phi = rng.normal(size=(20, 3))
    targets = rng.normal(size=20)
    w = fit_least_squares(phi, targets, ridge=1e12)
    assert np.max(np.abs(w)) < 1e-9


def test_least_squares_matches_pseudo_inverse():
    rng = np.random.default_rng(15)
    phi = rng.normal(size=(5, 3))
    targets = rng.normal(size=5)
    w = fit_least_squares(phi, targets, ridge=0.0)
    w_ref = np.linalg.pinv(phi) @ targets
    assert np.max(np.abs(w - w_ref)) < 1e-8


def test_least_squares_singular_without_ridge():
    phi = np.ones((4, 2))  # duplicated column
    with pytest.raises(ValueError, match="singular|residual"):
        fit_least_squares(phi, np.ones(4), ridge=0.0)
    w = fit_least_squares(phi, np.ones(4), ridge=1e-6)
    assert np.all(np.isfinite(w))
