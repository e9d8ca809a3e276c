import math

import numpy as np
import pytest

from dynamod import (
    F0Scores,
    composite_nll,
    deviance,
    entropy,
    kl_bernoulli,
    logistic_loss,
    sigmoid,
    sym_logodds_dist,
)


def test_logistic_loss_at_zero():
    assert logistic_loss(0.0) == pytest.approx(math.log(2), abs=1e-12)


def test_logistic_loss_negative_margin():
    assert logistic_loss(-1.0) == pytest.approx(math.log(1 + math.e), abs=1e-12)


def test_logistic_loss_huge_margin_no_overflow():
    value = float(logistic_loss(1000.0))
    assert 0.0 <= value < 1e-300
    assert np.isfinite(logistic_loss(-1000.0))


def test_sigmoid_basics():
    assert sigmoid(0.0) == 0.5
    assert float(sigmoid(800.0)) == 1.0
    assert sigmoid(-math.log(3)) == pytest.approx(0.25, abs=1e-15)


def test_sigmoid_complement_identity():
    rng = np.random.default_rng(0)
    t = rng.uniform(-40, 40, size=1000)
    assert np.max(np.abs(sigmoid(t) + sigmoid(-t) - 1.0)) <= 1e-15


def test_deviance():
    assert deviance(0.7, 0.7) == 0.0
    assert deviance(1.3133, 0.6931) == pytest.approx(0.6202, abs=1e-12)
    assert deviance(0.1, 0.9) == pytest.approx(-0.8, abs=1e-12)


def test_kl_bernoulli_cases():
    assert kl_bernoulli(0.3, 0.3) == 0.0
    assert kl_bernoulli(1.0, 0.5) == pytest.approx(math.log(2), abs=1e-12)
    # direct-summation oracle for (0.8, 0.2)
    expected = 0.8 * math.log(0.8 / 0.2) + 0.2 * math.log(0.2 / 0.8)
    assert kl_bernoulli(0.8, 0.2) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.8318, abs=5e-5)


def test_kl_bernoulli_nonnegative_sweep():
    rng = np.random.default_rng(1)
    q = rng.random(10_000)
    p = rng.random(10_000)
    vals = kl_bernoulli(q, p)
    assert np.all(vals >= 0)
    same = kl_bernoulli(q, q)
    assert np.max(np.abs(same)) <= 1e-12
    apart = np.abs(q - p) > 1e-3
    assert np.all(vals[apart] > 0)


def test_sym_logodds_dist():
    g = 1.37
    assert sym_logodds_dist(sigmoid(g), g) == pytest.approx(0.0, abs=1e-12)
    assert sym_logodds_dist(0.5, 0.0) == 0.0
    assert sym_logodds_dist(0.75, 0.0) == pytest.approx(math.log(3) ** 2, abs=1e-12)


def test_entropy():
    assert entropy(0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy(0.0) == 0.0
    assert entropy(1.0) == 0.0
    expected = -0.25 * math.log(0.25) - 0.75 * math.log(0.75)
    assert entropy(0.25) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.5623, abs=5e-5)
    rng = np.random.default_rng(2)
    q = rng.random(100)
    assert np.allclose(entropy(q), entropy(1 - q))


def test_composite_nll_tight_at_matched_gate():
    for g, level in [(0.3, 0.9), (-2.0, 0.25), (1.5, 2.0)]:
        q0 = float(sigmoid(g))
        lhs, rhs = composite_nll(q0, g, level, -level)
        assert lhs == pytest.approx(level, abs=1e-12)
        assert rhs == pytest.approx(level, abs=1e-12)


def test_composite_nll_kl_gap_case():
    # everything routed against a gate that is nearly certain of the cheap path
    lhs, rhs = composite_nll(1.0, -10.0, 0.1, -0.1)
    assert lhs <= rhs + 1e-9
    gap = float(rhs - lhs)
    assert gap == pytest.approx(10.0, abs=0.1)


def test_composite_nll_jensen_property():
    rng = np.random.default_rng(3)
    q = rng.random(1000)
    g = rng.uniform(-20, 20, 1000)
    loss_f1 = rng.uniform(0, 10, 1000)
    logp = -rng.uniform(0, 10, 1000)
    lhs, rhs = composite_nll(q, g, loss_f1, logp)
    assert np.all(lhs <= rhs + 1e-9)


def _routing_objective(q0, p_y, p_z, loss_full):
    # posterior-weighted loss plus KL(posterior || gate), with the cheap
    # model's loss equal to -log P(y|cheap)
    return (q0 * loss_full + (1 - q0) * (-np.log(p_y))
            + float(kl_bernoulli(q0, p_z)))


def test_midpoint_convexity_of_routing_objective_slices():
    # The objective equals sum_z rel_entr(q_z, m_z) + const with
    # m = (p_z * P(y|full), (1-p_z) * P(y|cheap)), which is jointly convex in
    # (q, m). m is affine in each probability separately, so the objective is
    # midpoint-convex on every (q, P(y|cheap)) and (q, P(route|gate)) slice.
    # These slice convexities are what make each alternating half-step a
    # convex projection.
    rng = np.random.default_rng(4)
    for _ in range(2500):
        pa = rng.uniform(0.01, 0.99, size=6)
        loss_full = rng.uniform(0, 5)
        mid = _routing_objective(0.5 * (pa[0] + pa[1]), 0.5 * (pa[2] + pa[3]), pa[4], loss_full)
        avg = 0.5 * (_routing_objective(pa[0], pa[2], pa[4], loss_full)
                     + _routing_objective(pa[1], pa[3], pa[4], loss_full))
        assert mid <= avg + 1e-9
        mid = _routing_objective(0.5 * (pa[0] + pa[1]), pa[2], 0.5 * (pa[3] + pa[4]), loss_full)
        avg = 0.5 * (_routing_objective(pa[0], pa[2], pa[3], loss_full)
                     + _routing_objective(pa[1], pa[2], pa[4], loss_full))
        assert mid <= avg + 1e-9


def test_midpoint_convexity_in_mixture_measure():
    # Joint convexity holds in (q, m) coordinates, m the unnormalized
    # two-point mixture measure: L = sum_z rel_entr(q_z, m_z).
    from scipy.special import rel_entr

    def in_m(q0, m0, m1):
        return float(rel_entr(q0, m0) + rel_entr(1 - q0, m1))

    rng = np.random.default_rng(5)
    for _ in range(2500):
        a = rng.uniform(0.01, 0.99, size=3)
        b = rng.uniform(0.01, 0.99, size=3)
        mid = in_m(*(0.5 * (a + b)))
        avg = 0.5 * (in_m(*a) + in_m(*b))
        assert mid <= avg + 1e-9


def test_joint_three_way_convexity_fails():
    # Pinned counterexample: convexity does NOT extend to simultaneous
    # movement of both model probabilities (the mixture measure is bilinear
    # in them), so the three-way midpoint property is intentionally not
    # asserted above.
    base = np.array([0.5, 0.5, 0.5])
    direction = np.array([1.0, -1.0, 0.5])
    direction /= np.linalg.norm(direction)
    lo = base - 0.1 * direction
    hi = base + 0.1 * direction
    mid = _routing_objective(*base, 1.0)
    avg = 0.5 * (_routing_objective(*lo, 1.0) + _routing_objective(*hi, 1.0))
    assert mid > avg + 1e-4


def test_f0_scores_clamping_and_io(tmp_path):
    scores = F0Scores(np.array([-0.5, -100.0, 0.2, -np.inf]))
    assert np.all(scores.logp <= 0)
    assert np.all(scores.logp >= -50.0)
    assert scores.logp[2] == 0.0
    path = tmp_path / "scores.csv"
    scores.save(path)
    again = F0Scores.load(path)
    assert np.array_equal(scores.logp, again.logp)
    with pytest.raises(ValueError):
        F0Scores(np.array([0.0, np.nan]))


def test_f0_scores_from_margins_nonpositive():
    rng = np.random.default_rng(5)
    margins = rng.normal(size=50)
    y = np.where(rng.random(50) > 0.5, 1.0, -1.0)
    scores = F0Scores.from_margins(margins, y)
    assert np.all(scores.logp <= 0)
    assert scores.source == "trained"
