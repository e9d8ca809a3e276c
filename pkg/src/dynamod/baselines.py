"""Comparator systems: the greedy L1 pipeline, confidence-threshold gating,
and uniform random gating."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CostVector, Dataset
from .linear import fit_l1_logistic_path, fit_weighted_logistic
from .losses import F0Scores
from .training import AdaptiveSystem

DEFAULT_C_GRID = np.logspace(-3, 1, 20)
DEFAULT_CLASS_WEIGHTS = np.linspace(0.1, 0.9, 9)


@dataclass(frozen=True)
class GateThreshold:
    """Confidence margin below which an example leaves the cheap model."""

    tau: float

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError("tau must be finite and nonnegative")


@dataclass(frozen=True)
class SupportLinearScorer:
    """Affine scorer whose weights live on a fixed feature subset."""

    support: tuple[int, ...]
    weights: np.ndarray  # len(support) entries plus intercept

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X[:, list(self.support)] @ self.weights[:-1] + self.weights[-1]

    @property
    def features_used(self) -> frozenset[int]:
        nz = np.flatnonzero(self.weights[:-1] != 0)
        return frozenset(self.support[i] for i in nz)


@dataclass(frozen=True)
class ConfidenceScorer:
    """Gate score tau - |f1(x)|: positive exactly when confidence is low.

    Reuses the wrapped predictor's margin, so it adds no feature cost.
    """

    f1: object
    tau: float

    def scores(self, X) -> np.ndarray:
        return self.tau - np.abs(self.f1.scores(X))

    @property
    def features_used(self) -> frozenset[int]:
        return frozenset()


@dataclass(frozen=True)
class UniformRandomScorer:
    """Routes each row independently with probability p, keyed by (seed, row index)."""

    p: float
    seed: int

    def scores(self, X) -> np.ndarray:
        draws = np.random.default_rng(self.seed).random(len(X))
        return self.p - draws

    @property
    def features_used(self) -> frozenset[int]:
        return frozenset()


def greedy_l1_pipeline(train: Dataset, val: Dataset, f0: F0Scores, costs: CostVector,
                       class_weight_grid=None, c_grid=None,
                       l2: float = 1.0) -> list[AdaptiveSystem]:
    """Two-stage baseline: L1 support selection, then per-support gate sweeps.

    For every support in the L1 logistic path, the cheap predictor is the
    ridge logistic fit restricted to that support. The gate is trained on the
    same support against pseudo-labels marking where the predictor is
    correct, once per class weight in the grid; its sign is flipped so a
    positive score means route to the full model. Empty supports are skipped
    with a printed notice. Validation routing fractions are recorded in each
    system's metadata; accuracy/cost selection happens in the sweep layer,
    which holds validation-aligned full-model scores.
    """
    if class_weight_grid is None:
        class_weight_grid = DEFAULT_CLASS_WEIGHTS
    if c_grid is None:
        c_grid = DEFAULT_C_GRID
    class_weight_grid = [float(w) for w in class_weight_grid]
    if not class_weight_grid:
        raise ValueError("class_weight_grid must be nonempty")

    systems: list[AdaptiveSystem] = []
    for support in fit_l1_logistic_path(train.X, train.y, c_grid):
        if not support:
            print("greedy_l1_pipeline: skipping empty support")
            continue
        cols = list(support)
        Xs = train.X[:, cols]
        f1_w = fit_weighted_logistic(Xs, train.y, np.ones(train.n), l2=l2)
        f1 = SupportLinearScorer(tuple(support), f1_w)
        correct = np.sign(f1.scores(train.X)) * train.y > 0
        pseudo = np.where(correct, 1.0, -1.0)
        for w in class_weight_grid:
            # w is the weight on the "predictor was wrong" class.
            sample_w = np.where(correct, 1.0 - w, w)
            if not np.any(sample_w > 0):
                continue
            gate_w = fit_weighted_logistic(Xs, pseudo, sample_w, l2=l2)
            gate = SupportLinearScorer(tuple(support), -gate_w)
            meta = {
                "algorithm": "greedy",
                "params": {"support": tuple(support), "class_weight": w,
                           "gamma": None, "p_full": None, "lr": None},
            }
            sys = AdaptiveSystem(gate, f1, costs, "linear", f0=f0, meta=meta)
            meta["val_frac_routed"] = float(np.mean(gate.scores(val.X) > 0))
            systems.append(sys)
    return systems


def confidence_gate(f1_scorer, tau: float, costs: CostVector,
                    f0=None) -> AdaptiveSystem:
    """Route to the full model exactly when the predictor margin is inside tau."""
    threshold = GateThreshold(tau)
    meta = {"algorithm": "confidence",
            "params": {"tau": threshold.tau, "gamma": None, "p_full": None, "lr": None}}
    return AdaptiveSystem(ConfidenceScorer(f1_scorer, threshold.tau), f1_scorer,
                          costs, "baseline", f0=f0, meta=meta)


def uniform_gate(f1_scorer, p: float, seed: int, costs: CostVector,
                 f0=None) -> AdaptiveSystem:
    """Route each example independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    meta = {"algorithm": "uniform",
            "params": {"p": p, "seed": seed, "gamma": None, "p_full": p, "lr": None}}
    return AdaptiveSystem(UniformRandomScorer(p, seed), f1_scorer, costs,
                          "baseline", f0=f0, meta=meta)
