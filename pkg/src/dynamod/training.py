"""Alternating-minimization trainers, the composite objective, adaptive
prediction, and cost/accuracy evaluation.

Three trainers share the same outer structure: project the routing
posterior q against the current scores, then refit the gate and cheap
predictor with q held fixed. They differ in model family and in the
distance tying q to the gate (entropic closed form vs. symmetrized
squared log-odds).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .data import CostVector, Dataset
from .linear import (
    LinearPair,
    ProxConfig,
    fit_joint_group_lasso,
    fit_least_squares,
    fit_weighted_logistic,
    standardize_columns,
    weights_to_raw,
    weights_to_std,
)
from .losses import F0Scores, entropy, logistic_loss, logit
from .projection import AdmmConfig, compute_terms_kl, i_project_kl, project_symmetrized
from .trees import (
    Ensemble,
    EnsemblePair,
    boost_pair_round,
    ensemble_from_dict,
    ensemble_to_dict,
    fit_greedymiser,
    leaf_transform,
    leaf_values,
)

LN2 = math.log(2.0)


def _sign_label(scores) -> np.ndarray:
    """Margins to {-1,+1}; a zero margin counts as +1."""
    return np.where(np.asarray(scores) >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class LinearScorer:
    """Affine scorer over raw features; weights has d feature entries plus intercept."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self.weights[:-1] + self.weights[-1]

    @property
    def features_used(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.weights[:-1] != 0).tolist())


@dataclass(frozen=True)
class LeafLinearScorer:
    """Linear scorer over a fixed ensemble's leaf-membership features.

    The design row for x is [one-hot leaves, |base score(x)|, 1]; evaluating
    it touches exactly the base ensemble's features.
    """

    base: Ensemble
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def scores(self, X) -> np.ndarray:
        phi = leaf_transform(self.base, X)
        return phi @ self.weights[:-1] + self.weights[-1]

    @property
    def features_used(self) -> frozenset[int]:
        return self.base.features_used


F0Source = Union[F0Scores, Ensemble]


@dataclass(frozen=True)
class AdaptiveSystem:
    """Gate + cheap predictor + full-model score source, ready to evaluate.

    Routing is the hard decision gate score > 0 (ties stay local, keeping
    cost minimal). An unrouted prediction touches only the union of the
    gate's and predictor's features; a routed one pays the full-model cost.
    """

    gate: object
    f1: object
    costs: CostVector
    kind: str
    f0: F0Source | None = None
    meta: dict = field(default_factory=dict)

    def local_cost(self) -> float:
        used = sorted(self.gate.features_used | self.f1.features_used)
        return float(np.sum(self.costs.c[used])) if used else 0.0


@dataclass(frozen=True)
class TradeoffPoint:
    accuracy: float
    avg_cost: float
    frac_to_f0: float
    params: dict = field(default_factory=dict)

    def dominates(self, other: "TradeoffPoint") -> bool:
        ge = self.accuracy >= other.accuracy and self.avg_cost <= other.avg_cost
        strict = self.accuracy > other.accuracy or self.avg_cost < other.avg_cost
        return ge and strict


@dataclass
class TrainConfig:
    """Knobs shared by the trainers; cost pressure comes from p_full and gamma."""

    p_full: float = 0.5
    gamma: float = 0.0
    max_outer: int | None = None
    tol: float = 1e-5
    seed: int = 0
    init_l2: float = 1e-2
    lstsq_ridge: float = 1e-6
    f1_l2: float = 1e-6
    n_rounds: int = 100
    tree_depth: int = 4
    tree_min_leaf: int = 1
    learning_rate: float = 0.1
    tau: float | None = None
    init_pair: LinearPair | None = None
    prox: ProxConfig = field(default_factory=ProxConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        if not 0.0 <= self.p_full <= 1.0:
            raise ValueError("p_full must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.tol < 0 or self.n_rounds < 1 or self.tree_depth < 1:
            raise ValueError("invalid solver configuration")


def _resolve_f0_logp(f0: F0Source, data: Dataset) -> np.ndarray:
    if isinstance(f0, F0Scores):
        if len(f0) != data.n:
            raise ValueError("f0 scores are not aligned to this dataset")
        return f0.logp
    margins = f0.scores(data.X)
    return F0Scores.from_margins(margins, data.y, source="trained").logp


def _f0_labels(f0: F0Source, data: Dataset) -> np.ndarray:
    if isinstance(f0, F0Scores):
        if len(f0) != data.n:
            raise ValueError("f0 scores are not aligned to this dataset")
        correct = f0.logp >= -LN2
        return np.where(correct, data.y, -data.y)
    return _sign_label(f0.scores(data.X))


def predict(sys: AdaptiveSystem, X, f0: F0Source | np.ndarray | None = None):
    """Labels, routing flags, and per-example costs for a feature matrix.

    f0 must be a margin source here (an ensemble or a margin array); stored
    per-split score tables carry no label information of their own, so use
    evaluate() with those.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    gate_scores = sys.gate.scores(X)
    routed = gate_scores > 0
    labels = _sign_label(sys.f1.scores(X))
    if routed.any():
        f0 = sys.f0 if f0 is None else f0
        if isinstance(f0, Ensemble):
            f0_margins = f0.scores(X)
        elif isinstance(f0, np.ndarray):
            f0_margins = f0
        else:
            raise TypeError("predict needs full-model margins; use evaluate() with score tables")
        labels = np.where(routed, _sign_label(f0_margins), labels)
    costs = np.where(routed, sys.costs.total, sys.local_cost())
    return labels, routed, costs


def evaluate(sys: AdaptiveSystem, data: Dataset, f0: F0Source | None = None) -> TradeoffPoint:
    """Accuracy, average acquisition cost, and routed fraction on a split."""
    f0 = sys.f0 if f0 is None else f0
    if f0 is None:
        raise ValueError("no full-model score source available")
    gate_scores = sys.gate.scores(data.X)
    routed = gate_scores > 0
    labels = np.where(routed, _f0_labels(f0, data), _sign_label(sys.f1.scores(data.X)))
    costs = np.where(routed, sys.costs.total, sys.local_cost())
    return TradeoffPoint(
        accuracy=float(np.mean(labels == data.y)),
        avg_cost=float(np.mean(costs)),
        frac_to_f0=float(np.mean(routed)),
        params=dict(sys.meta.get("params", {})),
    )


def _penalty_value(sys: AdaptiveSystem, gamma: float, costs: CostVector) -> float:
    if sys.kind == "linear":
        g = sys.gate.weights[:-1]
        f1 = sys.f1.weights[:-1]
        return gamma * float(np.sum(costs.c * np.hypot(g, f1)))
    if sys.kind == "ensemble_pair":
        used = sorted(sys.gate.features_used | sys.f1.features_used)
        return gamma * (float(np.sum(costs.c[used])) if used else 0.0)
    return 0.0


def objective_opt2(sys: AdaptiveSystem, q, data: Dataset, f0: F0Source,
                   gamma: float, costs: CostVector, distance: str = "kl") -> float:
    """Empirical routing objective: expected loss + gate distance + cost penalty.

    The KL branch is evaluated through the logistic-loss identity
    KL(q || sigmoid(g)) = q*loss(g) + (1-q)*loss(-g) - H(q), which matches the
    per-example routing terms exactly and therefore keeps the q-projection an
    exact minimizer of this function.
    """
    q = np.asarray(q, dtype=float)
    logp = _resolve_f0_logp(f0, data)
    m1 = data.y * sys.f1.scores(data.X)
    g = sys.gate.scores(data.X)
    data_term = q * (-logp) + (1.0 - q) * logistic_loss(m1)
    if distance == "kl":
        dist = q * logistic_loss(g) + (1.0 - q) * logistic_loss(-g) - entropy(q)
    elif distance == "symmetrized":
        dist = (logit(q) - g) ** 2
    else:
        raise ValueError(f"unknown distance '{distance}'")
    return float(np.mean(data_term + dist)) + _penalty_value(sys, gamma, costs)


def _relative_change(prev: float, cur: float) -> float:
    return abs(prev - cur) / max(1.0, abs(prev))


def train_dynamod_lin(train: Dataset, f0: F0Scores, costs: CostVector,
                      cfg: TrainConfig) -> AdaptiveSystem:
    """Alternate the entropic q-projection with the joint group-lasso fit.

    The predictor starts at the ridge logistic fit on all features and the
    gate at zero, overridable through cfg.init_pair; the alternation only
    finds a local optimum and its basin depends on the initialization, so
    sweeps over seeded random init pairs are a normal part of the training
    protocol (selection happens on validation, like any other swept
    parameter). Features are standardized once with training statistics; the
    loop runs in that coordinate system (so the recorded objective trace is
    exactly the function both half-steps minimize, hence non-increasing) and
    the final weights are mapped back to raw coordinates.
    """
    if len(f0) != train.n:
        raise ValueError("f0 scores are not aligned to the training split")
    max_outer = 50 if cfg.max_outer is None else cfg.max_outer
    Xs, mu, sd = standardize_columns(train.X)
    ds_s = Dataset(Xs, train.y, train.feature_names)

    def interim(p: LinearPair) -> AdaptiveSystem:
        return AdaptiveSystem(LinearScorer(p.g), LinearScorer(p.f1), costs, "linear")

    if cfg.init_pair is not None:
        pair = LinearPair(weights_to_std(cfg.init_pair.g, mu, sd),
                          weights_to_std(cfg.init_pair.f1, mu, sd))
    else:
        f1_w = fit_weighted_logistic(Xs, train.y, np.ones(train.n), l2=cfg.init_l2)
        pair = LinearPair(np.zeros(train.d + 1), f1_w)

    q = np.full(train.n, cfg.p_full)
    trace = [objective_opt2(interim(pair), q, ds_s, f0, cfg.gamma, costs, "kl")]
    converged = False
    for _ in range(max_outer):
        terms = compute_terms_kl(train.y * interim(pair).f1.scores(Xs),
                                 interim(pair).gate.scores(Xs), f0)
        q = i_project_kl(terms, cfg.p_full).q
        trace.append(objective_opt2(interim(pair), q, ds_s, f0, cfg.gamma, costs, "kl"))
        pair = fit_joint_group_lasso(Xs, train.y, q, f0, cfg.gamma, costs,
                                     cfg.prox, init=pair)
        trace.append(objective_opt2(interim(pair), q, ds_s, f0, cfg.gamma, costs, "kl"))
        if len(trace) >= 5 and _relative_change(trace[-3], trace[-1]) < cfg.tol:
            converged = True
            break

    gate = LinearScorer(weights_to_raw(pair.g, mu, sd))
    f1 = LinearScorer(weights_to_raw(pair.f1, mu, sd))
    meta = {
        "algorithm": "lin",
        "params": {"gamma": cfg.gamma, "p_full": cfg.p_full, "lr": None},
        "objective_trace": trace,
        "converged": converged,
        "mean_q": float(q.mean()),
    }
    return AdaptiveSystem(gate, f1, costs, "linear", f0=f0, meta=meta)


def train_dynamod_gbrt(train: Dataset, f0: F0Scores, costs: CostVector,
                       cfg: TrainConfig) -> AdaptiveSystem:
    """Alternate the entropic q-projection with a fresh cost-aware boosting pass.

    The predictor is initialized to the all-local boosted ensemble and the
    gate to zero. Each outer iteration re-projects q against the current
    scores, then rebuilds both ensembles from scratch over cfg.n_rounds
    paired rounds under the fixed q, so the deployed model size stays at
    n_rounds trees per ensemble regardless of iteration count. With the
    routing budget at zero q vanishes identically and every rebuild
    reproduces the all-local ensemble exactly.
    """
    if len(f0) != train.n:
        raise ValueError("f0 scores are not aligned to the training split")
    max_outer = 30 if cfg.max_outer is None else cfg.max_outer
    X, y = train.X, train.y

    gm = fit_greedymiser(X, y, costs, cfg.gamma, cfg.n_rounds, cfg.tree_depth,
                         cfg.learning_rate, cfg.tree_min_leaf)
    u0 = np.ones(train.d, dtype=bool)
    for alpha in gm.features_used:
        u0[alpha] = False
    ep = EnsemblePair(gm.trees, (), u0, cfg.learning_rate, cfg.tree_depth, cfg.tree_min_leaf)

    def interim(pair: EnsemblePair) -> AdaptiveSystem:
        return AdaptiveSystem(pair.g_ensemble(), pair.f1_ensemble(), costs, "ensemble_pair")

    q = np.full(train.n, cfg.p_full)
    trace: list[tuple[str, float]] = [
        ("init", objective_opt2(interim(ep), q, train, f0, cfg.gamma, costs, "kl"))
    ]
    converged = False
    for _ in range(max_outer):
        terms = compute_terms_kl(y * ep.f1_ensemble().scores(X), ep.g_ensemble().scores(X), f0)
        q = i_project_kl(terms, cfg.p_full).q
        trace.append(("q", objective_opt2(interim(ep), q, train, f0, cfg.gamma, costs, "kl")))

        rebuilt = EnsemblePair.empty(train.d, cfg.learning_rate, cfg.tree_depth, cfg.tree_min_leaf)
        for _round in range(cfg.n_rounds):
            rebuilt = boost_pair_round(rebuilt, X, y, q, f0, costs, cfg.gamma, cfg.learning_rate)
        ep = rebuilt
        trace.append(("trees", objective_opt2(interim(ep), q, train, f0, cfg.gamma, costs, "kl")))

        tree_values = [v for stage, v in trace if stage == "trees"]
        if len(tree_values) >= 2 and _relative_change(tree_values[-2], tree_values[-1]) < cfg.tol:
            converged = True
            break

    meta = {
        "algorithm": "gbrt",
        "params": {"gamma": cfg.gamma, "p_full": cfg.p_full, "lr": cfg.learning_rate},
        "objective_trace": trace,
        "converged": converged,
        "mean_q": float(np.mean(q)),
        "pair": ep,
    }
    return AdaptiveSystem(ep.g_ensemble(), ep.f1_ensemble(), costs, "ensemble_pair",
                          f0=f0, meta=meta)


def train_dynamod_lstsq(train: Dataset, f0: F0Scores, cfg: TrainConfig,
                        costs: CostVector | None = None,
                        f1_ensemble: Ensemble | None = None) -> AdaptiveSystem:
    """Symmetrized-distance alternation: ADMM projection, least-squares gate,
    weighted-logistic predictor.

    With f1_ensemble given, both models are linear over that ensemble's
    leaf-membership features augmented with the confidence column |f1(x)|,
    and the gate starts at the pure confidence policy (route when
    |f1(x)| < tau). Otherwise both models are linear on raw features.
    """
    if len(f0) != train.n:
        raise ValueError("f0 scores are not aligned to the training split")
    max_outer = 20 if cfg.max_outer is None else cfg.max_outer
    costs = CostVector.unit(train.d) if costs is None else costs
    X, y = train.X, train.y

    if f1_ensemble is not None:
        features = leaf_transform(f1_ensemble, X)
        n_leaves = features.shape[1] - 1
        f1_w = np.concatenate([f1_ensemble.learning_rate * leaf_values(f1_ensemble), [0.0, 0.0]])
        tau = cfg.tau
        if tau is None:
            tau = float(np.median(np.abs(f1_ensemble.scores(X))))
        g_w = np.zeros(n_leaves + 2)
        g_w[n_leaves] = -1.0
        g_w[-1] = tau
        kind = "leaf_linear"

        def make_scorer(w):
            return LeafLinearScorer(f1_ensemble, w)
    else:
        features = X
        f1_w = fit_weighted_logistic(X, y, np.ones(train.n), l2=cfg.init_l2)
        g_w = np.zeros(train.d + 1)
        kind = "linear"

        def make_scorer(w):
            return LinearScorer(w)

    phi = np.column_stack([features, np.ones(train.n)])
    trace: list[float] = []
    converged = False
    admm_flags: list[bool] = []
    prev_obj = None
    q = None
    for _ in range(max_outer):
        f1_scores = phi @ f1_w
        g_scores = phi @ g_w
        a = logistic_loss(y * f1_scores) + f0.logp
        gp = project_symmetrized(a, g_scores, cfg.p_full, cfg.admm)
        q = gp.q
        admm_flags.append(gp.converged)
        g_w = fit_least_squares(phi, logit(q), ridge=cfg.lstsq_ridge)
        f1_w = fit_weighted_logistic(features, y, 1.0 - q, l2=cfg.f1_l2)

        obj = float(np.mean(q * (-f0.logp) + (1.0 - q) * logistic_loss(y * (phi @ f1_w))
                            + (logit(q) - phi @ g_w) ** 2))
        trace.append(obj)
        if prev_obj is not None and _relative_change(prev_obj, obj) < cfg.tol:
            converged = True
            break
        prev_obj = obj

    meta = {
        "algorithm": "lstsq",
        "params": {"gamma": cfg.gamma, "p_full": cfg.p_full, "lr": None},
        "objective_trace": trace,
        "converged": converged,
        "admm_converged": admm_flags,
        "mean_q": float(np.mean(q)) if q is not None else None,
    }
    return AdaptiveSystem(make_scorer(g_w), make_scorer(f1_w), costs, kind, f0=f0, meta=meta)


# --- serialization -----------------------------------------------------------

def _scorer_to_dict(scorer) -> dict:
    if isinstance(scorer, LinearScorer):
        return {"type": "linear", "weights": scorer.weights.tolist()}
    if isinstance(scorer, Ensemble):
        return ensemble_to_dict(scorer)
    if isinstance(scorer, LeafLinearScorer):
        return {"type": "leaf_linear", "base": ensemble_to_dict(scorer.base),
                "weights": scorer.weights.tolist()}
    raise TypeError(f"cannot serialize scorer of type {type(scorer).__name__}")


def _scorer_from_dict(obj: dict):
    if obj["type"] == "linear":
        return LinearScorer(np.asarray(obj["weights"], dtype=float))
    if obj["type"] == "ensemble":
        return ensemble_from_dict(obj)
    if obj["type"] == "leaf_linear":
        return LeafLinearScorer(ensemble_from_dict(obj["base"]),
                                np.asarray(obj["weights"], dtype=float))
    raise ValueError(f"unknown scorer type {obj['type']!r}")


def save_system(sys: AdaptiveSystem, path, f0_scores_path: str | None = None) -> None:
    meta = {k: v for k, v in sys.meta.items() if k != "pair"}
    bundle = {
        "kind": sys.kind,
        "algorithm": meta.get("algorithm"),
        "params": meta.get("params", {}),
        "meta": {"converged": meta.get("converged"), "mean_q": meta.get("mean_q")},
        "gate": _scorer_to_dict(sys.gate),
        "f1": _scorer_to_dict(sys.f1),
        "costs": sys.costs.c.tolist(),
        "features_gate": sorted(sys.gate.features_used),
        "features_f1": sorted(sys.f1.features_used),
        "f0_scores_path": f0_scores_path,
    }
    with open(path, "w") as fh:
        json.dump(bundle, fh)


def load_system(path) -> AdaptiveSystem:
    with open(path) as fh:
        bundle = json.load(fh)
    meta = {"algorithm": bundle.get("algorithm"), "params": bundle.get("params", {})}
    meta.update(bundle.get("meta", {}))
    if bundle.get("f0_scores_path"):
        meta["f0_scores_path"] = bundle["f0_scores_path"]
    return AdaptiveSystem(
        gate=_scorer_from_dict(bundle["gate"]),
        f1=_scorer_from_dict(bundle["f1"]),
        costs=CostVector(np.asarray(bundle["costs"], dtype=float)),
        kind=bundle["kind"],
        meta=meta,
    )
