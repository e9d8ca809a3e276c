"""Budgeted adaptive prediction.

A low-cost gating function and a low-cost predictor are trained jointly to
approximate a given high-accuracy model: easy examples stay on the cheap
path, hard ones are routed to the full model, and training trades empirical
loss against feature-acquisition cost and the routed fraction.
"""

from .baselines import (
    GateThreshold,
    confidence_gate,
    greedy_l1_pipeline,
    uniform_gate,
)
from .data import (
    CostVector,
    DataError,
    Dataset,
    SplitSpec,
    gen_synthetic,
    load_costs,
    load_csv,
    split,
)
from .linear import (
    LinearPair,
    ProxConfig,
    fit_joint_group_lasso,
    fit_l1_logistic_path,
    fit_least_squares,
    fit_weighted_logistic,
    group_soft_threshold,
    joint_smooth_loss,
)
from .losses import (
    F0Scores,
    composite_nll,
    deviance,
    entropy,
    kl_bernoulli,
    logistic_loss,
    logit,
    sigmoid,
    sym_logodds_dist,
)
from .projection import (
    AdmmConfig,
    GatingPosterior,
    PerExampleTerms,
    compute_terms_kl,
    i_project_kl,
    project_symmetrized,
)
from .trees import (
    Ensemble,
    EnsemblePair,
    RegressionTree,
    boost_pair_round,
    fit_cart,
    fit_greedymiser,
    fit_plain_gbrt,
    leaf_transform,
    leaf_values,
    pair_loss,
    pair_negative_gradients,
)
from .training import (
    AdaptiveSystem,
    LeafLinearScorer,
    LinearScorer,
    TradeoffPoint,
    TrainConfig,
    evaluate,
    load_system,
    objective_opt2,
    predict,
    save_system,
    train_dynamod_gbrt,
    train_dynamod_lin,
    train_dynamod_lstsq,
)
from .cli import pareto_frontier

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSystem",
    "AdmmConfig",
    "CostVector",
    "DataError",
    "Dataset",
    "Ensemble",
    "EnsemblePair",
    "F0Scores",
    "GateThreshold",
    "GatingPosterior",
    "LeafLinearScorer",
    "LinearPair",
    "LinearScorer",
    "PerExampleTerms",
    "ProxConfig",
    "RegressionTree",
    "SplitSpec",
    "TradeoffPoint",
    "TrainConfig",
    "boost_pair_round",
    "composite_nll",
    "compute_terms_kl",
    "confidence_gate",
    "deviance",
    "entropy",
    "evaluate",
    "fit_cart",
    "fit_greedymiser",
    "fit_joint_group_lasso",
    "fit_l1_logistic_path",
    "fit_least_squares",
    "fit_plain_gbrt",
    "fit_weighted_logistic",
    "gen_synthetic",
    "greedy_l1_pipeline",
    "group_soft_threshold",
    "i_project_kl",
    "joint_smooth_loss",
    "kl_bernoulli",
    "leaf_transform",
    "leaf_values",
    "load_costs",
    "load_csv",
    "load_system",
    "logistic_loss",
    "logit",
    "objective_opt2",
    "pair_loss",
    "pair_negative_gradients",
    "pareto_frontier",
    "predict",
    "project_symmetrized",
    "save_system",
    "sigmoid",
    "split",
    "sym_logodds_dist",
    "train_dynamod_gbrt",
    "train_dynamod_lin",
    "train_dynamod_lstsq",
    "uniform_gate",
]
