"""Cost-aware regression trees and the paired boosted ensembles built on them."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .data import CostVector
from .losses import F0Scores, logistic_loss, sigmoid


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, SplitNode]


@dataclass(frozen=True)
class RegressionTree:
    root: Node
    max_depth: int
    features_used: frozenset[int]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))
        self._fill(self.root, X, np.arange(len(X)), out)
        return out

    @staticmethod
    def _fill(node: Node, X, idx, out) -> None:
        if isinstance(node, Leaf):
            out[idx] = node.value
            return
        mask = X[idx, node.feature] <= node.threshold
        RegressionTree._fill(node.left, X, idx[mask], out)
        RegressionTree._fill(node.right, X, idx[~mask], out)

    def depth(self) -> int:
        def walk(node: Node) -> int:
            if isinstance(node, Leaf):
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def n_leaves(self) -> int:
        def walk(node: Node) -> int:
            if isinstance(node, Leaf):
                return 1
            return walk(node.left) + walk(node.right)
        return walk(self.root)


def _best_split(Xn, rn, new_feature_penalty, min_leaf, guard):
    """Exact search over midpoints of consecutive distinct sorted values.

    Candidates are scored by impurity gain net of the feature charge; a
    candidate replaces the incumbent only when it wins by more than `guard`
    (a relative float-noise band), so mathematical ties resolve
    deterministically to the lowest feature index, then lowest threshold.
    Returns (net_gain, feature, threshold) or None.
    """
    n, d = Xn.shape
    total = float(rn.sum())
    base = total * total / n
    best = None
    for alpha in range(d):
        x = Xn[:, alpha]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        rs = rn[order]
        boundary = xs[1:] > xs[:-1]
        if min_leaf > 1:
            k = np.arange(1, n)
            boundary = boundary & (k >= min_leaf) & (n - k >= min_leaf)
        if not boundary.any():
            continue
        left_sum = np.cumsum(rs)[:-1]
        k = np.arange(1, n, dtype=float)
        gains = left_sum**2 / k + (total - left_sum) ** 2 / (n - k) - base
        gains = np.where(boundary, gains, -np.inf)
        pos = int(np.argmax(gains))
        net = float(gains[pos]) - new_feature_penalty[alpha]
        if best is None or net > best[0] + guard:
            best = (net, alpha, float(0.5 * (xs[pos] + xs[pos + 1])))
    return best


def fit_cart(X, residuals, costs: CostVector, u, gamma: float,
             depth: int, min_leaf: int = 1) -> RegressionTree:
    """Greedy squared-error CART with a one-time charge for new features.

    A split on feature alpha pays gamma * c_alpha once per tree when the
    feature is still unacquired (u[alpha] True) and not yet introduced by an
    earlier node of this tree. A split is accepted only if the penalized
    impurity strictly decreases. Leaves predict the mean residual.
    """
    X = np.asarray(X, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    u = np.asarray(u, dtype=bool)
    if depth < 1 or min_leaf < 1:
        raise ValueError("depth and min_leaf must be >= 1")
    if X.shape[0] != len(residuals) or X.shape[1] != len(u) or len(costs.c) != len(u):
        raise ValueError("X, residuals, costs, and u must agree on shapes")

    tree_feats: set[int] = set()

    def build(idx: np.ndarray, depth_left: int) -> Node:
        rn = residuals[idx]
        mean = float(rn.mean())
        if depth_left == 0 or len(idx) < 2 * min_leaf:
            return Leaf(mean)
        penalty = np.where(u, gamma * costs.c, 0.0)
        if tree_feats:
            penalty[list(tree_feats)] = 0.0
        sse_parent = float(np.sum((rn - mean) ** 2))
        guard = 1e-10 * max(1.0, sse_parent)
        found = _best_split(X[idx], rn, penalty, min_leaf, guard)
        if found is None or not found[0] > guard:
            return Leaf(mean)
        _, alpha, threshold = found
        tree_feats.add(alpha)
        mask = X[idx, alpha] <= threshold
        left = build(idx[mask], depth_left - 1)
        right = build(idx[~mask], depth_left - 1)
        return SplitNode(alpha, threshold, left, right)

    root = build(np.arange(len(residuals)), depth)
    return RegressionTree(root, depth, frozenset(tree_feats))


@dataclass(frozen=True)
class Ensemble:
    """Additive tree model: score(x) = learning_rate * sum_t tree_t(x)."""

    trees: tuple[RegressionTree, ...]
    learning_rate: float

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return self.learning_rate * total

    @property
    def features_used(self) -> frozenset[int]:
        out: set[int] = set()
        for tree in self.trees:
            out |= tree.features_used
        return frozenset(out)


@dataclass(frozen=True)
class EnsemblePair:
    """Paired boosted ensembles for the gate and the cheap predictor.

    u[alpha] flips to False permanently once either ensemble acquires the
    feature; later trees then reuse it for free in the impurity.
    """

    trees_f1: tuple[RegressionTree, ...]
    trees_g: tuple[RegressionTree, ...]
    u: np.ndarray
    learning_rate: float
    depth: int = 4
    min_leaf: int = 1

    @classmethod
    def empty(cls, d: int, learning_rate: float, depth: int = 4, min_leaf: int = 1) -> "EnsemblePair":
        return cls((), (), np.ones(d, dtype=bool), learning_rate, depth, min_leaf)

    def f1_ensemble(self) -> Ensemble:
        return Ensemble(self.trees_f1, self.learning_rate)

    def g_ensemble(self) -> Ensemble:
        return Ensemble(self.trees_g, self.learning_rate)

    @property
    def features_used(self) -> frozenset[int]:
        return self.f1_ensemble().features_used | self.g_ensemble().features_used

    def acquired_cost(self, costs: CostVector) -> float:
        used = sorted(self.features_used)
        return float(np.sum(costs.c[used])) if used else 0.0


def pair_loss(scores_f1, scores_g, y, q) -> float:
    """Total routing-weighted log-loss of the pair at given per-example scores."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    keep = 1.0 - q
    return float(np.sum(q * logistic_loss(scores_g)
                        + keep * (logistic_loss(y * scores_f1) + logistic_loss(-scores_g))))


def pair_negative_gradients(scores_f1, scores_g, y, q):
    """Negative gradients of pair_loss w.r.t. the per-example scores."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    keep = 1.0 - q
    r_f1 = keep * y * sigmoid(-y * np.asarray(scores_f1, dtype=float))
    r_g = q * sigmoid(-np.asarray(scores_g, dtype=float)) - keep * sigmoid(np.asarray(scores_g, dtype=float))
    return r_f1, r_g


def boost_pair_round(ep: EnsemblePair, X, y, q, f0: F0Scores, costs: CostVector,
                     gamma: float, lr: float) -> EnsemblePair:
    """One boosting round: fit a predictor tree, then a gate tree, updating u after each.

    The full-model scores are constant w.r.t. both trees given q, so f0 is
    accepted only to keep the alternation signature uniform.
    """
    del f0
    X = np.asarray(X, dtype=float)
    scores_f1 = ep.f1_ensemble().scores(X)
    scores_g = ep.g_ensemble().scores(X)

    r_f1, _ = pair_negative_gradients(scores_f1, scores_g, y, q)
    tree_f1 = fit_cart(X, r_f1, costs, ep.u, gamma, ep.depth, ep.min_leaf)
    u = ep.u.copy()
    for alpha in tree_f1.features_used:
        u[alpha] = False
    scores_f1 = scores_f1 + lr * tree_f1.predict(X)

    _, r_g = pair_negative_gradients(scores_f1, scores_g, y, q)
    tree_g = fit_cart(X, r_g, costs, u, gamma, ep.depth, ep.min_leaf)
    for alpha in tree_g.features_used:
        u[alpha] = False

    return replace(ep, trees_f1=ep.trees_f1 + (tree_f1,), trees_g=ep.trees_g + (tree_g,), u=u)


def fit_greedymiser(X, y, costs: CostVector, gamma: float, n_trees: int,
                    depth: int, lr: float, min_leaf: int = 1) -> Ensemble:
    """Cost-aware boosted logistic classifier: the all-local special case.

    Each tree fits the logistic pseudo-residuals with the same one-time
    feature charge as the paired trainer; identical mechanics make the pair
    trainer collapse to this exactly when nothing is ever routed.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.ones(X.shape[1], dtype=bool)
    scores = np.zeros(len(y))
    trees: list[RegressionTree] = []
    for _ in range(n_trees):
        r = y * sigmoid(-y * scores)
        tree = fit_cart(X, r, costs, u, gamma, depth, min_leaf)
        for alpha in tree.features_used:
            u[alpha] = False
        scores += lr * tree.predict(X)
        trees.append(tree)
    return Ensemble(tuple(trees), lr)


def _leaf_index_paths(tree: RegressionTree) -> list[Node]:
    """Leaves in deterministic left-to-right order."""
    leaves: list[Node] = []

    def walk(node: Node) -> None:
        if isinstance(node, Leaf):
            leaves.append(node)
        else:
            walk(node.left)
            walk(node.right)

    walk(tree.root)
    return leaves


def leaf_values(ensemble: Ensemble) -> np.ndarray:
    """Concatenated leaf values in the same order leaf_transform uses."""
    vals: list[float] = []
    for tree in ensemble.trees:
        vals.extend(leaf.value for leaf in _leaf_index_paths(tree))
    return np.asarray(vals)


def leaf_transform(ensemble: Ensemble, X) -> np.ndarray:
    """One-hot leaf membership across all trees, plus a |score| column.

    Output is n x (L+1) where L is the total leaf count; each row has
    exactly one 1 per tree in the leaf block.
    """
    if not ensemble.trees:
        raise ValueError("ensemble has no trees")
    X = np.asarray(X, dtype=float)
    n = len(X)
    blocks: list[np.ndarray] = []
    for tree in ensemble.trees:
        leaves = _leaf_index_paths(tree)
        ids = {id(leaf): j for j, leaf in enumerate(leaves)}
        col = np.zeros((n, len(leaves)))

        def walk(node: Node, idx: np.ndarray) -> None:
            if isinstance(node, Leaf):
                col[idx, ids[id(node)]] = 1.0
                return
            mask = X[idx, node.feature] <= node.threshold
            walk(node.left, idx[mask])
            walk(node.right, idx[~mask])

        walk(tree.root, np.arange(n))
        blocks.append(col)
    blocks.append(np.abs(ensemble.scores(X))[:, None])
    return np.hstack(blocks)


def fit_plain_gbrt(X, y, n_trees: int, depth: int, lr: float,
                   min_leaf: int = 1) -> tuple[Ensemble, F0Scores]:
    """Cost-blind boosted logistic ensemble plus its training log-likelihoods."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.asarray(X, dtype=float)
    costs = CostVector.unit(X.shape[1])
    ensemble = fit_greedymiser(X, y, costs, 0.0, n_trees, depth, lr, min_leaf)
    margins = ensemble.scores(X)
    return ensemble, F0Scores.from_margins(margins, y, source="trained")


# --- JSON serialization -----------------------------------------------------

def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj: dict) -> Node:
    if "value" in obj:
        return Leaf(float(obj["value"]))
    return SplitNode(int(obj["feature"]), float(obj["threshold"]),
                     _node_from_dict(obj["left"]), _node_from_dict(obj["right"]))


def _tree_to_dict(tree: RegressionTree) -> dict:
    return {"max_depth": tree.max_depth, "root": _node_to_dict(tree.root)}


def _tree_from_dict(obj: dict) -> RegressionTree:
    root = _node_from_dict(obj["root"])

    def used(node: Node) -> set[int]:
        if isinstance(node, Leaf):
            return set()
        return {node.feature} | used(node.left) | used(node.right)

    return RegressionTree(root, int(obj["max_depth"]), frozenset(used(root)))


def ensemble_to_dict(ensemble: Ensemble) -> dict:
    return {
        "type": "ensemble",
        "learning_rate": ensemble.learning_rate,
        "trees": [_tree_to_dict(t) for t in ensemble.trees],
    }


def ensemble_from_dict(obj: dict) -> Ensemble:
    return Ensemble(tuple(_tree_from_dict(t) for t in obj["trees"]),
                    float(obj["learning_rate"]))


def pair_to_dict(ep: EnsemblePair) -> dict:
    return {
        "type": "ensemble_pair",
        "learning_rate": ep.learning_rate,
        "depth": ep.depth,
        "min_leaf": ep.min_leaf,
        "u": [bool(v) for v in ep.u],
        "trees_f1": [_tree_to_dict(t) for t in ep.trees_f1],
        "trees_g": [_tree_to_dict(t) for t in ep.trees_g],
    }


def pair_from_dict(obj: dict) -> EnsemblePair:
    return EnsemblePair(
        trees_f1=tuple(_tree_from_dict(t) for t in obj["trees_f1"]),
        trees_g=tuple(_tree_from_dict(t) for t in obj["trees_g"]),
        u=np.asarray(obj["u"], dtype=bool),
        learning_rate=float(obj["learning_rate"]),
        depth=int(obj["depth"]),
        min_leaf=int(obj["min_leaf"]),
    )


def save_ensemble(ensemble: Ensemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_to_dict(ensemble), fh)


def load_ensemble(path) -> Ensemble:
    with open(path) as fh:
        return ensemble_from_dict(json.load(fh))
