"""Shared scalar primitives: losses, probabilities, divergences, entropy.

Every function here accepts scalars or numpy arrays and is total on finite
inputs: probabilities are clamped away from {0, 1} before any log or logit,
and the log-sum-exp branches never overflow, so no NaN/Inf can escape.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, rel_entr, xlogy

# Probability clamp for logs/logits; cap on -log p(y|f0) so per-example
# routing terms stay finite even for degenerate score files.
PROB_EPS = 1e-12
NEG_LOGP_CAP = 50.0


def clamp_prob(p):
    """Clamp probabilities into [PROB_EPS, 1 - PROB_EPS]."""
    return np.clip(np.asarray(p, dtype=float), PROB_EPS, 1.0 - PROB_EPS)


def logistic_loss(margin):
    """log(1 + exp(-margin)), overflow-safe for any finite margin."""
    return np.logaddexp(0.0, -np.asarray(margin, dtype=float))


def sigmoid(t):
    """1 / (1 + exp(-t)); saturates cleanly to 0.0 / 1.0 at large |t|."""
    return expit(np.asarray(t, dtype=float))


def logit(p):
    """Inverse sigmoid of a clamped probability."""
    p = clamp_prob(p)
    return np.log(p) - np.log1p(-p)


def deviance(loss_f1, loss_f0):
    """Excess loss of the cheap model over the full model; may be negative."""
    return np.asarray(loss_f1, dtype=float) - np.asarray(loss_f0, dtype=float)


def kl_bernoulli(q0, p0):
    """KL(Bern(q0) || Bern(p0)) in nats.

    p0 is clamped inside (0, 1); q0 may sit exactly on an endpoint, where
    the 0*log(0) terms vanish by continuity.
    """
    q0 = np.clip(np.asarray(q0, dtype=float), 0.0, 1.0)
    p0 = clamp_prob(p0)
    return rel_entr(q0, p0) + rel_entr(1.0 - q0, 1.0 - p0)


def sym_logodds_dist(q0, g_score):
    """Squared gap between the posterior's log-odds and the gate score."""
    return (logit(q0) - np.asarray(g_score, dtype=float)) ** 2


def entropy(q0):
    """Binary entropy in nats; 0 at the endpoints by continuous extension."""
    q0 = np.clip(np.asarray(q0, dtype=float), 0.0, 1.0)
    return -xlogy(q0, q0) - xlogy(1.0 - q0, 1.0 - q0)


def composite_nll(q0, g_score, loss_f1, logp_f0):
    """Negative log-likelihood of the gated mixture and its variational bound.

    Returns (lhs, rhs) where lhs is the exact mixture NLL under the gate
    probabilities and rhs is the posterior-weighted loss plus the
    KL(posterior || gate) penalty. lhs <= rhs holds for every input because
    both sides are evaluated against the same clamped gate probability.
    """
    p0 = clamp_prob(sigmoid(g_score))
    logp_f0 = np.clip(np.asarray(logp_f0, dtype=float), -NEG_LOGP_CAP, 0.0)
    loss_f1 = np.asarray(loss_f1, dtype=float)
    q0 = np.clip(np.asarray(q0, dtype=float), 0.0, 1.0)
    lhs = -np.log(p0 * np.exp(logp_f0) + (1.0 - p0) * np.exp(-loss_f1))
    rhs = q0 * (-logp_f0) + (1.0 - q0) * loss_f1 + kl_bernoulli(q0, p0)
    return lhs, rhs


@dataclass(frozen=True)
class F0Scores:
    """Per-example log-likelihoods log p(y_i | route-to-full-model).

    The full model itself is abstracted to these scores: they may be produced
    by an internally trained ensemble or loaded from a file. Values are
    clamped into [-NEG_LOGP_CAP, 0] on construction.
    """

    logp: np.ndarray
    source: str = "loaded"

    def __post_init__(self):
        arr = np.asarray(self.logp, dtype=float)
        if arr.ndim != 1:
            raise ValueError("logp must be a 1-d array")
        if np.any(np.isnan(arr)):
            raise ValueError("logp contains NaN")
        arr = np.clip(arr, -NEG_LOGP_CAP, 0.0)
        object.__setattr__(self, "logp", arr)

    def __len__(self) -> int:
        return len(self.logp)

    @classmethod
    def from_margins(cls, margins, y, source: str = "trained") -> "F0Scores":
        """Scores from full-model margins: log p = -log(1 + exp(-y*margin))."""
        logp = -logistic_loss(np.asarray(y, dtype=float) * np.asarray(margins, dtype=float))
        return cls(logp=logp, source=source)

    def save(self, path) -> None:
        """Write the `row_index,logp` CSV aligned to a dataset split."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_index", "logp"])
            for i, v in enumerate(self.logp):
                writer.writerow([i, repr(float(v))])

    @classmethod
    def load(cls, path) -> "F0Scores":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"score file not found: {path}")
        rows: list[tuple[int, float]] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["row_index", "logp"]:
                raise ValueError(f"{path}: expected header 'row_index,logp'")
            for rec in reader:
                if not rec:
                    continue
                rows.append((int(rec[0]), float(rec[1])))
        rows.sort(key=lambda t: t[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError(f"{path}: row_index must cover 0..n-1 exactly once")
        return cls(logp=np.array([r[1] for r in rows]), source="loaded")
