"""Membership inference against shared labels vs. model access.

``label_query_attack`` models an attacker who can only submit inputs to the
clients and read back hard labels; ``confidence_threshold_attack`` one who
holds the model and reads its class probabilities.  Both report ROC AUC of
member vs. non-member scores (0.5 means nothing leaks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .learners import LearnerState, predict_scores


class AttackError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttackResult:
    auc: float
    n_members: int
    n_nonmembers: int
    member_scores: np.ndarray
    nonmember_scores: np.ndarray

    @property
    def scores(self) -> np.ndarray:
        return np.concatenate([self.member_scores, self.nonmember_scores])

    def as_dict(self) -> dict:
        return {"auc": self.auc, "n_members": self.n_members, "n_nonmembers": self.n_nonmembers}


def auc(scores_members, scores_nonmembers) -> float:
    """P(member > non-member) + 0.5 * P(tie), counted exactly over all pairs."""
    a = np.asarray(scores_members, dtype=np.float64)
    b = np.sort(np.asarray(scores_nonmembers, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise AttackError("auc needs non-empty member and non-member score lists")
    below = np.searchsorted(b, a, side="left")
    upto = np.searchsorted(b, a, side="right")
    wins2 = int(np.sum(2 * below + (upto - below)))  # twice (wins + ties/2)
    return wins2 / (2 * a.size * b.size)


def _check(members: LabeledDataset, nonmembers: LabeledDataset):
    if len(members) == 0 or len(nonmembers) == 0:
        raise AttackError("need at least one member and one non-member query")
    if members.dim != nonmembers.dim:
        raise AttackError("member and non-member features differ in dimension")


def label_query_attack(predictors, members: LabeledDataset, nonmembers: LabeledDataset,
                       epochs: int = 1) -> AttackResult:
    """Score each query ``(x, y)`` by the fraction of clients answering ``y``.

    ``predictors`` are callables mapping a feature matrix to hard labels.
    Scores are averaged over ``epochs`` repeated query rounds.
    """
    _check(members, nonmembers)
    if not predictors:
        raise AttackError("need at least one client predictor")
    if epochs < 1:
        raise AttackError("epochs must be at least 1")

    def score(ds):
        total = np.zeros(len(ds))
        for _ in range(epochs):
            hits = [np.asarray(f(ds.features)) == ds.labels for f in predictors]
            total += np.mean(hits, axis=0)
        return total / epochs

    sm, sn = score(members), score(nonmembers)
    return AttackResult(auc(sm, sn), len(members), len(nonmembers), sm, sn)


def confidence_threshold_attack(state: LearnerState, members: LabeledDataset, nonmembers: LabeledDataset,
                                epochs: int = 1) -> AttackResult:
    """Score each query by the model's probability for the true class."""
    _check(members, nonmembers)
    if epochs < 1:
        raise AttackError("epochs must be at least 1")

    def score(ds):
        total = np.zeros(len(ds))
        for _ in range(epochs):
            total += predict_scores(state, ds.features)[np.arange(len(ds)), ds.labels]
        return total / epochs

    sm, sn = score(members), score(nonmembers)
    return AttackResult(auc(sm, sn), len(members), len(nonmembers), sm, sn)
