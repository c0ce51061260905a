"""Server-side consensus over client hard labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import ABSTAIN


class ConsensusError(ValueError):
    pass


@dataclass(frozen=True)
class ConsensusSpec:
    kind: str = "majority"
    quorum: float | None = None

    def __post_init__(self):
        if self.kind not in ("majority", "qualified-majority"):
            raise ConsensusError(f"unknown consensus kind {self.kind!r}")
        if self.kind == "qualified-majority":
            if self.quorum is None or not 0.5 < self.quorum <= 1.0:
                raise ConsensusError(f"quorum must lie in (0.5, 1], got {self.quorum!r}")


def vote_counts(votes, num_classes: int | None = None) -> np.ndarray:
    """``(u, C)`` matrix of per-class vote counts."""
    if len(votes) == 0:
        raise ConsensusError("need at least one label vector")
    lengths = {len(v) for v in votes}
    if len(lengths) != 1:
        raise ConsensusError(f"label vectors differ in length: {sorted(lengths)}")
    V = np.asarray(votes, dtype=np.int64).reshape(len(votes), lengths.pop())
    if np.any(V < 0):
        raise ConsensusError("votes must not contain ABSTAIN")
    C = int(V.max()) + 1 if num_classes is None else num_classes
    if V.size and V.max() >= C:
        raise ConsensusError("vote outside [0, num_classes)")
    m, u = V.shape
    counts = np.zeros((u, C), dtype=np.int64)
    cols = np.broadcast_to(np.arange(u), (m, u))
    np.add.at(counts, (cols.ravel(), V.ravel()), 1)
    return counts


def majority_vote(votes, num_classes: int | None = None) -> np.ndarray:
    """Most frequent class per entry; ties go to the lowest class index."""
    return vote_counts(votes, num_classes).argmax(axis=1).astype(np.int64)


def quorum_threshold(m: int, quorum: float) -> int:
    # exact decimal arithmetic: 0.9 * 10 must give 9, not 10
    return max(1, math.ceil(Fraction(repr(float(quorum))) * m))


def qualified_majority(votes, quorum: float, num_classes: int | None = None) -> np.ndarray:
    """Majority winner if it holds at least ``ceil(quorum * m)`` votes, else ABSTAIN."""
    if not 0.5 < quorum <= 1.0:
        raise ConsensusError(f"quorum must lie in (0.5, 1], got {quorum!r}")
    counts = vote_counts(votes, num_classes)
    m = len(votes)
    top = counts.argmax(axis=1)
    ok = counts[np.arange(len(top)), top] >= quorum_threshold(m, quorum)
    return np.where(ok, top, ABSTAIN).astype(np.int64)


def consensus(votes, spec: ConsensusSpec, num_classes: int | None = None) -> np.ndarray:
    if spec.kind == "majority":
        return majority_vote(votes, num_classes)
    return qualified_majority(votes, spec.quorum, num_classes)
