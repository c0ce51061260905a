from __future__ import annotations

import numpy as np

from ..data import ABSTAIN


def consensus_accuracy(labels, hidden_truth) -> float | None:
    """Ground-truth accuracy over the non-abstained entries (None if all abstain)."""
    labels = np.asarray(labels)
    truth = np.asarray(hidden_truth)
    keep = labels != ABSTAIN
    if not keep.any():
        return None
    return float(np.mean(labels[keep] == truth[keep]))


def run_metrics(records, hidden_truth=None) -> dict:
    """Per-round summary of a run plus final-round headline numbers."""
    if not records:
        raise ValueError("run_metrics needs at least one round record")
    rounds = []
    for rec in records:
        test = np.asarray(rec.test_acc, dtype=np.float64)
        train = np.asarray(rec.train_acc, dtype=np.float64)
        row = {
            "round": rec.round,
            "mean_test_acc": float(test.mean()) if test.size else None,
            # centred first so identical accuracies give exactly 0
            "std_test_acc": float((test - test[0]).std()) if test.size else None,
            "mean_train_acc": float(train.mean()) if train.size else None,
            "consensus_changes": rec.consensus_changes,
            "pool_size": rec.pool_size,
            "consensus_acc": None,
            "consensus_coverage": None,
        }
        if hidden_truth is not None and rec.consensus is not None:
            row["consensus_acc"] = consensus_accuracy(rec.consensus, hidden_truth)
            row["consensus_coverage"] = float(np.mean(np.asarray(rec.consensus) != ABSTAIN))
        rounds.append(row)
    last = rounds[-1]
    stable_from = None
    for row in reversed(rounds):
        if row["consensus_changes"] != 0:
            break
        stable_from = row["round"]
    return {
        "rounds": rounds,
        "final_mean_test_acc": last["mean_test_acc"],
        "final_std_test_acc": last["std_test_acc"],
        "final_consensus_acc": last["consensus_acc"],
        "final_pool_size": last["pool_size"],
        "stable_from_round": stable_from,
        "total_consensus_changes": int(sum(r["consensus_changes"] for r in rounds)),
    }
