from .bounds import (
    BoundError,
    BoundValue,
    ConvergenceQuery,
    convergence_bound,
    log_convergence_bound,
    per_round_change_bound,
)
from .comm import CommError, CommSpec, communication_cost, label_message_bytes
from .metrics import consensus_accuracy, run_metrics
from .special import hurwitz_zeta, log_hurwitz_zeta, normal_cdf, probit

__all__ = [
    "BoundError", "BoundValue", "CommError", "CommSpec", "ConvergenceQuery", "communication_cost",
    "consensus_accuracy", "convergence_bound", "hurwitz_zeta", "label_message_bytes",
    "log_convergence_bound", "log_hurwitz_zeta", "normal_cdf", "per_round_change_bound",
    "probit", "run_metrics",
]
