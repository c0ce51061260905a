"""Uniform learner contract.

Every kind is driven through :func:`fit_update`, :func:`predict_hard` and
:func:`predict_scores`.  States are immutable; updating returns a new state.
Batch kinds (``dummy-majority``, ``decision-tree``, ``random-forest``) refit
from scratch on every call, iterative kinds (``logistic-regression``,
``mlp``) continue gradient descent from the previous weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from ..data import LabeledDataset
from . import linear, mlp
from .forest import Forest, fit_forest
from .tree import Tree, fit_tree

KINDS = ("dummy-majority", "decision-tree", "random-forest", "logistic-regression", "mlp")
BATCH_KINDS = frozenset({"dummy-majority", "decision-tree", "random-forest"})
PARAMETRIC_KINDS = frozenset({"logistic-regression", "mlp"})
BATCH_SIZE = 32


class LearnerError(ValueError):
    pass


class NotTrainedError(LearnerError):
    pass


class NotAggregableError(LearnerError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "decision-tree"
    max_depth: int | None = None
    min_samples_split: int = 2
    n_trees: int = 10
    max_features: Any = "sqrt"
    bootstrap: bool = True
    learning_rate: float = 0.1
    local_epochs: int = 1
    l2: float = 0.0
    hidden_width: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}")
        if self.min_samples_split < 2:
            raise LearnerError("min_samples_split must be at least 2")
        if self.learning_rate <= 0:
            raise LearnerError("learning_rate must be positive")
        if self.local_epochs < 1:
            raise LearnerError("local_epochs must be at least 1")
        if self.n_trees < 1:
            raise LearnerError("n_trees must be at least 1")
        if self.hidden_width < 1:
            raise LearnerError("hidden_width must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise LearnerError("max_depth must be non-negative")

    @property
    def parametric(self) -> bool:
        return self.kind in PARAMETRIC_KINDS


@dataclass(frozen=True, eq=False)
class LearnerState:
    kind: str
    num_classes: int
    n_features: int
    model: Any = None
    trained: bool = False
    n_updates: int = 0
    hidden_width: int | None = None


def fresh_state(cfg: LearnerConfig, n_features: int, num_classes: int) -> LearnerState:
    """Untrained state; parametric kinds already carry their initial weights."""
    model = None
    if cfg.kind == "logistic-regression":
        model = np.zeros(linear.n_params(n_features, num_classes))
    elif cfg.kind == "mlp":
        rng = np.random.default_rng([cfg.seed, 0x6D6C70])
        model = mlp.init_params(n_features, cfg.hidden_width, num_classes, rng)
    return LearnerState(cfg.kind, num_classes, n_features, model,
                        hidden_width=cfg.hidden_width if cfg.kind == "mlp" else None)


def fit_update(cfg: LearnerConfig, state: LearnerState | None, data: LabeledDataset) -> LearnerState:
    if len(data) == 0:
        raise LearnerError("cannot train on an empty dataset")
    if state is None:
        state = fresh_state(cfg, data.dim, data.num_classes)
    if state.kind != cfg.kind:
        raise LearnerError(f"state kind {state.kind!r} does not match config kind {cfg.kind!r}")
    if state.n_features != data.dim:
        raise LearnerError(f"dimension mismatch: state has d={state.n_features}, data has d={data.dim}")
    if state.num_classes != data.num_classes:
        raise LearnerError(f"class count mismatch: state has C={state.num_classes}, data has C={data.num_classes}")

    X, y, C = data.features, data.labels, data.num_classes
    kind = cfg.kind
    if kind == "dummy-majority":
        model = np.bincount(y, minlength=C) / len(y)
    elif kind == "decision-tree":
        model = fit_tree(X, y, C, max_depth=cfg.max_depth, min_samples_split=cfg.min_samples_split)
    elif kind == "random-forest":
        model = fit_forest(X, y, C, n_trees=cfg.n_trees, max_features=cfg.max_features,
                           bootstrap=cfg.bootstrap, max_depth=cfg.max_depth,
                           min_samples_split=cfg.min_samples_split, seed=cfg.seed)
    else:
        rng = np.random.default_rng([cfg.seed, state.n_updates])
        if kind == "logistic-regression":
            def grad(th, Xb, yb):
                return linear.loss_and_grad(th, Xb, yb, C, cfg.l2)
        else:
            H = state.hidden_width

            def grad(th, Xb, yb):
                return mlp.loss_and_grad(th, Xb, yb, H, C)
        model = linear.sgd(state.model, X, y, C, grad, cfg.learning_rate, cfg.local_epochs, rng, BATCH_SIZE)
    return replace(state, model=model, trained=True, n_updates=state.n_updates + 1)


def _check_ready(state: LearnerState, X) -> np.ndarray:
    if not state.trained:
        raise NotTrainedError("learner has not been trained")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != state.n_features:
        raise LearnerError(f"expected features with d={state.n_features}, got shape {X.shape}")
    return X


def predict_scores(state: LearnerState, X) -> np.ndarray:
    """Per-class scores; rows are non-negative and sum to one."""
    X = _check_ready(state, X)
    kind = state.kind
    if kind == "dummy-majority":
        return np.tile(state.model, (len(X), 1))
    if kind in ("decision-tree", "random-forest"):
        return state.model.predict_proba(X)
    if kind == "logistic-regression":
        return linear.scores(state.model, X, state.num_classes)
    return mlp.scores(state.model, X, state.hidden_width, state.num_classes)


def predict_hard(state: LearnerState, X) -> np.ndarray:
    """Row-argmax of the scores, lowest class index on ties."""
    return predict_scores(state, X).argmax(axis=1).astype(np.int64)


def get_parameters(state: LearnerState) -> np.ndarray:
    if state.kind not in PARAMETRIC_KINDS:
        raise NotAggregableError(f"{state.kind} is not parameter-aggregable")
    return np.array(state.model, dtype=np.float64, copy=True)


def set_parameters(state: LearnerState, theta) -> LearnerState:
    if state.kind not in PARAMETRIC_KINDS:
        raise NotAggregableError(f"{state.kind} is not parameter-aggregable")
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != state.model.shape:
        raise LearnerError(f"expected {state.model.shape[0]} parameters, got {theta.shape}")
    return replace(state, model=theta.copy())


def parameter_count(cfg: LearnerConfig, d: int, C: int) -> int:
    if cfg.kind == "logistic-regression":
        return linear.n_params(d, C)
    if cfg.kind == "mlp":
        return mlp.n_params(d, cfg.hidden_width, C)
    raise NotAggregableError(f"{cfg.kind} is not parameter-aggregable")


__all__ = [
    "BATCH_KINDS", "Forest", "KINDS", "LearnerConfig", "LearnerError", "LearnerState",
    "NotAggregableError", "NotTrainedError", "PARAMETRIC_KINDS", "Tree", "fit_update",
    "fresh_state", "get_parameters", "parameter_count", "predict_hard", "predict_scores",
    "set_parameters",
]
