"""Protocol runners: federated co-training and its baselines.

A protocol round is one ``fit_update`` per client.  Communication happens
after rounds ``t`` with ``t % period == period - 1``, so a run of ``T``
rounds has ``T // period`` communication rounds and produces one
:class:`RoundRecord` for each.

All randomness is derived from ``master_seed``: learner seeds from
``(master_seed, client)``, noise seeds from ``(master_seed, client, round)``.
Clients may train on a thread pool; results never depend on the pool size.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis.comm import label_message_bytes
from .analysis.metrics import consensus_accuracy, run_metrics
from .consensus import ConsensusSpec, consensus
from .data import ABSTAIN, LabeledDataset, UnlabeledDataset, one_hot
from .learners import (
    BATCH_KINDS,
    LearnerConfig,
    LearnerState,
    fit_update,
    fresh_state,
    get_parameters,
    parameter_count,
    predict_hard,
    set_parameters,
)
from .privacy import NoiseSpec, repair_votes, xor_mechanism
from .records import RoundRecord

log = logging.getLogger(__name__)

PROTOCOLS = ("fedct", "dp-fedct", "fedavg", "local-only", "centralized", "pate")

# stream tags mixed into seed sequences
_LEARNER, _NOISE, _REPAIR = 1, 2, 3


class ProtocolError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ClientFailure(RuntimeError):
    def __init__(self, client: int, exc: Exception):
        super().__init__(f"client {client}: {exc}")
        self.client = client


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    learners: tuple[LearnerConfig, ...]
    consensus: ConsensusSpec = field(default_factory=ConsensusSpec)
    noise: NoiseSpec | None = None
    rounds: int = 1
    period: int = 1
    master_seed: int = 0
    student: LearnerConfig | None = None

    @property
    def m(self) -> int:
        return len(self.learners)

    @property
    def communication_rounds(self) -> int:
        return self.rounds // self.period


@dataclass(frozen=True, eq=False)
class FederatedData:
    clients: tuple[LabeledDataset, ...]
    test: LabeledDataset
    unlabeled: UnlabeledDataset

    @property
    def num_classes(self) -> int:
        return self.test.num_classes


@dataclass(eq=False)
class RunResult:
    protocol: str
    records: list[RoundRecord]
    states: list[LearnerState]
    summary: dict
    global_state: LearnerState | None = None
    student_state: LearnerState | None = None


def validate(cfg: ExperimentConfig, data: FederatedData | None = None) -> None:
    if cfg.protocol not in PROTOCOLS:
        raise ProtocolError("protocol", f"unknown protocol {cfg.protocol!r}; expected one of {PROTOCOLS}")
    if cfg.m < 1:
        raise ProtocolError("clients", "need at least one client")
    if cfg.rounds < 1:
        raise ProtocolError("rounds", "rounds must be at least 1")
    if not 1 <= cfg.period <= cfg.rounds:
        raise ProtocolError("period", f"period must satisfy 1 <= period <= rounds ({cfg.rounds})")
    if cfg.protocol == "dp-fedct" and cfg.noise is None:
        raise ProtocolError("noise", "dp-fedct requires a noise section")
    if cfg.protocol != "dp-fedct" and cfg.noise is not None:
        raise ProtocolError("noise", f"{cfg.protocol} does not take a noise section")
    if cfg.protocol == "fedavg":
        kinds = {lc.kind for lc in cfg.learners}
        if len(kinds) != 1 or not cfg.learners[0].parametric:
            raise ProtocolError("learners", "fedavg needs identical parametric learners "
                                            "(logistic-regression or mlp); trees are not parameter-aggregable")
        if len({lc.hidden_width for lc in cfg.learners}) != 1 and cfg.learners[0].kind == "mlp":
            raise ProtocolError("learners", "fedavg needs identical hidden_width across clients")
    if data is not None:
        if len(data.clients) != cfg.m:
            raise ProtocolError("clients", f"config has {cfg.m} learners but data has {len(data.clients)} shards")
        d = data.test.dim
        for i, ds in enumerate(data.clients):
            if len(ds) == 0:
                raise ProtocolError("data.partition", f"client {i} received no training examples")
            if ds.dim != d or ds.num_classes != data.num_classes:
                raise ProtocolError("data", f"client {i} shard is inconsistent with the test set")
        if data.unlabeled.features.shape[1] != d:
            raise ProtocolError("data", "unlabeled pool dimension differs from the test set")


def derive_seed(*words: int) -> int:
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0])


def client_learners(cfg: ExperimentConfig) -> list[LearnerConfig]:
    return [replace(lc, seed=derive_seed(cfg.master_seed, _LEARNER, i)) for i, lc in enumerate(cfg.learners)]


def default_threads() -> int | None:
    v = os.environ.get("FEDCT_THREADS")
    return max(1, int(v)) if v else None


def _accuracy(state: LearnerState, ds: LabeledDataset) -> float:
    if len(ds) == 0:
        return float("nan")
    return float(np.mean(predict_hard(state, ds.features) == ds.labels))


class _Pool:
    def __init__(self, threads):
        self.threads = threads if threads is not None else default_threads()

    def map(self, fn, items):
        items = list(items)
        if not self.threads or self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))


def _train(i, lc, state, ds):
    try:
        return fit_update(lc, state, ds)
    except Exception as exc:  # noqa: BLE001 - re-raised with the client id
        raise ClientFailure(i, exc) from exc


def pseudo_labeled(U: UnlabeledDataset, labels, num_classes: int) -> LabeledDataset:
    keep = labels != ABSTAIN
    return LabeledDataset(U.features[keep], labels[keep], num_classes)


def run_fedct(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    validate(cfg, data)
    if cfg.protocol not in ("fedct", "dp-fedct"):
        raise ProtocolError("protocol", "run_fedct handles fedct and dp-fedct")
    pool = _Pool(threads)
    C = data.num_classes
    U = data.unlabeled
    u = len(U)
    lcs = client_learners(cfg)
    m = cfg.m
    states: list[LearnerState | None] = [None] * m
    # pseudo-label set each batch learner was last fit on; a batch fit is a
    # pure function of its data, so an unchanged set means an unchanged model
    fitted_on: list[object] = [object()] * m
    P: LabeledDataset | None = None
    train_sets = list(data.clients)
    prev = np.full(u, ABSTAIN, dtype=np.int64)
    msg_bytes = label_message_bytes(u, C)
    records = []
    k = 0
    t_start = time.perf_counter()
    for t in range(cfg.rounds):
        def step(i):
            if lcs[i].kind in BATCH_KINDS and fitted_on[i] is P and states[i] is not None:
                return states[i]
            return _train(i, lcs[i], states[i], train_sets[i])
        states = pool.map(step, range(m))
        fitted_on = [P] * m
        if t % cfg.period != cfg.period - 1:
            continue
        k += 1
        votes = pool.map(lambda i: predict_hard(states[i], U.features), range(m))
        if cfg.protocol == "dp-fedct":
            p = cfg.noise.flip_prob
            votes = [
                repair_votes(
                    xor_mechanism(one_hot(v, C), p, derive_seed(cfg.master_seed, _NOISE, i, k)),
                    derive_seed(cfg.master_seed, _REPAIR, i, k),
                )
                for i, v in enumerate(votes)
            ]
        L = consensus(np.stack(votes), cfg.consensus, C)
        changes = int(np.count_nonzero(L != prev))
        prev = L
        P = pseudo_labeled(U, L, C)
        train_sets = [ds.concat(P) for ds in data.clients]
        records.append(RoundRecord(
            round=k,
            client_ids=tuple(range(m)),
            train_acc=tuple(_accuracy(s, ds) for s, ds in zip(states, data.clients)),
            test_acc=tuple(_accuracy(s, data.test) for s in states),
            consensus_changes=changes,
            pool_size=len(P),
            bytes_sent=(msg_bytes,) * m,
            wall_time=time.perf_counter() - t_start,
            consensus=L,
        ))
        log.debug("round %d: changes=%d pool=%d", k, changes, len(P))
    return RunResult(cfg.protocol, records, states, _summary(cfg, records, data))


def average_parameters(states) -> np.ndarray:
    """Uniform average of the clients' flat parameter vectors.

    Centred on the first vector, so averaging identical models returns that
    model bit-for-bit.
    """
    thetas = np.stack([get_parameters(s) for s in states])
    return thetas[0] + np.mean(thetas - thetas[0], axis=0)


def run_fedavg(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    validate(cfg, data)
    pool = _Pool(threads)
    lcs = client_learners(cfg)
    m = cfg.m
    d, C = data.test.dim, data.num_classes
    init = fresh_state(lcs[0], d, C).model
    states = [replace(fresh_state(lc, d, C), model=init.copy()) for lc in lcs]
    msg_bytes = -(-parameter_count(lcs[0], d, C) * 32 // 8)
    records = []
    k = 0
    t_start = time.perf_counter()
    for t in range(cfg.rounds):
        states = pool.map(lambda i: _train(i, lcs[i], states[i], data.clients[i]), range(m))
        if t % cfg.period != cfg.period - 1:
            continue
        k += 1
        avg = average_parameters(states)
        states = [set_parameters(s, avg) for s in states]
        records.append(RoundRecord(
            round=k,
            client_ids=tuple(range(m)),
            train_acc=tuple(_accuracy(s, ds) for s, ds in zip(states, data.clients)),
            test_acc=tuple(_accuracy(s, data.test) for s in states),
            bytes_sent=(msg_bytes,) * m,
            wall_time=time.perf_counter() - t_start,
        ))
    result = RunResult(cfg.protocol, records, states, _summary(cfg, records, data))
    result.global_state = states[0]
    return result


def _train_alone(i, lc, ds, rounds, period, on_eval):
    state = None
    for t in range(rounds):
        # refitting a batch learner on unchanged data reproduces the same model
        if state is None or lc.kind not in BATCH_KINDS:
            state = _train(i, lc, state, ds)
        if t % period == period - 1:
            on_eval(t // period + 1, state)
    return state


def run_local_only(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    validate(cfg, data)
    pool = _Pool(threads)
    lcs = client_learners(cfg)
    m = cfg.m
    snaps: list[dict] = [{} for _ in range(m)]

    def client(i):
        def on_eval(k, s):
            snaps[i][k] = (_accuracy(s, data.clients[i]), _accuracy(s, data.test))
        return _train_alone(i, lcs[i], data.clients[i], cfg.rounds, cfg.period, on_eval)

    states = pool.map(client, range(m))
    records = [
        RoundRecord(
            round=k,
            client_ids=tuple(range(m)),
            train_acc=tuple(snaps[i][k][0] for i in range(m)),
            test_acc=tuple(snaps[i][k][1] for i in range(m)),
            bytes_sent=(0,) * m,
        )
        for k in range(1, cfg.communication_rounds + 1)
    ]
    return RunResult(cfg.protocol, records, states, _summary(cfg, records, data))


def pooled(data: FederatedData) -> LabeledDataset:
    out = data.clients[0]
    for ds in data.clients[1:]:
        out = out.concat(ds)
    return out


def run_centralized(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    """One learner (client 0's configuration and seed) on the union of all shards."""
    validate(cfg, data)
    lc = client_learners(cfg)[0]
    D = pooled(data)
    snaps = {}

    def on_eval(k, s):
        snaps[k] = (_accuracy(s, D), _accuracy(s, data.test))

    state = _train_alone(0, lc, D, cfg.rounds, cfg.period, on_eval)
    records = [
        RoundRecord(round=k, client_ids=(0,), train_acc=(snaps[k][0],), test_acc=(snaps[k][1],), bytes_sent=(0,))
        for k in sorted(snaps)
    ]
    result = RunResult(cfg.protocol, records, [state], _summary(cfg, records, data))
    result.global_state = state
    return result


def run_pate(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    """Teachers train on private shards only, label ``U`` once, and a fresh
    student learns from the pseudo-labeled pool alone."""
    validate(cfg, data)
    pool = _Pool(threads)
    lcs = client_learners(cfg)
    m = cfg.m
    C = data.num_classes
    U = data.unlabeled
    teachers = pool.map(
        lambda i: _train_alone(i, lcs[i], data.clients[i], cfg.rounds, cfg.rounds, lambda k, s: None),
        range(m),
    )
    votes = np.stack([predict_hard(s, U.features) for s in teachers])
    L = consensus(votes, cfg.consensus, C)
    P = pseudo_labeled(U, L, C)
    student_cfg = cfg.student or cfg.learners[0]
    student_cfg = replace(student_cfg, seed=derive_seed(cfg.master_seed, _LEARNER, m))
    student = None
    if len(P):
        student = _train_alone(m, student_cfg, P, cfg.rounds, cfg.rounds, lambda k, s: None)
    records = [RoundRecord(
        round=1,
        client_ids=tuple(range(m)),
        train_acc=tuple(_accuracy(s, ds) for s, ds in zip(teachers, data.clients)),
        test_acc=tuple(_accuracy(s, data.test) for s in teachers),
        consensus_changes=int(np.count_nonzero(L != ABSTAIN)),
        pool_size=len(P),
        bytes_sent=(label_message_bytes(len(U), C),) * m,
        consensus=L,
    )]
    summary = _summary(cfg, records, data)
    summary["student_rows"] = len(P)
    summary["student_test_acc"] = _accuracy(student, data.test) if student is not None else None
    result = RunResult(cfg.protocol, records, teachers, summary)
    result.student_state = student
    return result


def _summary(cfg: ExperimentConfig, records, data: FederatedData) -> dict:
    metrics = run_metrics(records, data.unlabeled.hidden_truth)
    last = records[-1]
    out = {
        "protocol": cfg.protocol,
        "clients": cfg.m,
        "rounds": cfg.rounds,
        "period": cfg.period,
        "communication_rounds": len(records) if cfg.protocol not in ("local-only", "centralized") else 0,
        "final_test_acc": list(last.test_acc),
        "final_mean_test_acc": metrics["final_mean_test_acc"],
        "final_std_test_acc": metrics["final_std_test_acc"],
        "bytes_per_client_total": int(sum(r.bytes_sent[0] for r in records if r.bytes_sent)),
        "final_pool_size": last.pool_size,
        "total_consensus_changes": metrics["total_consensus_changes"],
        "stable_from_round": metrics["stable_from_round"],
        "final_consensus_acc": None,
    }
    if last.consensus is not None and data.unlabeled.hidden_truth is not None:
        out["final_consensus_acc"] = consensus_accuracy(last.consensus, data.unlabeled.hidden_truth)
    if cfg.noise is not None:
        out["noise"] = {"epsilon": cfg.noise.epsilon, "sensitivity": cfg.noise.sensitivity,
                        "flip_prob": cfg.noise.flip_prob}
    return out


RUNNERS = {
    "fedct": run_fedct,
    "dp-fedct": run_fedct,
    "fedavg": run_fedavg,
    "local-only": run_local_only,
    "centralized": run_centralized,
    "pate": run_pate,
}


def run(cfg: ExperimentConfig, data: FederatedData, threads=None) -> RunResult:
    validate(cfg, data)
    return RUNNERS[cfg.protocol](cfg, data, threads=threads)
