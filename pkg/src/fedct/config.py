"""Experiment configuration files.

Configs are YAML key trees (JSON is accepted, being a subset).  Everything
random is derived from the single ``master_seed`` key.  A minimal file::

    protocol: fedct
    master_seed: 7
    clients: 5
    rounds: 30
    period: 3
    learner: {kind: decision-tree}
    data:
      source: blobs
      n: 600
      d: 2
      classes: 3
      separation: 4.0

Validation errors name the offending key, e.g. ``consensus.quorum``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import fields
from importlib import resources
from pathlib import Path

import yaml

from .consensus import ConsensusError, ConsensusSpec
from .data import (
    DataError,
    LabeledDataset,
    load_csv,
    make_blobs,
    partition_dirichlet,
    partition_iid,
    split_train_test_unlabeled,
)
from .learners import LearnerConfig, LearnerError
from .privacy import NoiseSpec, PrivacyError
from .protocol import PROTOCOLS, ExperimentConfig, FederatedData, ProtocolError, derive_seed, validate

# seed stream tags for data preparation
_DATA, _SPLIT, _PARTITION = 11, 12, 13

BUNDLED = {"breast-cancer": ("breast_cancer.csv", "diagnosis")}

_LEARNER_KEYS = {f.name for f in fields(LearnerConfig)}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    return raw


def config_digest(raw: dict) -> str:
    """SHA-256 of the canonical JSON form; insensitive to key order."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _get(tree: dict, key: str, default=None, kind=None, prefix=""):
    val = tree.get(key, default)
    full = f"{prefix}{key}"
    if kind is not None and val is not None:
        if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
            raise ConfigError(full, f"expected an integer, got {val!r}")
        if kind is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise ConfigError(full, f"expected a number, got {val!r}")
        if kind is float:
            val = float(val)
        if kind is str and not isinstance(val, str):
            raise ConfigError(full, f"expected a string, got {val!r}")
        if kind is dict and not isinstance(val, dict):
            raise ConfigError(full, f"expected a mapping, got {val!r}")
    return val


def learner_from_dict(d: dict, key: str) -> LearnerConfig:
    if not isinstance(d, dict):
        raise ConfigError(key, "expected a mapping")
    unknown = set(d) - _LEARNER_KEYS
    if unknown:
        bad = sorted(unknown)[0]
        raise ConfigError(f"{key}.{bad}", "unknown learner setting")
    try:
        return LearnerConfig(**d)
    except LearnerError as exc:
        raise ConfigError(key, str(exc)) from None
    except TypeError as exc:
        raise ConfigError(key, str(exc)) from None


def experiment_from_dict(raw: dict) -> ExperimentConfig:
    protocol = _get(raw, "protocol", kind=str)
    if protocol is None:
        raise ConfigError("protocol", "missing")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")
    master_seed = _get(raw, "master_seed", 0, int)
    rounds = _get(raw, "rounds", 1, int)
    period = _get(raw, "period", 1, int)

    base = _get(raw, "learner", {}, dict)
    per_client = raw.get("learners")
    if per_client is not None:
        if not isinstance(per_client, list) or not per_client:
            raise ConfigError("learners", "expected a non-empty list of learner mappings")
        learners = tuple(learner_from_dict({**base, **lc}, f"learners[{i}]") for i, lc in enumerate(per_client))
        m = _get(raw, "clients", len(learners), int)
        if m != len(learners):
            raise ConfigError("clients", f"clients={m} but {len(learners)} learners listed")
    else:
        m = _get(raw, "clients", None, int)
        if m is None:
            raise ConfigError("clients", "missing")
        if m < 1:
            raise ConfigError("clients", "must be at least 1")
        learners = (learner_from_dict(base, "learner"),) * m

    cons = _get(raw, "consensus", {}, dict)
    try:
        consensus = ConsensusSpec(_get(cons, "kind", "majority", str, "consensus."),
                                  _get(cons, "quorum", None, float, "consensus."))
    except ConsensusError as exc:
        key = "consensus.quorum" if "quorum" in str(exc) else "consensus.kind"
        raise ConfigError(key, str(exc)) from None

    noise = None
    nz = raw.get("noise")
    if nz is not None:
        if not isinstance(nz, dict):
            raise ConfigError("noise", "expected a mapping")
        s = _get(nz, "sensitivity", 1, int, "noise.")
        try:
            if "flip_prob" in nz:
                noise = NoiseSpec.from_flip_prob(_get(nz, "flip_prob", None, float, "noise."), s)
            elif "epsilon" in nz:
                noise = NoiseSpec.from_budget(_get(nz, "epsilon", None, float, "noise."), s)
            else:
                raise ConfigError("noise", "needs either epsilon or flip_prob")
        except PrivacyError as exc:
            msg = str(exc)
            key = "noise.sensitivity" if "sensitivity" in msg else (
                "noise.epsilon" if "epsilon" in msg else "noise.flip_prob")
            raise ConfigError(key, msg) from None

    student = None
    if raw.get("student") is not None:
        student = learner_from_dict({**base, **raw["student"]}, "student")

    cfg = ExperimentConfig(protocol, learners, consensus, noise, rounds, period, master_seed, student)
    try:
        validate(cfg)
    except ProtocolError as exc:
        raise ConfigError(exc.key, str(exc).split(": ", 1)[1]) from None
    return cfg


def load_dataset(spec: dict, master_seed: int, base_dir: Path | None = None) -> LabeledDataset:
    source = _get(spec, "source", "blobs", str, "data.")
    try:
        if source == "blobs":
            return make_blobs(
                _get(spec, "n", 600, int, "data."),
                _get(spec, "d", 2, int, "data."),
                _get(spec, "classes", 3, int, "data."),
                _get(spec, "separation", 4.0, float, "data."),
                derive_seed(master_seed, _DATA),
                scale=_get(spec, "scale", 1.0, float, "data."),
            )
        if source == "csv":
            path = _get(spec, "path", None, str, "data.")
            if path is None:
                raise ConfigError("data.path", "missing for a csv source")
            path = Path(path)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            return load_csv(path, _get(spec, "label_column", "label", str, "data."))
        if source in BUNDLED:
            fname, label = BUNDLED[source]
            with resources.as_file(resources.files("fedct.datasets") / fname) as p:
                return load_csv(p, label)
    except DataError as exc:
        raise ConfigError("data", str(exc)) from None
    raise ConfigError("data.source", f"unknown data source {source!r}")


def build_data(raw: dict, m: int, master_seed: int, base_dir: Path | None = None) -> FederatedData:
    spec = _get(raw, "data", {}, dict)
    ds = load_dataset(spec, master_seed, base_dir)
    split = _get(spec, "split", {}, dict, "data.")
    fr = (_get(split, "train", 0.5, float, "data.split."),
          _get(split, "test", 0.2, float, "data.split."),
          _get(split, "unlabeled", 0.3, float, "data.split."))
    part = _get(spec, "partition", {}, dict, "data.")
    scheme = _get(part, "scheme", "iid", str, "data.partition.")
    try:
        train, test, unlabeled = split_train_test_unlabeled(ds, *fr, derive_seed(master_seed, _SPLIT))
        pseed = derive_seed(master_seed, _PARTITION)
        if scheme == "iid":
            shards = partition_iid(train, m, pseed)
        elif scheme == "dirichlet":
            shards = partition_dirichlet(
                train, m,
                _get(part, "alpha1", 100.0, float, "data.partition."),
                _get(part, "alpha2", 2.0, float, "data.partition."),
                pseed,
            )
        else:
            raise ConfigError("data.partition.scheme", f"unknown scheme {scheme!r}")
    except DataError as exc:
        raise ConfigError("data", str(exc)) from None
    return FederatedData(tuple(shards), test, unlabeled)
