"""``fedct`` command-line driver.

Exit codes: 0 success, 2 configuration or argument error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BoundError,
    CommError,
    CommSpec,
    ConvergenceQuery,
    communication_cost,
    convergence_bound,
    probit,
    run_metrics,
)
from .attacks import confidence_threshold_attack, label_query_attack
from .config import ConfigError, build_data, config_digest, experiment_from_dict, load_config
from .learners import parameter_count, predict_hard
from .privacy import PrivacyError, estimate_sensitivity, sensitivity_bound
from .protocol import ProtocolError, client_learners, derive_seed, pooled, run
from .records import read_rounds_csv, write_rounds_csv

log = logging.getLogger("fedct")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _emit(obj, fh=None):
    fh = fh or sys.stdout
    fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _kv(pairs):
    width = max(len(k) for k, _ in pairs)
    for k, v in pairs:
        print(f"{k:<{width}} = {v}")


def source_version() -> str:
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _prepare(config_path):
    raw = load_config(config_path)
    cfg = experiment_from_dict(raw)
    data = build_data(raw, cfg.m, cfg.master_seed, Path(config_path).resolve().parent)
    return raw, cfg, data


def cmd_run(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    raw, cfg, data = _prepare(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg, data)
    rounds_path, summary_path, manifest_path = out / "rounds.csv", out / "summary.json", out / "manifest.json"
    with rounds_path.open("w", encoding="utf-8", newline="") as fh:
        write_rounds_csv(result.records, fh)
    summary = dict(result.summary)
    summary["comm"] = _comm_for(cfg, data)
    with summary_path.open("w", encoding="utf-8") as fh:
        _emit(summary, fh)
    manifest = {
        "config_digest": config_digest(raw),
        "source_version": source_version(),
        "start_time": started,
        "outputs": {"rounds": str(rounds_path), "summary": str(summary_path), "manifest": str(manifest_path)},
        "seeds": {
            "master_seed": cfg.master_seed,
            "client_learners": [lc.seed for lc in client_learners(cfg)],
        },
    }
    with manifest_path.open("w", encoding="utf-8") as fh:
        _emit(manifest, fh)
    print(f"wrote {len(result.records)} rounds to {rounds_path}")
    return EXIT_OK


def _comm_for(cfg, data) -> dict:
    u, C, d = len(data.unlabeled), data.num_classes, data.test.dim
    params = parameter_count(cfg.learners[0], d, C) if cfg.protocol == "fedavg" else 0
    spec = CommSpec(cfg.protocol, u, C, params, 32, cfg.rounds, cfg.period)
    return communication_cost(spec)


def cmd_bounds(args) -> int:
    conv = [args.u, args.m, args.c, args.t0]
    sens = [args.n, args.rate, args.delta]
    if any(v is not None for v in conv) == any(v is not None for v in sens):
        raise UsageError("give either --u/--m/--c/--t0 or --n/--rate/--delta")
    if any(v is not None for v in conv):
        if any(v is None for v in conv):
            raise UsageError("the convergence bound needs all of --u, --m, --c, --t0")
        q = ConvergenceQuery(args.u, args.m, args.c, args.t0)
        b = convergence_bound(q)
        out = {"u": q.u_size, "m": q.m, "c": q.c, "t0": q.t0, "raw": b.raw, "clamped": b.clamped}
        pairs = [("u", q.u_size), ("m", q.m), ("c", q.c), ("t0", q.t0),
                 ("raw", f"{b.raw:.6e}"), ("clamped", f"{b.clamped:.6f}")]
    else:
        if any(v is None for v in sens):
            raise UsageError("the sensitivity bound needs all of --n, --rate, --delta")
        value = sensitivity_bound(args.n, args.rate, args.delta)
        P = probit(1.0 - args.delta)
        out = {"n": args.n, "rate": args.rate, "delta": args.delta, "probit": P, "sensitivity_bound": value}
        pairs = [("n", args.n), ("rate", args.rate), ("delta", args.delta), ("probit", f"{P:.8f}"),
                 ("sensitivity_bound", value)]
    if args.json:
        _emit(out)
    else:
        _kv(pairs)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    raw, cfg, data = _prepare(args.config)
    sec = raw.get("sensitivity") or {}
    if not isinstance(sec, dict):
        raise ConfigError("sensitivity", "expected a mapping")
    k = sec.get("k", 100)
    client = sec.get("client", 0)
    if not isinstance(k, int) or k < 1:
        raise ConfigError("sensitivity.k", "must be a positive integer")
    if not isinstance(client, int) or not 0 <= client < cfg.m:
        raise ConfigError("sensitivity.client", f"must be a client index in [0, {cfg.m})")
    lc = client_learners(cfg)[client]
    rep = estimate_sensitivity(lc, data.clients[client], data.unlabeled, k,
                               derive_seed(cfg.master_seed, 21, client))
    out = {"client": client, "samples": rep.samples, "row_hamming_max": rep.row_hamming_max,
           "entry_hamming_max": rep.entry_hamming_max, "u_size": len(data.unlabeled)}
    _emit(out)
    return EXIT_OK


def cmd_attack(args) -> int:
    raw, cfg, data = _prepare(args.config)
    sec = raw.get("attack") or {}
    if not isinstance(sec, dict):
        raise ConfigError("attack", "expected a mapping")
    epochs = sec.get("epochs", 1)
    if not isinstance(epochs, int) or epochs < 1:
        raise ConfigError("attack.epochs", "must be a positive integer")
    result = run(cfg, data)
    members = pooled(data)
    if cfg.protocol in ("fedavg", "centralized"):
        res = confidence_threshold_attack(result.global_state, members, data.test, epochs)
        surface = "model-confidence"
    else:
        states = result.states
        preds = [lambda X, s=s: predict_hard(s, X) for s in states]
        res = label_query_attack(preds, members, data.test, epochs)
        surface = "label-query"
    out = {"protocol": cfg.protocol, "surface": surface, "epochs": epochs, **res.as_dict()}
    _emit(out)
    return EXIT_OK


def cmd_comm(args) -> int:
    spec = CommSpec(args.protocol, args.u or 0, args.classes or 0, args.params or 0, args.bits,
                    args.rounds, args.period)
    _emit(communication_cost(spec))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.out) / "rounds.csv"
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            records = read_rounds_csv(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not records:
        raise UsageError(f"{path} holds no rounds")
    summary = run_metrics(records)
    if args.json:
        _emit(summary)
        return EXIT_OK
    print(f"{'round':>5} {'mean_test':>9} {'std_test':>9} {'changes':>8} {'pool':>6}")
    for r in summary["rounds"]:
        print(f"{r['round']:>5} {r['mean_test_acc']:>9.4f} {r['std_test_acc']:>9.4f} "
              f"{r['consensus_changes']:>8} {r['pool_size']:>6}")
    stable = summary["stable_from_round"]
    print(f"stable from round: {stable if stable is not None else '-'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedct", description="Federated co-training experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute the configured protocol")
    r.add_argument("config")
    r.add_argument("--out", "-o", required=True)
    r.set_defaults(fn=cmd_run)

    b = sub.add_parser("bounds", help="evaluate the convergence or sensitivity bound")
    for flag, typ in (("--u", int), ("--m", int), ("--c", float), ("--t0", int),
                      ("--n", int), ("--rate", float), ("--delta", float)):
        b.add_argument(flag, type=typ)
    b.add_argument("--json", action="store_true")
    b.set_defaults(fn=cmd_bounds)

    s = sub.add_parser("sensitivity", help="estimate prediction sensitivity on the unlabeled pool")
    s.add_argument("config")
    s.set_defaults(fn=cmd_sensitivity)

    a = sub.add_parser("attack", help="membership inference against a finished run")
    a.add_argument("config")
    a.set_defaults(fn=cmd_attack)

    c = sub.add_parser("comm", help="bytes per client and round")
    c.add_argument("--protocol", required=True)
    c.add_argument("--u", type=int)
    c.add_argument("--classes", type=int)
    c.add_argument("--params", type=int)
    c.add_argument("--bits", type=int, default=32)
    c.add_argument("--rounds", type=int, default=1)
    c.add_argument("--period", type=int, default=1)
    c.set_defaults(fn=cmd_comm)

    rep = sub.add_parser("report", help="summarise rounds.csv of a finished run")
    rep.add_argument("out")
    rep.add_argument("--json", action="store_true")
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ProtocolError, UsageError, BoundError, CommError, PrivacyError) as exc:
        print(f"fedct: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        print(f"fedct: runtime failure: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
