"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py``; the summary lines are
printed at the end of the session (and immediately with ``-s``).
"""

import itertools
import math
import time
from collections import Counter
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from fedct.analysis import (
    CommSpec,
    ConvergenceQuery,
    communication_cost,
    convergence_bound,
    hurwitz_zeta,
    log_convergence_bound,
    probit,
)
from fedct.attacks import confidence_threshold_attack, label_query_attack
from fedct.cli import main
from fedct.config import build_data, experiment_from_dict
from fedct.consensus import majority_vote, qualified_majority
from fedct.data import ABSTAIN
from fedct.learners import linear, mlp, predict_hard
from fedct.learners.forest import fit_forest
from fedct.learners.tree import fit_tree
from fedct.privacy import log_likelihood, sensitivity_bound, xor_mechanism
from fedct.protocol import pooled, run
from fedct.records import rounds_csv_text

from conftest import ACCEPTANCE_LINES

SEEDS = range(10)


class Criterion:
    """Times a criterion and records its PASS/FAIL line."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.checks = []

    def check(self, ok, what):
        self.checks.append((bool(ok), what))

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.checks.append((False, f"raised {exc_type.__name__}: {exc}"))
        self.check(elapsed < self.budget, f"runtime {elapsed:.1f}s < {self.budget}s")
        failed = [w for ok, w in self.checks if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(failed) if failed else f"{len(self.checks)} checks, {elapsed:.1f}s"
        line = f"[{status}] criterion {self.number:>2}: {self.title} ({detail})"
        ACCEPTANCE_LINES[self.number] = line
        print(line)
        if exc_type is None:
            assert not failed, line
        return False


# -- oracles

def brute_zeta(s, q, terms=10**7, chunk=10**6):
    parts = []
    for start in range(0, terms, chunk):
        k = np.arange(start, min(start + chunk, terms), dtype=np.float64)
        parts.append(float(np.sum((k + q) ** -s)))
    a = q + terms
    return math.fsum(parts) + a ** (1 - s) / (s - 1) + 0.5 * a ** -s


def bisect_probit(r, iters=120):
    """Bisection on a 50-digit normal CDF, independent of the rational fit."""
    with mpmath.workdps(50):
        target = mpmath.mpf(r)
        cdf = lambda x: mpmath.erfc(-x / mpmath.sqrt(2)) / 2  # noqa: E731
        lo, hi = mpmath.mpf(-40), mpmath.mpf(40)
        for _ in range(iters):
            mid = (lo + hi) / 2
            if cdf(mid) < target:
                lo = mid
            else:
                hi = mid
        return float((lo + hi) / 2)


def brute_mode(col):
    c = Counter(col)
    top = max(c.values())
    return min(k for k, v in c.items() if v == top)


def finite_diff(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def final_acc(result):
    if result.protocol == "pate":
        return result.summary["student_test_acc"]
    return result.summary["final_mean_test_acc"]


def run_raw(raw, seed, protocol=None, **over):
    raw = {**raw, **over, "master_seed": seed}
    if protocol:
        raw["protocol"] = protocol
    cfg = experiment_from_dict(raw)
    return run(cfg, build_data(raw, cfg.m, seed)), cfg


# -- criteria

def test_criterion_01_communication():
    with Criterion(1, "communication accounting", 5) as c:
        fedct = communication_cost(CommSpec("fedct", u_size=10**4, num_classes=10))["bytes_per_round"]
        fedavg = communication_cost(CommSpec("fedavg", parameter_count=669_706, bits_per_parameter=32))
        fedavg = fedavg["bytes_per_round"]
        c.check(fedct == 12_500, f"fedct bytes {fedct} == 12500")
        c.check(round(fedct / 1024, 1) == 12.2, f"{fedct / 1024:.2f} KiB ~ 12.2")
        c.check(fedavg == 2_678_824, f"fedavg bytes {fedavg} == 2678824")
        c.check(round(fedavg / 1024 ** 2, 1) == 2.6, f"{fedavg / 1024 ** 2:.2f} MiB ~ 2.6")
        c.check(round(fedavg / fedct) == 214, f"ratio {fedavg / fedct:.2f} ~ 214")


def test_criterion_02_sensitivity_bound_and_probit():
    with Criterion(2, "sensitivity bound formula, probit accuracy", 5) as c:
        c.check(sensitivity_bound(100, 0.05, 0.05) == 10, "n=100 rate=0.05 delta=0.05 -> 10")
        rng = np.random.default_rng(0)
        for n, r in zip(rng.integers(0, 10**5, 200), rng.uniform(0, 0.99, 200)):
            v = sensitivity_bound(int(n), float(r), 0.5)
            c.check(v == math.ceil(round(n * r, 9)), f"delta=0.5 collapse at n={n}, rate={r}")
        grid = np.concatenate([np.logspace(-12, -1, 60), np.linspace(0.01, 0.99, 99), 1 - np.logspace(-12, -2, 30)])
        worst = max(abs(probit(float(r)) - bisect_probit(float(r))) for r in grid)
        c.check(worst <= 1e-6, f"probit max |err| {worst:.2e} <= 1e-6")


def test_criterion_03_hurwitz_zeta():
    with Criterion(3, "Hurwitz zeta", 60) as c:
        err = abs(hurwitz_zeta(2, 1) - math.pi ** 2 / 6)
        c.check(err <= 1e-9, f"zeta(2,1) err {err:.1e}")
        rng = np.random.default_rng(7)
        bad = 0
        for s, q in zip(rng.uniform(1.05, 30, 100), rng.uniform(1, 1e5, 100)):
            lhs, rhs = hurwitz_zeta(s, q), q ** -s + hurwitz_zeta(s, q + 1)
            bad += abs(lhs - rhs) > 1e-9 * abs(lhs)
        c.check(bad == 0, f"recurrence violations {bad}/100")
        got, want = hurwitz_zeta(2.5, 1001), brute_zeta(2.5, 1001)
        c.check(abs(got - want) <= 1e-8 * want, f"zeta(2.5,1001) rel err {abs(got - want) / want:.1e}")


def test_criterion_04_convergence_bound():
    with Criterion(4, "convergence bound monotonicity, near-certain convergence at m=50", 10) as c:
        ms, t0s = range(3, 61), [1, 2, 5, 10, 50, 100, 1000, 10**4, 10**6]
        for cc in (0.1, 1.0, 10.0):
            for m in ms:
                v = [log_convergence_bound(ConvergenceQuery(10**4, m, cc, t)) for t in t0s]
                c.check(all(a >= b for a, b in zip(v, v[1:])), f"nonincreasing in t0 (m={m}, c={cc})")
            for t in t0s:
                if 4 * cc >= t + 1:
                    continue
                v = [log_convergence_bound(ConvergenceQuery(10**4, m, cc, t)) for m in ms]
                c.check(all(a >= b - 1e-12 for a, b in zip(v, v[1:])), f"nonincreasing in m (t0={t}, c={cc})")
        raw = convergence_bound(ConvergenceQuery(10**4, 50, 1.0, 1000)).raw
        c.check(raw < 1e-30, f"raw bound {raw:.3e} < 1e-30")


def test_criterion_05_consensus_oracle():
    with Criterion(5, "consensus vs exhaustive mode", 60) as c:
        total = 0
        for m in range(1, 6):
            for C in range(1, 4):
                configs = list(itertools.product(range(C), repeat=m))
                V = np.array(configs, dtype=np.int64).T
                maj = majority_vote(V, C)
                want = [brute_mode(col) for col in configs]
                c.check(maj.tolist() == want, f"majority m={m} C={C}")
                tops = [sorted(Counter(col).values(), reverse=True) + [0] for col in configs]
                unique = np.array([t[0] > t[1] for t in tops])
                for q in (0.51, 0.6, 2 / 3, 0.75, 0.9, 1.0):
                    qm = qualified_majority(V, q, C)
                    need = math.ceil(Fraction(q).limit_denominator(1000) * m)
                    want_qm = [brute_mode(col) if Counter(col)[brute_mode(col)] >= need else ABSTAIN
                               for col in configs]
                    c.check(qm.tolist() == want_qm, f"qm vs brute-force quorum m={m} C={C} q={q}")
                    c.check(np.all((qm == maj) | (qm == ABSTAIN)), f"qm agrees with majority or abstains m={m} C={C} q={q}")
                    c.check(np.all((qm[unique] == maj[unique]) | (qm[unique] == ABSTAIN)),
                            f"qm never overturns a unique winner m={m} C={C} q={q}")
                total += len(configs)
        c.check(total > 0, "configurations enumerated")


def test_criterion_06_dp_exactness():
    with Criterion(6, "XOR mechanism DP exactness and flip statistics", 60) as c:
        for n in range(1, 9):
            V = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
            dist = np.count_nonzero(V[:, None, :] ^ V[None, :, :], axis=-1)
            for p in (0.05, 0.25, 0.4):
                L = math.log((1 - p) / p)
                LL = log_likelihood(V[None, :, :], V[:, None, :], p)
                for s in range(1, min(n, 3) + 1):
                    a, b = np.nonzero((dist >= 1) & (dist <= s))
                    gap = np.abs(LL[a] - LL[b]).max()
                    c.check(gap <= s * L + 1e-9, f"n={n} p={p} s*={s}: max log ratio {gap:.6f} <= {s * L:.6f}")
                    a, b = np.nonzero(dist == s)
                    c.check(math.isclose(np.abs(LL[a] - LL[b]).max(), s * L, rel_tol=1e-12),
                            f"n={n} p={p} s*={s}: equality at h=s*")
        # 12-bit strict label matrices (4 rows x 3 classes), all outputs
        O = np.array(list(itertools.product((0, 1), repeat=12)), dtype=np.uint8)
        p, s = 0.3, 2
        L = math.log((1 - p) / p)
        worst = 0.0
        for lv in itertools.product(range(3), repeat=4):
            A = np.zeros(12, dtype=np.uint8)
            A[[3 * r + k for r, k in enumerate(lv)]] = 1
            la = log_likelihood(O, A, p)
            for h in range(1, s + 1):
                for pos in itertools.combinations(range(12), h):
                    B = A.copy()
                    B[list(pos)] ^= 1
                    worst = max(worst, float(np.abs(la - log_likelihood(O, B, p)).max()))
        c.check(worst <= s * L + 1e-9 and math.isclose(worst, s * L, rel_tol=1e-12),
                f"12-bit strict inputs: max {worst:.6f} vs eps {s * L:.6f}")
        n_bits = 10**5
        for p in (0.1, 0.3, 0.5):
            frac = xor_mechanism(np.zeros((n_bits // 10, 10), dtype=np.uint8), p, 99).mean()
            sd = math.sqrt(p * (1 - p) / n_bits)
            c.check(abs(frac - p) <= 3 * sd, f"p={p}: flip fraction {frac:.5f} within 3 sd ({3 * sd:.5f})")


CONV = {
    "protocol": "fedct", "clients": 5, "rounds": 60, "period": 3,
    "learner": {"kind": "decision-tree"},
    "data": {"source": "blobs", "n": 1000, "d": 2, "classes": 3, "separation": 10.0},
}


def test_criterion_07_protocol_convergence():
    with Criterion(7, "consensus converges in vivo; dp-fedct(p=0) == fedct", 120) as c:
        for seed in range(5):
            res, _ = run_raw(CONV, seed)
            ch = [r.consensus_changes for r in res.records]
            first = ch.index(0) if 0 in ch else None
            c.check(first is not None and all(x == 0 for x in ch[first:]),
                    f"seed {seed}: changes reach 0 and stay 0 ({ch[:6]}...)")
            dp, _ = run_raw(CONV, seed, protocol="dp-fedct", noise={"flip_prob": 0.0})
            same = rounds_csv_text(dp.records) == rounds_csv_text(res.records) and all(
                np.array_equal(a.consensus, b.consensus) for a, b in zip(dp.records, res.records))
            c.check(same, f"seed {seed}: dp-fedct p=0 trajectory identical")


# iid orderings: an iterative learner on overlapping blobs, a tree on the UCI table
BLOBS_MLP = {
    "clients": 5, "rounds": 40, "period": 10,
    "learner": {"kind": "mlp", "hidden_width": 32, "learning_rate": 0.1, "local_epochs": 5},
    "data": {"source": "blobs", "n": 1500, "d": 10, "classes": 5, "separation": 3.0,
             "split": {"train": 0.6, "test": 0.25, "unlabeled": 0.15}},
}
UCI_TREE = {
    "clients": 5, "rounds": 30, "period": 3,
    "learner": {"kind": "decision-tree"},
    "data": {"source": "breast-cancer", "split": {"train": 0.6, "test": 0.25, "unlabeled": 0.15}},
}
# pathological label skew, every client iteratively trained
SKEW = {"alpha1": 0.01, "alpha2": 0.01}
BLOBS_SKEW = {
    "protocol": "fedct", "clients": 10, "rounds": 30, "period": 3,
    "learner": {"kind": "logistic-regression", "learning_rate": 0.1, "local_epochs": 1},
    "data": {"source": "blobs", "n": 1000, "d": 3, "classes": 3, "separation": 6.0,
             "partition": {"scheme": "dirichlet", **SKEW}},
}
UCI_SKEW = {
    **BLOBS_SKEW,
    "data": {"source": "breast-cancer", "split": {"train": 0.6, "test": 0.25, "unlabeled": 0.15},
             "partition": {"scheme": "dirichlet", **SKEW}},
}


def test_criterion_08_utility_ordering():
    with Criterion(8, "utility ordering on medians over 10 paired seeds", 600) as c:
        for name, raw in (("blobs/mlp", BLOBS_MLP), ("breast-cancer/tree", UCI_TREE)):
            acc = {p: [] for p in ("fedct", "local-only", "centralized", "pate")}
            for seed in SEEDS:
                for p in acc:
                    acc[p].append(final_acc(run_raw(raw, seed, protocol=p)[0]))
            med = {p: float(np.median(v)) for p, v in acc.items()}
            txt = ", ".join(f"{p} {v:.4f}" for p, v in med.items())
            print(f"  {name}: {txt}")
            c.check(med["fedct"] >= med["local-only"], f"{name}: fedct >= local-only ({txt})")
            c.check(med["centralized"] >= med["local-only"], f"{name}: centralized >= local-only ({txt})")
            c.check(med["fedct"] >= med["pate"], f"{name}: fedct >= pate ({txt})")
        for name, raw in (("blobs", BLOBS_SKEW), ("breast-cancer", UCI_SKEW)):
            qm, mv = [], []
            for seed in SEEDS:
                qm.append(final_acc(run_raw(raw, seed, consensus={"kind": "qualified-majority", "quorum": 0.9})[0]))
                mv.append(final_acc(run_raw(raw, seed)[0]))
            txt = f"QM {np.median(qm):.4f} vs majority {np.median(mv):.4f}"
            print(f"  {name} alpha=0.01: {txt}")
            c.check(np.median(qm) >= np.median(mv), f"{name} alpha=0.01: {txt}")


# high-dimensional, few samples: the regime where a shared model overfits
PRIVACY = {
    "clients": 5, "rounds": 20, "period": 2,
    "learner": {"kind": "logistic-regression", "learning_rate": 0.1, "local_epochs": 10},
    "data": {"source": "blobs", "n": 400, "d": 100, "classes": 2, "separation": 1.0,
             "split": {"train": 0.5, "test": 0.25, "unlabeled": 0.25}},
}


def test_criterion_09_privacy_ordering():
    with Criterion(9, "FedAvg confidence AUC >= FedCT label-query AUC", 300) as c:
        conf, label = [], []
        for seed in SEEDS:
            fa, cfg = run_raw(PRIVACY, seed, protocol="fedavg")
            data = build_data({**PRIVACY, "master_seed": seed}, cfg.m, seed)
            conf.append(confidence_threshold_attack(fa.global_state, pooled(data), data.test).auc)
            fc, _ = run_raw(PRIVACY, seed, protocol="fedct")
            preds = [lambda X, s=s: predict_hard(s, X) for s in fc.states]
            label.append(label_query_attack(preds, pooled(data), data.test).auc)
        txt = f"median AUC fedavg {np.median(conf):.4f} vs fedct {np.median(label):.4f}"
        print(f"  {txt}")
        c.check(np.median(conf) >= np.median(label), txt)


def test_criterion_10_learners():
    with Criterion(10, "gradients, exhaustive Gini splits, single-tree forest", 120) as c:
        rng = np.random.default_rng(10)
        for trial in range(20):
            n, d, C = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(2, 5))
            X, y = rng.normal(size=(n, d)), rng.integers(0, C, n)
            th = rng.normal(size=linear.n_params(d, C))
            l2 = float(rng.uniform(0, 1))
            g = linear.loss_and_grad(th, X, y, C, l2)[1]
            e = rel_err(g, finite_diff(lambda t: linear.loss_and_grad(t, X, y, C, l2)[0], th))
            c.check(e <= 1e-4, f"logistic grad trial {trial}: rel err {e:.1e}")
            H = int(rng.integers(1, 6))
            th = mlp.init_params(d, H, C, rng) + 0.1 * rng.normal(size=mlp.n_params(d, H, C))
            g = mlp.loss_and_grad(th, X, y, H, C)[1]
            e = rel_err(g, finite_diff(lambda t: mlp.loss_and_grad(t, X, y, H, C)[0], th))
            c.check(e <= 1e-3, f"mlp grad trial {trial}: rel err {e:.1e}")

        def gini_of(lab, C):
            if len(lab) == 0:
                return 0.0
            p = np.bincount(lab, minlength=C) / len(lab)
            return 1 - float(p @ p)

        for trial in range(100):
            n, d, C = int(rng.integers(2, 51)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
            X = rng.integers(0, 6, (n, d)).astype(float)
            y = rng.integers(0, C, n)
            tree = fit_tree(X, y, C)
            # exhaustive: every feature, every cut between distinct values
            best = gini_of(y, C)
            for f in range(d):
                vals = np.unique(X[:, f])
                for a, b in zip(vals, vals[1:]):
                    m = X[:, f] <= (a + b) / 2
                    best = min(best, (m.sum() * gini_of(y[m], C) + (~m).sum() * gini_of(y[~m], C)) / n)
            if tree.feature[0] >= 0:
                m = X[:, tree.feature[0]] <= tree.threshold[0]
                got = (m.sum() * gini_of(y[m], C) + (~m).sum() * gini_of(y[~m], C)) / n
                c.check(abs(got - best) <= 1e-12 and got < gini_of(y, C), f"gini trial {trial}: {got} vs {best}")
            else:
                c.check(best >= gini_of(y, C) - 1e-12, f"gini trial {trial}: leaf only when no split helps")
        for seed in range(5):
            X = rng.normal(size=(150, 4))
            y = rng.integers(0, 3, 150)
            probe = rng.normal(size=(300, 4))
            f = fit_forest(X, y, 3, n_trees=1, max_features=None, bootstrap=False, seed=seed)
            t = fit_tree(X, y, 3)
            c.check(np.array_equal(f.predict(probe), t.predict(probe)), f"single-tree forest seed {seed}")


DETERMINISM = {
    "protocol": "fedct", "master_seed": 21, "rounds": 12, "period": 3,
    "learners": [{"kind": "decision-tree"}, {"kind": "random-forest", "n_trees": 5},
                 {"kind": "logistic-regression"}, {"kind": "mlp"}],
    "data": {"source": "blobs", "n": 600, "d": 3, "classes": 3, "separation": 3.0},
}


def test_criterion_11_determinism(tmp_path, monkeypatch):
    import yaml

    with Criterion(11, "byte-identical rounds.csv across reruns and FEDCT_THREADS", 120) as c:
        variants = [DETERMINISM,
                    {**DETERMINISM, "protocol": "dp-fedct", "noise": {"epsilon": 5.0, "sensitivity": 10}},
                    {**DETERMINISM, "protocol": "fedavg", "learners": [{"kind": "mlp"}] * 4}]
        for k, raw in enumerate(variants):
            cfgp = tmp_path / f"exp{k}.yaml"
            cfgp.write_text(yaml.safe_dump(raw))
            outs = []
            for threads in ("1", "4", "1", "4"):
                monkeypatch.setenv("FEDCT_THREADS", threads)
                out = tmp_path / f"out{k}_{len(outs)}"
                c.check(main(["run", str(cfgp), "--out", str(out)]) == 0, f"{raw['protocol']}: exit 0")
                outs.append((out / "rounds.csv").read_bytes())
            c.check(len(set(outs)) == 1, f"{raw['protocol']}: rounds.csv identical over 4 runs (threads 1/4)")
