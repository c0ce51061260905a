import json
import shutil
import subprocess

import pytest
import yaml

import fedct.cli as cli
from fedct.cli import main
from fedct.config import config_digest

CFG = {
    "protocol": "fedct", "master_seed": 11, "clients": 3, "rounds": 7, "period": 2,
    "learner": {"kind": "decision-tree"},
    "data": {"source": "blobs", "n": 240, "d": 2, "classes": 3, "separation": 6.0},
}


def write_cfg(tmp_path, raw=None, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw or CFG))
    return p


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_run_writes_outputs(tmp_path):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfgp), "--out", str(out)]) == 0
    lines = (out / "rounds.csv").read_text().splitlines()
    assert lines[0] == "round,client_id,train_acc,test_acc,consensus_changes,pool_size,bytes_sent"
    assert len(lines) - 1 == 7 // 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["comm"]["bytes_per_round"] == -(-72 * 3 // 8)
    assert summary["comm"]["total_bytes"] == 3 * summary["comm"]["bytes_per_round"]
    assert 0 <= summary["final_mean_test_acc"] <= 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_digest"] == config_digest(CFG)
    assert manifest["seeds"]["master_seed"] == 11
    assert len(manifest["seeds"]["client_learners"]) == 3
    assert {"source_version", "start_time", "outputs"} <= set(manifest)


def test_run_is_byte_identical(tmp_path):
    cfgp = write_cfg(tmp_path)
    assert main(["run", str(cfgp), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfgp), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/rounds.csv").read_bytes() == (tmp_path / "b/rounds.csv").read_bytes()


def test_bad_quorum_exit_2(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, {**CFG, "consensus": {"kind": "qualified-majority", "quorum": 0.4}})
    assert main(["run", str(cfgp), "--out", str(tmp_path / "o")]) == 2
    assert "quorum" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run"], ["bounds", "--m", "x"]])
def test_argument_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_runtime_failure_exit_3(tmp_path, monkeypatch, capsys):
    def explode(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run", explode)
    assert main(["run", str(write_cfg(tmp_path)), "--out", str(tmp_path / "o")]) == 3
    assert "disk on fire" in capsys.readouterr().err


def test_empty_shard_is_a_config_error(tmp_path, capsys):
    raw = {**CFG, "clients": 6, "data": {**CFG["data"], "n": 10, "classes": 2,
                                         "partition": {"scheme": "dirichlet", "alpha1": 0.001, "alpha2": 0.001}}}
    assert main(["run", str(write_cfg(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 2
    assert "data.partition" in capsys.readouterr().err


def test_bounds_sensitivity(capsys):
    assert main(["bounds", "--n", "100", "--rate", "0.05", "--delta", "0.05"]) == 0
    out = capsys.readouterr().out
    assert "sensitivity_bound = 10" in out
    code, js = run_json(capsys, ["bounds", "--n", "100", "--rate", "0.05", "--delta", "0.05", "--json"])
    assert js["sensitivity_bound"] == 10


def test_bounds_convergence(capsys):
    assert main(["bounds", "--u", "10000", "--m", "50", "--c", "1", "--t0", "1000"]) == 0
    out = capsys.readouterr().out
    vals = {k.strip(): v for k, v in (line.split(" = ") for line in out.splitlines())}
    assert vals["clamped"] == "0.000000"
    assert float(vals["raw"]) < 1e-30
    # aligned keys
    assert len({line.index("=") for line in out.splitlines()}) == 1


@pytest.mark.parametrize("argv", [
    ["bounds", "--u", "10000", "--m", "2", "--c", "1", "--t0", "1000"],
    ["bounds", "--u", "10000", "--m", "5"],
    ["bounds"],
    ["bounds", "--n", "10", "--rate", "1.5", "--delta", "0.1"],
    ["bounds", "--n", "10", "--rate", "0.1", "--delta", "0.1", "--m", "5"],
])
def test_bounds_range_errors(argv, capsys):
    assert main(argv) == 2


def test_comm(capsys):
    code, js = run_json(capsys, ["comm", "--protocol", "fedct", "--u", "10000", "--classes", "10"])
    assert code == 0 and js["bytes_per_round"] == 12500
    code, js = run_json(capsys, ["comm", "--protocol", "fedavg", "--params", "669706"])
    assert js["bytes_per_round"] == 2678824
    code, js = run_json(capsys, ["comm", "--protocol", "fedct", "--u", "100", "--classes", "4",
                                 "--rounds", "10", "--period", "3"])
    assert js["total_bytes"] == 3 * 50
    assert main(["comm", "--protocol", "fedct"]) == 2


def test_sensitivity_dummy(tmp_path, capsys):
    # 90% of rows are class "a", so one replaced row cannot move the majority
    raw = {**CFG, "learner": {"kind": "dummy-majority"}, "sensitivity": {"k": 1},
           "data": {"source": "csv", "path": "maj.csv", "label_column": "y"}}
    rows = "\n".join(f"{i},{'a' if i % 10 else 'b'}" for i in range(100))
    (tmp_path / "maj.csv").write_text("x,y\n" + rows + "\n")
    code, js = run_json(capsys, ["sensitivity", str(write_cfg(tmp_path, raw))])
    assert code == 0
    assert js["row_hamming_max"] == 0 and js["samples"] == 1


def test_sensitivity_bad_section(tmp_path, capsys):
    raw = {**CFG, "sensitivity": {"k": 0}}
    assert main(["sensitivity", str(write_cfg(tmp_path, raw))]) == 2
    assert "sensitivity.k" in capsys.readouterr().err


@pytest.mark.parametrize("protocol,kind,surface", [
    ("fedct", "decision-tree", "label-query"),
    ("fedavg", "logistic-regression", "model-confidence"),
])
def test_attack(tmp_path, capsys, protocol, kind, surface):
    raw = {**CFG, "protocol": protocol, "learner": {"kind": kind}}
    code, js = run_json(capsys, ["attack", str(write_cfg(tmp_path, raw))])
    assert code == 0
    assert js["surface"] == surface and 0 <= js["auc"] <= 1
    assert js["n_members"] == 120 and js["n_nonmembers"] == 48


def test_report(tmp_path, capsys):
    out = tmp_path / "o"
    main(["run", str(write_cfg(tmp_path)), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "stable from round" in text
    code, js = run_json(capsys, ["report", str(out), "--json"])
    assert len(js["rounds"]) == 3
    assert main(["report", str(tmp_path / "nowhere")]) == 2


@pytest.mark.skipif(shutil.which("fedct") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["fedct", "comm", "--protocol", "fedct", "--u", "10000", "--classes", "10"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["bytes_per_round"] == 12500
