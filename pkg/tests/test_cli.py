import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from wiregraph import rope
from wiregraph.cli import main
from wiregraph.graph import gen_knn_graph, gen_watts_strogatz
from wiregraph.rng import Rng
from wiregraph.spectral import projector_distance


def run(argv):
    """Exit code of the CLI, treating argparse exits like a process would."""
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = d / "spd.json"
    assert run(["gen-data", "--task", "spd", "--n-train", 24, "--n-test", 8, "--seed", 3, "--out", data]) == 0
    ckpt = d / "model.json"
    log = d / "train.jsonl"
    assert run(["train", "--data", data, "--checkpoint", ckpt, "--m", 3, "--epochs", 3,
                "--batch-size", 8, "--seed", 4, "--out", log]) == 0
    graph = d / "graph.json"
    graph.write_text(gen_watts_strogatz(60, 4, 0.3, Rng(5)).to_json())
    cloud = d / "cloud.json"
    cloud.write_text(gen_knn_graph(Rng(6).normal(size=(64, 3)), 6).to_json())
    return {"dir": d, "data": data, "ckpt": ckpt, "log": log, "graph": graph, "cloud": cloud}


def twice(tmp_path, argv):
    outs = []
    for t in range(2):
        path = tmp_path / f"out{t}"
        assert run([*argv, "--out", path]) == 0
        outs.append(path.read_bytes())
    return outs


# determinism of every subcommand

def test_gen_data_byte_identical(tmp_path):
    a, b = twice(tmp_path, ["gen-data", "--task", "spd", "--n-train", 10, "--n-test", 5, "--seed", 7])
    assert a == b
    c, d = twice(tmp_path, ["gen-data", "--task", "mono", "--n-train", 6, "--n-test", 3, "--seed", 7,
                            "--format", "csv"])
    assert c == d


def test_spectra_byte_identical(work, tmp_path):
    for method in ("dense", "lanczos"):
        a, b = twice(tmp_path, ["spectra", "--graph", work["graph"], "--method", method, "--m", 4])
        assert a == b
    a, b = twice(tmp_path, ["spectra", "--graph", work["cloud"], "--method", "lowrank", "--m", 3,
                            "--r", 256, "--p", 32, "--seed", 1])
    assert a == b


def test_verify_byte_identical(tmp_path):
    a, b = twice(tmp_path, ["verify", "--suite", "eq5"])
    assert a == b


def test_train_eval_dump_byte_identical(work, tmp_path):
    ck = [tmp_path / "c0.json", tmp_path / "c1.json"]
    logs = []
    for c in ck:
        path = tmp_path / (c.stem + ".log")
        assert run(["train", "--data", work["data"], "--checkpoint", c, "--m", 3, "--epochs", 2,
                    "--batch-size", 8, "--seed", 9, "--out", path]) == 0
        logs.append(path.read_bytes())
    assert logs[0] == logs[1] and ck[0].read_bytes() == ck[1].read_bytes()
    a, b = twice(tmp_path, ["eval", "--data", work["data"], "--checkpoint", work["ckpt"]])
    assert a == b
    a, b = twice(tmp_path, ["dump-attention", "--data", work["data"], "--checkpoint", work["ckpt"]])
    assert a == b


def test_bench_grid_byte_identical_and_cardinality(tmp_path):
    argv = ["bench-grid", "--task", "mono", "--m-values", "0,2", "--delete-values", "5,10",
            "--seeds", "0,1", "--n-train", 8, "--n-test", 4, "--epochs", 1, "--batch-size", 8,
            "--format", "csv"]
    a, b = twice(tmp_path, argv)
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    assert len(rows) == 2 * 2 * 2
    assert all(r["wall_seconds"] == "" for r in rows)


# exit codes and errors

def test_missing_task_is_usage_error(capsys):
    assert run(["gen-data", "--n-train", 3]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_input_file_is_usage_error(tmp_path):
    assert run(["spectra", "--graph", tmp_path / "nope.json", "--m", 2]) == 2
    assert run(["eval", "--data", tmp_path / "nope.json", "--checkpoint", tmp_path / "x"]) == 2


def test_spectra_m_zero_rejected(work):
    assert run(["spectra", "--graph", work["graph"], "--m", 0]) == 2


def test_lowrank_needs_points(work):
    assert run(["spectra", "--graph", work["graph"], "--method", "lowrank", "--m", 2]) == 2


def test_unknown_suite_rejected():
    assert run(["verify", "--suite", "nope"]) == 2


def test_runtime_failure_exit_one(work, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["spectra", "--graph", bad, "--m", 2]) == 1
    assert "error" in capsys.readouterr().err


def test_global_flags_before_subcommand(work, tmp_path):
    out = tmp_path / "e.json"
    assert run(["--format", "csv", "--out", out, "eval", "--data", work["data"], "--checkpoint", work["ckpt"]]) == 0
    assert out.read_text().startswith("split,n_examples,normalized_rmse")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wiregraph", "gen-data"], capture_output=True, text=True)
    assert proc.returncode == 2 and "--task" in proc.stderr


# content

def test_mono_single_colour_labels(tmp_path):
    out = tmp_path / "mono.json"
    assert run(["gen-data", "--task", "mono", "--rows", 5, "--cols", 5, "--delete", 0, "--colors", 1,
                "--n-train", 5, "--n-test", 2, "--out", out]) == 0
    ds = json.loads(out.read_text())
    assert {ex["label"] for ex in ds["train"] + ds["test"]} == {25.0}


def test_dense_and_lanczos_agree(work, tmp_path):
    got = {}
    for method in ("dense", "lanczos"):
        out = tmp_path / f"{method}.json"
        assert run(["spectra", "--graph", work["graph"], "--method", method, "--m", 5,
                    "--variant", "raw", "--out", out]) == 0
        got[method] = json.loads(out.read_text())
    U = np.array(got["dense"]["coords"])
    V = np.array(got["lanczos"]["coords"])
    lam = np.array(got["dense"]["eigenvalues"])
    assert np.allclose(lam, got["lanczos"]["eigenvalues"], atol=1e-8)
    assert projector_distance(U, V, lam, complete_only=False) <= 1e-6


def test_lowrank_reports_residuals(work, tmp_path):
    out = tmp_path / "low.json"
    assert run(["spectra", "--graph", work["cloud"], "--method", "lowrank", "--m", 4, "--r", 512,
                "--p", 48, "--out", out]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["residuals"]) == len(rep["eigenvalues_imag"]) == 5
    assert all(np.isfinite(rep["residuals"]))
    assert np.array(rep["coords"]).shape == (64, 4)


def test_train_then_eval_reproduces_best(work, tmp_path):
    ck = json.loads(work["ckpt"].read_text())
    log = [json.loads(line) for line in work["log"].read_text().splitlines()]
    assert ck["best_test_rmse"] == min(r["test_rmse"] for r in log)
    out = tmp_path / "eval.json"
    assert run(["eval", "--data", work["data"], "--checkpoint", work["ckpt"], "--out", out]) == 0
    rep = json.loads(out.read_text())
    assert rep["n_examples"] == 8
    assert abs(rep["normalized_rmse"] - ck["best_test_rmse"]) <= 1e-12


@pytest.mark.parametrize("wire", ["on", "off"])
def test_dump_attention_rows_sum_to_one(work, tmp_path, wire):
    out = tmp_path / "att.json"
    assert run(["dump-attention", "--data", work["data"], "--checkpoint", work["ckpt"], "--index", 2,
                "--wire", wire, "--out", out]) == 0
    S = np.array(json.loads(out.read_text())["scores"])
    assert S.shape == (10, 10)
    assert np.allclose(S.sum(1), 1.0, atol=1e-12)


def test_dump_attention_wire_switch_changes_scores(work, tmp_path):
    res = {}
    for wire in ("on", "off"):
        out = tmp_path / f"{wire}.json"
        run(["dump-attention", "--data", work["data"], "--checkpoint", work["ckpt"], "--wire", wire, "--out", out])
        res[wire] = np.array(json.loads(out.read_text())["scores"])
    assert not np.allclose(res["on"], res["off"])


def test_dump_attention_index_out_of_range(work):
    assert run(["dump-attention", "--data", work["data"], "--checkpoint", work["ckpt"], "--index", 99]) == 2


# verify

def test_verify_injected_fault_fails(monkeypatch, tmp_path):
    real = rope.apply_rope_fast
    monkeypatch.setattr(rope, "apply_rope_fast", lambda z, theta: real(z, -np.asarray(theta)))
    out = tmp_path / "v.json"
    assert run(["verify", "--suite", "eq5", "--out", out]) == 1
    rep = json.loads(out.read_text())
    assert rep["pass"] is False and not rep["checks"][0]["pass"]


def test_verify_thm2_schema(tmp_path):
    out = tmp_path / "thm2.json"
    code = run(["verify", "--suite", "thm2", "--out", out])
    rep = json.loads(out.read_text())
    assert code == (0 if rep["pass"] else 1)
    first = rep["checks"][0]
    assert {"mc_mean", "predicted", "stderr", "statistic", "threshold", "pass"} <= set(first)
    truncated = [c for c in rep["checks"] if c.get("report_only")]
    assert truncated and all(c["pass"] and c["threshold"] is None for c in truncated)


@pytest.mark.slow
def test_verify_all_passes(tmp_path):
    out = tmp_path / "all.json"
    assert run(["verify", "--suite", "all", "--out", out]) == 0
    assert set(json.loads(out.read_text())["suites"]) == {"thm1", "thm2", "eq5", "perm", "se3", "linear"}
