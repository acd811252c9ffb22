import json
from pathlib import Path

import numpy as np
import pytest

from mlda.cli import main
from mlda.diagnostics import effective_sample_size
from mlda.runner import diagnose

TINY = {
    "name": "tiny-gravity",
    "seed": 3,
    "problem": {
        "spec": {"kind": "gravity", "resolutions": [4, 8], "n": 4, "n_modes": 4, "noise_sd": 1.0},
        "data": {"truth": "prior", "truth_seed": 1, "noise_seed": 2},
    },
    "proposals": {"kind": "random_walk", "scale": 0.3, "fine": "identity"},
    "sampler": {"subchain_lengths": [3], "pmf": "fixed", "n_steps": 200, "burn_in": 50, "chains": 2,
                "initial": "map", "baseline": True},
    "output": {"acf_lags": 20},
}


def write_config(tmp_path, cfg=TINY, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "timing.json"}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    out = tmp / "run"
    assert main(["run", str(write_config(tmp)), "--output-dir", str(out)]) == 0
    return tmp, out


def test_run_writes_the_documented_layout(tiny_run):
    _, out = tiny_run
    names = set(tree(out))
    for expected in ["config.effective.json", "metadata.json", "data.csv", "diagnostics.json",
                     "chain_0_level_0.csv", "chain_0_level_1.csv", "chain_1_level_1.csv",
                     "plots/traces.csv", "plots/acf.csv", "plots/ess.csv",
                     "baseline/chain_0_level_1.csv", "baseline/diagnostics.json"]:
        assert expected in names, expected
    assert (out / "timing.json").exists()
    report = json.loads((out / "diagnostics.json").read_text())
    assert len(report["parameters"]) == 4


def test_rerun_and_thread_count_are_byte_identical(tiny_run):
    tmp, out = tiny_run
    again = tmp / "again"
    assert main(["run", str(write_config(tmp)), "--output-dir", str(again), "--threads", "2"]) == 0
    assert tree(again) == tree(out)


def test_effective_config_reruns_to_the_same_outputs(tiny_run):
    tmp, out = tiny_run
    echo = tmp / "echo"
    assert main(["run", str(out / "config.effective.json"), "--output-dir", str(echo)]) == 0
    assert tree(echo) == tree(out)


def test_diagnose_matches_inline_report(tiny_run, tmp_path):
    _, out = tiny_run
    target = tmp_path / "diag.json"
    assert main(["diagnose", str(out), "--output", str(target)]) == 0
    recomputed = json.loads(target.read_text())
    inline = json.loads((out / "diagnostics.json").read_text())
    for a, b in zip(recomputed["parameters"], inline["parameters"]):
        assert a["ess"] == pytest.approx(b["ess"], rel=1e-12)
        np.testing.assert_allclose(a["acf"], b["acf"], rtol=1e-12, atol=1e-15)
    assert recomputed["acceptance_rate"] == inline["acceptance_rate"]


def test_estimate_requires_estimator_mode(tiny_run, capsys):
    _, out = tiny_run
    assert main(["estimate", str(out), "mean_predator"]) == 1
    assert "estimator mode" in capsys.readouterr().err


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = dict(TINY, sampler=dict(TINY["sampler"], baseline=False, chains=1, n_steps=60))
    path = write_config(tmp_path, cfg)
    monkeypatch.setenv("MLDA_SEED", "77")
    assert main(["run", str(path), "--output-dir", str(tmp_path / "env")]) == 0
    assert main(["run", str(path), "--output-dir", str(tmp_path / "flag"), "--seed", "77"]) == 0
    assert main(["run", str(path), "--output-dir", str(tmp_path / "flag2"), "--seed", "5"]) == 0
    monkeypatch.delenv("MLDA_SEED")
    assert main(["run", str(path), "--output-dir", str(tmp_path / "cfg")]) == 0
    env, flag = tree(tmp_path / "env"), tree(tmp_path / "flag")
    assert env == flag
    assert json.loads(env["metadata.json"])["seed"] == 77
    assert env["chain_0_level_1.csv"] != tree(tmp_path / "cfg")["chain_0_level_1.csv"]
    assert json.loads(tree(tmp_path / "flag2")["metadata.json"])["seed"] == 5


def test_invalid_config_exits_one_with_field_path(tmp_path, capsys):
    bad = dict(TINY, sampler=dict(TINY["sampler"], n_steps=0))
    assert main(["run", str(write_config(tmp_path, bad)), "--output-dir", str(tmp_path / "x")]) == 1
    assert "sampler.n_steps" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
    assert main(["run", "no-such-config"]) == 1
    assert main(["frobnicate"]) == 1


def test_runtime_failure_exits_two_and_leaves_nothing(tmp_path):
    cfg = {
        "name": "lv-bad-start",
        "problem": {"spec": {"kind": "predator_prey"}, "data": {"truth": "default"}},
        "sampler": {"subchain_lengths": [2, 2], "n_steps": 5, "initial": [10, 5, 3, -0.7, 0.2, 1]},
    }
    out = tmp_path / "bad"
    assert main(["run", str(write_config(tmp_path, cfg)), "--output-dir", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == [tmp_path / "cfg.json"]


def test_diagnose_flags_constant_and_recovers_iid(tmp_path):
    from mlda.samplers import ChainRecord
    from mlda.storage import write_chain

    rng = np.random.default_rng(0)
    n = 4000
    states = np.column_stack([rng.normal(size=n), np.full(n, 2.0)])
    rec = ChainRecord(0, states, np.zeros(n), np.ones(n, bool), np.zeros(n))
    write_chain(rec, tmp_path / "chain_0_level_0.csv")
    (tmp_path / "metadata.json").write_text(json.dumps(
        {"levels": [0], "subchain_lengths": [], "chains": 1, "burn_in": 0, "estimator": False}))
    (tmp_path / "config.effective.json").write_text(json.dumps({"output": {"acf_lags": 10,
                                                                           "ess_parameters": None}}))
    report = diagnose(tmp_path)
    iid, const = report["parameters"]
    assert iid["ess"] == pytest.approx(n, rel=0.1)
    assert iid["ess"] == pytest.approx(effective_sample_size(states[:, 0]), rel=1e-12)
    assert const["degenerate"]


@pytest.fixture(scope="module")
def lv_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("lv") / "run"
    assert main(["run", "predator-prey-desk", "--output-dir", str(out)]) == 0
    return out


def test_predator_prey_desk_emits_both_estimator_traces(lv_run, tmp_path):
    est = json.loads((lv_run / "estimator.json").read_text())
    assert len(est["chains"]) == 2
    header = (lv_run / "plots" / "error_trace_chain_0.csv").read_text().splitlines()[0].split(",")
    assert {"standard", "multilevel"} <= set(header)
    target = tmp_path / "est.json"
    assert main(["estimate", str(lv_run), "mean_predator", "--output", str(target)]) == 0
    recomputed = json.loads(target.read_text())
    for a, b in zip(recomputed["chains"], est["chains"]):
        assert a["standard"] == b["standard"] and a["multilevel"] == b["multilevel"]
    assert main(["estimate", str(lv_run), "mean_prey"]) == 1
