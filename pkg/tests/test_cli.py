import json
import subprocess
import sys

import pytest

from icdenoise.cli.artifacts import read_csv
from icdenoise.cli.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    dump_config,
    resolve_config,
)
from icdenoise.cli.experiments import RUNNERS
from icdenoise.cli.main import main

# tiny overrides per experiment so every subcommand runs in well under a second
FAST = {
    "train": ["train.epochs=3", "train.n_prompts=40", "train.batch_size=20", "train.context_len=20",
              "train.eval_prompts=30", "train.record_every=1", "task.n=6", "task.d=2"],
    "context-sweep": ["sweep.L_values=[8,32]", "sweep.eval_prompts=50"],
    "dim-shift": ["sweep.d_values=[2,15]", "sweep.L_values=[20]", "sweep.eval_prompts=40",
                  "train.epochs=2", "train.n_prompts=40", "train.batch_size=20", "train.context_len=20",
                  "train.eval_prompts=20"],
    "landscape": ["sweep.alpha_grid=[-1,0.5,1]", "sweep.beta_grid=[-10,2,10]", "sweep.eval_prompts=30",
                  "train.context_len=30"],
    "transform": ["train.epochs=2", "train.n_prompts=40", "train.batch_size=20", "train.context_len=20",
                  "train.eval_prompts=20", "task.n=6", "task.d=2"],
    "rates": ["sweep.L_values=[20]", "sweep.trials=100", "sweep.reference_factor=5"],
    "energy-demo": ["sweep.eval_prompts=5", "sweep.steps=3"],
    "baseline-eval": ["sweep.eval_prompts=200"],
}


def run_cli(tmp_path, name, *extra, sub="out"):
    out = tmp_path / sub
    args = [name, "--out", str(out), "--seed", "0,1"] + sum((["--set", s] for s in FAST[name]), []) + list(extra)
    assert main(args) == 0
    return out


@pytest.mark.parametrize("name", sorted(RUNNERS))
def test_replay_is_byte_identical_and_manifest_complete(tmp_path, name, capsys):
    a = run_cli(tmp_path, name, sub="a")
    b = run_cli(tmp_path, name, sub="b")
    manifest = json.loads((a / "manifest.json").read_text())
    written = sorted(p.name for p in a.iterdir())
    assert manifest["files"] == written
    assert manifest["seeds"] == [0, 1]
    assert manifest["experiment"] == name
    assert manifest["build"].startswith("icdenoise-")
    for f in written:
        if f.endswith(".csv"):
            assert (a / f).read_bytes() == (b / f).read_bytes(), f
    ca, cb = (json.loads((d / "config.json").read_text()) for d in (a, b))
    assert ca.pop("out") != cb.pop("out") and ca == cb
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["files"] == manifest["files"]


def test_config_round_trip(tmp_path):
    out = run_cli(tmp_path, "landscape")
    data = json.loads((out / "config.json").read_text())
    cfg = ExperimentConfig.model_validate(data)
    assert dump_config(cfg) == (out / "config.json").read_text()
    # re-running from the written config reproduces the tables
    assert main(["landscape", "--config", str(out / "config.json"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "landscape.csv").read_bytes() == (out / "landscape.csv").read_bytes()


def test_table_schemas(tmp_path):
    out = run_cli(tmp_path, "train")
    assert list(read_csv(out / "loss_curve.csv")[0]) == ["seed", "epoch", "train_mse", "test_mse"]
    assert list(read_csv(out / "weights_final.csv")[0]) == ["seed", "matrix", "row", "col", "value"]
    assert list(read_csv(out / "baselines.csv")[0]) == ["kind", "mse"]
    rows = read_csv(out / "weights_final.csv")
    assert len(rows) == 2 * 2 * 36
    out = run_cli(tmp_path, "landscape", sub="ls")
    assert len(read_csv(out / "landscape.csv")) == 2 * 9
    assert {r["point"] for r in read_csv(out / "points.csv")} == {"analytic", "mirrored", "grid_argmin"}


def test_csv_floats_round_trip(tmp_path):
    out = run_cli(tmp_path, "baseline-eval")
    for r in read_csv(out / "baselines.csv"):
        assert repr(float(r["mse"])) == r["mse"]


def test_dim_shift_rows_bounded_by_bayes(tmp_path):
    out = run_cli(tmp_path, "dim-shift", "--ideal")
    rows = read_csv(out / "dim_shift.csv")
    assert {int(r["d_infer"]) for r in rows} == {2, 15}
    for r in rows:
        assert float(r["mse"]) >= float(r["bayes_mse"]) - 1e-12


def test_single_L_gives_single_row(tmp_path):
    out = run_cli(tmp_path, "context-sweep", "--ideal", "--set", "sweep.L_values=[16]", "--seed", "0")
    assert len(read_csv(out / "context_sweep.csv")) == 1


@pytest.mark.parametrize("args,field", [
    (["train", "--seed", ""], "seeds"),
    (["train", "--set", "seeds=[]"], "seeds"),
    (["dim-shift", "--set", "sweep.d_values=[16]"], "sweep.d_values"),
    (["rates", "--set", "sweep.trials=50"], "sweep.trials"),
    (["landscape", "--set", "sweep.alpha_grid=[]"], "sweep.alpha_grid"),
    (["train", "--set", "train.kind=gaussian"], "train"),
    (["train", "--set", "task.n=0"], "task.n"),
    (["train", "--set", "bogus=1"], "bogus"),
    (["energy-demo", "--set", "task.case=linear"], "task.case"),
    (["train", "--seed", "a,b"], "--seed"),
])
def test_config_errors_are_machine_readable(tmp_path, capsys, args, field):
    code = main(args + ["--out", str(tmp_path / "x")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    assert field in err["field"] + " " + err["message"]
    assert not (tmp_path / "x").exists()  # nothing computed or written


def test_missing_output_dir(monkeypatch, capsys):
    monkeypatch.delenv("ICDENOISE_OUT", raising=False)
    assert main(["baseline-eval"]) == 2
    assert json.loads(capsys.readouterr().err)["field"] == "out"


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("ICDENOISE_OUT", str(tmp_path / "env"))
    assert main(["baseline-eval", "--set", "sweep.eval_prompts=20"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_bad_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    p.write_text('{"experiment": "rates"}')
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_override_precedence():
    cfg = resolve_config("rates", {"sweep": {"delta": 0.2}}, ["sweep.delta=0.05"], seeds=[3])
    assert cfg.sweep.delta == 0.05 and cfg.seeds == [3]
    assert cfg.task.case.value == "sphere" and cfg.task.d == 2
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "icdenoise.cli", "baseline-eval", "--out", str(tmp_path / "m"),
                        "--set", "sweep.eval_prompts=10"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "icdenoise.cli", "train", "--set", "seeds=[]",
                        "--out", str(tmp_path / "m2")], capture_output=True, text=True)
    assert r.returncode == 2
    assert json.loads(r.stderr)["error"] == "config"
