import json
import os

import numpy as np
import pytest

from feta.cli import main
from feta.config import dump_config, load_config, parse_config_text, split_train_config, validate
from feta.data import save_dataset
from feta.errors import ConfigError
from feta.synthetic import build_synthetic_dataset

TRAIN_CFG = """\
# tiny run
layers = 1
hidden = 8
heads = 1
order = 2
coeff_hidden = 8
max_epochs = 2
batch_size = 8
lr = 0.01
"""


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    save_dataset(build_synthetic_dataset("Synthetic_1", seed=1, counts=(12, 4, 4)), root)
    return str(root)


def _write(path, text):
    path.write_text(text)
    return str(path)


def _bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


# config parsing


def test_parse_types():
    cfg = parse_config_text('a = 1\nb = 2.5\nc = true\nd = "x y"  # note\n\ne = word\n')
    assert cfg == {"a": 1, "b": 2.5, "c": True, "d": "x y", "e": "word"}


@pytest.mark.parametrize("text", ["novalue\n", " = 3\n", "a = 1\na = 2\n"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_validate_rejects_unknown_and_wrong_type():
    with pytest.raises(ConfigError):
        validate("train", {"hiden": 8})
    with pytest.raises(ConfigError):
        validate("train", {"hidden": 8.5})
    with pytest.raises(ConfigError):
        validate("train", {"tie_query_key": 1})
    assert validate("train", {"lr": 1})["lr"] == 1.0


def test_dump_round_trip(tmp_path):
    cfg = validate("train", {"hidden": 16, "filter": "arma", "lr": 0.01})
    path = _write(tmp_path / "c.txt", dump_config(cfg))
    assert load_config(path, "train") == cfg
    model, opt = split_train_config(cfg)
    assert model["hidden"] == 16 and opt.lr == 0.01


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.txt"), "train")


# command line


def test_dry_run_echoes_config(tmp_path, capsys):
    path = _write(tmp_path / "t.txt", TRAIN_CFG)
    run = tmp_path / "run"
    assert main(["train", "--config", path, "--seed", "4", "--out", str(run), "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "seed = 4" in out and "hidden = 8" in out
    assert not run.exists()


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["train", "--seed", "abc"],
    ["verify-theorems", "--constraint", "weird"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_bad_config_exit_code(tmp_path, capsys):
    path = _write(tmp_path / "bad.txt", "nonsense_key = 1\n")
    assert main(["train", "--config", path]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_generate_data_unknown_preset(tmp_path):
    assert main(["generate-data", "--preset", "Synthetic_7", "--out", str(tmp_path / "d")]) == 2


def test_generate_data_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["generate-data", "--out", str(blocker / "sub")]) == 2


def test_generate_data_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate-data", "--preset", "Synthetic_1", "--seed", "7", "--out", str(a)]) == 0
    assert main(["generate-data", "--preset", "Synthetic_1", "--seed", "7", "--out", str(b)]) == 0
    assert len(open(a / "graphs.jsonl").read().splitlines()) == 1200
    for name in ("graphs.jsonl", "manifest.json"):
        assert _bytes(a / name) == _bytes(b / name)


def test_train_eval_analyze(tmp_path, tiny_data, capsys):
    cfg = _write(tmp_path / "t.txt", TRAIN_CFG + f'dataset = "{tiny_data}"\n')
    runs = [tmp_path / "r1", tmp_path / "r2"]
    for out in runs:
        assert main(["train", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    for name in ("metrics.csv", "test_metrics.json", "checkpoint.json"):
        assert _bytes(runs[0] / name) == _bytes(runs[1] / name)
    configs = [[l for l in open(r / "config.txt") if not l.startswith("out =")] for r in runs]
    assert configs[0] == configs[1]
    header = open(runs[0] / "metrics.csv").readline().strip().split(",")
    assert header[0] == "epoch"
    assert load_config(str(runs[0] / "config.txt"), "train")["seed"] == 3

    ckpt = str(runs[0] / "checkpoint.json")
    capsys.readouterr()
    assert main(["eval", "--checkpoint", ckpt, "--dataset", tiny_data, "--out", str(tmp_path / "ev")]) == 0
    metrics = json.loads(capsys.readouterr().out)
    saved = json.load(open(runs[0] / "test_metrics.json"))
    assert metrics["accuracy"] == saved["test_accuracy"]

    out = tmp_path / "an"
    assert main(["analyze-filters", "--checkpoint", ckpt, "--dataset", tiny_data, "--out", str(out)]) == 0
    assert {"responses.csv", "aggregate.csv", "interpretability.csv", "aggregate_layer0.svg"} <= set(os.listdir(out))


def test_checkpoint_dataset_mismatch(tmp_path, tiny_data):
    cfg = _write(tmp_path / "t.txt", TRAIN_CFG.replace("max_epochs = 2", "max_epochs = 1") + f'dataset = "{tiny_data}"\n')
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    other = tmp_path / "six"
    save_dataset(build_synthetic_dataset("Synthetic_2", seed=0, counts=(1, 1, 1)), other)
    ckpt = str(tmp_path / "r" / "checkpoint.json")
    assert main(["analyze-filters", "--checkpoint", ckpt, "--dataset", str(other), "--out", str(tmp_path / "a")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json"), "--dataset", str(other)]) == 2


def test_numerical_abort_exit_code(tmp_path, tiny_data, capsys):
    bad = tmp_path / "nan"
    ds = build_synthetic_dataset("Synthetic_1", seed=1, counts=(4, 2, 2))
    ds.splits["train"][0].X[0, 0] = np.nan
    save_dataset(ds, bad)
    cfg = _write(tmp_path / "t.txt", TRAIN_CFG + f'dataset = "{bad}"\n')
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 3
    assert "numerical abort" in capsys.readouterr().err


def test_verify_instances_and_failure_hook(tmp_path, capsys):
    cfg = _write(tmp_path / "v.txt", "restarts = 2\nprobe_restarts = 1\nlemma_instances = 3\nperturbations = 20\n")
    out = tmp_path / "v"
    code = main(["verify-theorems", "--config", cfg, "--instances", "10", "--constraint", "affine", "--out", str(out)])
    report = json.load(open(out / "theorem_report.json"))
    assert len(report["bounds"]) == 10
    assert code == (0 if report["all_passed"] else 1)
    assert report["summary"]["bounds"]["passed"] == 10
    code = main(["verify-theorems", "--config", cfg, "--instances", "2", "--inject-failure"])
    assert code == 1
