"""Command wiring: presets, artifacts, manifests, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from dawnet import cli, datafile
from dawnet.model import ModelConfig


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny generated dataset plus a 1-epoch full-model checkpoint."""
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data.dawn"
    rc = cli.main(["gen-data", "--out", str(data), "--seed", "7",
                   "--train", "24", "--val", "8", "--test-per-class", "6"])
    assert rc == 0
    model = root / "model.dawm"
    rc = cli.main(["train", "--data", str(data), "--epochs", "1",
                   "--batch", "8", "--seed", "3", "--out", str(model)])
    assert rc == 0
    return root, data, model


def test_presets_documented_counts():
    assert cli.PRESETS["desk"] == (2000, 256, 200)
    assert cli.PRESETS["paper"] == (11509, 1302, 2235)


def test_ablation_flag_map_order():
    assert list(cli.ABLATION_FLAGS) == ["full", "no-attn", "no-wavelet",
                                        "vanilla"]
    assert cli.ABLATION_FLAGS["no-attn"] == "no_mutual_attention"
    assert cli.ABLATION_FLAGS["no-wavelet"] == "no_wavelet_loss"


def test_gen_data_flags_override_preset(workspace):
    root, data, _ = workspace
    bundle = datafile.read_dataset(data)
    assert len(bundle.train) == 24
    assert len(bundle.validation) == 8
    assert len(bundle.test) == 12
    manifest = json.loads(
        (root / "data.dawn.manifest.json").read_text())
    assert manifest["flags"]["train"] == 24
    assert manifest["flags"]["preset"] == "desk"
    assert manifest["command"] == "gen-data"
    assert "dataset" in manifest["outputs"]
    assert len(manifest["outputs"]["dataset"]["sha256"]) == 64


def test_gen_data_same_seed_same_digest(tmp_path, workspace):
    _, data, _ = workspace
    other = tmp_path / "again.dawn"
    rc = cli.main(["gen-data", "--out", str(other), "--seed", "7",
                   "--train", "24", "--val", "8", "--test-per-class", "6"])
    assert rc == 0
    assert other.read_bytes() == data.read_bytes()


def test_train_metadata_echoes_flags(workspace):
    root, data, model = workspace
    manifest = json.loads(
        (root / "model.dawm.manifest.json").read_text())
    flags = manifest["flags"]
    for key in ("data", "epochs", "batch", "lr", "lambda1", "lambda2",
                "scales", "ablation", "seed", "out"):
        assert key in flags
    assert flags["epochs"] == 1
    assert flags["seed"] == 3
    assert manifest["inputs"]["dataset"]["path"] == str(data)
    assert "timestamp_utc" in manifest["volatile"]


def test_train_checkpoint_carries_threshold(workspace):
    _, _, model = workspace
    config, params = datafile.read_checkpoint(model)
    assert set(config["threshold"]) == {"value", "mu", "sigma"}
    th = config["threshold"]
    assert th["value"] == th["mu"] + th["sigma"]
    assert config["model"]["ablation"] == "full"
    names = [n for n, _ in params]
    assert "attention.gamma" in names


def test_train_vanilla_disables_attention_and_wavelet(tmp_path, workspace):
    _, data, _ = workspace
    out = tmp_path / "vanilla.dawm"
    rc = cli.main(["train", "--data", str(data), "--epochs", "1",
                   "--batch", "8", "--seed", "3", "--ablation", "vanilla",
                   "--out", str(out)])
    assert rc == 0
    config, _ = datafile.read_checkpoint(out)
    mc = ModelConfig.from_dict(config["model"])
    assert not mc.uses_attention and not mc.uses_wavelet_loss
    _, _, lambda1, lambda2, bank = cli._load_checkpoint(out)
    assert lambda2 == 0.0 and bank is None


def test_load_checkpoint_restores_params(workspace):
    _, _, model = workspace
    net, threshold, lambda1, lambda2, bank = cli._load_checkpoint(model)
    config, params = datafile.read_checkpoint(model)
    for (name, stored), (got_name, got) in zip(params,
                                               net.named_parameters()):
        assert name == got_name
        np.testing.assert_array_equal(stored, got)
    assert threshold.value == config["threshold"]["value"]
    assert lambda1 == 1.0 and lambda2 == 0.1 and bank is not None


def test_eval_emits_exactly_four_files(tmp_path, workspace, capsys):
    _, data, model = workspace
    out_dir = tmp_path / "ev"
    rc = cli.main(["eval", "--model", str(model), "--data", str(data),
                   "--out-dir", str(out_dir)])
    assert rc == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == ["confusion.csv", "manifest.json", "report.json",
                     "roc.csv"]
    printed = capsys.readouterr().out.strip().split("\n")
    assert printed[-2].split() == ["accuracy", "f1", "auc", "time_s"]
    assert len(printed[-1].split()) == 4
    report = json.loads((out_dir / "report.json").read_text())
    conf = report["confusion"]
    assert conf["tn"] + conf["fp"] + conf["fn"] + conf["tp"] == 12


def test_ablate_table_rows_in_order(tmp_path, workspace):
    _, data, _ = workspace
    out_dir = tmp_path / "abl"
    rc = cli.main(["ablate", "--data", str(data), "--epochs", "1",
                   "--batch", "8", "--seed", "3", "--out-dir", str(out_dir)])
    assert rc == 0
    lines = (out_dir / "ablation.csv").read_text().strip().split("\n")
    assert lines[0] == "variant,accuracy,f1,auc,time_s"
    assert [ln.split(",")[0] for ln in lines[1:]] == [
        "full", "no-attn", "no-wavelet", "vanilla"]
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seed"] == 3
    for variant in ("full", "no-attn", "no-wavelet", "vanilla"):
        assert (out_dir / variant / "checkpoint.dawm").exists()
        assert f"{variant}/report.json" in manifest["outputs"]


def test_missing_required_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--epochs", "1", "--out", "x.dawm"])
    assert exc.value.code == 2


def test_corrupt_dataset_exits_2(tmp_path, workspace, capsys):
    _, _, model = workspace
    bad = tmp_path / "bad.dawn"
    bad.write_bytes(b"NOPE" + bytes(64))
    rc = cli.main(["train", "--data", str(bad), "--epochs", "1",
                   "--out", str(tmp_path / "m.dawm")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "offset 0" in err
    rc = cli.main(["eval", "--model", str(model), "--data", str(bad),
                   "--out-dir", str(tmp_path / "ev")])
    assert rc == 2


def test_bad_scales_exits_2(tmp_path, workspace):
    _, data, _ = workspace
    rc = cli.main(["train", "--data", str(data), "--epochs", "1",
                   "--scales", "4,eight", "--out",
                   str(tmp_path / "m.dawm")])
    assert rc == 2


def test_missing_dataset_file_exits_2(tmp_path):
    rc = cli.main(["train", "--data", str(tmp_path / "absent.dawn"),
                   "--epochs", "1", "--out", str(tmp_path / "m.dawm")])
    assert rc == 2
