"""Command-line surface: exit codes, determinism, artifacts, config keys."""

import hashlib
import json
import os

import pytest

from star.cli import load_config_file, main


def clips_digest(root):
    """Hash of every clip file; the manifest embeds absolute paths so it is
    excluded."""
    h = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        if name.endswith(".skeleton"):
            h.update(name.encode())
            with open(os.path.join(root, name), "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = main(["synth", "--classes", "3", "--clips", "4", "--seed", "7",
                 "--len-min", "9", "--len-max", "14", "--out", str(out)])
    assert code == 0
    return out


def test_synth_deterministic_bytes(tmp_path):
    digests = []
    for run in range(2):
        out = tmp_path / f"d{run}"
        assert main(["synth", "--classes", "3", "--clips", "4", "--seed", "7",
                     "--out", str(out)]) == 0
        digests.append(clips_digest(out))
    assert digests[0] == digests[1]


def test_unknown_command_usage_nonzero(capsys):
    code = main(["frobnicate"])
    assert code != 0
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_nonzero():
    assert main(["synth", "--bogus"]) != 0


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("model.bogus = 3\n")
    code = main(["profile", "--config", str(cfg)])
    assert code == 1
    assert "model.bogus" in capsys.readouterr().err


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nmodel.d_model = 16\ntrain.max_epochs = 2  # tail\n")
    values = load_config_file(cfg)
    assert values == {"model.d_model": "16", "train.max_epochs": "2"}


def test_train_eval_cycle_and_determinism(tmp_path, synth_dir, capsys):
    manifest = str(synth_dir / "manifest.txt")
    metric_bytes = []
    for run in range(2):
        run_dir = tmp_path / f"run{run}"
        code = main(["train", "--preset", "tiny", "--data", manifest,
                     "--out", str(run_dir), "--epochs", "2", "--quiet",
                     "--set", "train.batch_clips=6",
                     "--set", "train.warmup_steps=100",
                     "--set", "train.seed=5"])
        assert code == 0
        metric_bytes.append((run_dir / "metrics.csv").read_bytes())
        assert (run_dir / "config.json").exists()
    assert metric_bytes[0] == metric_bytes[1]
    capsys.readouterr()

    code = main(["eval", "--checkpoint", str(tmp_path / "run0" / "final.json"),
                 "--data", manifest,
                 "--out", str(tmp_path / "eval.json")])
    assert code == 0
    metrics = json.loads((tmp_path / "eval.json").read_text())
    assert set(metrics) == {"top1_accuracy", "loss", "confusion"}
    assert len(metrics["confusion"]) == 3


def test_eval_empty_manifest(tmp_path, capsys):
    manifest = tmp_path / "empty.txt"
    manifest.write_text("")
    ckpt = tmp_path / "ckpt.json"
    from star.model import init_model, preset, save_checkpoint
    save_checkpoint(init_model(preset("tiny")), ckpt)
    code = main(["eval", "--checkpoint", str(ckpt), "--data", str(manifest)])
    assert code == 1
    assert "empty dataset" in capsys.readouterr().err


def test_gradcheck_small_config_passes(capsys):
    code = main(["gradcheck", "--set", "model.d_model=4",
                 "--set", "model.num_heads=2", "--set", "model.num_layers=1",
                 "--set", "model.num_classes=2", "--set", "model.ffn_hidden=6",
                 "--set", "model.mlp_hidden=6"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out


def test_bench_csv_written(tmp_path):
    out = tmp_path / "bench"
    code = main(["bench", "--sweep", "8,16", "--warmup", "0", "--iters", "1",
                 "--out", str(out)])
    assert code == 0
    text = (out / "attention.csv").read_text().splitlines()
    assert text[0].startswith("variant,")
    assert len(text) == 1 + 2 * 4


def test_bench_kernels_mode(tmp_path):
    out = tmp_path / "kb"
    code = main(["bench", "--kernels", "--warmup", "0", "--iters", "1",
                 "--out", str(out)])
    assert code == 0
    assert (out / "kernels.csv").exists()


def test_profile_emits_json(tmp_path, capsys):
    out = tmp_path / "prof"
    code = main(["profile", "--preset", "tiny", "--frames", "40",
                 "--persons", "2", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "profile.json").read_text())
    assert {"ops", "total_macs", "params", "scope_macs"} <= set(report)
    stdout = capsys.readouterr().out
    assert "total" in stdout


def test_custom_skeleton_flag(tmp_path, synth_dir):
    skel = tmp_path / "tiny.txt"
    skel.write_text("V 3\nE 0 1\nE 1 2\n")
    # profiling with a 3-joint skeleton exercises the flag end to end
    code = main(["profile", "--preset", "tiny", "--skeleton", str(skel),
                 "--frames", "10", "--persons", "1",
                 "--out", str(tmp_path / "p")])
    assert code == 0
