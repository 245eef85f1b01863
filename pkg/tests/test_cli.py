"""CLI and configuration tests."""

import json
import subprocess
import sys

import numpy as np
import pytest

from pxafkit.config import (
    PipelineConfig,
    SchemaError,
    config_hash,
    stage_seed,
    to_dict,
    validate_config,
)


def run_cli(*args, cwd=None):
    proc = subprocess.run([sys.executable, "-m", "pxafkit.cli", *args],
                          capture_output=True, text=True, cwd=cwd)
    return proc.returncode, proc.stdout, proc.stderr


# ------------------------------------------------------------- configuration


def test_empty_config_yields_documented_defaults(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    cfg = validate_config(empty)
    assert cfg.nas.search.lr == 0.025
    assert cfg.nas.search.momentum == 0.9
    assert cfg.nas.search.weight_decay == 3e-4
    assert cfg.nas.search.epochs == 50
    assert cfg.nas.search.batch_size == 6
    assert cfg.nas.finetune.epochs == 200
    assert cfg.nas.finetune.batch_size == 10
    assert cfg.signal.shannon_window_seconds == 0.1
    assert cfg.signal.recurrence_seconds == 4.0
    assert cfg.signal.wavelet_levels == 10
    assert cfg.gan.lr == 1e-4


def test_missing_config_file_is_defaults():
    cfg = validate_config(None)
    assert cfg.version == 1 and cfg.seed == 0


def test_unknown_key_rejected_with_path(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("gan:\n  epoch: 10\n")
    with pytest.raises(SchemaError, match="/gan/epoch"):
        validate_config(bad)


def test_invariant_violation_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("signal:\n  wavelet_levels: 0\n")
    with pytest.raises(SchemaError, match="wavelet_levels"):
        validate_config(bad)


def test_override_applies_and_validates(tmp_path):
    cfg = validate_config(None, overrides={"gan.epochs": "10"})
    assert cfg.gan.epochs == 10
    with pytest.raises(SchemaError):
        validate_config(None, overrides={"gan.nonsense": "1"})


def test_config_hash_stable_and_section_sensitive():
    a = validate_config(None)
    b = validate_config(None)
    assert config_hash(a) == config_hash(b)
    c = validate_config(None, overrides={"gan.epochs": "11"})
    assert config_hash(a) != config_hash(c)
    # eval-section hash unaffected by a GAN change
    assert config_hash(a, ["eval"]) == config_hash(c, ["eval"])


def test_stage_seed_fanout():
    assert stage_seed(7, "gan-train") == stage_seed(7, "gan-train")
    assert stage_seed(7, "gan-train") != stage_seed(7, "nas-search")
    assert stage_seed(7, "gan-train") != stage_seed(8, "gan-train")


# -------------------------------------------------------------------- CLI


def test_cli_help_exits_zero():
    code, out, _ = run_cli("--help")
    assert code == 0
    assert "pipeline" in out


def test_cli_unknown_config_key_exit_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("gann:\n  epochs: 1\n")
    code, _, err = run_cli("--config", str(bad), "--out-dir",
                           str(tmp_path / "out"), "validate-config")
    assert code == 2
    doc = json.loads(err.strip().splitlines()[-1])
    assert doc["error"] == "SchemaError"
    assert "gann" in doc["message"]


def test_cli_override_reflected(tmp_path):
    code, out, _ = run_cli("--set", "gan.epochs=12", "--out-dir",
                           str(tmp_path / "out"), "validate-config")
    assert code == 0
    assert json.loads(out)["gan"]["epochs"] == 12


def test_cli_usage_error_exit_2(tmp_path):
    code, _, err = run_cli("--set", "notakeyatall", "--out-dir",
                           str(tmp_path / "out"), "validate-config")
    assert code == 2


@pytest.mark.slow
def test_cli_make_toy_and_preprocess(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "data:\n  toy: {train_per_class: 8, val_per_class: 4, test_per_class: 4}\n")
    out = tmp_path / "run"
    code, _, err = run_cli("--config", str(cfg), "--out-dir", str(out), "make-toy")
    assert code == 0, err
    manifest = json.loads((out / "data/manifest-train.json").read_text())
    assert manifest["counts"] == {"Normal": 8, "PxAF": 8}
    test_manifest = json.loads((out / "data/manifest-test.json").read_text())
    assert all(e["provenance"] == "Real" for e in test_manifest["entries"])

    code, _, err = run_cli("--config", str(cfg), "--out-dir", str(out), "preprocess")
    assert code == 0, err
    index = json.loads((out / "images/real/index.json").read_text())
    assert len(index) == 2 * (8 + 4 + 4)

    # stamped stage skips on rerun
    code, out_text, _ = run_cli("--config", str(cfg), "--out-dir", str(out),
                                "preprocess")
    assert "skipping" in out_text


def test_cli_domain_error_exit_1(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("data:\n  source: records\n  records_dir: /nonexistent\n")
    code, _, err = run_cli("--config", str(cfg), "--out-dir",
                           str(tmp_path / "out"), "make-toy")
    assert code == 1
    doc = json.loads(err.strip().splitlines()[-1])
    assert "error" in doc
