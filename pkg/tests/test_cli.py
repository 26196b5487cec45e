"""Command-line interface: exit codes, artifacts, and config validation."""

import json
import subprocess
import sys

import numpy as np
import pytest

from evcsi.channelgen import load_dataset
from evcsi.errors import ConfigurationError
from evcsi.model import load_weights
from evcsi.runconfig import load_run_config, parse_kv_file, write_manifest

TINY_CONFIG = """\
# desk-size run
n_tx = 4
n_subband = 4
n_e = 16
n_b = 1
n_head = 2
k_h = 2
bits_total = 8
bits_per_symbol = 2
epochs = 2
seed = 3
batch_size = 8
lr_max = 1e-3
warmup_epochs = 1
"""


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "evcsi.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.cfg").write_text(TINY_CONFIG)
    gen = run_cli("gen", "--profile", "flat", "--n-tx", "4", "--n-subband", "4",
                  "--samples", "24", "--seed", "5", "--out", str(root / "d.evcs"))
    assert gen.returncode == 0, gen.stderr
    return root


# ---------------------------------------------------------------------------
# config parsing

def test_parse_kv_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("a = 1\n# comment only\nb= two # trailing\n\n")
    assert parse_kv_file(str(p)) == {"a": "1", "b": "two"}
    p.write_text("not a pair\n")
    with pytest.raises(ConfigurationError):
        parse_kv_file(str(p))


def test_load_run_config_round_trip(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(TINY_CONFIG)
    mcfg, tcfg = load_run_config(str(p))
    assert mcfg.n_e == 16 and mcfg.bits_total == 8
    assert tcfg.epochs == 2 and tcfg.seed == 3 and tcfg.lr_max == 1e-3


def test_unknown_and_missing_keys_reported_together(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("n_tx = 4\nbogus = 1\nwat = 2\n")
    with pytest.raises(ConfigurationError) as err:
        load_run_config(str(p))
    message = str(err.value)
    assert "bogus" in message and "wat" in message
    assert "missing" in message and "epochs" in message


def test_stage_keys_must_pair(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text(TINY_CONFIG + "stages_bits = 16,8\n")
    with pytest.raises(ConfigurationError):
        load_run_config(str(p))
    p.write_text(TINY_CONFIG + "stages_bits = 16,8\nstages_epochs = 1,1\n")
    mcfg, tcfg = load_run_config(str(p))
    assert [s.bits_total for s in tcfg.stages] == [16, 8]


def test_augment_keys_parsed(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(TINY_CONFIG + "p_flip = 0.25\nnoise_alpha = 0.1\n"
                 "noise_target_clean = false\n")
    _, tcfg = load_run_config(str(p))
    assert tcfg.augment.p_flip == 0.25
    assert tcfg.augment.noise_alpha == 0.1
    assert tcfg.augment.noise_target_clean is False


def test_manifest_written_atomically(tmp_path):
    artifact = tmp_path / "x.bin"
    artifact.write_bytes(b"payload")
    out = write_manifest(str(artifact), "test", {"seed": 1},
                         extra_artifacts={"log": "x.log"})
    data = json.loads(open(out).read())
    assert data["seeds"] == {"seed": 1}
    assert data["artifacts"]["log"] == "x.log"
    assert not list(tmp_path.glob("*.tmp"))


# ---------------------------------------------------------------------------
# end-to-end commands

def test_gen_writes_dataset_and_manifest(workdir):
    ds = load_dataset(str(workdir / "d.evcs"))
    assert ds.samples.shape == (24, 4, 4)
    manifest = json.loads((workdir / "d.evcs.manifest.json").read_text())
    assert manifest["seeds"]["master_seed"] == 5


def test_train_eval_pipeline(workdir):
    train = run_cli("train", "--data", str(workdir / "d.evcs"),
                    "--config", str(workdir / "run.cfg"),
                    "--out", str(workdir / "w.evcw"))
    assert train.returncode == 0, train.stderr
    weights = load_weights(str(workdir / "w.evcw"))
    assert weights.cfg.bits_total == 8
    log = (workdir / "w.evcw.log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,train_loss,val_sgcs"
    assert len(log) == 3

    ev = run_cli("eval", "--data", str(workdir / "d.evcs"),
                 "--weights", str(workdir / "w.evcw"), "--split", "val",
                 "--out", str(workdir / "report.csv"))
    assert ev.returncode == 0, ev.stderr
    assert "sgcs" in ev.stdout
    report = (workdir / "report.csv").read_text().splitlines()
    assert report[0] == "sgcs,mse,nmse_db,n_samples"
    assert int(report[1].split(",")[3]) == 5


def test_baseline_command(workdir):
    res = run_cli("baseline", "--data", str(workdir / "d.evcs"),
                  "--oversample", "4")
    assert res.returncode == 0, res.stderr
    assert "sgcs" in res.stdout
    assert "16 bits" in res.stdout


def test_count_command(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CONFIG)
    res = run_cli("count", "--config", str(cfg))
    assert res.returncode == 0, res.stderr
    assert "encoder" in res.stdout and "decoder" in res.stdout


def test_ensemble_command(workdir, tmp_path):
    cfg2 = tmp_path / "run2.cfg"
    cfg2.write_text(TINY_CONFIG.replace("seed = 3", "seed = 4"))
    for cfg, out in ((workdir / "run.cfg", tmp_path / "m0.evcw"),
                     (cfg2, tmp_path / "m1.evcw")):
        res = run_cli("train", "--data", str(workdir / "d.evcs"),
                      "--config", str(cfg), "--out", str(out))
        assert res.returncode == 0, res.stderr
    manifest = tmp_path / "pair.ens"
    manifest.write_text("bits_total = 9\nmember = m0.evcw\nmember = m1.evcw\n")
    res = run_cli("ensemble", "--manifest", str(manifest),
                  "--data", str(workdir / "d.evcs"),
                  "--out", str(tmp_path / "ens.csv"))
    assert res.returncode == 0, res.stderr
    report = (tmp_path / "ens.csv").read_text().splitlines()
    assert report[0].startswith("sgcs")


def test_missing_file_exits_2(workdir):
    res = run_cli("eval", "--data", str(workdir / "nope.evcs"),
                  "--weights", str(workdir / "w.evcw"))
    assert res.returncode == 2


def test_bad_config_exits_3(workdir, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_tx = 4\n")
    res = run_cli("train", "--data", str(workdir / "d.evcs"),
                  "--config", str(cfg), "--out", str(tmp_path / "w.evcw"))
    assert res.returncode == 3
    assert "missing" in res.stderr


def test_dimension_mismatch_exits_4(workdir, tmp_path):
    cfg = tmp_path / "wide.cfg"
    cfg.write_text(TINY_CONFIG.replace("n_tx = 4", "n_tx = 8"))
    res = run_cli("train", "--data", str(workdir / "d.evcs"),
                  "--config", str(cfg), "--out", str(tmp_path / "w.evcw"))
    assert res.returncode == 4


def test_corrupt_dataset_exits_2(workdir, tmp_path):
    bad = tmp_path / "bad.evcs"
    bad.write_bytes(b"EVCX" + b"\x00" * 32)
    res = run_cli("baseline", "--data", str(bad))
    assert res.returncode == 2


def test_help_shows_subcommands():
    res = run_cli("--help")
    assert res.returncode == 0
    for name in ("gen", "train", "eval", "baseline", "ensemble", "count"):
        assert name in res.stdout
