"""Command-line interface and key=value config files, run in-process."""

import numpy as np
import numpy.testing as npt
import pytest

from scnn.cli import main
from scnn.cohort import load_sphere_signal, read_manifest
from scnn.config import (RunConfig, load_config, parse_config_text,
                         preset_config)
from scnn.errors import ParseError, ValidationError

TINY_CFG = """\
# smallest config that exercises every command
preset = desk
bandwidth = 2
trunk_bandwidths = 1,1,1
channels = 2,2,2
count_cn = 3
count_mcis = 0
count_mcip = 0
count_ad = 3
epochs_phase1 = 1
epochs_phase2 = 1
folds = 3
batch_size = 2
"""


@pytest.fixture()
def tiny_cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(TINY_CFG)
    return str(path)


def hash_tree(root):
    import hashlib
    import os

    h = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        if name == "run.log":                 # the one timestamped file
            continue
        h.update(name.encode())
        h.update((root / name).read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# config parsing

def test_parse_config_presets_and_overrides():
    cfg = parse_config_text("preset = paper\n")
    assert cfg.bandwidth == 64 and cfg.channels == (32, 64, 128)
    assert cfg.epochs_phase1 == 100 and cfg.count_ad == 188

    cfg = parse_config_text("preset = paper\nbandwidth = 32\n# note\n\n")
    assert cfg.bandwidth == 32                # explicit key beats the preset
    assert parse_config_text("").preset == "desk"

    assert preset_config("desk").trunk_bandwidths == (8, 4, 2)
    with pytest.raises(ValidationError):
        preset_config("huge")


def test_parse_config_errors():
    with pytest.raises(ValidationError, match="unknown config key"):
        parse_config_text("fizz = 3\n")
    with pytest.raises(ValidationError, match="bad value"):
        parse_config_text("bandwidth = large\n")
    with pytest.raises(ParseError, match="key = value"):
        parse_config_text("bandwidth 16\n")
    with pytest.raises(ValidationError, match="preset"):
        parse_config_text("preset = enormous\n")


def test_run_config_validation():
    with pytest.raises(ValidationError):
        RunConfig(task="cn-vs-everything")
    with pytest.raises(ValidationError):
        RunConfig(model="transformer")
    with pytest.raises(ValidationError):
        RunConfig(precision="f16")
    with pytest.raises(ValidationError):
        RunConfig(trunk_bandwidths=(8, 4))
    with pytest.raises(ValidationError):
        RunConfig(init="hand-tuned")
    with pytest.raises(ValidationError):
        RunConfig(init="aligned-bank", model="planar")


def test_run_config_builders():
    cfg = RunConfig(epochs_phase1=2, epochs_phase2=0, lr_phase1=0.5)
    assert cfg.to_train_config().schedule == ((2, 0.5),)
    with pytest.raises(ValidationError):
        RunConfig(epochs_phase1=0, epochs_phase2=0).to_train_config()

    assert RunConfig().build_model(0).arch["kind"] == "spherical"
    planar = RunConfig(model="planar", bandwidth=8,
                       channels=(2, 3, 4)).build_model(1)
    assert planar.arch["kind"] == "planar"
    assert planar.arch["input_size"] == 16
    assert planar.arch["channels"] == [4, 6, 8]   # doubled vs spherical

    spec = RunConfig(count_cn=5, count_ad=7).to_cohort_spec()
    assert spec.counts["CN"] == 5 and spec.counts["AD"] == 7

    banked = parse_config_text(
        "init = aligned-bank\nbandwidth = 8\ntrunk_bandwidths = 4,2,2\n"
        "channels = 2,2,2\n").build_model(0)
    assert not banked.trainable["s2.kernel.l0"]
    assert banked.trainable["fc.weight"]


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        load_config(str(tmp_path / "nope.cfg"))


# ---------------------------------------------------------------------------
# exit codes

def test_exit_codes_for_bad_invocations(tmp_path, capsys):
    assert main(["--help"]) == 0
    assert main(["explode"]) == 1
    assert main(["cv", "--bogus-flag"]) == 1
    capsys.readouterr()

    assert main(["train"]) == 2               # no manifest anywhere
    assert "manifest" in capsys.readouterr().err

    bad = tmp_path / "bad.cfg"
    bad.write_text("fizz = 1\n")
    assert main(["--config", str(bad), "verify", "--smoke"]) == 2
    assert main(["--config", str(tmp_path / "ghost.cfg"), "verify"]) == 2
    capsys.readouterr()

    blocker = tmp_path / "file_not_dir"
    blocker.write_text("x")
    assert main(["generate", "--out", str(blocker)]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# generate / sample

def test_generate_is_deterministic(tiny_cfg, tmp_path, capsys):
    for sub in ("a", "b"):
        rc = main(["--config", tiny_cfg, "generate",
                   "--out", str(tmp_path / sub)])
        assert rc == 0
    assert "generated 6 subjects" in capsys.readouterr().out
    assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")
    recs = read_manifest(str(tmp_path / "a" / "manifest.csv"))
    assert len(recs) == 6
    assert (tmp_path / "a" / "run.log").exists()


def test_sample_text_surface(tiny_cfg, tmp_path, capsys, rng):
    verts = rng.normal(size=(12, 3))
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    thick = rng.uniform(1.5, 4.0, size=12)
    lines = [" ".join(repr(float(x)) for x in (*v, t))
             for v, t in zip(verts, thick)]
    src = tmp_path / "mesh.txt"
    src.write_text("\n".join(lines) + "\n")

    rc = main(["--config", tiny_cfg, "sample", str(src),
               "--out", str(tmp_path / "out")])
    assert rc == 0
    assert "12 vertices" in capsys.readouterr().out
    sig = load_sphere_signal(str(tmp_path / "out" / "mesh.sphs"))
    assert sig.bandwidth == 2 and sig.values.shape == (1, 4, 4)
    assert sig.values.min() >= thick.min() - 1e-12
    assert sig.values.max() <= thick.max() + 1e-12

    assert main(["sample", str(tmp_path / "missing.txt")]) == 2


# ---------------------------------------------------------------------------
# train / cv / cam

def test_train_cam_golden_path(tiny_cfg, tmp_path, capsys):
    data = tmp_path / "cohort"
    assert main(["--config", tiny_cfg, "generate", "--out", str(data)]) == 0
    manifest = str(data / "manifest.csv")
    run = tmp_path / "run"

    rc = main(["--config", tiny_cfg, "train", "--manifest", manifest,
               "--out", str(run)])
    assert rc == 0
    assert "best val acc" in capsys.readouterr().out
    assert (run / "model.ckpt").exists()
    history = (run / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,train_loss,val_acc,lr"
    assert len(history) == 3                  # two one-epoch phases
    metrics = (run / "train_metrics.csv").read_text()
    assert metrics.startswith("metric,value")
    assert "best_val_acc," in metrics and "test_acc," in metrics

    rc = main(["--config", tiny_cfg, "cam",
               "--checkpoint", str(run / "model.ckpt"),
               "--subject", "S0000", "--manifest", manifest,
               "--out", str(run)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "argmax at alpha=" in out and "deg" in out
    for hemi in ("left", "right"):
        assert (run / f"cam_S0000_{hemi}.sphs").exists()
        png = (run / f"cam_S0000_{hemi}.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
    cam_sig = load_sphere_signal(str(run / "cam_S0000_left.sphs"))
    assert cam_sig.bandwidth == 1             # final trunk bandwidth

    assert main(["--config", tiny_cfg, "cam", "--checkpoint",
                 str(run / "ghost.ckpt"), "--subject", "S0000",
                 "--manifest", manifest]) == 2
    assert main(["--config", tiny_cfg, "cam", "--checkpoint",
                 str(run / "model.ckpt"), "--subject", "S9999",
                 "--manifest", manifest]) == 2
    capsys.readouterr()


def test_cv_oracle_reports(tiny_cfg, tmp_path, capsys):
    data = tmp_path / "cohort"
    assert main(["--config", tiny_cfg, "generate", "--out", str(data)]) == 0
    manifest = str(data / "manifest.csv")

    outs = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        rc = main(["--config", tiny_cfg, "cv", "--manifest", manifest,
                   "--out", str(out), "--oracle", "--both"])
        assert rc == 0
        outs.append(out)
    stdout = capsys.readouterr().out
    assert "[spherical] ad-vs-cn: AUC 1.0000" in stdout
    assert "[planar] ad-vs-cn: AUC 1.0000" in stdout

    for kind in ("spherical", "planar"):
        base = outs[0] / kind
        assert sorted(p.name for p in base.iterdir()) == \
            ["metrics.csv", "probabilities.csv", "roc.csv", "roc.svg"]
        assert "auc,1.0" in (base / "metrics.csv").read_text()
        # byte-identical across repeat runs
        for name in ("metrics.csv", "probabilities.csv", "roc.csv", "roc.svg"):
            assert (outs[0] / kind / name).read_bytes() == \
                (outs[1] / kind / name).read_bytes()
    table = (outs[0] / "comparison.txt").read_text()
    assert table.splitlines()[0].split() == ["metric", "spherical", "planar"]


# ---------------------------------------------------------------------------
# verify

def test_verify_smoke_passes(capsys):
    assert main(["verify", "--smoke"]) == 0
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 8
    assert all(ln.startswith("PASS") for ln in lines)
    assert "all 8 checks passed" in out


def test_verify_sabotage_fails_then_recovers(capsys):
    assert main(["verify", "--smoke", "--sabotage"]) == 3
    out = capsys.readouterr().out
    status = {}
    for ln in out.splitlines():
        if ln.startswith(("PASS", "FAIL")):
            tag, rest = ln.split(" ", 1)
            status[rest.split(":")[0]] = tag
    assert status["rotation table orthogonality"] == "FAIL"
    assert status["sphere conv equivariance"] == "FAIL"
    assert status["rotation conv equivariance"] == "FAIL"
    assert status["constant normalization"] == "PASS"
    assert status["gradient consistency"] == "PASS"

    # the flipped sign must not leak into later runs
    assert main(["verify", "--smoke"]) == 0
    capsys.readouterr()
