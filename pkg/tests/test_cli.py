"""Operator-surface tests: config parsing and the command pipeline."""
import json

import numpy as np
import pytest

from protodiff.cli import main
from protodiff.config import load_config
from protodiff.dataio import load_csv


# -- config ---------------------------------------------------------------------

def test_config_defaults_follow_reference_settings():
    cfg = load_config()
    assert cfg.train.steps == 50_000
    assert cfg.train.batch_size == 128
    assert cfg.train.lr == pytest.approx(1e-4)
    assert cfg.train.warmup == 1000
    assert cfg.model.n_prototypes == 16
    assert cfg.schedule.steps == 1000


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(
        "[model]\nlength = 96\nprototypes = 8\n\n"
        "[train]\nsteps = 50\nbatch = 16\nlr = 0.001\nwarmup = 5\nseed = 3\n\n"
        "[schedule]\nsteps = 100\n"
    )
    cfg = load_config(path, {"train.steps": 20, "model.length": 24})
    assert cfg.model.length == 24          # override wins
    assert cfg.model.n_prototypes == 8     # file value
    assert cfg.train.steps == 20
    assert cfg.train.seed == 3
    assert cfg.model.seed == 3             # model follows the training seed
    assert cfg.schedule.steps == 100


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[train]\nstep = 10\n")
    with pytest.raises(ValueError, match="unknown key 'step'"):
        load_config(path)


def test_config_rejects_unknown_section(tmp_path):
    path = tmp_path / "bad2.ini"
    path.write_text("[optimizer]\nlr = 1\n")
    with pytest.raises(ValueError, match="unknown config section"):
        load_config(path)


def test_config_rejects_unknown_override():
    with pytest.raises(ValueError, match="override"):
        load_config(None, {"train.momentum": 0.9})


# -- pipeline -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """make-synth -> tiny train -> artifacts shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run = root / "run"
    assert main(["make-synth", "--out", str(data), "--domains", "sine,trend",
                 "--windows", "24", "--length", "24", "--seed", "1"]) == 0
    cfg = root / "desk.ini"
    cfg.write_text(
        "[model]\nprototypes = 4\nembed_dim = 16\nbase_channels = 8\nheads = 2\n"
        "pam_hidden = 8\n\n"
        "[schedule]\nsteps = 10\n\n"
        "[train]\nsteps = 12\nbatch = 8\nlr = 0.001\nwarmup = 2\nseed = 0\n"
    )
    assert main(["train", "--corpus", str(data / "corpus.csv"), "--out", str(run),
                 "--config", str(cfg), "--length", "24", "--quiet"]) == 0
    return {"data": data, "run": run, "cfg": cfg, "root": root}


def test_make_synth_artifacts(pipeline):
    data = pipeline["data"]
    corpus = load_csv(data / "corpus.csv")
    assert corpus.counts == {"sine": 24, "trend": 24}
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["length"] == 24 and manifest["seed"] == 1


def test_train_artifacts(pipeline):
    run = pipeline["run"]
    assert (run / "checkpoint.bin").exists()
    lines = (run / "loss.csv").read_text().strip().splitlines()
    assert lines[0] == "step,loss" and len(lines) == 13
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["norm_stats"]["mode"] == "minmax"


def test_sample_command_and_metadata(pipeline):
    run = pipeline["run"]
    out = pipeline["root"] / "samples_a"
    rc = main(["sample", "--checkpoint", str(run / "checkpoint.bin"),
               "--count", "7", "--domain", "sine",
               "--corpus", str(pipeline["data"] / "corpus.csv"),
               "--shots-k", "3", "--seed", "5", "--out", str(out)])
    assert rc == 0
    samples = np.loadtxt(out / "samples.csv", delimiter=",")
    assert samples.shape == (7, 24)
    assert np.all(np.isfinite(samples))
    meta = json.loads((out / "samples.meta.json").read_text())
    assert meta["seed"] == 5 and meta["variant"] == "ddpm"
    assert "sine" in meta["prompt_source"]
    assert len(meta["checkpoint_sha256"]) == 64
    assert meta["config"]["model"]["length"] == 24


def test_sample_reproducible(pipeline):
    run, root = pipeline["run"], pipeline["root"]
    outs = []
    for name in ("rep1", "rep2"):
        out = root / name
        assert main(["sample", "--checkpoint", str(run / "checkpoint.bin"),
                     "--count", "4", "--unconditional", "--seed", "9",
                     "--out", str(out)]) == 0
        outs.append(np.loadtxt(out / "samples.csv", delimiter=","))
    assert np.array_equal(outs[0], outs[1])


def test_sample_alg2_variant(pipeline):
    run, root = pipeline["run"], pipeline["root"]
    out = root / "alg2"
    assert main(["sample", "--checkpoint", str(run / "checkpoint.bin"),
                 "--count", "3", "--unconditional", "--variant", "alg2",
                 "--seed", "2", "--out", str(out)]) == 0
    assert np.loadtxt(out / "samples.csv", delimiter=",").shape == (3, 24)


def test_eval_identical_sets_zero(pipeline, capsys):
    data = pipeline["data"]
    out = pipeline["root"] / "eval"
    rc = main(["eval", "--real", str(data / "corpus.csv"),
               "--synth", str(data / "corpus.csv"), "--out", str(out)])
    assert rc == 0
    rows = (out / "report.csv").read_text().strip().splitlines()
    assert rows[0] == "metric,value,config"
    values = {line.split(",")[0]: float(line.split(",")[1]) for line in rows[1:]}
    assert values["mmd"] < 1e-6
    assert values["kl"] == 0.0
    assert values["mdd"] == 0.0


def test_inspect_outputs(pipeline):
    run, root = pipeline["run"], pipeline["root"]
    out = root / "inspect"
    rc = main(["inspect", "--checkpoint", str(run / "checkpoint.bin"),
               "--corpus", str(pipeline["data"] / "corpus.csv"),
               "--count", "2", "--out", str(out)])
    assert rc == 0
    assign_rows = (out / "assignments.csv").read_text().strip().splitlines()
    assert assign_rows[0] == "domain,w_0,w_1,w_2,w_3"
    assert len(assign_rows) == 1 + 48  # 24 windows per domain
    onehot_rows = (out / "onehot_samples.csv").read_text().strip().splitlines()
    assert len(onehot_rows) == 1 + 4 * 2  # 4 prototypes x 2 samples


def test_cli_error_paths(tmp_path, capsys):
    assert main(["eval", "--real", "missing.csv", "--synth", "missing.csv"]) == 1
    err = capsys.readouterr().err
    assert "error:" in err
    assert main(["sample", "--checkpoint", str(tmp_path / "nope.bin"),
                 "--count", "1", "--unconditional", "--out", str(tmp_path)]) == 1


def test_unknown_domain_errors(pipeline, capsys):
    run, root = pipeline["run"], pipeline["root"]
    rc = main(["sample", "--checkpoint", str(run / "checkpoint.bin"),
               "--count", "2", "--domain", "nosuch",
               "--corpus", str(pipeline["data"] / "corpus.csv"),
               "--out", str(root / "x")])
    assert rc == 1
    assert "nosuch" in capsys.readouterr().err
