import csv
import json

import pytest

from vqt.cli import main
from vqt.cli.config import ConfigError, ExperimentConfig, load_config, parse_config_text, resolve


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def read(path):
    return list(csv.DictReader(open(path, encoding="utf-8")))


def test_config_grammar(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\nseed = 4\nbatch_sizes = 4, 8  # trailing\n\nd_model = 16\nmode = exact\n")
    cfg = load_config("product-accuracy", p)
    assert (cfg.seed, cfg.batch_sizes, cfg.model.d_model, cfg.mode) == (4, (4, 8), 16, "exact")
    assert load_config("product-accuracy", p, {"seed": 9}).seed == 9


@pytest.mark.parametrize("text", ["bogus = 1\n", "seed 4\n", "seed = x\n", "mode = fuzzy\n", "noise_p2q = 1.5\n"])
def test_bad_config_rejected(tmp_path, text):
    p = tmp_path / "c.txt"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config("resources", p)
    assert main(["resources", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_echo_parses_back():
    cfg = ExperimentConfig("train", seed=3, sweep=(10, 20))
    back = resolve("train", parse_config_text(cfg.echo()))
    assert back.digest() == cfg.digest()


def test_digest_tracks_meaningful_fields():
    a = ExperimentConfig("train")
    assert a.digest() == ExperimentConfig("train").digest()
    assert a.digest() != ExperimentConfig("train", seed=1).digest()
    assert a.digest() != load_config("train", None, {"d_model": 16}).digest()


def test_resources(tmp_path):
    code, out = run(tmp_path, "r", "resources", "--sizes", "1", "5")
    assert code == 0
    rows = {int(r["batch_size"]): r for r in read(out / "resources.csv")}
    assert [rows[n]["cx_count"] for n in (4, 8, 16, 32, 64, 128)] == ["9", "17", "33", "65", "129", "257"]
    assert [rows[n]["cx_depth"] for n in (4, 8, 16, 32, 64, 128)] == ["5", "9", "17", "33", "65", "129"]
    for r in rows.values():
        assert r["cx_count"] == r["compiled_cx_count"] and r["cx_depth"] == r["compiled_cx_depth"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "resources" and "wall_time_s" in manifest
    assert (out / "config.txt").read_text().startswith("# experiment: resources\nB = 10")


def test_product_accuracy_ideal_and_zero_noise_identical(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("batch_sizes = 4\nbatches = 3\n")
    code, a = run(tmp_path, "a", "product-accuracy", "--config", str(p))
    assert code == 0
    code, b = run(tmp_path, "b", "product-accuracy", "--config", str(p), "--noise-p2q", "0", "--noise-ro", "0")
    assert (a / "scatter.csv").read_bytes() == (b / "scatter.csv").read_bytes()
    summary = read(a / "summary.csv")[0]
    assert summary["shots"] == "10000" and summary["calib_scale"] == ""


def test_product_accuracy_noisy_adds_calibration(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("batch_sizes = 4\nbatches = 2\ntrajectories = 50\n")
    code, out = run(tmp_path, "n", "product-accuracy", "--config", str(p), "--noise-p2q", "0.01", "--svg")
    assert code == 0
    assert read(out / "summary.csv")[0]["calib_scale"] != ""
    assert (out / "plot.svg").exists()


def test_product_accuracy_rejects_starved_shots(tmp_path, capsys):
    code, _ = run(tmp_path, "s", "product-accuracy", "--shots", "4")
    assert code == 2
    assert "suggests" in capsys.readouterr().err


def test_attention_compare_exact(tmp_path):
    code, out = run(tmp_path, "x", "attention-compare", "--mode", "exact")
    assert code == 0
    assert float(read(out / "summary.csv")[0]["max_abs_dev"]) < 1e-10
    assert len(read(out / "deviations.csv")) == 1000
    assert len(read(out / "error_matrix.csv")) == 100


def test_train_small(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("epochs = 2\nval_fraction = 0.25\nd_model = 8\nd_ff = 16\nd_mlp = 16\nseq_len = 4\nnq_addr = 2\nnq_data = 2\n")
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("one two three four five six seven eight nine ten . " * 20)
    code, out = run(tmp_path, "t", "train", "--config", str(p), "--corpus", str(corpus), "--mode", "exact")
    assert code == 0
    log = read(out / "training_log.csv")
    assert [r["epoch"] for r in log] == ["0", "1", "2"]
    assert all(r["val_loss"] != "" for r in log)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["q_dim"] == 8


def test_train_reports_large_q_dim(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("nq_addr = 6\nnq_data = 6\nseq_len = 8\n")
    cfg = load_config("train", p)
    assert cfg.model.q_dim == 384


def test_train_rejects_tiny_corpus(tmp_path):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("just a few words here")
    code, _ = run(tmp_path, "t", "train", "--corpus", str(corpus), "--epochs", "1")
    assert code == 2


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    from vqt.cli import commands
    from vqt.errors import NumericError

    def boom(cfg, out):
        raise NumericError("nan")

    monkeypatch.setitem(commands.COMMANDS, "resources", boom)
    code, _ = run(tmp_path, "n", "resources")
    assert code == 3


def test_ingest_check(tmp_path, capsys):
    code, out = run(tmp_path, "i", "ingest-check")
    assert code == 0
    summary = read(out / "summary.csv")[0]
    assert int(summary["vocab_size"]) <= 100
    assert read(out / "vocab.csv")[-1]["word"] == "<oov>"


def test_attention_sweep_follows_inverse_sqrt_shots(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("sweep = 750000, 3000000, 12000000\n")
    code, out = run(tmp_path, "s", "attention-compare", "--config", str(p))
    assert code == 0
    rows = read(out / "sweep.csv")
    assert rows[-1]["shots_total"] == "slope"
    assert -0.6 <= float(rows[-1]["mean_abs_dev"]) <= -0.4
