"""The experiment commands.  Each writes CSVs into ``out`` and returns their paths.

CSV schemas
-----------
product-accuracy
    ``scatter.csv``    batch_size,batch,addr,truth,measured
    ``histogram.csv``  batch_size,bin_lo,bin_hi,count   (residual = measured - truth)
    ``summary.csv``    batch_size,qubits,shots,cx_count,cx_depth,residual_mean,residual_std,rmse,
                       calib_scale,calib_intercept,calib_rmse   (calibration only under noise)
attention-compare
    ``deviations.csv``    b,i,j,classical,quantum,abs_dev
    ``error_matrix.csv``  i,j,mean_abs_dev
    ``histogram.csv``     bin_lo,bin_hi,count
    ``summary.csv``       shots_total,shots_per_feature,shots_per_address,mean_abs_dev,max_abs_dev,
                          mean_abs_dev_pct
    ``sweep.csv``         shots_total,mean_abs_dev   (plus a final ``slope`` row; only with ``sweep``)
train
    ``training_log.csv``  run,epoch,loss,qpl,circuits,val_loss   (val_loss empty without val_fraction)
    ``final.csv``         run,final_loss,final_qpl   (plus a ``mean`` row)
resources
    ``resources.csv``     batch_size,qubits,shots,cx_count,cx_depth,compiled_cx_count,compiled_cx_depth
ingest-check
    ``vocab.csv``         id,word,count
    ``summary.csv``       n_tokens,n_oov,vocab_size

Floats are written with ``%.12g``; the mean absolute deviation percentage is
relative to ``d``, the largest possible ``|Q K^T|`` entry.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from pathlib import Path

import numpy as np

from vqt import simcore
from vqt.cli.config import ConfigError, ExperimentConfig
from vqt.corpus import OOV, ingest_corpus, tokenize, toy_corpus_path
from vqt.noise import NoiseModel, fit_scale
from vqt.qtransformer.training import train
from vqt.vqdp import (
    PairBatch,
    build_vqdp_circuit,
    estimate_products,
    resource_report,
    vqdp_matmul,
)

TABLE_SIZES = (4, 8, 16, 32, 64, 128)
RESIDUAL_EDGES = np.linspace(-0.1, 0.1, 41)


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.12g}"


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint32)[0])


def histogram_rows(values: np.ndarray, edges: np.ndarray):
    """Fixed-edge histogram; values outside the edges go to the end bins."""
    clipped = np.clip(values, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    return [(edges[k], edges[k + 1], int(c)) for k, c in enumerate(counts)]


def product_accuracy(cfg: ExperimentConfig, out: Path) -> dict:
    noise = NoiseModel(cfg.noise_p2q, cfg.noise_ro)
    scatter, hist, summary = [], [], []
    plot = {}
    for N in cfg.batch_sizes:
        rep = resource_report(N)
        shots = None if cfg.mode == "exact" else (cfg.shots or rep.recommended_shots)
        if shots is not None and shots < 2 ** (rep.n_qubits - 2):
            raise ConfigError(
                f"{shots} shots leave addresses of batch {N} unsampled; resource_report suggests "
                f"{rep.recommended_shots}"
            )
        truth_all, meas_all = [], []
        for b in range(cfg.batches):
            rng = np.random.default_rng([cfg.seed, N, b])
            x, y = rng.uniform(-1, 1, N), rng.uniform(-1, 1, N)
            batch = PairBatch.from_pairs(x, y)
            circ = build_vqdp_circuit(batch) if cfg.backend == "statevector" else None
            table = estimate_products(
                circ, batch, shots, _seed(cfg.seed, N, b), cfg.backend,
                noise=noise, trajectories=cfg.trajectories,
            )
            z = table.z_hat[:N]
            truth = x * y
            for ell in range(N):
                scatter.append((N, b, ell, truth[ell], z[ell]))
            truth_all.append(truth)
            meas_all.append(z)
        truth, meas = np.concatenate(truth_all), np.concatenate(meas_all)
        ok = ~np.isnan(meas)
        resid = meas[ok] - truth[ok]
        hist += [(N,) + r for r in histogram_rows(resid, RESIDUAL_EDGES)]
        row = [N, rep.n_qubits, shots if shots is not None else "exact", rep.cx_count, rep.cx_depth,
               resid.mean(), resid.std(), math.sqrt(np.mean(resid**2))]
        if not noise.is_ideal:
            cal = fit_scale(meas[ok], truth[ok])
            row += [cal.scale, cal.intercept, cal.fit_rmse]
        else:
            row += ["", "", ""]
        summary.append(row)
        plot[N] = (truth[ok], meas[ok])
    files = {
        "scatter": write_csv(out / "scatter.csv", ("batch_size", "batch", "addr", "truth", "measured"), scatter),
        "histogram": write_csv(out / "histogram.csv", ("batch_size", "bin_lo", "bin_hi", "count"), hist),
        "summary": write_csv(
            out / "summary.csv",
            ("batch_size", "qubits", "shots", "cx_count", "cx_depth", "residual_mean", "residual_std",
             "rmse", "calib_scale", "calib_intercept", "calib_rmse"),
            summary,
        ),
    }
    return {"files": files, "plot": ("scatter", plot)}


def _mean_abs_dev(Q, K, shots_total, cfg: ExperimentConfig, seed: int):
    shots = None if shots_total is None else max(1, shots_total // Q.shape[-1])
    att = vqdp_matmul(Q, K, shots, seed=seed, backend=cfg.backend)
    classical = np.einsum("bik,bjk->bij", Q, K)
    return classical, att.scores, np.abs(att.scores - classical), shots


def attention_compare(cfg: ExperimentConfig, out: Path) -> dict:
    rng = np.random.default_rng([cfg.seed, 0])
    Q = rng.uniform(-1, 1, (cfg.B, cfg.T, cfg.d))
    K = rng.uniform(-1, 1, (cfg.B, cfg.T, cfg.d))
    total = None if cfg.mode == "exact" else (cfg.shots or 3_000_000)
    classical, quantum, dev, per_feature = _mean_abs_dev(Q, K, total, cfg, cfg.seed)
    n_addr = 2 ** math.ceil(math.log2(cfg.B * cfg.T * cfg.T)) if cfg.B * cfg.T * cfg.T > 1 else 1
    rows = [
        (b, i, j, classical[b, i, j], quantum[b, i, j], dev[b, i, j])
        for b in range(cfg.B) for i in range(cfg.T) for j in range(cfg.T)
    ]
    files = {
        "deviations": write_csv(out / "deviations.csv", ("b", "i", "j", "classical", "quantum", "abs_dev"), rows),
        "error_matrix": write_csv(
            out / "error_matrix.csv", ("i", "j", "mean_abs_dev"),
            [(i, j, dev[:, i, j].mean()) for i in range(cfg.T) for j in range(cfg.T)],
        ),
        "histogram": write_csv(
            out / "histogram.csv", ("bin_lo", "bin_hi", "count"),
            histogram_rows(dev.ravel(), np.linspace(0, max(float(dev.max()), 1e-12), 31)),
        ),
        "summary": write_csv(
            out / "summary.csv",
            ("shots_total", "shots_per_feature", "shots_per_address", "mean_abs_dev", "max_abs_dev",
             "mean_abs_dev_pct"),
            [(
                total if total is not None else "exact",
                per_feature if per_feature is not None else "exact",
                per_feature / n_addr if per_feature is not None else "exact",
                dev.mean(), dev.max(), 100.0 * dev.mean() / cfg.d,
            )],
        ),
    }
    if cfg.sweep and cfg.mode == "sampled":
        sweep = [(s, _mean_abs_dev(Q, K, s, cfg, cfg.seed)[2].mean()) for s in cfg.sweep]
        slope = float(np.polyfit(np.log([s for s, _ in sweep]), np.log([m for _, m in sweep]), 1)[0])
        files["sweep"] = write_csv(out / "sweep.csv", ("shots_total", "mean_abs_dev"), sweep + [("slope", slope)])
    return {"files": files, "plot": ("histogram", dev.ravel())}


def _corpus_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.corpus) if cfg.corpus else toy_corpus_path()


def train_command(cfg: ExperimentConfig, out: Path) -> dict:
    path = _corpus_path(cfg)
    try:
        corpus = ingest_corpus(path, cfg.model.vocab_size)
    except OSError as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    tokens, val = corpus.tokens, None
    if cfg.val_fraction > 0:
        cut = len(tokens) - int(len(tokens) * cfg.val_fraction)
        tokens, val = tokens[:cut], tokens[cut:]
    log_rows, finals, wall = [], [], []
    for run in range(cfg.runs):
        try:
            res = train(tokens, cfg.model, cfg.epochs, seed=_seed(cfg.seed, run), mode=cfg.mode, val_tokens=val)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        log_rows += [(run, e.epoch, e.loss, e.qpl, e.circuits, e.val_loss) for e in res.log]
        finals.append((run, res.losses[-1], res.qpls[-1]))
        wall.append(res.log[-1].wall_time)
    mean_loss = float(np.mean([f[1] for f in finals]))
    files = {
        "training_log": write_csv(
            out / "training_log.csv", ("run", "epoch", "loss", "qpl", "circuits", "val_loss"), log_rows
        ),
        "final": write_csv(
            out / "final.csv", ("run", "final_loss", "final_qpl"),
            finals + [("mean", mean_loss, float(np.mean([f[2] for f in finals])))],
        ),
    }
    curve = [r[2] for r in log_rows if r[0] == 0]
    return {"files": files, "plot": ("curve", curve), "extra": {"q_dim": cfg.model.q_dim, "train_wall_time": wall}}


def resources_command(cfg: ExperimentConfig, out: Path) -> dict:
    rows = []
    for N in sorted(set(TABLE_SIZES) | set(cfg.sizes)):
        rep = resource_report(N)
        circ = build_vqdp_circuit(PairBatch.from_pairs(np.zeros(N), np.zeros(N)))
        rows.append((N, rep.n_qubits, rep.recommended_shots, rep.cx_count, rep.cx_depth,
                     simcore.cx_count(circ), simcore.two_qubit_depth(circ)))
    header = ("batch_size", "qubits", "shots", "cx_count", "cx_depth", "compiled_cx_count", "compiled_cx_depth")
    return {"files": {"resources": write_csv(out / "resources.csv", header, rows)}, "table": (header, rows)}


def ingest_check(cfg: ExperimentConfig, out: Path) -> dict:
    path = _corpus_path(cfg)
    try:
        corpus = ingest_corpus(path, cfg.model.vocab_size)
        counts = Counter(tokenize(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n_oov = int((corpus.tokens == corpus.oov_id).sum())
    vocab_rows = [(i, w, n_oov if w == OOV else counts[w]) for i, w in enumerate(corpus.vocab)]
    files = {
        "vocab": write_csv(out / "vocab.csv", ("id", "word", "count"), vocab_rows),
        "summary": write_csv(out / "summary.csv", ("n_tokens", "n_oov", "vocab_size"),
                             [(len(corpus.tokens), n_oov, len(corpus.vocab))]),
    }
    return {"files": files, "table": (("n_tokens", "n_oov", "vocab_size"), [(len(corpus.tokens), n_oov, len(corpus.vocab))])}


COMMANDS = {
    "product-accuracy": product_accuracy,
    "attention-compare": attention_compare,
    "train": train_command,
    "resources": resources_command,
    "ingest-check": ingest_check,
}
