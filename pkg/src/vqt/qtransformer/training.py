"""Next-token training loop with AdamW and per-epoch quantum perplexity."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from vqt.errors import NumericError
from vqt.qtransformer.config import ModelConfig
from vqt.qtransformer.model import VQTModel, build_model, cross_entropy
from vqt.qtransformer.quantum import QuantumKernel


def make_windows(tokens: np.ndarray, T: int) -> np.ndarray:
    """Non-overlapping ``(T + 1)``-token windows with stride ``T`` (inputs plus shifted targets)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    n = (len(tokens) - 1) // T
    if n < 1:
        raise ValueError(f"corpus of {len(tokens)} tokens is shorter than one window of {T + 1}")
    return np.stack([tokens[i * T : i * T + T + 1] for i in range(n)])


@dataclass
class EpochLog:
    epoch: int  # 0 is the evaluation before any update
    loss: float
    qpl: float
    wall_time: float
    circuits: int
    val_loss: float | None = None


@dataclass
class TrainResult:
    model: VQTModel
    log: list[EpochLog] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.log]

    @property
    def qpls(self) -> list[float]:
        return [e.qpl for e in self.log]


def _batches(windows: np.ndarray, batch_size: int, rng: np.random.Generator | None):
    order = rng.permutation(len(windows)) if rng is not None else np.arange(len(windows))
    for start in range(0, len(order), batch_size):
        yield torch.as_tensor(windows[order[start : start + batch_size]])


def evaluate(model: VQTModel, windows: np.ndarray, kernel: QuantumKernel, batch_size: int) -> float:
    """Token-weighted mean next-token loss over all windows."""
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in _batches(windows, batch_size, None):
            logits = model(batch[:, :-1], kernel)
            n = batch[:, 1:].numel()
            total += float(cross_entropy(logits, batch[:, 1:])) * n
            count += n
    return total / count


def _check(loss: float, epoch: int, step: int):
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss} at epoch {epoch}, step {step}")


def train(
    tokens: np.ndarray,
    cfg: ModelConfig,
    epochs: int,
    seed: int = 0,
    mode: str = "exact",
    callback=None,
    val_tokens: np.ndarray | None = None,
) -> TrainResult:
    """Train from scratch; ``log[0]`` holds the loss before training, ``log[e]`` the mean loss of epoch ``e``.

    With ``val_tokens`` every log entry also carries the exact-mode loss on
    that held-out stream (a separate kernel, so sampling streams are unchanged).
    """
    windows = make_windows(tokens, cfg.seq_len)
    val_windows = make_windows(val_tokens, cfg.seq_len) if val_tokens is not None else None
    if len(windows) < cfg.batch_size:
        raise ValueError(f"corpus yields {len(windows)} windows, fewer than one batch of {cfg.batch_size}")
    if int(windows.max()) >= cfg.vocab_size:
        raise ValueError(f"token id {int(windows.max())} outside vocabulary of {cfg.vocab_size}")
    model = build_model(cfg, seed)
    kernel = QuantumKernel(mode, cfg.shots, seed=seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle = np.random.default_rng([seed, 1])
    start = time.perf_counter()

    def val_loss():
        if val_windows is None:
            return None
        return evaluate(model, val_windows, QuantumKernel("exact"), cfg.batch_size)

    result = TrainResult(model)
    loss0 = evaluate(model, windows, kernel, cfg.batch_size)
    _check(loss0, 0, 0)
    result.log.append(EpochLog(0, loss0, math.exp(loss0), time.perf_counter() - start, kernel.circuits, val_loss()))
    if callback:
        callback(result.log[-1])

    for epoch in range(1, epochs + 1):
        model.train()
        total, count = 0.0, 0
        for step, batch in enumerate(_batches(windows, cfg.batch_size, shuffle)):
            loss = cross_entropy(model(batch[:, :-1], kernel), batch[:, 1:])
            value = float(loss.detach())
            _check(value, epoch, step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            n = batch[:, 1:].numel()
            total += value * n
            count += n
        mean = total / count
        model.eval()
        result.log.append(
            EpochLog(epoch, mean, math.exp(mean), time.perf_counter() - start, kernel.circuits, val_loss())
        )
        if callback:
            callback(result.log[-1])
    model.eval()
    return result
