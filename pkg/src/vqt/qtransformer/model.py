"""The toy Vectorized Quantum Transformer.

Per block::

    heads   = concat_h [ tanh_head_h(z).context + E_h(vnqe_h(tanh(AngleMLP_h(z)))) ]
    z       = LayerNorm(z + W_o heads)
    z       = LayerNorm(z + FFN(z))

A tanh head projects ``z`` to ``Q, K, V = tanh(z W)``, gets ``Q K^T`` from
VQDP, applies the causal mask and a row softmax of ``A_raw / sqrt(d)`` (so the
attention weights stay inside the encodable range), then forms ``A V`` with a
second VQDP pass.  The expressive head feeds AngleMLP outputs through VNQE and
projects the ``Q_dim`` measured features back to ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from vqt.qtransformer.config import ModelConfig
from vqt.qtransformer.quantum import AVContext, QKScores, QuantumKernel, VNQEFeatures

DTYPE = torch.float64


@dataclass
class QuantumHeadOutput:
    scores: torch.Tensor  # (B, T, T) pre-softmax VQDP scores
    attention: torch.Tensor  # (B, T, T) normalised, masked
    context: torch.Tensor  # (B, T, d)
    circuits: int


def causal_mask(T: int) -> torch.Tensor:
    return torch.ones(T, T, dtype=torch.bool).tril()


def normalise_scores(scores: torch.Tensor, d: int, attn_norm: str = "softmax") -> torch.Tensor:
    T = scores.shape[-1]
    mask = causal_mask(T)
    if attn_norm == "softmax":
        return torch.softmax((scores / math.sqrt(d)).masked_fill(~mask, float("-inf")), dim=-1)
    # scale_only: |scores| <= d, so A stays in [-1, 1]
    return (scores / d).masked_fill(~mask, 0.0)


class QuantumHead(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.cfg = cfg
        self.w_q = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.w_k = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.w_v = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.angle_mlp = nn.Sequential(
            nn.Linear(d, cfg.d_mlp, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(cfg.d_mlp, cfg.q_dim, dtype=DTYPE),
        )
        self.expr_proj = nn.Linear(cfg.q_dim, d, dtype=DTYPE)

    def tanh_forward(self, z: torch.Tensor, kernel: QuantumKernel) -> QuantumHeadOutput:
        before = kernel.circuits
        q = torch.tanh(self.w_q(z))
        k = torch.tanh(self.w_k(z))
        v = torch.tanh(self.w_v(z))
        scores = QKScores.apply(q, k, kernel)
        attn = normalise_scores(scores, self.cfg.d_model, self.cfg.attn_norm)
        context = AVContext.apply(attn, v, kernel, True)
        return QuantumHeadOutput(scores, attn, context, kernel.circuits - before)

    def angles(self, z: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.angle_mlp(z))

    def expressive_forward(self, z: torch.Tensor, kernel: QuantumKernel) -> torch.Tensor:
        return VNQEFeatures.apply(self.angles(z), kernel, self.cfg.nq_addr, self.cfg.nq_data)

    def forward(self, z: torch.Tensor, kernel: QuantumKernel) -> torch.Tensor:
        out = self.tanh_forward(z, kernel).context
        return out + self.expr_proj(self.expressive_forward(z, kernel))


class VQTBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.heads = nn.ModuleList(QuantumHead(cfg) for _ in range(cfg.n_heads))
        self.w_o = nn.Linear(cfg.n_heads * d, d, dtype=DTYPE)
        self.ln1 = nn.LayerNorm(d, dtype=DTYPE)
        self.ff = nn.Sequential(
            nn.Linear(d, cfg.d_ff, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(cfg.d_ff, d, dtype=DTYPE),
        )
        self.ln2 = nn.LayerNorm(d, dtype=DTYPE)
        # rho = 0 builds no dropout modules at all
        self.drop = nn.Dropout(cfg.dropout) if cfg.dropout > 0 else None

    def _dropout(self, x):
        return self.drop(x) if self.drop is not None else x

    def forward(self, z: torch.Tensor, kernel: QuantumKernel) -> torch.Tensor:
        heads = torch.cat([h(z, kernel) for h in self.heads], dim=-1)
        z = self.ln1(z + self._dropout(self.w_o(heads)))
        return self.ln2(z + self._dropout(self.ff(z)))


class VQTModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model, dtype=DTYPE)
        self.pos_emb = nn.Embedding(cfg.seq_len, cfg.d_model, dtype=DTYPE)
        self.blocks = nn.ModuleList(VQTBlock(cfg) for _ in range(cfg.n_blocks))
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, dtype=DTYPE)

    def embed(self, tokens: torch.Tensor) -> torch.Tensor:
        """Token row plus positional row for every slot."""
        tokens = torch.as_tensor(tokens, dtype=torch.long)
        if tokens.ndim != 2:
            raise ValueError(f"tokens must be (batch, T), got shape {tuple(tokens.shape)}")
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.cfg.vocab_size):
            raise ValueError(f"token ids must lie in [0, {self.cfg.vocab_size}), got {tokens.min()}..{tokens.max()}")
        T = tokens.shape[1]
        if T > self.cfg.seq_len:
            raise ValueError(f"sequence length {T} exceeds configured {self.cfg.seq_len}")
        return self.tok_emb(tokens) + self.pos_emb(torch.arange(T))

    def forward(self, tokens, kernel: QuantumKernel | None = None) -> torch.Tensor:
        kernel = kernel if kernel is not None else QuantumKernel("exact")
        z = self.embed(tokens)
        for block in self.blocks:
            z = block(z, kernel)
        return self.head(z)

    def circuits_per_forward(self) -> int:
        c = self.cfg
        return c.n_heads * c.n_blocks * (2 * c.d_model) + c.n_heads * c.n_blocks


def build_model(cfg: ModelConfig, seed: int = 0) -> VQTModel:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        return VQTModel(cfg)
    finally:
        torch.random.set_rng_state(gen_state)


def tanh_head_forward(z: torch.Tensor, head: QuantumHead, kernel: QuantumKernel) -> QuantumHeadOutput:
    return head.tanh_forward(z, kernel)


def expressive_head_forward(z: torch.Tensor, head: QuantumHead, kernel: QuantumKernel) -> torch.Tensor:
    return head.expressive_forward(z, kernel)


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), torch.as_tensor(targets).reshape(-1))


def quantum_perplexity(logits: torch.Tensor, targets) -> float:
    """``exp`` of the mean next-token negative log-likelihood."""
    logp = torch.log_softmax(torch.as_tensor(logits, dtype=DTYPE), dim=-1)
    tgt = torch.as_tensor(targets, dtype=torch.long)
    if logp.shape[:-1] != tgt.shape:
        raise ValueError(f"targets shape {tuple(tgt.shape)} does not match logits {tuple(logp.shape[:-1])}")
    picked = logp.gather(-1, tgt.unsqueeze(-1)).squeeze(-1)
    picked = torch.clamp(picked, min=math.log(torch.finfo(DTYPE).tiny))
    return float(torch.exp(-picked.mean()))
