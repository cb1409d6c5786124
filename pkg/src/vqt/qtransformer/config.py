from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

ATTN_NORMS = ("softmax", "scale_only")


def q_dim(nq_addr: int, nq_data: int) -> int:
    """Encoded feature count ``2**nq_addr * nq_data`` of a VNQE register."""
    if nq_addr < 0 or nq_data < 1:
        raise ValueError(f"need nq_addr >= 0 and nq_data >= 1, got ({nq_addr}, {nq_data})")
    return 2**nq_addr * nq_data


def qubit_bounds(qdim: int) -> tuple[int, int]:
    """Fewest qubits able to hold ``qdim`` features: (exact minimum, loose bound).

    exact: ``min over 1 <= k <= log2(qdim)`` of ``k + ceil(qdim / 2**k)``
    (``k`` address qubits, the rest data qubits); loose: ``ceil(log2 qdim) + 1``.
    """
    if qdim < 1:
        raise ValueError(f"Q_dim must be >= 1, got {qdim}")
    loose = math.ceil(math.log2(qdim)) + 1
    if qdim == 1:
        return 1, loose
    k_max = int(math.floor(math.log2(qdim)))
    exact = min(k + math.ceil(qdim / 2**k) for k in range(1, k_max + 1))
    return exact, loose


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 100
    seq_len: int = 6
    d_model: int = 32
    d_ff: int = 128
    n_blocks: int = 1
    n_heads: int = 2
    nq_addr: int = 3
    nq_data: int = 3
    shots: int = 1024  # per address, as in "shots per nq_addr"
    d_mlp: int = 128
    dropout: float = 0.0
    lr: float = 1e-3
    batch_size: int = 5
    weight_decay: float = 0.01
    attn_norm: str = "softmax"

    def __post_init__(self):
        for name in ("vocab_size", "seq_len", "d_model", "d_ff", "n_blocks", "n_heads", "nq_data",
                     "shots", "d_mlp", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.nq_addr < 0:
            raise ValueError(f"nq_addr must be >= 0, got {self.nq_addr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.attn_norm not in ATTN_NORMS:
            raise ValueError(f"attn_norm must be one of {ATTN_NORMS}, got {self.attn_norm!r}")

    @property
    def q_dim(self) -> int:
        return q_dim(self.nq_addr, self.nq_data)

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


DEFAULT = ModelConfig()
LARGE = ModelConfig(seq_len=8, nq_addr=6, nq_data=6)
