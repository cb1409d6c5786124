"""Quantum layers of the transformer and their straight-through gradients.

The forward passes run VQDP / VNQE circuits (exactly or with shots); the
backward passes use the Jacobian of the ideal map, which is what the circuits
compute in expectation: a matrix product for VQDP and the identity for VNQE.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch

from vqt import simcore
from vqt.encode import compile_qcrank, qcrank_probabilities
from vqt.vqdp import PairBatch, product_distribution

MODES = ("exact", "sampled")


class QuantumKernel:
    """Executes the model's circuits and counts them.

    ``shots`` is per address: a circuit with ``n`` address qubits is sampled
    ``shots * 2**n`` times.  ``circuits`` counts compiled circuit passes (one per
    VQDP feature, one per VNQE head call, which binds all tokens of the batch
    to the same template); ``executions`` counts parameter-bound instances.
    """

    def __init__(self, mode: str = "exact", shots: int = 1024, seed: int = 0, backend: str = "analytic"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        self.mode = mode
        self.shots = shots
        self.backend = backend
        self.rng = np.random.default_rng(seed)
        self.circuits = 0
        self.executions = 0
        self.missing = 0

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def products(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``x * y`` row by row, one VQDP circuit per row of the ``(m, N)`` inputs."""
        batch = PairBatch.from_pairs(x, y)
        probs = product_distribution(batch, self.backend)
        self.circuits += x.shape[0]
        self.executions += x.shape[0]
        n = x.shape[1]
        if self.exact:
            z = (probs[..., 0] - probs[..., 1]) / (probs[..., 0] + probs[..., 1])
            return z[:, :n]
        flat = probs.reshape(probs.shape[0], -1)
        counts = simcore.sample_counts(flat, self.shots * batch.n_addresses, self.rng)
        counts = counts.reshape(probs.shape)[:, :n]
        return self._conditional_z(counts[..., 0], counts[..., 1])

    def encode_features(self, a: np.ndarray, nq_addr: int, nq_data: int) -> np.ndarray:
        """VNQE: load each row of ``a`` (``(m, Q_dim)``) and read back per-(data qubit, address) ``<Z>``."""
        m, qdim = a.shape
        L = 2**nq_addr
        if qdim != L * nq_data:
            raise ValueError(f"VNQE with ({nq_addr}, {nq_data}) qubits holds {L * nq_data} values, got {qdim}")
        values = a.reshape(m, nq_data, L)
        self.circuits += 1
        self.executions += m
        if self.backend == "analytic":
            joint = qcrank_probabilities(values)
        else:
            circ = compile_qcrank(values, nq_addr, nq_data)
            amps = simcore.simulate_batch(circ)
            joint = simcore.marginal_probabilities(amps, circ.n_qubits, circ.measured_qubits)
        joint = joint.reshape((m, L) + (2,) * nq_data)
        if not self.exact:
            counts = simcore.sample_counts(joint.reshape(m, -1), self.shots * L, self.rng)
            joint = counts.reshape(joint.shape)
        out = np.empty((m, nq_data, L))
        data_axes = tuple(range(2, 2 + nq_data))
        for d in range(nq_data):
            marg = joint.sum(axis=tuple(ax for ax in data_axes if ax != 2 + d))
            if self.exact:
                out[:, d, :] = (marg[..., 0] - marg[..., 1]) / (marg[..., 0] + marg[..., 1])
            else:
                out[:, d, :] = self._conditional_z(marg[..., 0], marg[..., 1])
        return out.reshape(m, qdim)

    def _conditional_z(self, n0: np.ndarray, n1: np.ndarray) -> np.ndarray:
        n = n0 + n1
        empty = n == 0
        if empty.any():
            k = int(empty.sum())
            self.missing += k
            warnings.warn(f"{k} address(es) received no shots; imputing 0", RuntimeWarning, stacklevel=3)
        return np.where(empty, 0.0, (n0 - n1) / np.maximum(n, 1))


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64, copy=False)


class QKScores(torch.autograd.Function):
    """``scores[b,i,j] = sum_k Q[b,i,k] K[b,j,k]`` with one VQDP circuit per feature ``k``."""

    @staticmethod
    def forward(ctx, Q, K, kernel: QuantumKernel):
        B, T, d = Q.shape
        q, k = _np(Q), _np(K)
        x = np.broadcast_to(q[:, :, None, :], (B, T, T, d)).reshape(-1, d).T
        y = np.broadcast_to(k[:, None, :, :], (B, T, T, d)).reshape(-1, d).T
        z = kernel.products(np.ascontiguousarray(x), np.ascontiguousarray(y))
        ctx.save_for_backward(Q, K)
        return torch.as_tensor(z.sum(axis=0).reshape(B, T, T), dtype=Q.dtype)

    @staticmethod
    def backward(ctx, g):
        Q, K = ctx.saved_tensors
        return g @ K, g.transpose(1, 2) @ Q, None


class AVContext(torch.autograd.Function):
    """``context[b,i,k] = sum_{j<=i} A[b,i,j] V[b,j,k]``; pairs ``(A[b,i,j], V[b,j,k])``
    sit at address ``(b, i, j)`` of the circuit for feature ``k``.  With
    ``causal`` the estimates at ``j > i`` are never read."""

    @staticmethod
    def forward(ctx, A, V, kernel: QuantumKernel, causal: bool = True):
        B, T, d = V.shape
        a, v = _np(A), _np(V)
        x = np.broadcast_to(a[:, :, :, None], (B, T, T, d)).reshape(-1, d).T
        y = np.broadcast_to(v[:, None, :, :], (B, T, T, d)).reshape(-1, d).T
        z = kernel.products(np.ascontiguousarray(x), np.ascontiguousarray(y))
        z = z.T.reshape(B, T, T, d)
        mask = _causal_mask(T, A.device) if causal else None
        if mask is not None:
            z = z * mask.numpy()[None, :, :, None]
        ctx.save_for_backward(A, V)
        ctx.causal = causal
        return torch.as_tensor(z.sum(axis=2), dtype=V.dtype)

    @staticmethod
    def backward(ctx, g):
        A, V = ctx.saved_tensors
        if ctx.causal:
            A = A * _causal_mask(A.shape[1], A.device)
        dA = g @ V.transpose(1, 2)
        if ctx.causal:
            dA = dA * _causal_mask(A.shape[1], A.device)
        return dA, A.transpose(1, 2) @ g, None, None


def straight_through_backward(upstream_grad, cached_a=None):
    """Gradient through the VNQE layer: the ideal encoder returns its input, so the
    Jacobian is the identity and shot noise is treated as a constant perturbation."""
    return upstream_grad


class VNQEFeatures(torch.autograd.Function):
    @staticmethod
    def forward(ctx, a, kernel: QuantumKernel, nq_addr: int, nq_data: int):
        lead = a.shape[:-1]
        flat = _np(a).reshape(-1, a.shape[-1])
        feats = kernel.encode_features(flat, nq_addr, nq_data)
        return torch.as_tensor(feats.reshape(*lead, -1), dtype=a.dtype)

    @staticmethod
    def backward(ctx, g):
        return straight_through_backward(g), None, None, None


def _causal_mask(T: int, device=None) -> torch.Tensor:
    return torch.tril(torch.ones(T, T, dtype=torch.float64, device=device))
