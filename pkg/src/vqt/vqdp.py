"""Vectorized quantum dot product (VQDP).

All ``N`` scalar products ``x_l * y_l`` of a batch are evaluated by one
circuit: QCrank loads ``x`` onto data qubit *x* and ``y`` onto data qubit *y*
behind ``n_addr = ceil(log2 N)`` address qubits, then the EHands multiplier
``RZ(pi/2)`` on *y* followed by ``CNOT(x -> y)`` leaves
``P(y = 0 | address l) = (1 + x_l y_l) / 2``.  The conditional ``<Z>`` of the
*y* qubit, estimated from the shots whose address bits read ``l``, is the
product.  A ``Q K^T`` contraction runs one such circuit per feature and sums
the per-address estimates classically.

Two interchangeable backends produce the (address, y-bit) distribution:

``statevector``
    compiles and simulates the circuit gate by gate (``simcore``).
``analytic``
    writes the same distribution in closed form,
    ``P(l, b) = 2**-n_addr * (1 +- x_l y_l) / 2``.  Used for training, where
    thousands of circuits per epoch make gate-level simulation too slow.

Either backend can be sampled (multinomial shots) or read exactly.

CSV shot export
---------------
``write_shot_csv`` emits one row per address with header
``addr,b,i,j,x,y,truth,z_hat,n0,n1``; padded addresses have empty ``b,i,j``
and a missing ``z_hat`` is an empty field.  Floats use ``repr``-stable
``%.12g`` formatting.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from vqt import simcore
from vqt.encode import compile_qcrank, even_encode
from vqt.errors import DomainError
from vqt.noise import NoiseModel, noisy_counts
from vqt.simcore import CircuitSpec

SHOTS_PER_ADDRESS = 2500

BACKENDS = ("statevector", "analytic")


def n_address_qubits(n_pairs: int) -> int:
    if n_pairs < 1:
        raise ValueError(f"need at least one pair, got {n_pairs}")
    return math.ceil(math.log2(n_pairs)) if n_pairs > 1 else 0


@dataclass
class PairBatch:
    """Flattened ``(x, y)`` pairs on a ``(B, R, C)`` index grid.

    ``x`` and ``y`` have length ``2**n_addr`` (or shape ``(m, 2**n_addr)`` for a
    stack of ``m`` circuits sharing the layout).  Address ``l = b*R*C + i*C + j``;
    addresses ``>= B*R*C`` are zero padding.
    """

    x: np.ndarray
    y: np.ndarray
    grid: tuple[int, int, int]
    n_addr: int = field(init=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.grid = tuple(int(g) for g in self.grid)
        self.n_addr = n_address_qubits(self.n_valid)
        if self.x.shape != self.y.shape or self.x.shape[-1] != 2**self.n_addr:
            raise ValueError(
                f"x/y must have last axis {2**self.n_addr} for {self.n_valid} pairs, "
                f"got {self.x.shape} and {self.y.shape}"
            )
        for name, arr in (("x", self.x), ("y", self.y)):
            bad = ~(np.abs(arr) <= 1.0)
            if bad.any():
                pos = tuple(int(v) for v in np.argwhere(bad)[0])
                raise DomainError(f"{name}{list(pos)} = {arr[pos]!r} is outside [-1, 1]")
        if np.any(self.x[..., self.n_valid :] != 0) or np.any(self.y[..., self.n_valid :] != 0):
            raise ValueError("padded addresses must hold (0, 0)")

    @property
    def n_valid(self) -> int:
        b, r, c = self.grid
        return b * r * c

    @property
    def n_addresses(self) -> int:
        return 2**self.n_addr

    @property
    def pad_mask(self) -> np.ndarray:
        return np.arange(self.n_addresses) >= self.n_valid

    @property
    def n_circuits(self) -> int | None:
        return None if self.x.ndim == 1 else self.x.shape[0]

    def addr_of(self, b: int, i: int, j: int) -> int:
        B, R, C = self.grid
        if not (0 <= b < B and 0 <= i < R and 0 <= j < C):
            raise IndexError(f"({b}, {i}, {j}) outside grid {self.grid}")
        return (b * R + i) * C + j

    def index_of(self, ell: int) -> tuple[int, int, int]:
        if not 0 <= ell < self.n_valid:
            raise IndexError(f"address {ell} is not a valid pair (N = {self.n_valid})")
        B, R, C = self.grid
        return ell // (R * C), (ell // C) % R, ell % C

    def truth(self) -> np.ndarray:
        return self.x * self.y

    @classmethod
    def from_pairs(cls, x, y) -> "PairBatch":
        """A flat batch of ``N`` pairs on grid ``(1, 1, N)``."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = x.shape[-1]
        size = 2 ** n_address_qubits(n)
        pad = [(0, 0)] * (x.ndim - 1) + [(0, size - n)]
        return cls(np.pad(x, pad), np.pad(y, pad), (1, 1, n))


def build_pair_batch(Q, K, k: int | None = None) -> PairBatch:
    """Pair layout for ``Q K^T``: address ``(b, i, j)`` holds ``(Q[b,i], K[b,j])``.

    ``Q`` and ``K`` are ``(B, T)`` feature slices, or full ``(B, T, d)``
    tensors, in which case the result stacks ``d`` circuits (one per feature).
    ``k`` only labels error messages for a single slice.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.shape != K.shape or Q.ndim not in (2, 3):
        raise ValueError(f"Q and K must share shape (B, T) or (B, T, d); got {Q.shape}, {K.shape}")
    for name, arr in (("Q", Q), ("K", K)):
        bad = ~(np.abs(arr) <= 1.0)
        if bad.any():
            pos = [int(v) for v in np.argwhere(bad)[0]]
            b, t = pos[0], pos[1]
            feat = pos[2] if arr.ndim == 3 else k
            role = "i" if name == "Q" else "j"
            raise DomainError(
                f"{name}[b={b}, {role}={t}, k={feat}] = {arr[tuple(pos)]!r} is outside [-1, 1]"
            )
    B, T = Q.shape[:2]
    if Q.ndim == 2:
        x = np.broadcast_to(Q[:, :, None], (B, T, T)).reshape(-1)
        y = np.broadcast_to(K[:, None, :], (B, T, T)).reshape(-1)
    else:
        d = Q.shape[2]
        x = np.broadcast_to(Q[:, :, None, :], (B, T, T, d)).reshape(-1, d).T
        y = np.broadcast_to(K[:, None, :, :], (B, T, T, d)).reshape(-1, d).T
    batch = PairBatch.from_pairs(x, y)
    batch.grid = (B, T, T)
    return batch


def build_vqdp_circuit(batch: PairBatch) -> CircuitSpec:
    """QCrank block (x on qubit ``n_addr``, y on ``n_addr + 1``) plus the EHands multiplier.

    Measures every address qubit (labels ``c0..``) and the y qubit (last label).
    """
    n = batch.n_addr
    values = np.stack([batch.x, batch.y], axis=-2)
    circ = compile_qcrank(values, n, 2, measure=False)
    qx, qy = n, n + 1
    circ.append(simcore.RZ(np.pi / 2, qy))
    circ.append(simcore.CNOT(qx, qy))
    circ.measure(list(range(n)) + [qy])
    return circ


def product_distribution(batch: PairBatch, backend: str = "statevector") -> np.ndarray:
    """Joint probabilities ``P(address, y bit)`` with shape ``(..., 2**n_addr, 2)``."""
    if backend == "analytic":
        half_x = even_encode(batch.x) / 2.0
        half_y = even_encode(batch.y) / 2.0
        cx, sx = np.cos(half_x), np.sin(half_x)
        cy, sy = np.cos(half_y), np.sin(half_y)
        # after CNOT(x -> y) the y bit reads 0 on |00> and |11> of the loaded pair
        p0 = (cx * cy) ** 2 + (sx * sy) ** 2
        p1 = (cx * sy) ** 2 + (sx * cy) ** 2
        return np.stack([p0, p1], axis=-1) / batch.n_addresses
    if backend != "statevector":
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    circ = build_vqdp_circuit(batch)
    amps = simcore.simulate_batch(circ)
    probs = simcore.marginal_probabilities(amps, circ.n_qubits, circ.measured_qubits)
    probs = probs.reshape(-1, batch.n_addresses, 2)
    return probs if batch.n_circuits is not None else probs[0]


@dataclass
class ShotTable:
    """Per-address y-qubit counts of one VQDP circuit (or a stack of them)."""

    n0: np.ndarray
    n1: np.ndarray
    shots_total: int
    exact_z: np.ndarray | None = None

    @property
    def counts(self) -> np.ndarray:
        return self.n0 + self.n1

    @property
    def missing(self) -> np.ndarray:
        if self.exact_z is not None:
            return np.zeros(self.exact_z.shape, dtype=bool)
        return self.counts == 0

    @property
    def z_hat(self) -> np.ndarray:
        """``(n0 - n1) / (n0 + n1)``; NaN where an address received no shots."""
        if self.exact_z is not None:
            return self.exact_z
        n = self.counts
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, (self.n0 - self.n1) / np.maximum(n, 1), np.nan)

    @property
    def variance(self) -> np.ndarray:
        """Plug-in estimate of ``Var[z_hat] = (1 - z^2) / n`` per address."""
        if self.exact_z is not None:
            return np.zeros_like(self.exact_z)
        n = self.counts
        z = self.z_hat
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, (1.0 - z**2) / np.maximum(n, 1), np.nan)


def shot_table_from_distribution(
    probs: np.ndarray, shots: int | None, rng: np.random.Generator | None = None
) -> ShotTable:
    """Sample (``shots`` per circuit) or read exactly (``shots=None``) a ``(..., L, 2)`` distribution."""
    if shots is None:
        with np.errstate(invalid="ignore", divide="ignore"):
            z = (probs[..., 0] - probs[..., 1]) / (probs[..., 0] + probs[..., 1])
        zeros = np.zeros(z.shape, dtype=np.int64)
        return ShotTable(zeros, zeros.copy(), 0, exact_z=z)
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    flat = probs.reshape(probs.shape[:-2] + (-1,))
    counts = simcore.sample_counts(flat, shots, rng).reshape(probs.shape)
    return ShotTable(counts[..., 0], counts[..., 1], shots)


def estimate_products(
    circuit: CircuitSpec | None,
    batch: PairBatch,
    shots: int | None,
    seed: int | None = None,
    backend: str = "statevector",
    noise: NoiseModel | None = None,
    trajectories: int | None = None,
) -> ShotTable:
    """Run (or read exactly, ``shots=None``) the VQDP circuit and tabulate per-address counts.

    ``circuit`` may be passed pre-built for the statevector backend; ``None``
    builds it.  The measured register is ``(address bits, y)`` so the outcome
    index ``2*l + b`` maps to address ``l`` and y bit ``b``.  A non-ideal
    ``noise`` model runs noisy trajectories (statevector backend, sampled only).
    """
    if shots is not None and shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    if noise is not None and not noise.is_ideal:
        if shots is None or batch.n_circuits is not None:
            raise ValueError("noisy estimation needs a shot count and a single circuit")
        circ = circuit if circuit is not None else build_vqdp_circuit(batch)
        counts = noisy_counts(circ, noise, shots, seed, trajectories).reshape(batch.n_addresses, 2)
        return ShotTable(counts[:, 0], counts[:, 1], shots)
    if backend == "statevector" and circuit is not None:
        amps = simcore.simulate_batch(circuit)
        probs = simcore.marginal_probabilities(amps, circuit.n_qubits, circuit.measured_qubits)
        probs = probs.reshape(-1, batch.n_addresses, 2)
        if batch.n_circuits is None:
            probs = probs[0]
    else:
        probs = product_distribution(batch, backend)
    rng = np.random.default_rng(seed) if shots is not None else None
    return shot_table_from_distribution(probs, shots, rng)


@dataclass
class AttentionTensor:
    scores: np.ndarray
    shots: int | None
    d: int
    variance: np.ndarray
    n_missing: int = 0


def feature_rng(seed: int, k: int) -> np.random.Generator:
    """Independent, reproducible stream for feature ``k``."""
    return np.random.default_rng([seed, k])


def _impute_missing(z: np.ndarray, context: str) -> tuple[np.ndarray, int]:
    miss = np.isnan(z)
    n = int(miss.sum())
    if n:
        warnings.warn(f"{n} address(es) received no shots in {context}; imputing 0", RuntimeWarning, stacklevel=3)
        z = np.where(miss, 0.0, z)
    return z, n


def stacked_products(
    x: np.ndarray,
    y: np.ndarray,
    shots: int | None,
    seed: int = 0,
    backend: str = "statevector",
) -> tuple[np.ndarray, np.ndarray, int]:
    """Estimate ``x[k, l] * y[k, l]`` with one VQDP circuit per row ``k``.

    Returns ``(z, var, n_missing)`` each of shape ``(m, N)`` (missing imputed 0).
    Row ``k`` is sampled from ``feature_rng(seed, k)``.
    """
    batch = PairBatch.from_pairs(x, y)
    probs = product_distribution(batch, backend)
    m, n_valid = x.shape[0], x.shape[1]
    if shots is None:
        table = shot_table_from_distribution(probs, None)
        z, var = table.z_hat, table.variance
    else:
        z = np.empty((m, batch.n_addresses))
        var = np.empty_like(z)
        for k in range(m):
            t = shot_table_from_distribution(probs[k], shots, feature_rng(seed, k))
            z[k], var[k] = t.z_hat, t.variance
    z, missing = _impute_missing(z[:, :n_valid], "VQDP")
    var = np.nan_to_num(var[:, :n_valid], nan=0.0)
    return z, var, missing


def vqdp_matmul(
    Q,
    K,
    shots_per_feature: int | None,
    seed: int = 0,
    backend: str = "statevector",
) -> AttentionTensor:
    """Batched ``Q K^T`` (shape ``(B, T, T)``) from one VQDP circuit per feature.

    ``shots_per_feature=None`` selects exact-expectation mode.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.ndim != 3 or Q.shape != K.shape:
        raise ValueError(f"Q and K must both be (B, T, d); got {Q.shape}, {K.shape}")
    B, T, d = Q.shape
    batch = build_pair_batch(Q, K)
    n = batch.n_valid
    z, var, missing = stacked_products(batch.x[:, :n], batch.y[:, :n], shots_per_feature, seed, backend)
    scores = z.sum(axis=0).reshape(B, T, T)
    return AttentionTensor(scores, shots_per_feature, d, var.sum(axis=0).reshape(B, T, T), missing)


# ---------------------------------------------------------------------------
# shot statistics


def estimator_variance(xy: float, M: int) -> float:
    """Variance ``(1 - (xy)^2) / M`` of the mean of ``M`` +-1 shots with mean ``xy``."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if abs(xy) > 1:
        raise DomainError(f"xy = {xy} is outside [-1, 1]")
    return (1.0 - xy * xy) / M


def hoeffding_bound(eps: float, M: int, width: float = 2.0) -> float:
    """``2 exp(-2 M eps^2 / width^2)`` for the mean of ``M`` i.i.d. variables of range ``width``.

    ``width=2`` is the +-1 shot variable; ``width=1`` is the {0,1} outcome bit.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return 2.0 * math.exp(-2.0 * M * eps * eps / (width * width))


def chernoff_bound(eps: float, M: int, xy: float) -> float:
    """Multiplicative-Chernoff tail ``2 exp(-eps^2 M / (12 q))`` with ``q = (1 - xy) / 2``.

    Derived from the relative-deviation form with ``delta = eps / (2 q)``, which
    requires ``delta < 1``; outside that region the value is returned as
    written.  NaN when ``q == 0``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    q = (1.0 - xy) / 2.0
    if q <= 0:
        return math.nan
    return 2.0 * math.exp(-eps * eps * M / (12.0 * q))


def deviation_bounds(eps: float, M: int, xy: float) -> tuple[float, float]:
    """(Hoeffding, Chernoff) bounds on ``P(|z_hat - xy| >= eps)`` for ``M`` shots.

    The Hoeffding term uses the +-1 range of a shot.  Chernoff is NaN (flagged)
    at ``xy == 1``.
    """
    if abs(xy) > 1:
        raise DomainError(f"xy = {xy} is outside [-1, 1]")
    return hoeffding_bound(eps, M), chernoff_bound(eps, M, xy)


def chernoff_valid(eps: float, xy: float) -> bool:
    """Whether ``delta = eps / (2q) < 1``, the domain of the relative Chernoff form."""
    q = (1.0 - xy) / 2.0
    return q > 0 and eps < 2.0 * q


@dataclass(frozen=True)
class ResourceReport:
    batch_size: int
    n_qubits: int
    cx_count: int
    cx_depth: int
    recommended_shots: int


def resource_report(batch_size: int, n_data: int = 2) -> ResourceReport:
    """Qubits, CX count, CX depth and shot budget of a VQDP circuit for ``batch_size`` pairs.

    With ``n_addr >= 2`` address qubits: ``n_data * 2**n_addr`` ladder CNOTs plus
    the multiplier CNOT, depth ``2**n_addr + 1`` (data ladders run in
    parallel), and 2500 shots per address.  Degenerate sizes describe the
    circuit actually built: no ladder without address qubits, and a single
    address qubit serialising the ladders.  ``n_data > n_addr >= 2`` has no
    closed form here and is counted on a compiled all-zero circuit.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    if n_data < 1:
        raise ValueError(f"n_data must be >= 1, got {n_data}")
    n_addr = n_address_qubits(batch_size)
    size = 2**n_addr
    if n_addr == 0:
        ladder_cx, ladder_depth = 0, 0
    elif n_addr == 1:
        ladder_cx, ladder_depth = n_data * size, n_data * size
    elif n_data <= n_addr:
        ladder_cx, ladder_depth = n_data * size, size
    else:
        ladder = compile_qcrank(np.zeros((n_data, size)), n_addr, n_data, measure=False)
        ladder_cx, ladder_depth = simcore.cx_count(ladder), simcore.two_qubit_depth(ladder)
    return ResourceReport(
        batch_size, n_addr + n_data, ladder_cx + 1, ladder_depth + 1, SHOTS_PER_ADDRESS * size
    )


# ---------------------------------------------------------------------------
# export

SHOT_CSV_HEADER = ("addr", "b", "i", "j", "x", "y", "truth", "z_hat", "n0", "n1")


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.12g}"


def shot_rows(batch: PairBatch, table: ShotTable):
    if batch.n_circuits is not None:
        raise ValueError("export one circuit at a time")
    z = table.z_hat
    for ell in range(batch.n_addresses):
        if ell < batch.n_valid:
            b, i, j = batch.index_of(ell)
        else:
            b = i = j = ""
        yield (
            ell, b, i, j,
            _fmt(float(batch.x[ell])), _fmt(float(batch.y[ell])),
            _fmt(float(batch.x[ell] * batch.y[ell])), _fmt(float(z[ell])),
            int(table.n0[ell]), int(table.n1[ell]),
        )


def write_shot_csv(path, batch: PairBatch, table: ShotTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHOT_CSV_HEADER)
        w.writerows(shot_rows(batch, table))
