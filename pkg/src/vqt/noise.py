"""Stochastic hardware-noise emulation and linear readout calibration.

Noise is inserted as Monte-Carlo trajectories: after every two-qubit gate a
uniformly random non-identity two-qubit Pauli hits its operands with
probability ``p2q``.  Shots are spread evenly over ``trajectories`` independent
error patterns (default ``min(shots, 1000)``); ``trajectories=shots`` gives
every shot its own pattern.  Readout flips are independent per measured bit,
so they are folded exactly into the sampled distribution rather than drawn
per shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vqt import simcore
from vqt.errors import FitError
from vqt.simcore import CircuitSpec, ShotOutcome

DEFAULT_TRAJECTORIES = 1000
# cache ideal post-gate states only while they fit in ~256 MB
_CACHE_LIMIT = 2**24


@dataclass(frozen=True)
class NoiseModel:
    p2q: float = 0.0
    p_ro: float = 0.0

    def __post_init__(self):
        for name in ("p2q", "p_ro"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {p}")

    @property
    def is_ideal(self) -> bool:
        return self.p2q == 0.0 and self.p_ro == 0.0


def _apply_pauli(psi: np.ndarray, n: int, q: int, which: int) -> np.ndarray:
    """Pauli I/X/Y/Z (0..3) on qubit ``q`` of a ``(m, 2**n)`` batch, up to global phase."""
    if which == 0:
        return psi
    view = psi.reshape(psi.shape[0], 2**q, 2, -1)
    out = np.empty_like(view)
    if which == 1:
        out[:, :, 0], out[:, :, 1] = view[:, :, 1], view[:, :, 0]
    elif which == 2:  # Y = i X Z; drop the global i
        out[:, :, 0], out[:, :, 1] = -view[:, :, 1], view[:, :, 0]
    else:
        out[:, :, 0], out[:, :, 1] = view[:, :, 0], -view[:, :, 1]
    return out.reshape(psi.shape)


def apply_readout_error(probs: np.ndarray, n_bits: int, p_ro: float) -> np.ndarray:
    """Push a distribution over ``n_bits`` measured bits through independent bit flips."""
    if p_ro == 0.0 or n_bits == 0:
        return probs
    p = np.asarray(probs, dtype=np.float64).reshape((-1,) + (2,) * n_bits)
    for axis in range(1, n_bits + 1):
        p = (1.0 - p_ro) * p + p_ro * np.flip(p, axis=axis)
    return p.reshape(np.shape(probs))


def _trajectory_probs(circuit, checkpoints, two_q, errors) -> np.ndarray:
    """Outcome distribution for one error pattern ``{two-qubit gate ordinal: pauli index}``."""
    n = circuit.n_qubits
    first = min(errors)
    if checkpoints is not None:
        psi = checkpoints[first]
        start = two_q[first] + 1
    else:
        psi = simcore.simulate_batch(CircuitSpec(n, circuit.gates[: two_q[first] + 1]))
        start = two_q[first] + 1
    psi = _inject(psi, n, circuit.gates[two_q[first]], errors[first])
    ordinal = {pos: k for k, pos in enumerate(two_q)}
    for pos in range(start, len(circuit.gates)):
        g = circuit.gates[pos]
        psi = simcore.apply_gate_batch(psi, n, g)
        k = ordinal.get(pos)
        if k is not None and k in errors:
            psi = _inject(psi, n, g, errors[k])
    return simcore.marginal_probabilities(psi[0], n, circuit.measured_qubits)


def _inject(psi, n, gate, pauli: int):
    psi = _apply_pauli(psi, n, gate.control, pauli // 4)
    return _apply_pauli(psi, n, gate.target, pauli % 4)


def noisy_counts(
    circuit: CircuitSpec,
    noise: NoiseModel,
    shots: int,
    seed: int,
    trajectories: int | None = None,
) -> np.ndarray:
    """Counts over the measured register (index = bitstring, first measured qubit = MSB)."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    if circuit.batch_size is not None:
        raise ValueError("noisy execution takes a plain circuit, not a parameter batch")
    k_bits = len(circuit.measured_qubits)
    if noise.is_ideal:
        return simcore.outcomes_to_counts(simcore.run_circuit(circuit, shots, seed), k_bits)

    rng = np.random.default_rng(seed)
    n = circuit.n_qubits
    two_q = [i for i, g in enumerate(circuit.gates) if g.is_two_qubit]

    cache = noise.p2q > 0 and len(two_q) * 2**n <= _CACHE_LIMIT
    checkpoints = [] if cache else None
    psi = np.zeros((1, 2**n), dtype=np.complex128)
    psi[0, 0] = 1.0
    for g in circuit.gates:
        psi = simcore.apply_gate_batch(psi, n, g)
        if cache and g.is_two_qubit:
            checkpoints.append(psi)
    ideal = simcore.marginal_probabilities(psi[0], n, circuit.measured_qubits)

    if noise.p2q == 0.0 or not two_q:
        return simcore.sample_counts(apply_readout_error(ideal, k_bits, noise.p_ro), shots, rng)

    n_traj = min(shots, trajectories or DEFAULT_TRAJECTORIES)
    per = np.full(n_traj, shots // n_traj)
    per[: shots % n_traj] += 1

    counts = np.zeros(2**k_bits, dtype=np.int64)
    clean_shots = 0
    for t in range(n_traj):
        hit = np.flatnonzero(rng.random(len(two_q)) < noise.p2q)
        if hit.size == 0:
            clean_shots += int(per[t])
            continue
        paulis = rng.integers(1, 16, size=hit.size)
        errors = {int(k): int(p) for k, p in zip(hit, paulis)}
        probs = _trajectory_probs(circuit, checkpoints, two_q, errors)
        counts += simcore.sample_counts(apply_readout_error(probs, k_bits, noise.p_ro), int(per[t]), rng)
    if clean_shots:
        counts += simcore.sample_counts(apply_readout_error(ideal, k_bits, noise.p_ro), clean_shots, rng)
    return counts


def run_noisy(
    circuit: CircuitSpec,
    noise: NoiseModel,
    shots: int,
    seed: int,
    trajectories: int | None = None,
) -> list[ShotOutcome]:
    """Shot outcomes under ``noise``; the ideal model reproduces ``run_circuit`` exactly."""
    if noise.is_ideal:
        return simcore.run_circuit(circuit, shots, seed)
    counts = noisy_counts(circuit, noise, shots, seed, trajectories)
    return simcore.counts_to_outcomes(counts, len(circuit.measured_qubits))


@dataclass(frozen=True)
class Calibration:
    scale: float
    intercept: float
    fit_rmse: float

    def apply(self, measured):
        return self.scale * np.asarray(measured, dtype=np.float64) + self.intercept


def fit_scale(measured, truth) -> Calibration:
    """Least-squares ``truth ~ scale * measured + intercept`` and its post-fit RMSE."""
    m = np.asarray(measured, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if m.shape != t.shape:
        raise FitError(f"measured and truth differ in length ({m.size} vs {t.size})")
    if m.size < 2:
        raise FitError("need at least two points to fit a line")
    if np.ptp(t) == 0:
        raise FitError("truth values are all identical")
    if np.ptp(m) == 0:
        raise FitError("measured values are all identical")
    design = np.column_stack([m, np.ones_like(m)])
    (scale, intercept), *_ = np.linalg.lstsq(design, t, rcond=None)
    resid = t - (scale * m + intercept)
    return Calibration(float(scale), float(intercept), float(np.sqrt(np.mean(resid**2))))


def rmse(estimate, truth) -> float:
    e = np.asarray(estimate, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean(e**2)))
