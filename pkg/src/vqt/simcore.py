"""Dense statevector simulator for the small gate set used by the VQT circuits.

Conventions
-----------
* Qubit 0 is the most significant bit of the basis-state index, so the
  amplitude vector of ``RY(a) (x) RY(b) |00>`` is ``kron(RY(a)|0>, RY(b)|0>)``.
* A gate angle may be a float or a 1-D array.  Array angles turn the circuit
  into a *template* executed over a parameter batch: ``simulate_batch`` keeps
  one statevector per batch entry and applies every gate to all of them in a
  single numpy call.
* Sampling draws from the exact marginal over the measured qubits with a
  numpy ``Generator`` backed by PCG64 (``np.random.default_rng(seed)``).

Circuit text dump
-----------------
``circuit_to_text`` writes one line per item::

    QUBITS 3
    H 0
    RY 1.0471975512 2
    CNOT 0 2          # control first, then target
    RZ 1.5707963268 2
    MEASURE 0 c0

Angles are printed with 10 decimals.  ``circuit_from_text`` parses the same
grammar; blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from vqt.errors import CircuitError

GATE_KINDS = ("H", "RY", "RZ", "CNOT", "CZ")
_ROTATIONS = ("RY", "RZ")
_TWO_QUBIT = ("CNOT", "CZ")

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str
    target: int
    angle: float | np.ndarray | None = None
    control: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if self.kind in _ROTATIONS and self.angle is None:
            raise CircuitError(f"{self.kind} gate on qubit {self.target} needs an angle")
        if self.kind in _TWO_QUBIT:
            if self.control is None:
                raise CircuitError(f"{self.kind} gate needs a control qubit")
            if self.control == self.target:
                raise CircuitError(f"{self.kind}: control and target are both {self.target}")
        elif self.control is not None:
            raise CircuitError(f"{self.kind} is a single-qubit gate; got control {self.control}")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    @property
    def is_two_qubit(self) -> bool:
        return self.kind in _TWO_QUBIT

    def batch_size(self) -> int | None:
        if self.angle is None or np.ndim(self.angle) == 0:
            return None
        return int(np.shape(self.angle)[0])


def H(q: int) -> Gate:
    return Gate("H", q)


def RY(theta, q: int) -> Gate:
    return Gate("RY", q, angle=theta)


def RZ(theta, q: int) -> Gate:
    return Gate("RZ", q, angle=theta)


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", target, control=control)


def CZ(control: int, target: int) -> Gate:
    return Gate("CZ", target, control=control)


@dataclass
class CircuitSpec:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    measured_qubits: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.measured_qubits = tuple(int(q) for q in self.measured_qubits)
        if not self.labels:
            self.labels = tuple(f"c{k}" for k in range(len(self.measured_qubits)))
        self.labels = tuple(self.labels)
        self.validate()

    def validate(self) -> None:
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        for g in self.gates:
            _check_indices(g, self.n_qubits)
        if len(set(self.measured_qubits)) != len(self.measured_qubits):
            raise CircuitError(f"measured qubits are not distinct: {self.measured_qubits}")
        for q in self.measured_qubits:
            if not 0 <= q < self.n_qubits:
                raise CircuitError(f"measured qubit {q} out of range for {self.n_qubits} qubits")
        if len(self.labels) != len(self.measured_qubits):
            raise CircuitError("one classical label per measured qubit is required")
        sizes = {g.batch_size() for g in self.gates} - {None}
        if len(sizes) > 1:
            raise CircuitError(f"inconsistent parameter batch sizes {sorted(sizes)}")

    def append(self, gate: Gate) -> None:
        _check_indices(gate, self.n_qubits)
        self.gates.append(gate)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def measure(self, qubits: Sequence[int], labels: Sequence[str] | None = None) -> None:
        self.measured_qubits = tuple(int(q) for q in qubits)
        self.labels = tuple(labels) if labels else tuple(f"c{k}" for k in range(len(qubits)))
        self.validate()

    @property
    def batch_size(self) -> int | None:
        sizes = {g.batch_size() for g in self.gates} - {None}
        return sizes.pop() if sizes else None

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)


@dataclass(frozen=True)
class ShotOutcome:
    """One distinct measured bitstring and how many shots produced it.

    ``bitstring[k]`` is the bit of classical register ``labels[k]``.
    """

    bitstring: str
    multiplicity: int

    def bits(self, labels: Sequence[str]) -> dict[str, int]:
        return {lab: int(b) for lab, b in zip(labels, self.bitstring)}


class StateVector:
    """Amplitudes of an ``n_qubits`` register.  Treated as an immutable value."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes=None):
        if n_qubits < 1:
            raise CircuitError("a state needs at least one qubit")
        if amplitudes is None:
            amplitudes = np.zeros(2**n_qubits, dtype=np.complex128)
            amplitudes[0] = 1.0
        amplitudes = np.array(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (2**n_qubits,):
            raise CircuitError(
                f"expected {2**n_qubits} amplitudes for {n_qubits} qubits, got shape {amplitudes.shape}"
            )
        amplitudes.setflags(write=False)
        self.n_qubits = n_qubits
        self.amplitudes = amplitudes

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls(n_qubits)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check_indices(g: Gate, n_qubits: int) -> None:
    for q in g.qubits:
        if not 0 <= q < n_qubits:
            raise CircuitError(f"{g.kind} touches qubit {q}, circuit has {n_qubits}")


# ---------------------------------------------------------------------------
# kernels on batched amplitude arrays of shape (m, 2**n)


def _as_column(angle, m: int) -> np.ndarray:
    a = np.asarray(angle, dtype=np.float64)
    if a.ndim == 0:
        return a
    if a.shape != (m,):
        raise CircuitError(f"angle batch of shape {a.shape} does not match {m} states")
    return a[:, None, None]


def apply_gate_batch(psi: np.ndarray, n_qubits: int, g: Gate) -> np.ndarray:
    """Apply ``g`` to every row of ``psi`` (shape ``(m, 2**n)``); returns a new array."""
    _check_indices(g, n_qubits)
    m = psi.shape[0]
    if g.is_two_qubit:
        return _apply_two_qubit(psi, n_qubits, g)

    q = g.target
    view = psi.reshape(m, 2**q, 2, 2 ** (n_qubits - q - 1))
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    out = np.empty_like(view)
    if g.kind == "H":
        out[:, :, 0, :] = (a0 + a1) * _SQRT_HALF
        out[:, :, 1, :] = (a0 - a1) * _SQRT_HALF
    elif g.kind == "RY":
        half = _as_column(g.angle, m) / 2.0
        c, s = np.cos(half), np.sin(half)
        out[:, :, 0, :] = c * a0 - s * a1
        out[:, :, 1, :] = s * a0 + c * a1
    else:  # RZ = diag(e^{-i t/2}, e^{+i t/2})
        half = _as_column(g.angle, m) / 2.0
        out[:, :, 0, :] = np.exp(-1j * half) * a0
        out[:, :, 1, :] = np.exp(1j * half) * a1
    return out.reshape(m, -1)


def _apply_two_qubit(psi: np.ndarray, n_qubits: int, g: Gate) -> np.ndarray:
    m = psi.shape[0]
    out = psi.copy().reshape((m,) + (2,) * n_qubits)
    sel = [slice(None)] * (n_qubits + 1)
    sel[1 + g.control] = 1
    sel = tuple(sel)
    block = out[sel]
    # the control axis is gone from `block`, so later axes shift down by one
    t_axis = 1 + g.target - (1 if g.target > g.control else 0)
    if g.kind == "CNOT":
        out[sel] = np.flip(block, axis=t_axis).copy()
    else:
        tsel = [slice(None)] * block.ndim
        tsel[t_axis] = 1
        block[tuple(tsel)] *= -1
    return out.reshape(m, -1)


def apply_gate(state: StateVector, g: Gate) -> StateVector:
    if g.batch_size() is not None:
        raise CircuitError("apply_gate takes scalar angles; use simulate_batch for parameter batches")
    out = apply_gate_batch(state.amplitudes[None, :], state.n_qubits, g)
    return StateVector(state.n_qubits, out[0])


def simulate_batch(circuit: CircuitSpec, initial: np.ndarray | None = None) -> np.ndarray:
    """Run ``circuit`` from |0...0> and return amplitudes of shape ``(m, 2**n)``.

    ``m`` is the circuit's parameter batch size (1 for a plain circuit).
    """
    n = circuit.n_qubits
    m = circuit.batch_size or 1
    if initial is None:
        psi = np.zeros((m, 2**n), dtype=np.complex128)
        psi[:, 0] = 1.0
    else:
        psi = np.array(initial, dtype=np.complex128).reshape(m, 2**n)
    for g in circuit.gates:
        psi = apply_gate_batch(psi, n, g)
    return psi


def simulate(circuit: CircuitSpec) -> StateVector:
    if circuit.batch_size is not None:
        raise CircuitError("circuit carries a parameter batch; use simulate_batch")
    return StateVector(circuit.n_qubits, simulate_batch(circuit)[0])


# ---------------------------------------------------------------------------
# measurement


def expectation_z(state: StateVector, qubit: int) -> float:
    """Exact <Z> on ``qubit``: +1 weight where its bit is 0, -1 where it is 1."""
    n = state.n_qubits
    if not 0 <= qubit < n:
        raise CircuitError(f"qubit {qubit} out of range for {n} qubits")
    p = state.probabilities().reshape(2**qubit, 2, -1).sum(axis=(0, 2))
    return float(p[0] - p[1])


def marginal_probabilities(amplitudes: np.ndarray, n_qubits: int, qubits: Sequence[int]) -> np.ndarray:
    """Born distribution over ``qubits`` (first listed = most significant bit).

    Accepts one state ``(2**n,)`` or a batch ``(m, 2**n)`` and returns
    ``(2**k,)`` or ``(m, 2**k)`` respectively.
    """
    amps = np.asarray(amplitudes)
    single = amps.ndim == 1
    probs = (np.abs(amps) ** 2).reshape((-1,) + (2,) * n_qubits)
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise CircuitError(f"qubit {q} out of range for {n_qubits} qubits")
    keep = [1 + q for q in qubits]
    drop = tuple(ax for ax in range(1, n_qubits + 1) if ax not in keep)
    marg = probs.sum(axis=drop) if drop else probs
    # remaining axes are in ascending qubit order; reorder to the requested order
    remaining = sorted(keep)
    order = [0] + [1 + remaining.index(ax) for ax in keep]
    marg = np.transpose(marg, order).reshape(marg.shape[0], -1)
    return marg[0] if single else marg


def sample_counts(probs: np.ndarray, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts for one distribution or a stack of them (last axis = outcomes)."""
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    p = np.clip(np.asarray(probs, dtype=np.float64), 0.0, None)
    p = p / p.sum(axis=-1, keepdims=True)
    return rng.multinomial(n_shots, p)


def counts_to_outcomes(counts: np.ndarray, n_bits: int) -> list[ShotOutcome]:
    return [
        ShotOutcome(format(k, f"0{n_bits}b") if n_bits else "", int(c))
        for k, c in enumerate(counts)
        if c > 0
    ]


def sample_shots(state: StateVector, qubits: Sequence[int], n_shots: int, seed: int) -> list[ShotOutcome]:
    probs = marginal_probabilities(state.amplitudes, state.n_qubits, qubits)
    counts = sample_counts(probs, n_shots, np.random.default_rng(seed))
    return counts_to_outcomes(counts, len(qubits))


def run_circuit(circuit: CircuitSpec, n_shots: int, seed: int) -> list[ShotOutcome]:
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    if not circuit.measured_qubits:
        raise CircuitError("circuit measures no qubits")
    return sample_shots(simulate(circuit), circuit.measured_qubits, n_shots, seed)


def outcomes_to_counts(outcomes: Iterable[ShotOutcome], n_bits: int) -> np.ndarray:
    counts = np.zeros(2**n_bits, dtype=np.int64)
    for o in outcomes:
        counts[int(o.bitstring, 2) if o.bitstring else 0] += o.multiplicity
    return counts


# ---------------------------------------------------------------------------
# comparison and resource counting


def canonical_phase(amplitudes: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the first non-negligible amplitude is real positive."""
    a = np.asarray(amplitudes, dtype=np.complex128)
    nz = np.flatnonzero(np.abs(a) > tol)
    if nz.size == 0:
        return a.copy()
    lead = a[nz[0]]
    return a * (abs(lead) / lead)


def states_close(a, b, atol: float = 1e-10) -> bool:
    """Equality up to global phase."""
    va = a.amplitudes if isinstance(a, StateVector) else np.asarray(a)
    vb = b.amplitudes if isinstance(b, StateVector) else np.asarray(b)
    if va.shape != vb.shape:
        return False
    overlap = np.vdot(va, vb)
    if abs(overlap) < 1e-300:
        return np.allclose(va, vb, atol=atol)
    phase = overlap / abs(overlap)
    return bool(np.max(np.abs(va * phase - vb)) <= atol)


def cx_count(circuit: CircuitSpec) -> int:
    return circuit.count("CNOT")


def two_qubit_depth(circuit: CircuitSpec, kinds: Sequence[str] = ("CNOT",)) -> int:
    """ASAP layer count of the selected two-qubit gates, in emission order."""
    level = [0] * circuit.n_qubits
    depth = 0
    for g in circuit.gates:
        if g.kind not in kinds:
            continue
        layer = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = layer
        depth = max(depth, layer)
    return depth


# ---------------------------------------------------------------------------
# text dump


def circuit_to_text(circuit: CircuitSpec) -> str:
    if circuit.batch_size is not None:
        raise CircuitError("cannot dump a circuit carrying a parameter batch")
    lines = [f"QUBITS {circuit.n_qubits}"]
    for g in circuit.gates:
        if g.kind in _ROTATIONS:
            lines.append(f"{g.kind} {float(g.angle):.10f} {g.target}")
        elif g.is_two_qubit:
            lines.append(f"{g.kind} {g.control} {g.target}")
        else:
            lines.append(f"{g.kind} {g.target}")
    for q, lab in zip(circuit.measured_qubits, circuit.labels):
        lines.append(f"MEASURE {q} {lab}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> CircuitSpec:
    n_qubits = None
    gates: list[Gate] = []
    measured, labels = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "QUBITS":
                n_qubits = int(tok[1])
            elif tok[0] in _ROTATIONS:
                gates.append(Gate(tok[0], int(tok[2]), angle=float(tok[1])))
            elif tok[0] in _TWO_QUBIT:
                gates.append(Gate(tok[0], int(tok[2]), control=int(tok[1])))
            elif tok[0] == "H":
                gates.append(H(int(tok[1])))
            elif tok[0] == "MEASURE":
                measured.append(int(tok[1]))
                labels.append(tok[2] if len(tok) > 2 else f"c{len(labels)}")
            else:
                raise CircuitError(f"line {lineno}: unknown item {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, CircuitError):
                raise
            raise CircuitError(f"line {lineno}: cannot parse {raw!r}") from exc
    if n_qubits is None:
        raise CircuitError("missing QUBITS header")
    return CircuitSpec(n_qubits, gates, tuple(measured), tuple(labels))
