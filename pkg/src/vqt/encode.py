"""Value-to-angle encoding and the QCrank uniformly-controlled RY compiler.

A QCrank block loads ``2**n_addr`` values onto each data qubit behind a
uniform superposition of address states.  For data qubit ``d`` the block is
the ladder::

    for j in range(2**n_addr):
        RY(alpha[d, j]) on data qubit d
        CNOT(address qubit c(d, j) -> data qubit d)

``c(d, j)`` is the address bit in which Gray codes ``gray(j)`` and
``gray(j + 1)`` differ (``gray(2**n) := 0`` closes the cycle on the highest
bit).  The bit-to-qubit map is rotated by ``d`` so that, for ``n_addr >= 2``,
the CNOTs of neighbouring data qubits in the same slot never share a control
and all ladders run in parallel: CX depth ``2**n_addr`` for any number of data
qubits.

Moving every CNOT's X to the end of the ladder flips the sign of each RY it
passes, so under address state ``l`` the data qubit is rotated by::

    theta[l] = sum_j (-1)**popcount(perm_d(l) & gray(j)) * alpha[j]

i.e. a Walsh-Hadamard matrix with Gray-ordered columns.  Its inverse is its
transpose over ``2**n``, computed with a fast Walsh-Hadamard transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vqt import simcore
from vqt.errors import CircuitError, DomainError
from vqt.simcore import CircuitSpec, StateVector


def even_encode(x):
    """``arccos(x)`` so that ``<Z>`` of ``RY(angle)|0>`` equals ``x``.

    Works elementwise on arrays.  Values outside [-1, 1] raise ``DomainError``
    naming the first offender; +-1 are accepted exactly.
    """
    arr = np.asarray(x, dtype=np.float64)
    bad = ~(np.abs(arr) <= 1.0)  # also catches NaN
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        value = arr[tuple(idx)] if arr.ndim else float(arr)
        where = f" at index {tuple(int(i) for i in idx)}" if arr.ndim else ""
        raise DomainError(f"value {value!r}{where} is outside [-1, 1]")
    out = np.arccos(arr)
    return float(out) if out.ndim == 0 else out


def gray(j):
    return j ^ (j >> 1)


def _log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    return n.bit_length() - 1


def _fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis (Sylvester order)."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < n:
        v = a.reshape(lead + (n // (2 * h), 2, h))
        x, y = v[..., 0, :].copy(), v[..., 1, :].copy()
        v[..., 0, :] = x + y
        v[..., 1, :] = x - y
        h *= 2
    return a


def _rotate_bits(ell: np.ndarray, shift: int, n_bits: int) -> np.ndarray:
    if n_bits == 0:
        return ell
    shift %= n_bits
    mask = (1 << n_bits) - 1
    return ((ell << shift) | (ell >> (n_bits - shift))) & mask


def ucry_angle_transform(target_angles, rotation: int = 0) -> np.ndarray:
    """Ladder angles ``alpha`` realising the per-address rotations ``target_angles``.

    ``target_angles`` has length ``2**n`` on its last axis (leading axes are
    batched).  ``rotation`` selects the bit-to-qubit map of data qubit
    ``rotation`` in ``compile_qcrank``.  For ``n = 1`` the result is
    ``((t0 + t1) / 2, (t0 - t1) / 2)``.
    """
    theta = np.asarray(target_angles, dtype=np.float64)
    size = theta.shape[-1]
    n = _log2_exact(size)
    ell = np.arange(size)
    permuted = np.empty_like(theta)
    permuted[..., _rotate_bits(ell, rotation, n)] = theta
    spectrum = _fwht(permuted) / size
    return spectrum[..., gray(ell)]


def ladder_controls(n_addr: int, rotation: int = 0) -> list[int]:
    """Address-qubit index of the CNOT after each ladder slot.

    Address qubit 0 is the most significant address bit.
    """
    controls = []
    for j in range(2**n_addr):
        if j == 2**n_addr - 1:
            bit = n_addr - 1
        else:
            bit = ((j + 1) & -(j + 1)).bit_length() - 1  # trailing zeros of j+1
        controls.append((n_addr - 1 - bit + rotation) % n_addr)
    return controls


@dataclass
class UCRyBlock:
    """A uniformly controlled RY: ``RY(target_angles[l])`` on ``target`` when the
    controls (first = most significant) are in basis state ``|l>``."""

    controls: tuple[int, ...]
    target: int
    target_angles: np.ndarray
    rotation: int = 0
    compiled_alphas: np.ndarray | None = None

    def __post_init__(self):
        self.controls = tuple(self.controls)
        self.target_angles = np.asarray(self.target_angles, dtype=np.float64)
        if self.target_angles.shape[-1] != 2**self.n_controls:
            raise CircuitError(
                f"{self.n_controls} controls need {2**self.n_controls} angles, "
                f"got {self.target_angles.shape[-1]}"
            )
        if self.target in self.controls:
            raise CircuitError(f"target {self.target} is also a control")
        if self.compiled_alphas is None:
            self.compiled_alphas = ucry_angle_transform(self.target_angles, self.rotation)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def gates(self) -> list[simcore.Gate]:
        """The RY/CNOT ladder.  The slot-``j`` CNOT uses ``controls[ladder_controls[j]]``."""
        if self.n_controls == 0:
            return [simcore.RY(self.compiled_alphas[..., 0], self.target)]
        out = []
        for j, c in enumerate(ladder_controls(self.n_controls, self.rotation)):
            out.append(simcore.RY(self.compiled_alphas[..., j], self.target))
            out.append(simcore.CNOT(self.controls[c], self.target))
        return out


def apply_ucry_direct(state: StateVector, block: UCRyBlock) -> StateVector:
    """Apply ``diag(RY(theta_0), ..., RY(theta_{2^k - 1}))`` without compiling it."""
    n = state.n_qubits
    for q in block.controls + (block.target,):
        if not 0 <= q < n:
            raise CircuitError(f"block touches qubit {q}, state has {n}")
    if block.target_angles.ndim != 1:
        raise CircuitError("apply_ucry_direct takes a single angle vector")
    k = block.n_controls
    rest = [q for q in range(n) if q not in block.controls and q != block.target]
    order = list(block.controls) + [block.target] + rest
    psi = state.amplitudes.reshape((2,) * n).transpose(order).reshape(2**k, 2, -1)
    half = block.target_angles / 2.0
    c, s = np.cos(half)[:, None], np.sin(half)[:, None]
    a0, a1 = psi[:, 0, :], psi[:, 1, :]
    new = np.stack([c * a0 - s * a1, s * a0 + c * a1], axis=1)
    new = new.reshape((2,) * n).transpose(np.argsort(order)).reshape(-1)
    return StateVector(n, new)


def compile_qcrank(values, n_addr: int, n_data: int | None = None, measure: bool = True) -> CircuitSpec:
    """QCrank loading circuit: H on each address qubit, then one UCRy ladder per data qubit.

    ``values`` has shape ``(n_data, 2**n_addr)`` or, for a parameter batch,
    ``(m, n_data, 2**n_addr)``.  Qubits ``0..n_addr-1`` are the address
    register; ``n_addr + d`` is data qubit ``d``.  Conditioned on address
    ``|l>``, data qubit ``d`` ends in ``RY(arccos(values[d, l]))|0>``.
    The ladders are emitted slot by slot so the ASAP CX depth is ``2**n_addr``.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim not in (2, 3):
        raise ValueError(f"values must be (n_data, 2**n_addr) or batched, got shape {vals.shape}")
    if n_data is None:
        n_data = vals.shape[-2]
    if vals.shape[-2] != n_data or vals.shape[-1] != 2**n_addr:
        raise ValueError(
            f"expected values of shape (..., {n_data}, {2**n_addr}) for n_addr={n_addr}, got {vals.shape}"
        )
    thetas = even_encode(vals)
    circ = CircuitSpec(n_addr + n_data)
    for a in range(n_addr):
        circ.append(simcore.H(a))
    address = tuple(range(n_addr))
    ladders = []
    for d in range(n_data):
        block = UCRyBlock(address, n_addr + d, thetas[..., d, :], rotation=d)
        ladders.append(block.gates())
    per_slot = 2 if n_addr > 0 else 1
    for j in range(0, len(ladders[0]) if ladders else 0, per_slot):
        for ladder in ladders:
            circ.append(ladder[j])
        for ladder in ladders:
            for g in ladder[j + 1 : j + per_slot]:
                circ.append(g)
    if measure:
        circ.measure(list(range(n_addr + n_data)))
    return circ


def qcrank_probabilities(values) -> np.ndarray:
    """Closed-form joint distribution of (address, data bits) after QCrank loading.

    ``values`` of shape ``(..., n_data, 2**n_addr)`` gives probabilities of shape
    ``(..., 2**n_addr, 2**n_data)``: the address is uniform and, given it, the
    data qubits are independent with ``P(bit=0) = cos^2(theta/2) = (1 + x) / 2``
    where ``theta = arccos(x)``.
    """
    vals = np.asarray(values, dtype=np.float64)
    half = even_encode(vals) / 2.0
    p0 = np.cos(half) ** 2
    p1 = np.sin(half) ** 2
    n_data = vals.shape[-2]
    n_addr_states = vals.shape[-1]
    joint = np.ones(vals.shape[:-2] + (n_addr_states, 1))
    for d in range(n_data):
        pd = np.stack([p0[..., d, :], p1[..., d, :]], axis=-1)  # (..., L, 2)
        joint = (joint[..., :, :, None] * pd[..., :, None, :]).reshape(vals.shape[:-2] + (n_addr_states, -1))
    return joint / n_addr_states
