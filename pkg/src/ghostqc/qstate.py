"""Dense statevector and density-matrix kernels.

Conventions
-----------
* Rotations are ``R_P(theta) = exp(-i theta P / 2)`` for every Pauli string P.
* Qubit 0 is the most significant bit of the amplitude index.
* Kernels accept arrays with arbitrary leading batch dimensions, so one call
  can advance many independent circuits at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "PAULI",
    "StateVector",
    "DensityMatrix",
    "Gate",
    "KrausChannel",
    "zero_state",
    "apply_matrix",
    "apply_diagonal",
    "apply_gate",
    "pauli_matrix",
    "pauli_rotation_matrix",
    "pauli_expectation",
    "hadamard",
    "pauli_x",
    "cnot",
    "cz",
    "s_gate",
    "rx",
    "ry",
    "rz",
    "rxx",
    "ryy",
    "rzz",
    "two_qubit_rotation_direct",
    "two_qubit_rotation_decomposed",
    "compose",
    "equal_up_to_global_phase",
    "haar_random_qubit",
    "apply_gate_density",
    "apply_channel_density",
    "apply_kraus_density",
    "sample_kraus_branch",
    "sample_channel_trajectory",
    "MAX_DENSITY_QUBITS",
]

MAX_DENSITY_QUBITS = 10

_I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": _I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.num_qubits,):
            raise ValueError(
                f"expected {2 ** self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(self.num_qubits, np.outer(a, a.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    num_qubits: int
    entries: np.ndarray

    def __post_init__(self):
        if self.num_qubits > MAX_DENSITY_QUBITS:
            raise ValueError(
                f"density matrices are limited to {MAX_DENSITY_QUBITS} qubits; "
                "use trajectory sampling for larger systems"
            )
        rho = np.asarray(self.entries, dtype=complex)
        d = 2**self.num_qubits
        if rho.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def expectation(self, pauli: str) -> float:
        if len(pauli) != self.num_qubits:
            raise ValueError("pauli string length must equal num_qubits")
        op = pauli_matrix(pauli)
        return float(np.trace(op @ self.entries).real)


@dataclass(frozen=True)
class Gate:
    """A 1- or 2-qubit unitary bound to target qubits.

    ``generator`` is the Pauli label (``"Y"``, ``"ZZ"``...) for rotation
    gates, which makes them differentiable by the parameter-shift rule.
    """

    matrix: np.ndarray
    targets: tuple[int, ...]
    generator: str | None = None
    angle: float | None = None
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        targets = tuple(int(t) for t in self.targets)
        if len(targets) not in (1, 2) or m.shape != (2 ** len(targets),) * 2:
            raise ValueError(f"matrix shape {m.shape} does not fit targets {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"duplicate targets {targets}")
        if self.generator is not None and len(self.generator) != len(targets):
            raise ValueError("generator label must have one letter per target")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", targets)

    def on(self, *targets: int) -> "Gate":
        return Gate(self.matrix, targets, self.generator, self.angle, self.name)


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit noise channel given by its Kraus operators."""

    kind: str
    rate: float
    operators: tuple[np.ndarray, ...] = field(repr=False)

    @classmethod
    def make(cls, kind: str, rate: float) -> "KrausChannel":
        rate = float(rate)
        if not 0.0 <= rate <= 1.0 or not np.isfinite(rate):
            raise ValueError(f"channel rate must lie in [0, 1], got {rate}")
        if kind == "depolarizing":
            ops = (
                np.sqrt(1 - 3 * rate / 4) * PAULI["I"],
                np.sqrt(rate / 4) * PAULI["X"],
                np.sqrt(rate / 4) * PAULI["Y"],
                np.sqrt(rate / 4) * PAULI["Z"],
            )
        elif kind == "amplitude_damping":
            ops = (
                np.array([[1, 0], [0, np.sqrt(1 - rate)]], dtype=complex),
                np.array([[0, np.sqrt(rate)], [0, 0]], dtype=complex),
            )
        elif kind == "phase_damping":
            ops = (
                np.array([[1, 0], [0, np.sqrt(1 - rate)]], dtype=complex),
                np.array([[0, 0], [0, np.sqrt(rate)]], dtype=complex),
            )
        else:
            raise ValueError(f"unknown channel kind {kind!r}")
        return cls(kind, rate, ops)

    @classmethod
    def depolarizing(cls, rate: float) -> "KrausChannel":
        return cls.make("depolarizing", rate)

    @classmethod
    def amplitude_damping(cls, rate: float) -> "KrausChannel":
        return cls.make("amplitude_damping", rate)

    @classmethod
    def phase_damping(cls, rate: float) -> "KrausChannel":
        return cls.make("phase_damping", rate)

    def completeness(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.operators)


# ---------------------------------------------------------------------------
# kernels on raw arrays
# ---------------------------------------------------------------------------


def zero_state(num_qubits: int, batch: tuple[int, ...] = ()) -> np.ndarray:
    psi = np.zeros(batch + (2**num_qubits,), dtype=complex)
    psi[..., 0] = 1.0
    return psi


def _check_wires(wires: Sequence[int], num_qubits: int) -> tuple[int, ...]:
    wires = tuple(int(w) for w in wires)
    for w in wires:
        if not 0 <= w < num_qubits:
            raise ValueError(f"target qubit {w} out of range for {num_qubits} qubits")
    if len(set(wires)) != len(wires):
        raise ValueError(f"duplicate targets {wires}")
    return wires


def apply_matrix(
    amps: np.ndarray, matrix: np.ndarray, wires: Sequence[int], num_qubits: int
) -> np.ndarray:
    """Apply a ``2^k x 2^k`` matrix to ``wires`` of a (batched) state.

    ``amps`` has shape ``(..., 2**num_qubits)``.  ``matrix`` is either a single
    matrix or a stack whose leading dimensions match those of ``amps``.
    Returns a new array.
    """
    wires = _check_wires(wires, num_qubits)
    batch = amps.shape[:-1]
    nb = int(np.prod(batch, dtype=int))
    m = np.asarray(matrix)
    if len(wires) == 1:
        q = wires[0]
        psi = amps.reshape(nb, 2**q, 2, 2 ** (num_qubits - q - 1))
        a0, a1 = psi[:, :, 0, :], psi[:, :, 1, :]
        if m.ndim == 2:
            m = m[None]
        else:
            m = m.reshape(nb, 2, 2)
        m = m[:, None, :, :, None]
        out = np.empty(psi.shape, dtype=np.result_type(psi, m))
        out[:, :, 0, :] = m[:, :, 0, 0] * a0 + m[:, :, 0, 1] * a1
        out[:, :, 1, :] = m[:, :, 1, 0] * a0 + m[:, :, 1, 1] * a1
        return out.reshape(amps.shape)
    k = len(wires)
    psi = amps.reshape((nb,) + (2,) * num_qubits)
    src = [w + 1 for w in wires]
    dst = list(range(num_qubits + 1 - k, num_qubits + 1))
    psi = np.moveaxis(psi, src, dst).reshape(nb, -1, 2**k)
    if m.ndim == 2:
        out = psi @ m.T
    else:
        m = m.reshape(nb, 2**k, 2**k)
        out = psi @ np.swapaxes(m, -1, -2)
    out = out.reshape((nb,) + (2,) * num_qubits)
    out = np.moveaxis(out, dst, src)
    return out.reshape(batch + (2**num_qubits,))


@lru_cache(maxsize=None)
def _basis_bits(num_qubits: int) -> np.ndarray:
    idx = np.arange(2**num_qubits)
    shifts = num_qubits - 1 - np.arange(num_qubits)
    bits = (idx[None, :] >> shifts[:, None]) & 1
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=4096)
def _diag_index(wires: tuple[int, ...], num_qubits: int) -> np.ndarray:
    bits = _basis_bits(num_qubits)
    index = np.zeros(2**num_qubits, dtype=int)
    for w in wires:
        index = (index << 1) | bits[w]
    index.setflags(write=False)
    return index


def apply_diagonal(
    amps: np.ndarray, diag: np.ndarray, wires: Sequence[int], num_qubits: int
) -> np.ndarray:
    """Multiply by a diagonal gate given by its ``2^k`` diagonal entries.

    ``diag`` may be batched as ``(..., 2^k)`` matching the state batch.
    """
    wires = _check_wires(wires, num_qubits)
    d = np.asarray(diag)
    return amps * d[..., _diag_index(wires, num_qubits)]


@lru_cache(maxsize=256)
def pauli_matrix(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        try:
            out = np.kron(out, PAULI[ch])
        except KeyError:
            raise ValueError(f"invalid Pauli label {ch!r}") from None
    out.setflags(write=False)
    return out


def pauli_rotation_matrix(label: str, angle) -> np.ndarray:
    """``exp(-i angle P / 2)``; ``angle`` may be an array, giving a stack."""
    p = pauli_matrix(label)
    a = np.asarray(angle, dtype=float)[..., None, None]
    eye = np.eye(p.shape[0], dtype=complex)
    return np.cos(a / 2) * eye - 1j * np.sin(a / 2) * p


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    amps = apply_matrix(state.amplitudes, gate.matrix, gate.targets, state.num_qubits)
    return StateVector(state.num_qubits, amps)


def _apply_pauli(amps: np.ndarray, label: str, num_qubits: int) -> np.ndarray:
    out = amps
    for q, ch in enumerate(label):
        if ch == "I":
            continue
        if ch not in PAULI:
            raise ValueError(f"invalid Pauli label {ch!r}")
        out = apply_matrix(out, PAULI[ch], (q,), num_qubits)
    return out


def pauli_expectation_array(amps: np.ndarray, label: str, num_qubits: int) -> np.ndarray:
    """Batched ``<psi|P|psi>`` for one Pauli string, returned as real array."""
    if len(label) != num_qubits:
        raise ValueError(
            f"pauli string {label!r} has {len(label)} labels for {num_qubits} qubits"
        )
    if set(label) <= {"I", "Z"}:
        bits = _basis_bits(num_qubits)
        parity = np.zeros(2**num_qubits, dtype=int)
        for q, ch in enumerate(label):
            if ch == "Z":
                parity ^= bits[q]
        signs = 1.0 - 2.0 * parity
        return (np.abs(amps) ** 2) @ signs
    val = np.sum(amps.conj() * _apply_pauli(amps, label, num_qubits), axis=-1)
    return val.real


def pauli_expectation(state: StateVector, paulis, weights=None) -> float:
    """Expectation of a Pauli string, or of a weighted sum of strings.

    ``paulis`` is one string such as ``"ZI"`` (or a list of single labels), or a
    list of strings; for the latter ``weights`` (default all ones) combine the
    terms into ``sum_i w_i <h_i>``.
    """
    n = state.num_qubits
    if isinstance(paulis, str) or (
        len(paulis) == n and all(isinstance(p, str) and len(p) == 1 for p in paulis)
        and weights is None
    ):
        label = paulis if isinstance(paulis, str) else "".join(paulis)
        return float(pauli_expectation_array(state.amplitudes, label, n))
    terms = list(paulis)
    w = np.ones(len(terms)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(terms),):
        raise ValueError("weights must have one entry per Pauli string")
    return float(sum(wi * pauli_expectation_array(state.amplitudes, t, n)
                     for wi, t in zip(w, terms)))


# ---------------------------------------------------------------------------
# gate constructors
# ---------------------------------------------------------------------------


def hadamard(q: int = 0) -> Gate:
    return Gate(np.array([[1, 1], [1, -1]]) / np.sqrt(2), (q,), name="H")


def pauli_x(q: int = 0) -> Gate:
    return Gate(PAULI["X"], (q,), name="X")


def s_gate(q: int = 0, dagger: bool = False) -> Gate:
    phase = -1j if dagger else 1j
    return Gate(np.diag([1, phase]), (q,), name="Sdg" if dagger else "S")


def cnot(control: int = 0, target: int = 1) -> Gate:
    m = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    return Gate(m, (control, target), name="CNOT")


def cz(a: int = 0, b: int = 1) -> Gate:
    return Gate(np.diag([1, 1, 1, -1]), (a, b), name="CZ")


def _rotation(label: str, angle: float, targets: tuple[int, ...]) -> Gate:
    return Gate(pauli_rotation_matrix(label, angle), targets, label, float(angle),
                name="R" + label)


def rx(angle: float, q: int = 0) -> Gate:
    return _rotation("X", angle, (q,))


def ry(angle: float, q: int = 0) -> Gate:
    return _rotation("Y", angle, (q,))


def rz(angle: float, q: int = 0) -> Gate:
    return _rotation("Z", angle, (q,))


def rxx(angle: float, a: int = 0, b: int = 1) -> Gate:
    return _rotation("XX", angle, (a, b))


def ryy(angle: float, a: int = 0, b: int = 1) -> Gate:
    return _rotation("YY", angle, (a, b))


def rzz(angle: float, a: int = 0, b: int = 1) -> Gate:
    return _rotation("ZZ", angle, (a, b))


def two_qubit_rotation_direct(axis: str, angle: float) -> np.ndarray:
    """``expm(-i angle P⊗P / 2)`` computed with scipy, as an oracle."""
    from scipy.linalg import expm

    if axis not in ("XX", "YY", "ZZ"):
        raise ValueError(f"axis must be XX, YY or ZZ, got {axis!r}")
    return expm(-0.5j * angle * pauli_matrix(axis))


def two_qubit_rotation_decomposed(axis: str, angle: float) -> list[Gate]:
    """CNOT-sandwich decomposition of RXX / RYY / RZZ on qubits (0, 1).

    CNOT conjugation maps ``I⊗Z -> Z⊗Z`` and ``X⊗I -> X⊗X``, so RZZ puts its
    RZ on the target and RXX puts its RX on the control.  ``Y⊗Y`` is not
    reachable this way; RYY is RXX conjugated by S on both qubits.
    """
    if axis == "ZZ":
        return [cnot(0, 1), rz(angle, 1), cnot(0, 1)]
    if axis == "XX":
        return [cnot(0, 1), rx(angle, 0), cnot(0, 1)]
    if axis == "YY":
        return (
            [s_gate(0, dagger=True), s_gate(1, dagger=True)]
            + [cnot(0, 1), rx(angle, 0), cnot(0, 1)]
            + [s_gate(0), s_gate(1)]
        )
    raise ValueError(f"axis must be XX, YY or ZZ, got {axis!r}")


def compose(gates: Sequence[Gate], num_qubits: int) -> np.ndarray:
    """Dense unitary of a gate sequence (first gate acts first)."""
    u = np.eye(2**num_qubits, dtype=complex)
    for g in gates:
        # columns of u are states; apply to each
        u = apply_matrix(u.T, g.matrix, g.targets, num_qubits).T
    return u


def equal_up_to_global_phase(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise deviation between ``a`` and ``b`` after phase alignment."""
    a = np.asarray(a)
    b = np.asarray(b)
    inner = np.vdot(b, a)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.max(np.abs(a - phase * b)))


def haar_random_qubit(seed) -> StateVector:
    """Haar-distributed single-qubit pure state.

    A normalized complex Gaussian vector is Haar distributed on the sphere.
    """
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return StateVector(1, v / np.linalg.norm(v))


# ---------------------------------------------------------------------------
# density matrices and channels
# ---------------------------------------------------------------------------


def _rho_as_vector(rho: np.ndarray, num_qubits: int) -> np.ndarray:
    batch = rho.shape[:-2]
    return rho.reshape(batch + (4**num_qubits,))


def apply_kraus_density(
    rho: np.ndarray, operators: Sequence[np.ndarray], wires: Sequence[int], num_qubits: int
) -> np.ndarray:
    """``sum_i K_i rho K_i^dagger`` on a batched density array ``(..., d, d)``.

    A density matrix is treated as a ``2n``-qubit vector: row qubit ``q`` is
    axis ``q`` and column qubit ``q`` is axis ``n + q``.
    """
    d = 2**num_qubits
    batch = rho.shape[:-2]
    vec = _rho_as_vector(rho, num_qubits)
    wires = _check_wires(wires, num_qubits)
    col_wires = tuple(w + num_qubits for w in wires)
    out = np.zeros_like(vec)
    for k in operators:
        t = apply_matrix(vec, k, wires, 2 * num_qubits)
        t = apply_matrix(t, np.conj(k), col_wires, 2 * num_qubits)
        out += t
    return out.reshape(batch + (d, d))


def apply_gate_density(rho: DensityMatrix, gate: Gate) -> DensityMatrix:
    out = apply_kraus_density(rho.entries, [gate.matrix], gate.targets, rho.num_qubits)
    return DensityMatrix(rho.num_qubits, out)


def apply_channel_density(rho: DensityMatrix, channel: KrausChannel, target: int) -> DensityMatrix:
    out = apply_kraus_density(rho.entries, channel.operators, (target,), rho.num_qubits)
    return DensityMatrix(rho.num_qubits, out)


def sample_kraus_branch(
    amps: np.ndarray,
    operators: Sequence[np.ndarray],
    wire: int,
    num_qubits: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """One Monte Carlo trajectory step for every state in a batch.

    Branch ``i`` is chosen with probability ``||K_i psi||^2`` independently per
    batch element; the chosen branch is renormalized.
    """
    branches = np.stack([apply_matrix(amps, k, (wire,), num_qubits) for k in operators])
    probs = np.sum(np.abs(branches) ** 2, axis=-1)  # (K, ...)
    probs = probs / probs.sum(axis=0, keepdims=True)
    cum = np.cumsum(probs, axis=0)
    u = rng.random(size=probs.shape[1:])
    choice = np.sum(cum < u[None, ...], axis=0)
    # never land on a zero-probability branch through rounding in the cumsum
    choice = np.minimum(choice, len(operators) - 1)
    bad = np.take_along_axis(probs, choice[None, ...], axis=0)[0] <= 0
    if np.any(bad):
        fallback = np.argmax(probs, axis=0)
        choice = np.where(bad, fallback, choice)
    picked = np.take_along_axis(branches, choice[None, ..., None], axis=0)[0]
    norms = np.linalg.norm(picked, axis=-1, keepdims=True)
    return picked / norms


def sample_channel_trajectory(
    state: StateVector, channel: KrausChannel, target: int, rng: np.random.Generator
) -> StateVector:
    _check_wires((target,), state.num_qubits)
    amps = sample_kraus_branch(
        state.amplitudes[None, :], channel.operators, target, state.num_qubits, rng
    )[0]
    return StateVector(state.num_qubits, amps)
