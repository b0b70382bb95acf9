"""Parameterized feature circuits: angle re-uploading, IQP and Heisenberg encodings.

A circuit is first compiled into a flat list of :class:`Op` records whose
rotation angles refer symbolically to the trainable vector ``theta`` or to
the input ``z``.  The same program is then executed for a whole batch of
``(z, theta)`` pairs, which is how patches and parameter shifts are
evaluated together.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import qstate
from .qstate import Gate, KrausChannel

__all__ = [
    "ENCODINGS",
    "CircuitSpec",
    "NoiseSpec",
    "Observable",
    "Op",
    "param_count",
    "entangler_pairs",
    "circuit_ops",
    "build_circuit",
    "iqp_encoding_unitary",
    "initial_state",
    "check_input",
    "run_features",
    "run_features_batch",
    "simulate_batch",
    "first_entangler_index",
]

ENCODINGS = ("angle_reupload", "iqp", "heisenberg")
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float

    def channel(self) -> KrausChannel:
        return KrausChannel.make(self.kind, self.rate)


@dataclass(frozen=True)
class CircuitSpec:
    encoding: str = "angle_reupload"
    qubits: int = 16
    layers: int = 5
    entangler: str = "cz_fixed"
    topology: str = "linear"
    trotter_steps: int = 3
    evolution_time: float | None = None
    noise: NoiseSpec | None = None
    haar_seed: int = 0

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.qubits < 1 or self.layers < 1:
            raise ValueError("qubits and layers must be >= 1")
        if self.entangler not in ("cz_fixed", "rzz_parameterized"):
            raise ValueError(f"unknown entangler {self.entangler!r}")
        if self.topology not in ("linear", "circular"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.trotter_steps < 1:
            raise ValueError("trotter_steps must be >= 1")
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseSpec(**self.noise))
        if self.noise is not None:
            self.noise.channel()  # validates kind and rate

    @property
    def num_wires(self) -> int:
        """Simulated qubits; Heisenberg encoding needs one extra."""
        return self.qubits + 1 if self.encoding == "heisenberg" else self.qubits

    @property
    def time(self) -> float:
        return self.qubits / 3 if self.evolution_time is None else self.evolution_time

    @property
    def num_params(self) -> int:
        return param_count(self)

    def replace(self, **changes) -> "CircuitSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return CircuitSpec(**d)

    def to_dict(self) -> dict:
        return {
            "encoding": self.encoding,
            "qubits": self.qubits,
            "layers": self.layers,
            "entangler": self.entangler,
            "topology": self.topology,
            "trotter_steps": self.trotter_steps,
            "evolution_time": self.time,
            "noise": None if self.noise is None else asdict(self.noise),
            "haar_seed": self.haar_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitSpec":
        allowed = {
            "encoding", "qubits", "layers", "entangler", "topology",
            "trotter_steps", "evolution_time", "noise", "haar_seed",
        }
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown circuit keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("noise") is not None:
            d["noise"] = NoiseSpec(**d["noise"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CircuitSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Observable:
    """Weighted sum of Pauli strings; each term gives one feature."""

    terms: tuple[str, ...]
    weights: np.ndarray = field(default=None)
    trainable_weights: bool = False

    def __post_init__(self):
        terms = tuple(self.terms)
        w = np.ones(len(terms)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (len(terms),):
            raise ValueError("one weight per term required")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def z_per_qubit(cls, measured: int, num_wires: int | None = None,
                    trainable_weights: bool = False) -> "Observable":
        num_wires = measured if num_wires is None else num_wires
        terms = []
        for q in range(measured):
            label = ["I"] * num_wires
            label[q] = "Z"
            terms.append("".join(label))
        return cls(tuple(terms), None, trainable_weights)

    @classmethod
    def default(cls, spec: CircuitSpec, trainable_weights: bool = False) -> "Observable":
        # heisenberg: the extra ancilla wire is not measured, keeping n features
        return cls.z_per_qubit(spec.qubits, spec.num_wires, trainable_weights)

    def with_weights(self, weights) -> "Observable":
        return Observable(self.terms, np.asarray(weights, float), self.trainable_weights)

    @property
    def bound(self) -> float:
        return float(np.sum(np.abs(self.weights)))


@dataclass(frozen=True)
class Op:
    """One instruction of a compiled circuit.

    Exactly one angle source is used by rotation ops: ``param`` (index into
    ``theta``) or ``data`` (product of input entries times ``coef``).  Fixed
    gates carry ``matrix``; noise ops carry ``noise=True``.
    """

    wires: tuple[int, ...]
    pauli: str | None = None
    param: int | None = None
    data: tuple[int, ...] = ()
    coef: float = 1.0
    matrix: np.ndarray | None = None
    noise: bool = False
    name: str = ""


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------


def entangler_pairs(spec: CircuitSpec) -> list[tuple[int, int]]:
    n = spec.num_wires
    pairs = [(i, i + 1) for i in range(n - 1)]
    if spec.topology == "circular" and n > 2:
        pairs.append((n - 1, 0))
    return pairs


def param_count(spec: CircuitSpec) -> int:
    per_layer = 3 * spec.num_wires
    if spec.entangler == "rzz_parameterized":
        per_layer += len(entangler_pairs(spec))
    return spec.layers * per_layer


def first_entangler_index(spec: CircuitSpec, layer: int = 0) -> int:
    """Index of the first entangling angle of ``layer`` (0-based)."""
    if spec.entangler != "rzz_parameterized":
        raise ValueError("circuit has no parameterized entanglers")
    per_layer = param_count(spec) // spec.layers
    return layer * per_layer + 3 * spec.num_wires


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _var_layer(spec: CircuitSpec, layer: int, offset: int) -> tuple[list[Op], int]:
    ops: list[Op] = []
    n = spec.num_wires
    p = offset
    for q in range(n):
        # R_X R_Y R_Z as an operator product: RZ acts first
        ops.append(Op((q,), "Z", param=p + 2, name="RZ"))
        ops.append(Op((q,), "Y", param=p + 1, name="RY"))
        ops.append(Op((q,), "X", param=p, name="RX"))
        p += 3
    for a, b in entangler_pairs(spec):
        if spec.entangler == "cz_fixed":
            ops.append(Op((a, b), matrix=_CZ, name="CZ"))
        else:
            ops.append(Op((a, b), "ZZ", param=p, name="RZZ"))
            p += 1
        if spec.noise is not None:
            ops.append(Op((a,), noise=True, name="noise"))
            ops.append(Op((b,), noise=True, name="noise"))
    return ops, p


def _iqp_phase_ops(spec: CircuitSpec) -> list[Op]:
    n = spec.qubits
    ops = [Op((i,), "Z", data=(i,), coef=2.0, name="RZ") for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            ops.append(Op((i, j), "ZZ", data=(i, j), coef=2.0, name="RZZ"))
            if spec.noise is not None:
                ops.append(Op((i,), noise=True, name="noise"))
                ops.append(Op((j,), noise=True, name="noise"))
    return ops


def _encoding_ops(spec: CircuitSpec) -> list[Op]:
    if spec.encoding == "angle_reupload":
        ops = []
        for q in range(spec.qubits):
            ops.append(Op((q,), "Z", data=(q,), name="RZ"))
            ops.append(Op((q,), "Y", data=(q,), name="RY"))
        return ops
    if spec.encoding == "iqp":
        had = [Op((q,), matrix=_H, name="H") for q in range(spec.qubits)]
        return had + _iqp_phase_ops(spec) + had + _iqp_phase_ops(spec)
    # heisenberg: exp(-i (t/T) z_i (XX+YY+ZZ)) = RXX RYY RZZ with angle 2 t z_i / T
    coef = 2.0 * spec.time / spec.trotter_steps
    ops = []
    for _ in range(spec.trotter_steps):
        for i in range(spec.qubits):
            for lab in ("XX", "YY", "ZZ"):
                ops.append(Op((i, i + 1), lab, data=(i,), coef=coef, name="R" + lab))
            if spec.noise is not None:
                ops.append(Op((i,), noise=True, name="noise"))
                ops.append(Op((i + 1,), noise=True, name="noise"))
    return ops


def circuit_ops(spec: CircuitSpec) -> tuple[Op, ...]:
    return _circuit_ops_cached(spec)


@lru_cache(maxsize=64)
def _circuit_ops_cached(spec: CircuitSpec) -> tuple[Op, ...]:
    ops: list[Op] = []
    p = 0
    if spec.encoding == "angle_reupload":
        for layer in range(spec.layers):
            if layer > 0:
                ops += _encoding_ops(spec)
            block, p = _var_layer(spec, layer, p)
            ops += block
    else:
        ops += _encoding_ops(spec)
        for layer in range(spec.layers):
            block, p = _var_layer(spec, layer, p)
            ops += block
    assert p == param_count(spec)
    return tuple(ops)


# ---------------------------------------------------------------------------
# inputs and initial states
# ---------------------------------------------------------------------------


def check_input(spec: CircuitSpec, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.qubits:
        raise ValueError(f"input has {z.shape[-1]} entries, circuit expects {spec.qubits}")
    hi = TWO_PI if spec.encoding == "angle_reupload" else 1.0
    tol = 1e-12
    if np.any(z < -tol) or np.any(z > hi + tol) or not np.all(np.isfinite(z)):
        raise ValueError(f"{spec.encoding} inputs must lie in [0, {hi:g}]")
    return z


def _check_theta(spec: CircuitSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != param_count(spec):
        raise ValueError(
            f"theta has {theta.shape[-1]} entries, layout requires {param_count(spec)}"
        )
    return theta


def haar_product_state(spec: CircuitSpec) -> np.ndarray:
    seeds = np.random.SeedSequence(spec.haar_seed).spawn(spec.num_wires)
    psi = np.ones(1, dtype=complex)
    for s in seeds:
        psi = np.kron(psi, qstate.haar_random_qubit(s).amplitudes)
    return psi


def initial_state(spec: CircuitSpec) -> np.ndarray:
    if spec.encoding == "heisenberg":
        return haar_product_state(spec)
    return qstate.zero_state(spec.num_wires)


# ---------------------------------------------------------------------------
# single-shot gate list
# ---------------------------------------------------------------------------


def _op_angle(op: Op, z: np.ndarray, theta: np.ndarray):
    if op.param is not None:
        return theta[..., op.param]
    val = op.coef * np.ones(z.shape[:-1])
    for i in op.data:
        val = val * z[..., i]
    return val


def build_circuit(spec: CircuitSpec, z, theta) -> list[Gate]:
    """Concrete gate list for one input; noise ops are omitted.

    For the Heisenberg encoding the gates act on the Haar product state from
    :func:`initial_state`, not on ``|0...0>``.
    """
    z = check_input(spec, z)
    theta = _check_theta(spec, theta)
    gates = []
    for op in circuit_ops(spec):
        if op.noise:
            continue
        if op.matrix is not None:
            gates.append(Gate(op.matrix, op.wires, name=op.name))
        else:
            a = float(_op_angle(op, z, theta))
            gates.append(Gate(qstate.pauli_rotation_matrix(op.pauli, a), op.wires,
                              op.pauli, a, op.name))
    return gates


def iqp_encoding_unitary(z) -> list[Gate]:
    """``H^n U_Z(z) H^n U_Z(z)`` gate list.

    ``U_Z = exp(-i(sum z_i Z_i + sum_{i<j} z_i z_j Z_i Z_j))``.
    """
    z = np.asarray(z, dtype=float)
    spec = CircuitSpec("iqp", qubits=len(z), layers=1)
    check_input(spec, z)
    gates = []
    for op in _encoding_ops(spec):
        if op.matrix is not None:
            gates.append(Gate(op.matrix, op.wires, name=op.name))
        else:
            a = float(_op_angle(op, z, np.zeros(0)))
            gates.append(Gate(qstate.pauli_rotation_matrix(op.pauli, a), op.wires,
                              op.pauli, a, op.name))
    return gates


# ---------------------------------------------------------------------------
# batched execution
# ---------------------------------------------------------------------------


def _diag_phases(label: str, angles: np.ndarray) -> np.ndarray:
    """Diagonal of exp(-i a P/2) for Z-type P, batched over angles."""
    eig = np.real(np.diag(qstate.pauli_matrix(label)))
    return np.exp(-0.5j * angles[..., None] * eig)


def apply_op(amps: np.ndarray, op: Op, angles, num_wires: int, adjoint: bool = False,
             generator: bool = False) -> np.ndarray:
    """Apply one non-noise op to a batched state.

    ``generator=True`` applies the Pauli generator instead of the rotation,
    which the adjoint differentiator needs.
    """
    if op.matrix is not None:
        m = op.matrix.conj().T if adjoint else op.matrix
        if op.name == "CZ":
            return qstate.apply_diagonal(amps, np.diag(m), op.wires, num_wires)
        return qstate.apply_matrix(amps, m, op.wires, num_wires)
    if generator:
        out = amps
        for w, ch in zip(op.wires, op.pauli):
            out = qstate.apply_matrix(out, qstate.PAULI[ch], (w,), num_wires)
        return out
    a = -angles if adjoint else angles
    a = np.broadcast_to(a, amps.shape[:-1])
    if set(op.pauli) == {"Z"}:
        return qstate.apply_diagonal(amps, _diag_phases(op.pauli, a), op.wires, num_wires)
    return qstate.apply_matrix(amps, qstate.pauli_rotation_matrix(op.pauli, a),
                               op.wires, num_wires)


def simulate_batch(spec: CircuitSpec, z: np.ndarray, theta: np.ndarray,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Final statevectors for a batch; noise channels are trajectory-sampled.

    ``z`` has shape ``(B, n)`` and ``theta`` ``(B, P)``.
    """
    nw = spec.num_wires
    B = z.shape[0]
    psi = np.broadcast_to(initial_state(spec), (B, 2**nw)).copy()
    channel = None
    if spec.noise is not None:
        if rng is None:
            raise ValueError("a random generator is required for noisy circuits")
        channel = spec.noise.channel()
    for op in circuit_ops(spec):
        if op.noise:
            psi = qstate.sample_kraus_branch(psi, channel.operators, op.wires[0], nw, rng)
            continue
        angles = None if op.matrix is not None else _op_angle(op, z, theta)
        psi = apply_op(psi, op, angles, nw)
    return psi


def simulate_density_batch(spec: CircuitSpec, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Exact density matrices ``(B, d, d)`` with channels applied in full."""
    nw = spec.num_wires
    if nw > qstate.MAX_DENSITY_QUBITS:
        raise ValueError("density simulation is limited to "
                         f"{qstate.MAX_DENSITY_QUBITS} qubits")
    psi0 = initial_state(spec)
    B = z.shape[0]
    vec = np.broadcast_to(np.outer(psi0, psi0.conj()).reshape(-1), (B, 4**nw)).copy()
    channel = spec.noise.channel() if spec.noise is not None else None
    for op in circuit_ops(spec):
        if op.noise:
            rho = vec.reshape(B, 2**nw, 2**nw)
            vec = qstate.apply_kraus_density(rho, channel.operators, op.wires, nw)
            vec = vec.reshape(B, -1)
            continue
        angles = None if op.matrix is not None else _op_angle(op, z, theta)
        vec = apply_op(vec, op, angles, 2 * nw)
        shifted = Op(tuple(w + nw for w in op.wires), op.pauli, op.param, op.data,
                     op.coef, None if op.matrix is None else op.matrix.conj(),
                     name=op.name)
        # column index transforms with the complex conjugate of the gate
        if op.matrix is not None:
            vec = apply_op(vec, shifted, None, 2 * nw)
        else:
            vec = _apply_conj_rotation(vec, shifted, angles, 2 * nw)
    return vec.reshape(B, 2**nw, 2**nw)


def _apply_conj_rotation(vec, op: Op, angles, num_wires: int):
    a = np.broadcast_to(angles, vec.shape[:-1])
    m = np.conj(qstate.pauli_rotation_matrix(op.pauli, a))
    return qstate.apply_matrix(vec, m, op.wires, num_wires)


def expectations(psi: np.ndarray, obs: Observable, num_wires: int) -> np.ndarray:
    """Per-term expectations ``(B, F)`` (unweighted)."""
    return np.stack(
        [qstate.pauli_expectation_array(psi, t, num_wires) for t in obs.terms], axis=-1
    )


def density_expectations(rho: np.ndarray, obs: Observable) -> np.ndarray:
    cols = []
    for t in obs.terms:
        p = qstate.pauli_matrix(t)
        cols.append(np.einsum("ij,bji->b", p, rho).real)
    return np.stack(cols, axis=-1)


def run_features_batch(spec: CircuitSpec, z, theta, obs: Observable,
                       rng: np.random.Generator | None = None,
                       method: str = "trajectory") -> np.ndarray:
    """Weighted features ``w_i <h_i>`` for a batch, shape ``(B, F)``.

    ``method`` selects how noise is simulated: ``"trajectory"`` (one sampled
    trajectory per batch element) or ``"density"`` (exact channel).
    """
    z = np.atleast_2d(check_input(spec, z))
    theta = np.atleast_2d(_check_theta(spec, theta))
    B = max(z.shape[0], theta.shape[0])
    z = np.broadcast_to(z, (B, z.shape[1]))
    theta = np.broadcast_to(theta, (B, theta.shape[1]))
    if method == "density":
        h = density_expectations(simulate_density_batch(spec, z, theta), obs)
    elif method == "trajectory":
        h = expectations(simulate_batch(spec, z, theta, rng), obs, spec.num_wires)
    else:
        raise ValueError(f"unknown simulation method {method!r}")
    return h * obs.weights


def run_features(spec: CircuitSpec, z, theta, obs: Observable | None = None,
                 rng: np.random.Generator | None = None,
                 method: str = "trajectory") -> np.ndarray:
    """Feature vector ``w ⊙ h`` of one circuit evaluation."""
    obs = Observable.default(spec) if obs is None else obs
    return run_features_batch(spec, np.asarray(z)[None], np.asarray(theta)[None],
                              obs, rng, method)[0]
