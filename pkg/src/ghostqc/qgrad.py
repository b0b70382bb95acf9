"""Jacobians of circuit features with respect to the trainable angles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qstate
from .qcircuit import (
    CircuitSpec,
    Observable,
    _check_theta,
    _op_angle,
    apply_op,
    check_input,
    circuit_ops,
    initial_state,
    param_count,
    run_features_batch,
)

__all__ = [
    "ShiftRule",
    "UnsupportedBackendError",
    "shifted_parameters",
    "psr_jacobian",
    "psr_jacobian_batch",
    "adjoint_jacobian",
    "adjoint_jacobian_batch",
    "adjoint_vjp",
    "finite_diff_jacobian",
]


class UnsupportedBackendError(ValueError):
    """Raised when a gradient backend cannot handle the requested circuit."""


@dataclass(frozen=True)
class ShiftRule:
    shift: float = np.pi / 2
    coefficient: float = 0.5


PAULI_SHIFT = ShiftRule()


def _check_pauli_generated(spec: CircuitSpec) -> None:
    for op in circuit_ops(spec):
        if op.param is not None and (op.pauli is None or set(op.pauli) - set("XYZ")):
            raise UnsupportedBackendError(
                f"parameterized op {op.name!r} is not generated by a Pauli string"
            )


def shifted_parameters(theta: np.ndarray, rule: ShiftRule = PAULI_SHIFT) -> np.ndarray:
    """Stack of ``2P`` parameter vectors.

    Rows ``2k`` / ``2k+1`` shift ``theta_k`` by ``+s`` / ``-s``.
    """
    theta = np.asarray(theta, dtype=float)
    P = theta.shape[-1]
    out = np.repeat(theta[..., None, :], 2 * P, axis=-2)
    k = np.arange(P)
    out[..., 2 * k, k] += rule.shift
    out[..., 2 * k + 1, k] -= rule.shift
    return out


def psr_jacobian_batch(spec: CircuitSpec, z, theta, obs: Observable,
                       rng: np.random.Generator | None = None,
                       method: str = "trajectory",
                       rule: ShiftRule = PAULI_SHIFT) -> np.ndarray:
    """Parameter-shift jacobians for a batch of circuits, shape ``(B, F, P)``.

    All ``2P`` shifted circuits of all ``B`` inputs run as one batch; the
    reduction order is fixed, so results do not depend on how it is split.
    """
    _check_pauli_generated(spec)
    z = np.atleast_2d(check_input(spec, z))
    theta = np.atleast_2d(_check_theta(spec, theta))
    B, P = theta.shape
    F = len(obs.terms)
    if P == 0:
        return np.zeros((B, F, 0))
    shifted = shifted_parameters(theta, rule).reshape(B * 2 * P, P)
    zz = np.repeat(z, 2 * P, axis=0)
    feats = run_features_batch(spec, zz, shifted, obs, rng, method).reshape(B, P, 2, F)
    jac = rule.coefficient * (feats[:, :, 0, :] - feats[:, :, 1, :])
    return np.transpose(jac, (0, 2, 1))


def psr_jacobian(spec: CircuitSpec, z, theta, obs: Observable | None = None,
                 rng: np.random.Generator | None = None,
                 method: str = "trajectory") -> np.ndarray:
    """Feature jacobian ``(F, P)`` by the two-term parameter-shift rule."""
    obs = Observable.default(spec) if obs is None else obs
    return psr_jacobian_batch(spec, np.asarray(z)[None], np.asarray(theta)[None],
                              obs, rng, method)[0]


def _observable_apply(psi: np.ndarray, obs: Observable, cot: np.ndarray,
                      num_wires: int) -> np.ndarray:
    """``sum_i cot_i w_i h_i |psi>`` for batched states; ``cot`` is ``(B, K, F)``."""
    out = np.zeros(cot.shape[:2] + psi.shape[-1:], dtype=complex)
    for i, term in enumerate(obs.terms):
        hp = psi
        for q, ch in enumerate(term):
            if ch != "I":
                hp = qstate.apply_matrix(hp, qstate.PAULI[ch], (q,), num_wires)
        out += (cot[:, :, i] * obs.weights[i])[..., None] * hp[:, None, :]
    return out


def _adjoint_core(spec: CircuitSpec, z: np.ndarray, theta: np.ndarray,
                  obs: Observable, cot: np.ndarray) -> np.ndarray:
    """Adjoint-mode derivative of ``sum_i cot[b,k,i] * feature_i``.

    Returns ``(B, K, P)``.  With ``cot`` the identity this is the full
    jacobian; with a single row it is a vector-jacobian product.
    """
    if spec.noise is not None:
        raise UnsupportedBackendError("adjoint differentiation requires a noiseless circuit")
    _check_pauli_generated(spec)
    nw = spec.num_wires
    ops = circuit_ops(spec)
    B = z.shape[0]
    K = cot.shape[1]
    P = param_count(spec)
    angles = [None if op.matrix is not None else _op_angle(op, z, theta) for op in ops]
    psi = np.broadcast_to(initial_state(spec), (B, 2**nw)).copy()
    for op, a in zip(ops, angles):
        psi = apply_op(psi, op, a, nw)
    lam = _observable_apply(psi, obs, cot, nw)  # (B, K, d)
    grads = np.zeros((B, K, P))
    d = 2**nw
    for op, a in zip(reversed(ops), reversed(angles)):
        if op.param is not None:
            gp = apply_op(psi, op, a, nw, generator=True)
            # dU/dtheta = -i/2 P U, so d<O>/dtheta = Im <lam|P|psi>
            grads[:, :, op.param] += np.imag(np.einsum("bkd,bd->bk", lam.conj(), gp))
        psi = apply_op(psi, op, a, nw, adjoint=True)
        if K == 1:
            lam = apply_op(lam[:, 0, :], op, a, nw, adjoint=True)[:, None, :]
        else:
            la = None if a is None else np.repeat(a, K, axis=0)
            lam = apply_op(lam.reshape(B * K, d), op, la, nw, adjoint=True).reshape(B, K, d)
    return grads


def adjoint_jacobian_batch(spec: CircuitSpec, z, theta, obs: Observable) -> np.ndarray:
    z = np.atleast_2d(check_input(spec, z))
    theta = np.atleast_2d(_check_theta(spec, theta))
    B = z.shape[0]
    F = len(obs.terms)
    cot = np.broadcast_to(np.eye(F), (B, F, F))
    jac = _adjoint_core(spec, z, theta, obs, cot)
    return jac


def adjoint_jacobian(spec: CircuitSpec, z, theta, obs: Observable | None = None) -> np.ndarray:
    """Feature jacobian ``(F, P)`` by reverse-mode statevector differentiation."""
    obs = Observable.default(spec) if obs is None else obs
    return adjoint_jacobian_batch(spec, np.asarray(z)[None], np.asarray(theta)[None], obs)[0]


def adjoint_vjp(spec: CircuitSpec, z, theta, obs: Observable, cotangent) -> np.ndarray:
    """``cotangent @ jacobian`` per batch element, shape ``(B, P)``."""
    z = np.atleast_2d(check_input(spec, z))
    theta = np.atleast_2d(_check_theta(spec, theta))
    cot = np.asarray(cotangent, dtype=float)[:, None, :]
    return _adjoint_core(spec, z, theta, obs, cot)[:, 0, :]


def finite_diff_jacobian(spec: CircuitSpec, z, theta, obs: Observable | None = None,
                         h: float = 1e-4) -> np.ndarray:
    """Central-difference jacobian; a test oracle independent of both other paths."""
    if h <= 0:
        raise ValueError("step h must be positive")
    obs = Observable.default(spec) if obs is None else obs
    theta = np.asarray(theta, dtype=float)
    P = theta.shape[-1]
    plus = np.repeat(theta[None], P, axis=0) + h * np.eye(P)
    minus = np.repeat(theta[None], P, axis=0) - h * np.eye(P)
    zz = np.repeat(np.asarray(z, dtype=float)[None], P, axis=0)
    fp = run_features_batch(spec, zz, plus, obs)
    fm = run_features_batch(spec, zz, minus, obs)
    return ((fp - fm) / (2 * h)).T
