import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostqc import qstate
from ghostqc.qcircuit import (
    CircuitSpec,
    NoiseSpec,
    Observable,
    build_circuit,
    circuit_ops,
    initial_state,
    iqp_encoding_unitary,
    param_count,
    run_features,
    run_features_batch,
)

from oracle import reference_unitary, var_layer, z_features


def rand_inputs(spec, rng):
    hi = 2 * np.pi if spec.encoding == "angle_reupload" else 1.0
    z = rng.uniform(0, hi, spec.qubits)
    theta = rng.uniform(-np.pi, np.pi, param_count(spec))
    return z, theta


# -- layout -------------------------------------------------------------------


@pytest.mark.parametrize("n,L,ent,top,expected", [
    (4, 2, "cz_fixed", "linear", 24),
    (4, 2, "rzz_parameterized", "linear", 24 + 6),
    (4, 3, "rzz_parameterized", "circular", 36 + 12),
    (1, 5, "rzz_parameterized", "linear", 15),
    (2, 1, "rzz_parameterized", "circular", 6 + 1),
])
def test_param_count_formula(n, L, ent, top, expected):
    spec = CircuitSpec(qubits=n, layers=L, entangler=ent, topology=top)
    assert param_count(spec) == expected
    assert max(op.param for op in circuit_ops(spec) if op.param is not None) == expected - 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 6), st.sampled_from(["cz_fixed", "rzz_parameterized"]),
       st.sampled_from(["linear", "circular"]))
def test_param_count_property(n, L, ent, top):
    spec = CircuitSpec(qubits=n, layers=L, entangler=ent, topology=top)
    E = (n - 1) if top == "linear" or n <= 2 else n
    assert param_count(spec) == L * 3 * n + (L * E if ent == "rzz_parameterized" else 0)


def test_angle_l1_has_no_encoding():
    spec = CircuitSpec(qubits=3, layers=1)
    gates = build_circuit(spec, np.ones(3), np.zeros(param_count(spec)))
    assert [g.name for g in gates] == ["RZ", "RY", "RX"] * 3 + ["CZ", "CZ"]


def test_angle_layer_ordering():
    spec = CircuitSpec(qubits=2, layers=3)
    names = [g.name for g in build_circuit(spec, np.ones(2), np.zeros(param_count(spec)))]
    var = ["RZ", "RY", "RX"] * 2 + ["CZ"]
    enc = ["RZ", "RY"] * 2
    assert names == var + enc + var + enc + var


def test_invalid_inputs():
    spec = CircuitSpec(qubits=2, layers=1)
    with pytest.raises(ValueError):
        run_features(spec, [0.1, 7.0], np.zeros(6))
    with pytest.raises(ValueError):
        run_features(spec, [0.1, 0.2], np.zeros(5))
    with pytest.raises(ValueError):
        run_features(CircuitSpec("iqp", qubits=2, layers=1), [0.1, 1.5], np.zeros(6))
    for bad in (dict(encoding="amplitude"), dict(qubits=0), dict(entangler="cnot"),
                dict(topology="full"), dict(noise={"kind": "bitflip", "rate": 0.1})):
        with pytest.raises(ValueError):
            CircuitSpec(**bad)


def test_spec_json_round_trip():
    spec = CircuitSpec("heisenberg", qubits=3, layers=2, entangler="rzz_parameterized",
                       topology="circular", trotter_steps=4, noise=NoiseSpec("phase_damping", 0.2))
    d = json.loads(spec.to_json())
    assert set(d) >= {"encoding", "qubits", "layers", "entangler", "topology",
                      "trotter_steps", "evolution_time", "noise"}
    assert d["noise"] == {"kind": "phase_damping", "rate": 0.2}
    assert CircuitSpec.from_json(spec.to_json()) == spec.replace(evolution_time=1.0)
    with pytest.raises(ValueError):
        CircuitSpec.from_dict({**d, "extra": 1})


# -- features against the dense oracle -----------------------------------------


@pytest.mark.parametrize("encoding", ["angle_reupload", "iqp", "heisenberg"])
@pytest.mark.parametrize("ent,top", [("cz_fixed", "linear"), ("rzz_parameterized", "circular")])
def test_features_match_dense_oracle(encoding, ent, top):
    rng = np.random.default_rng(5)
    spec = CircuitSpec(encoding, qubits=3, layers=2, entangler=ent, topology=top, haar_seed=9)
    for _ in range(5):
        z, theta = rand_inputs(spec, rng)
        U = reference_unitary(encoding, 3, 2, z, theta, ent, top)
        psi = U @ initial_state(spec)
        expected = z_features(psi, 3, spec.num_wires)
        np.testing.assert_allclose(run_features(spec, z, theta), expected, atol=1e-12)


def test_angle_l1_zero_theta_features_are_one():
    spec = CircuitSpec(qubits=5, layers=1)
    np.testing.assert_allclose(run_features(spec, np.full(5, 2.0), np.zeros(15)), 1.0, atol=1e-14)


@pytest.mark.parametrize("x", [0.0, 0.7, 2.0, np.pi, 5.5])
def test_single_qubit_reupload_is_cos(x):
    # RY(x) RZ(x) |0>: RZ only adds phase, so <Z> = cos x
    spec = CircuitSpec(qubits=1, layers=2)
    assert run_features(spec, [x], np.zeros(6))[0] == pytest.approx(np.cos(x), abs=1e-14)


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0])
def test_iqp_single_qubit_2x2_oracle(x):
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    rz = np.diag([np.exp(-1j * x), np.exp(1j * x)])
    psi = rz @ h @ rz @ h @ np.array([1, 0])
    expected = abs(psi[0]) ** 2 - abs(psi[1]) ** 2
    spec = CircuitSpec("iqp", qubits=1, layers=1)
    assert run_features(spec, [x], np.zeros(3))[0] == pytest.approx(expected, abs=1e-14)


def test_iqp_zero_input_is_identity():
    u = qstate.compose(iqp_encoding_unitary(np.zeros(3)), 3)
    assert np.max(np.abs(u - np.eye(8))) < 1e-12


def test_iqp_phase_block_diagonal_unimodular():
    rng = np.random.default_rng(0)
    z = rng.uniform(0, 1, 3)
    gates = [g for g in iqp_encoding_unitary(z) if g.name != "H"]
    u = qstate.compose(gates[: len(gates) // 2], 3)
    assert np.max(np.abs(u - np.diag(np.diag(u)))) < 1e-12
    np.testing.assert_allclose(np.abs(np.diag(u)), 1.0, atol=1e-12)
    full = qstate.compose(iqp_encoding_unitary(z), 3)
    assert np.max(np.abs(full.conj().T @ full - np.eye(8))) < 1e-12


def test_heisenberg_zero_input_keeps_haar_state():
    spec = CircuitSpec("heisenberg", qubits=3, layers=1, haar_seed=4)
    psi = initial_state(spec)
    expected = z_features(psi, 3, 4)
    np.testing.assert_allclose(run_features(spec, np.zeros(3), np.zeros(12)), expected,
                               atol=1e-12)


@pytest.mark.parametrize("encoding", ["iqp", "heisenberg"])
def test_zero_input_equals_variational_only(encoding):
    rng = np.random.default_rng(1)
    spec = CircuitSpec(encoding, qubits=3, layers=2, haar_seed=2)
    theta = rng.uniform(-3, 3, param_count(spec))
    psi = initial_state(spec)
    # the variational unitary alone, from the oracle, applied to the initial state
    U = np.eye(2**spec.num_wires, dtype=complex)
    p = 0
    for _ in range(2):
        V, used = var_layer(spec.num_wires, theta[p:], "cz_fixed", "linear")
        U, p = V @ U, p + used
    expected = z_features(U @ psi, 3, spec.num_wires)
    np.testing.assert_allclose(run_features(spec, np.zeros(3), theta), expected, atol=1e-12)


def test_heisenberg_haar_state_fixed_per_seed():
    a = initial_state(CircuitSpec("heisenberg", qubits=2, layers=1, haar_seed=3))
    b = initial_state(CircuitSpec("heisenberg", qubits=2, layers=1, haar_seed=3))
    c = initial_state(CircuitSpec("heisenberg", qubits=2, layers=1, haar_seed=4))
    np.testing.assert_array_equal(a, b)
    assert np.max(np.abs(a - c)) > 1e-3


# -- observables and determinism ----------------------------------------------


def test_default_observable_length():
    for enc in ("angle_reupload", "iqp", "heisenberg"):
        spec = CircuitSpec(enc, qubits=4, layers=1)
        assert len(Observable.default(spec).terms) == 4


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["angle_reupload", "iqp", "heisenberg"]), st.integers(1, 4),
       st.integers(1, 3), st.integers(0, 2**31))
def test_features_bounded_and_deterministic(enc, n, L, seed):
    rng = np.random.default_rng(seed)
    spec = CircuitSpec(enc, qubits=n, layers=L, haar_seed=seed)
    z, theta = rand_inputs(spec, rng)
    w = rng.normal(size=n)
    obs = Observable.default(spec).with_weights(w)
    f1 = run_features(spec, z, theta, obs)
    f2 = run_features(spec, z, theta, obs)
    np.testing.assert_array_equal(f1, f2)
    assert np.all(np.abs(f1) <= np.abs(w) + 1e-12)
    assert np.sum(np.abs(f1)) <= obs.bound + 1e-12


def test_batch_matches_single():
    rng = np.random.default_rng(8)
    spec = CircuitSpec(qubits=3, layers=2, entangler="rzz_parameterized")
    zs, thetas = zip(*(rand_inputs(spec, rng) for _ in range(4)))
    batch = run_features_batch(spec, np.array(zs), np.array(thetas), Observable.default(spec))
    for i in range(4):
        np.testing.assert_allclose(batch[i], run_features(spec, zs[i], thetas[i]), atol=1e-14)


# -- noise ------------------------------------------------------------------------


def test_noise_requires_rng():
    spec = CircuitSpec(qubits=2, layers=1, noise=NoiseSpec("depolarizing", 0.1))
    with pytest.raises(ValueError):
        run_features(spec, [0.1, 0.2], np.zeros(6))


def test_zero_rate_noise_matches_noiseless():
    rng = np.random.default_rng(0)
    spec = CircuitSpec(qubits=3, layers=2)
    z, theta = rand_inputs(spec, rng)
    noisy = spec.replace(noise=NoiseSpec("depolarizing", 0.0))
    np.testing.assert_allclose(run_features(noisy, z, theta, rng=rng), run_features(spec, z, theta),
                               atol=1e-14)
    np.testing.assert_allclose(run_features(noisy, z, theta, method="density"),
                               run_features(spec, z, theta), atol=1e-12)


@pytest.mark.parametrize("kind", ["depolarizing", "amplitude_damping", "phase_damping"])
def test_trajectory_average_matches_density(kind):
    rng = np.random.default_rng(21)
    spec = CircuitSpec(qubits=2, layers=2, noise=NoiseSpec(kind, 0.2))
    z, theta = rand_inputs(spec, rng)
    exact = run_features(spec, z, theta, method="density")
    shots = 20_000
    obs = Observable.default(spec)
    samples = run_features_batch(spec, np.tile(z, (shots, 1)), np.tile(theta, (shots, 1)),
                                 obs, rng)
    se = samples.std(axis=0, ddof=1) / np.sqrt(shots)
    assert np.all(np.abs(samples.mean(axis=0) - exact) < 3 * se + 1e-12)


def test_full_depolarizing_on_entangled_pair_mixes_measured_qubits():
    # with rate 1 after the final CZ layer, each measured qubit is maximally mixed
    spec = CircuitSpec(qubits=2, layers=1, noise=NoiseSpec("depolarizing", 1.0))
    f = run_features(spec, [0.3, 0.4], np.full(6, 0.9), method="density")
    np.testing.assert_allclose(f, 0.0, atol=1e-12)
