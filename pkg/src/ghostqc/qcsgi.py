"""Untrained hybrid quantum-classical reconstruction of ghost images.

The bucket vector is normalized, cut into qubit-sized patches, mapped to
Pauli-Z features by one circuit per patch, and decoded into an image by a
convolutional network.  All parameters are fitted to the single measurement
set through the known illumination patterns, with no training data.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import imaging, nn, qgrad
from .fixtures import glyph
from .imaging import PatternSet
from .qcircuit import (
    CircuitSpec,
    Observable,
    first_entangler_index,
    param_count,
    run_features_batch,
)

__all__ = [
    "PatchPlan",
    "HybridModel",
    "TrainConfig",
    "TrainReport",
    "NonFiniteLossError",
    "build_model",
    "normalize_input",
    "split_patches",
    "model_features",
    "hybrid_forward",
    "least_squares_gain",
    "loss",
    "loss_gradients",
    "value_and_grads",
    "train",
    "bp_variance_experiment",
]


class NonFiniteLossError(FloatingPointError):
    pass


def _bucket_array(buckets) -> np.ndarray:
    return np.asarray(getattr(buckets, "values", buckets), dtype=float)


# ---------------------------------------------------------------------------
# patches and inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchPlan:
    measurements: int
    qubits_per_patch: int = 16
    sharing: str = "independent_params"

    def __post_init__(self):
        if self.measurements < 1 or self.qubits_per_patch < 1:
            raise ValueError("measurements and qubits_per_patch must be positive")
        if self.sharing not in ("independent_params", "shared_params"):
            raise ValueError(f"unknown sharing mode {self.sharing!r}")

    @property
    def num_patches(self) -> int:
        return math.ceil(self.measurements / self.qubits_per_patch)

    @property
    def padding(self) -> int:
        return self.num_patches * self.qubits_per_patch - self.measurements


def normalize_input(buckets, encoding: str = "angle_reupload") -> np.ndarray:
    """Min-max map of bucket values to ``[0, 2pi]`` (angle) or ``[0, 1]``."""
    I = _bucket_array(buckets)
    if I.size == 0:
        raise ValueError("no bucket values")
    span = I.max() - I.min()
    if span <= 0:
        return np.zeros_like(I)
    hi = 2 * np.pi if encoding == "angle_reupload" else 1.0
    return hi * (I - I.min()) / span


def split_patches(z, plan: PatchPlan) -> np.ndarray:
    """Contiguous chunks of ``qubits_per_patch`` inputs, zero padded; shape ``(m, n)``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(plan.num_patches * plan.qubits_per_patch)
    out[: len(z)] = z
    return out.reshape(plan.num_patches, plan.qubits_per_patch)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class HybridModel:
    """Quantum feature stage plus classical decoder.

    With ``spec=None`` the quantum stage is absent and the decoder's
    substitute linear layer reads the normalized buckets directly; this is
    the classical CNN baseline.
    """

    spec: CircuitSpec | None
    plan: PatchPlan
    net: nn.Network
    theta: np.ndarray
    classical: dict[str, np.ndarray]
    observable: Observable | None = None
    seed: int = 0

    @property
    def is_quantum(self) -> bool:
        return self.spec is not None

    @property
    def feature_len(self) -> int:
        if not self.is_quantum:
            return self.plan.measurements
        return self.plan.num_patches * len(self.observable.terms)

    def theta_batch(self) -> np.ndarray:
        if self.plan.sharing == "shared_params":
            return np.broadcast_to(self.theta, (self.plan.num_patches, self.theta.shape[-1]))
        return self.theta

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        if self.is_quantum:
            params["theta"] = self.theta
            if self.observable.trainable_weights:
                params["obs.w"] = self.observable.weights
        params.update(self.classical)
        return params

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        if self.is_quantum:
            self.theta = params["theta"]
            if self.observable.trainable_weights:
                self.observable = self.observable.with_weights(params["obs.w"])
        self.classical = {k: params[k] for k in self.classical}

    def quantum_param_count(self) -> int:
        if not self.is_quantum:
            return 0
        n = self.theta.size
        return n + (len(self.observable.terms) if self.observable.trainable_weights else 0)

    def classical_param_count(self) -> int:
        return self.net.param_count()

    def copy(self) -> "HybridModel":
        return HybridModel(self.spec, self.plan, self.net, self.theta.copy(),
                           {k: v.copy() for k, v in self.classical.items()},
                           self.observable, self.seed)


def build_model(measurements: int, side: int, spec: CircuitSpec | None = None, *,
                sharing: str = "independent_params", trainable_weights: bool = False,
                init_scale: float = 0.1, seed: int = 0) -> HybridModel:
    """Fresh model with Gaussian-initialized angles and Xavier decoder weights.

    ``spec.qubits`` sets the patch size; pass ``spec=None`` for the classical
    baseline with an ``M -> M`` substitute layer.
    """
    qseed, cseed, hseed = np.random.SeedSequence(seed).spawn(3)
    if spec is None:
        plan = PatchPlan(measurements, measurements)
        net = nn.Network(nn.NetConfig(measurements, side, front=True))
        return HybridModel(None, plan, net, np.zeros(0), net.init(cseed), None, seed)
    if spec.encoding == "heisenberg" and spec.haar_seed == 0:
        spec = spec.replace(haar_seed=int(hseed.generate_state(1)[0]))
    plan = PatchPlan(measurements, spec.qubits, sharing)
    obs = Observable.default(spec, trainable_weights)
    P = param_count(spec)
    shape = (P,) if sharing == "shared_params" else (plan.num_patches, P)
    rng = np.random.default_rng(qseed)
    theta = nn.init_quantum_angles(rng, int(np.prod(shape)), spec.qubits, init_scale)
    net = nn.Network(nn.NetConfig(plan.num_patches * len(obs.terms), side))
    return HybridModel(spec, plan, net, theta.reshape(shape), net.init(cseed), obs, seed)


def _unit(obs: Observable) -> Observable:
    return obs.with_weights(np.ones(len(obs.terms)))


def model_features(model: HybridModel, buckets, rng: np.random.Generator | None = None,
                   method: str = "trajectory") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(features, patch_inputs, raw_expectations)`` for the decoder."""
    I = _bucket_array(buckets)
    if len(I) != model.plan.measurements:
        raise ValueError(f"model expects {model.plan.measurements} buckets, got {len(I)}")
    if not model.is_quantum:
        z = normalize_input(I, "unit")
        return z, z[None], z[None]
    z = split_patches(normalize_input(I, model.spec.encoding), model.plan)
    h = run_features_batch(model.spec, z, model.theta_batch(), _unit(model.observable),
                           rng, method)
    return (h * model.observable.weights).reshape(-1), z, h


def hybrid_forward(model: HybridModel, buckets, rng: np.random.Generator | None = None,
                   method: str = "trajectory") -> tuple[np.ndarray, dict]:
    feats, z, h = model_features(model, buckets, rng, method)
    image, net_cache = model.net.forward(model.classical, feats)
    return image, {"features": feats, "z": z, "h": h, "net": net_cache}


# ---------------------------------------------------------------------------
# loss and gradients
# ---------------------------------------------------------------------------


def least_squares_gain(measured, estimated) -> float:
    """Scalar ``b`` minimizing ``||measured - b * estimated||^2``."""
    est = np.asarray(estimated, dtype=float)
    denom = float(est @ est)
    if denom == 0:
        return 1.0
    return float(np.asarray(measured, dtype=float) @ est / denom)


def _loss_from_image(image, I, patterns: PatternSet, mu: float, gain: bool):
    est = patterns.matrix @ image.reshape(-1)
    beta = least_squares_gain(I, est) if gain else 1.0
    resid = I - beta * est
    data = float(resid @ resid)
    value = data + mu * imaging.tv_norm(image)
    # beta is held fixed when differentiating
    grad = (-2 * beta * (patterns.matrix.T @ resid)).reshape(image.shape)
    grad = grad + mu * imaging.tv_gradient(image)
    return value, data, est, beta, grad


def loss(model: HybridModel, buckets, patterns: PatternSet, mu: float = 1e-6,
         gain: bool = True, rng: np.random.Generator | None = None) -> tuple[float, np.ndarray]:
    """``(sum (I - b I')^2 + mu TV(Y), I')`` with ``I' = H Y``."""
    image, _ = hybrid_forward(model, buckets, rng)
    value, _, est, _, _ = _loss_from_image(image, _bucket_array(buckets), patterns, mu, gain)
    return value, est


def _resolve_backend(model: HybridModel, backend: str) -> str:
    noisy = model.is_quantum and model.spec.noise is not None
    if backend == "auto":
        return "psr" if noisy else "adjoint"
    if backend not in ("adjoint", "psr"):
        raise ValueError(f"unknown gradient backend {backend!r}")
    if backend == "adjoint" and noisy:
        raise qgrad.UnsupportedBackendError(
            "adjoint gradients are unavailable for noisy circuits; use psr")
    return backend


@dataclass
class Evaluation:
    value: float
    data: float
    beta: float
    image: np.ndarray
    grads: dict[str, np.ndarray]


def value_and_grads(model: HybridModel, buckets, patterns: PatternSet, mu: float = 1e-6,
                    gain: bool = True, backend: str = "auto",
                    rng: np.random.Generator | None = None) -> Evaluation:
    """Loss and its gradient for every entry of :meth:`HybridModel.parameters`."""
    backend = _resolve_backend(model, backend)
    I = _bucket_array(buckets)
    image, cache = hybrid_forward(model, I, rng)
    value, data, _, beta, gimg = _loss_from_image(image, I, patterns, mu, gain)
    gfeat, grads = model.net.backward(model.classical, cache["net"], gimg)
    if model.is_quantum:
        obs = model.observable
        F = len(obs.terms)
        gfeat = gfeat.reshape(model.plan.num_patches, F)
        if obs.trainable_weights:
            grads["obs.w"] = np.sum(gfeat * cache["h"], axis=0)
        cot = gfeat * obs.weights
        z, th = cache["z"], model.theta_batch()
        if backend == "adjoint":
            gth = qgrad.adjoint_vjp(model.spec, z, th, _unit(obs), cot)
        else:
            jac = qgrad.psr_jacobian_batch(model.spec, z, th, _unit(obs), rng)
            gth = np.einsum("mf,mfp->mp", cot, jac)
        if model.plan.sharing == "shared_params":
            gth = gth.sum(axis=0)
        grads["theta"] = gth
    return Evaluation(value, data, beta, image, grads)


def loss_gradients(model: HybridModel, buckets, patterns: PatternSet, mu: float = 1e-6,
                   gain: bool = True, backend: str = "auto",
                   rng: np.random.Generator | None = None):
    """``(theta_grads, classical_grads)``; trainable observable weights appear
    in the classical dict under ``"obs.w"``."""
    ev = value_and_grads(model, buckets, patterns, mu, gain, backend, rng)
    theta = ev.grads.pop("theta", np.zeros(0))
    return theta, ev.grads


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 1000
    mse_threshold: float = 0.0
    grad_threshold: float = 0.0
    learning_rate: float = 0.05
    classical_learning_rate: float | None = 0.003
    warmup_iterations: int = 0
    mu: float = 1e-6
    gain_calibration: bool = True
    backend: str = "auto"
    noise_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0 or self.warmup_iterations < 0:
            raise ValueError("max_iterations and warmup_iterations must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.classical_learning_rate is not None and not self.classical_learning_rate > 0:
            raise ValueError("classical learning rate must be positive")
        if self.mse_threshold < 0 or self.grad_threshold < 0 or self.mu < 0:
            raise ValueError("thresholds and mu must be nonnegative")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    data_losses: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    stop_reason: str = "max_iterations"
    best_iteration: int = -1
    best_loss: float = float("inf")
    wall_time: float = 0.0
    image: np.ndarray | None = None
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.losses)

    def to_dict(self) -> dict:
        return {
            "losses": self.losses,
            "data_losses": self.data_losses,
            "grad_norms": self.grad_norms,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "best_iteration": self.best_iteration,
            "best_loss": self.best_loss if math.isfinite(self.best_loss) else None,
            "wall_time": self.wall_time,
            "metrics": self.metrics,
            "config": self.config,
            "seeds": self.seeds,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def image_metrics(image, truth) -> dict:
    """PSNR / SSIM of the min-max rescaled reconstruction against ``truth``."""
    rec = imaging.rescale(image)
    out = {"psnr": imaging.psnr(rec, truth)}
    if min(np.shape(truth)) >= 11:
        out["ssim"] = imaging.ssim(rec, truth)
    return out


def train(model: HybridModel, buckets, patterns: PatternSet,
          config: TrainConfig = TrainConfig(), truth=None, callback=None) -> TrainReport:
    """Fit ``model`` to one bucket vector with Adam.

    The model is updated in place.  Each iteration evaluates the loss at the
    current parameters and stops when the data misfit falls to
    ``mse_threshold``, the squared gradient norm falls to ``grad_threshold``,
    or ``max_iterations`` updates have been made.  The report carries the
    best-loss image.
    """
    start = time.perf_counter()
    report = TrainReport(config=asdict(config),
                         seeds={"model": model.seed, "noise": config.noise_seed})
    I = _bucket_array(buckets)
    _resolve_backend(model, config.backend)
    noise_rng = np.random.default_rng(config.noise_seed)
    params = model.parameters()
    overrides = {}
    if config.classical_learning_rate is not None:
        overrides = {k: config.classical_learning_rate for k in model.classical}
    opt = nn.adam_init(params, lr=config.learning_rate, lr_overrides=overrides)
    best_image = None
    t = 0
    while True:
        if t >= config.max_iterations:
            report.stop_reason = "max_iterations"
            break
        ev = value_and_grads(model, I, patterns, config.mu, config.gain_calibration,
                             config.backend, noise_rng)
        if not np.isfinite(ev.value):
            raise NonFiniteLossError(f"loss became {ev.value} at iteration {t}")
        gnorm2 = float(sum(np.sum(g * g) for g in ev.grads.values()))
        report.losses.append(ev.value)
        report.data_losses.append(ev.data)
        report.grad_norms.append(math.sqrt(gnorm2))
        if ev.value < report.best_loss:
            report.best_loss, report.best_iteration = ev.value, t
            best_image = ev.image
        if callback is not None:
            callback(t, ev)
        if ev.data <= config.mse_threshold:
            report.stop_reason = "mse_threshold"
            break
        if gnorm2 <= config.grad_threshold:
            report.stop_reason = "grad_threshold"
            break
        scale = min(1.0, (t + 1) / config.warmup_iterations) if config.warmup_iterations else 1.0
        params, opt = nn.adam_step(opt, params, ev.grads, scale)
        model.set_parameters(params)
        t += 1
    if best_image is None:
        best_image, _ = hybrid_forward(model, I, noise_rng)
    report.image = best_image
    report.wall_time = time.perf_counter() - start
    if truth is not None:
        report.metrics = image_metrics(best_image, truth)
    return report


# ---------------------------------------------------------------------------
# gradient variance over random initializations
# ---------------------------------------------------------------------------


def bp_variance_experiment(qubits, layers, trials: int = 100, seed: int = 0, *,
                           truth=None, side: int = 32, measurements: int | None = 256,
                           encoding: str = "angle_reupload",
                           entangler: str = "rzz_parameterized", mu: float = 1e-6,
                           gain: bool = True) -> dict:
    """Sample variance of ``dL/dtheta`` for the first local angle and the
    first entangling angle of the first patch, over random initializations.

    Angles are uniform on ``[0, 2pi]`` and the decoder is re-drawn for every
    trial.  Derivatives come from parameter shifts chained through the
    decoder's feature gradient.  ``measurements=None`` uses one bucket per
    qubit, i.e. a single patch.  Returns ``{"local": table, "entangle":
    table}`` with rows indexed by ``layers`` and columns by ``qubits``.
    """
    truth = glyph(side) if truth is None else np.asarray(truth, dtype=float)
    qubits = list(qubits)
    layers = list(layers)
    local = np.zeros((len(layers), len(qubits)))
    ent = np.full((len(layers), len(qubits)), np.nan)
    root = np.random.SeedSequence(seed)
    cell_seeds = root.spawn(len(layers) * len(qubits))
    for li, L in enumerate(layers):
        for qi, n in enumerate(qubits):
            cs = cell_seeds[li * len(qubits) + qi]
            pseed, tseed = cs.spawn(2)
            M = n if measurements is None else measurements
            patterns = imaging.generate_patterns(M, side, side, pseed)
            I = imaging.forward_buckets(patterns, truth).values
            spec = CircuitSpec(encoding, qubits=n, layers=L, entangler=entangler)
            params_idx = [0]
            if entangler == "rzz_parameterized" and spec.num_wires > 1:
                params_idx.append(first_entangler_index(spec, 0))
            samples = np.zeros((trials, len(params_idx)))
            rng = np.random.default_rng(tseed)
            model = build_model(M, side, spec, seed=int(tseed.generate_state(1)[0]))
            obs = _unit(model.observable)
            for t in range(trials):
                theta = rng.uniform(0, 2 * np.pi, size=model.theta.shape)
                model.theta = theta
                model.classical = model.net.init(rng.integers(2**63))
                image, cache = hybrid_forward(model, I)
                _, _, _, _, gimg = _loss_from_image(image, I, patterns, mu, gain)
                gfeat, _ = model.net.backward(model.classical, cache["net"], gimg)
                g0 = gfeat.reshape(model.plan.num_patches, -1)[0]
                th0 = model.theta_batch()[0]
                shifted = []
                for k in params_idx:
                    for s in (np.pi / 2, -np.pi / 2):
                        v = th0.copy()
                        v[k] += s
                        shifted.append(v)
                zz = np.repeat(cache["z"][:1], len(shifted), axis=0)
                f = run_features_batch(spec, zz, np.array(shifted), obs)
                f = f.reshape(len(params_idx), 2, -1)
                samples[t] = 0.5 * np.einsum("f,kf->k", g0, f[:, 0] - f[:, 1])
            var = samples.var(axis=0, ddof=1) if trials > 1 else np.zeros(len(params_idx))
            local[li, qi] = var[0]
            if len(params_idx) > 1:
                ent[li, qi] = var[1]
    return {"qubits": qubits, "layers": layers, "trials": trials, "seed": seed,
            "local": local, "entangle": ent}
