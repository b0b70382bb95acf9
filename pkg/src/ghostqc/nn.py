"""Fixed-architecture image decoder with hand-written reverse mode.

Tensors are float64 arrays in ``(channels, height, width)`` layout; the batch
size is always one.  Parameters live in an ordered ``dict`` mapping names to
arrays, and gradients use the same keys.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "LEAKY_SLOPE",
    "leaky_relu",
    "leaky_relu_grad",
    "sigmoid",
    "sigmoid_grad",
    "NetConfig",
    "Network",
    "AdamState",
    "adam_init",
    "adam_step",
    "xavier",
    "init_quantum_angles",
    "linear_param_count",
    "save_checkpoint",
    "load_checkpoint",
]

LEAKY_SLOPE = 0.2


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope: float = LEAKY_SLOPE):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0, slope)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(x):
    """Derivative of the sigmoid at logit ``x``.

    Evaluated as ``e / (1 + e)^2`` with ``e = exp(-|x|)`` so that it stays
    positive where ``s * (1 - s)`` would round to zero.
    """
    e = np.exp(-np.abs(np.asarray(x, dtype=float)))
    return e / (1.0 + e) ** 2


# ---------------------------------------------------------------------------
# primitive layers: forward returns (y, cache); backward returns input grad
# ---------------------------------------------------------------------------


def _conv_forward(x, w, b, stride):
    co, ci, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(ci * k * k, ho * wo)
    y = (w.reshape(co, -1) @ cols).reshape(co, ho, wo) + b[:, None, None]
    return y, (x.shape, cols, stride)


def _conv_backward(gy, w, cache):
    xshape, cols, stride = cache
    co, ci, k, _ = w.shape
    pad = k // 2
    g2 = gy.reshape(co, -1)
    gw = (g2 @ cols.T).reshape(w.shape)
    gb = g2.sum(axis=1)
    gcols = (w.reshape(co, -1).T @ g2).reshape(ci, k, k, gy.shape[1], gy.shape[2])
    c, h, wd = xshape
    gxp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    ho, wo = gy.shape[1], gy.shape[2]
    for i in range(k):
        for j in range(k):
            gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, i, j]
    gx = gxp[:, pad:pad + h, pad:pad + wd]
    return gx, gw, gb


def _upsample(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def _upsample_backward(g):
    c, h, w = g.shape
    return g.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


# ---------------------------------------------------------------------------
# architecture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    """Decoder geometry.

    ``front`` adds the ``feature_len -> feature_len`` linear layer that stands
    in for the quantum stage in the classical baseline.
    """

    feature_len: int
    side: int = 64
    front: bool = False
    stem_channels: int = 8
    down_channels: tuple[int, ...] = (16, 32, 32, 32)

    def __post_init__(self):
        if self.side < 4 or self.side & (self.side - 1):
            raise ValueError("image side must be a power of two >= 4")

    @property
    def depth(self) -> int:
        # 64 -> 4 blocks (4x4 bottleneck); reduced sides stop at 2x2
        return min(len(self.down_channels), int(np.log2(self.side)) - 1)

    @property
    def channels(self) -> list[int]:
        return [self.stem_channels] + list(self.down_channels[: self.depth])

    @property
    def bottleneck(self) -> tuple[int, int]:
        return self.channels[-1], self.side // 2**self.depth


def xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


def init_quantum_angles(rng: np.random.Generator, size: int, width: int,
                        scale: float = 0.1) -> np.ndarray:
    """Angles drawn from ``Normal(0, width)`` and shrunk by ``scale``."""
    return scale * rng.normal(0.0, np.sqrt(width), size=size)


def linear_param_count(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


class Network:
    """Linear projection to an image followed by a residual conv trunk."""

    def __init__(self, config: NetConfig):
        self.config = config
        self.shapes = self._shapes()

    def _shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        s: dict[str, tuple[int, ...]] = {}
        F = cfg.feature_len
        if cfg.front:
            s["front.w"] = (F, F)
            s["front.b"] = (F,)
        s["proj.w"] = (cfg.side * cfg.side, F)
        s["proj.b"] = (cfg.side * cfg.side,)
        ch = cfg.channels
        s["stem.w"] = (ch[0], 1, 3, 3)
        s["stem.b"] = (ch[0],)
        for i in range(cfg.depth):
            a, b = ch[i], ch[i + 1]
            s[f"down{i}.a.w"] = (b, a, 3, 3)
            s[f"down{i}.a.b"] = (b,)
            s[f"down{i}.b.w"] = (b, b, 3, 3)
            s[f"down{i}.b.b"] = (b,)
            s[f"down{i}.skip.w"] = (b, a, 1, 1)
            s[f"down{i}.skip.b"] = (b,)
        for i in range(cfg.depth):
            a, b = ch[cfg.depth - i], ch[cfg.depth - i - 1]
            s[f"up{i}.a.w"] = (b, a, 3, 3)
            s[f"up{i}.a.b"] = (b,)
            s[f"up{i}.b.w"] = (b, b, 3, 3)
            s[f"up{i}.b.b"] = (b,)
            s[f"up{i}.skip.w"] = (b, a, 1, 1)
            s[f"up{i}.skip.b"] = (b,)
        s["out.w"] = (1, ch[0], 3, 3)
        s["out.b"] = (1,)
        return s

    # -- parameters -------------------------------------------------------

    def init(self, seed) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.shapes.items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            elif len(shape) == 2:
                params[name] = xavier(rng, shape, shape[1], shape[0])
            else:
                rf = shape[2] * shape[3]
                params[name] = xavier(rng, shape, shape[1] * rf, shape[0] * rf)
        return params

    def zeros(self) -> dict[str, np.ndarray]:
        return {k: np.zeros(v) for k, v in self.shapes.items()}

    def param_count(self, prefix: str | None = None) -> int:
        return int(sum(np.prod(v) for k, v in self.shapes.items()
                       if prefix is None or k.startswith(prefix)))

    def trunk_param_count(self) -> int:
        return int(sum(np.prod(v) for k, v in self.shapes.items()
                       if not k.startswith(("front.", "proj."))))

    def check(self, params: dict[str, np.ndarray]) -> None:
        for k, shape in self.shapes.items():
            if k not in params or params[k].shape != shape:
                raise ValueError(f"parameter {k!r} missing or not shaped {shape}")

    # -- forward / backward ----------------------------------------------

    def forward(self, params: dict[str, np.ndarray], features) -> tuple[np.ndarray, dict]:
        """Image of shape ``(side, side)`` in ``[0, 1]`` and the backward cache."""
        cfg = self.config
        x = np.asarray(features, dtype=float)
        if x.shape != (cfg.feature_len,):
            raise ValueError(f"expected {cfg.feature_len} features, got shape {x.shape}")
        cache: dict = {"features": x}
        if cfg.front:
            pre = params["front.w"] @ x + params["front.b"]
            cache["front.pre"] = pre
            x = leaky_relu(pre)
        cache["proj.in"] = x
        pre = params["proj.w"] @ x + params["proj.b"]
        cache["proj.pre"] = pre
        h = leaky_relu(pre).reshape(1, cfg.side, cfg.side)

        h = self._conv_act(params, "stem", h, 1, cache)
        for i in range(cfg.depth):
            h = self._block(params, f"down{i}", h, 2, cache, up=False)
        for i in range(cfg.depth):
            h = self._block(params, f"up{i}", h, 1, cache, up=True)
        pre, cache["out"] = _conv_forward(h, params["out.w"], params["out.b"], 1)
        y = sigmoid(pre[0])
        cache["y"] = y
        cache["logit"] = pre[0]
        return y, cache

    def _conv_act(self, params, name, x, stride, cache):
        pre, cache[name] = _conv_forward(x, params[name + ".w"], params[name + ".b"], stride)
        cache[name + ".pre"] = pre
        return leaky_relu(pre)

    def _block(self, params, name, x, stride, cache, up):
        if up:
            x = _upsample(x)
        a = self._conv_act(params, name + ".a", x, stride, cache)
        b, cache[name + ".b"] = _conv_forward(a, params[name + ".b.w"],
                                              params[name + ".b.b"], 1)
        s, cache[name + ".skip"] = _conv_forward(x, params[name + ".skip.w"],
                                                 params[name + ".skip.b"], stride)
        pre = b + s
        cache[name + ".pre"] = pre
        return leaky_relu(pre)

    def backward(self, params, cache, output_grad) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Return ``(feature_grad, param_grads)`` for ``d loss / d image``."""
        if not cache or "y" not in cache:
            raise ValueError("backward needs the cache of a matching forward pass")
        cfg = self.config
        g = np.asarray(output_grad, dtype=float)
        if g.shape != (cfg.side, cfg.side):
            raise ValueError("output_grad must match the image shape")
        grads: dict[str, np.ndarray] = {}
        g = (g * sigmoid_grad(cache["logit"]))[None]
        g, grads["out.w"], grads["out.b"] = _conv_backward(g, params["out.w"], cache["out"])
        for i in reversed(range(cfg.depth)):
            g = self._block_backward(params, f"up{i}", g, cache, grads, up=True)
        for i in reversed(range(cfg.depth)):
            g = self._block_backward(params, f"down{i}", g, cache, grads, up=False)
        g = g * leaky_relu_grad(cache["stem.pre"])
        g, grads["stem.w"], grads["stem.b"] = _conv_backward(g, params["stem.w"], cache["stem"])
        g = g.reshape(-1) * leaky_relu_grad(cache["proj.pre"])
        grads["proj.w"] = np.outer(g, cache["proj.in"])
        grads["proj.b"] = g
        g = params["proj.w"].T @ g
        if cfg.front:
            g = g * leaky_relu_grad(cache["front.pre"])
            grads["front.w"] = np.outer(g, cache["features"])
            grads["front.b"] = g
            g = params["front.w"].T @ g
        return g, {k: grads[k] for k in self.shapes}

    def _block_backward(self, params, name, g, cache, grads, up):
        g = g * leaky_relu_grad(cache[name + ".pre"])
        gs, grads[name + ".skip.w"], grads[name + ".skip.b"] = _conv_backward(
            g, params[name + ".skip.w"], cache[name + ".skip"])
        ga, grads[name + ".b.w"], grads[name + ".b.b"] = _conv_backward(
            g, params[name + ".b.w"], cache[name + ".b"])
        ga = ga * leaky_relu_grad(cache[name + ".a.pre"])
        gx, grads[name + ".a.w"], grads[name + ".a.b"] = _conv_backward(
            ga, params[name + ".a.w"], cache[name + ".a"])
        gx = gx + gs
        return _upsample_backward(gx) if up else gx


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments; ``lr_overrides`` maps parameter names to their own step size."""

    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    lr_overrides: dict[str, float] = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], lr: float = 0.05, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              lr_overrides: dict[str, float] | None = None) -> AdamState:
    return AdamState(lr, beta1, beta2, eps, 0,
                     {k: np.zeros_like(v) for k, v in params.items()},
                     {k: np.zeros_like(v) for k, v in params.items()},
                     dict(lr_overrides or {}))


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], scale: float = 1.0
              ) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched.

    ``scale`` multiplies every step size for this update only (warmup).
    """
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k!r} has shape {g.shape}, expected {p.shape}")
        m = b1 * state.m.get(k, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(k, np.zeros_like(p)) + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        lr = scale * state.lr_overrides.get(k, state.lr)
        new_params[k] = p - lr * mhat / (np.sqrt(vhat) + state.eps)
        m_new[k], v_new[k] = m, v
    return new_params, AdamState(state.lr, b1, b2, state.eps, t, m_new, v_new,
                                 state.lr_overrides)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"GQCK"


def save_checkpoint(path, params: dict[str, np.ndarray], header: dict | None = None) -> None:
    """Write ``MAGIC | u64 header length | JSON header | float64 LE blocks``."""
    head = dict(header or {})
    head["params"] = [[k, list(v.shape)] for k, v in params.items()]
    blob = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for v in params.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", data[4:12])
    head = json.loads(data[12:12 + n])
    offset = 12 + n
    params = {}
    for name, shape in head["params"]:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, "<f8", count, offset).reshape(shape).copy()
        offset += 8 * count
    if offset != len(data):
        raise ValueError("checkpoint has trailing bytes")
    return params, head
