"""Ghost-imaging physics, classical reconstructions, metrics and file formats."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PatternSet",
    "BucketSignals",
    "TvCsConfig",
    "check_image",
    "generate_patterns",
    "forward_buckets",
    "dsnr",
    "sigma_from_dsnr",
    "add_detection_noise",
    "correlation_gi",
    "rescale",
    "tv_norm",
    "tv_gradient",
    "tvcs_reconstruct",
    "psnr",
    "ssim",
    "gaussian_window",
    "write_pgm",
    "read_pgm",
    "write_csv",
    "read_csv",
    "read_image",
    "PSNR_CAP",
]

PSNR_CAP = 100.0


def check_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("an image is a non-empty 2-D array")
    if np.any(img < 0) or np.any(img > 1) or not np.all(np.isfinite(img)):
        raise ValueError("image values must lie in [0, 1]")
    return img


@dataclass(frozen=True)
class PatternSet:
    """Binary illumination patterns, one flattened row per measurement."""

    values: np.ndarray
    height: int
    width: int
    seed: int | None = None

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self.values.astype(float)


@dataclass(frozen=True)
class BucketSignals:
    values: np.ndarray
    sigma: float = 0.0
    dsnr: float | None = None

    @property
    def M(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TvCsConfig:
    mu: float = 1e-6
    iterations: int = 2000
    learning_rate: float | None = None  # None: 1 / ||H||_2^2

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("TV weight must be nonnegative")


def generate_patterns(M: int, height: int, width: int, seed) -> PatternSet:
    if M < 1:
        raise ValueError("need at least one pattern")
    if height < 1 or width < 1:
        raise ValueError("pattern grid must be non-empty")
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 2, size=(M, height * width), dtype=np.uint8)
    return PatternSet(vals, height, width, seed if isinstance(seed, int) else None)


def forward_buckets(patterns: PatternSet, image) -> BucketSignals:
    img = np.asarray(image, dtype=float)
    if img.size != patterns.N:
        raise ValueError(f"image has {img.size} pixels, patterns have {patterns.N}")
    return BucketSignals(patterns.matrix @ img.reshape(-1))


def dsnr(mean_bucket: float, sigma: float) -> float:
    """Detection SNR in dB, ``10 log10(<I> / sigma)``."""
    return 10.0 * np.log10(mean_bucket / sigma)


def sigma_from_dsnr(mean_bucket: float, dsnr_db: float) -> float:
    if not mean_bucket > 0:
        raise ValueError("mean bucket value must be positive")
    return float(mean_bucket / 10.0 ** (dsnr_db / 10.0))


def add_detection_noise(buckets: BucketSignals, sigma: float, seed) -> BucketSignals:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    vals = np.asarray(buckets.values, dtype=float)
    if sigma == 0:
        return BucketSignals(vals.copy(), 0.0, None)
    rng = np.random.default_rng(seed)
    noisy = vals + rng.normal(0.0, sigma, size=vals.shape)
    mean = float(np.mean(vals))
    return BucketSignals(noisy, float(sigma), dsnr(mean, sigma) if mean > 0 else None)


def rescale(image) -> np.ndarray:
    """Min-max map to ``[0, 1]``; a constant image maps to zeros."""
    img = np.asarray(image, dtype=float)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def correlation_gi(patterns: PatternSet, buckets, raw: bool = False) -> np.ndarray:
    """Covariance of bucket values with each pixel's illumination.

    Returns the min-max rescaled image, or the raw covariance if ``raw``.
    """
    I = np.asarray(getattr(buckets, "values", buckets), dtype=float)
    if patterns.M < 2:
        raise ValueError("correlation imaging needs at least two patterns")
    if len(I) != patterns.M:
        raise ValueError("one bucket value per pattern required")
    H = patterns.matrix
    dI = I - I.mean()
    dH = H - H.mean(axis=0)
    out = (dI @ dH / patterns.M).reshape(patterns.height, patterns.width)
    return out if raw else rescale(out)


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------


def tv_norm(image) -> float:
    """Anisotropic TV: sum of absolute forward differences.

    The difference past the last row / column is zero, so constant images
    have zero TV.
    """
    img = np.asarray(image, dtype=float)
    return float(np.abs(np.diff(img, axis=1)).sum() + np.abs(np.diff(img, axis=0)).sum())


def tv_gradient(image) -> np.ndarray:
    """Subgradient of :func:`tv_norm`, using ``sign(0) = 0``."""
    img = np.asarray(image, dtype=float)
    g = np.zeros_like(img)
    sx = np.sign(np.diff(img, axis=1))
    sy = np.sign(np.diff(img, axis=0))
    g[:, 1:] += sx
    g[:, :-1] -= sx
    g[1:, :] += sy
    g[:-1, :] -= sy
    return g


def tvcs_reconstruct(patterns: PatternSet, buckets,
                     config: TvCsConfig = TvCsConfig()) -> np.ndarray:
    """Projected gradient descent on ``0.5||I - H O||^2 + mu TV(O)`` over ``O in [0,1]``."""
    I = np.asarray(getattr(buckets, "values", buckets), dtype=float)
    H = patterns.matrix
    shape = (patterns.height, patterns.width)
    lr = config.learning_rate
    if lr is None:
        lr = 1.0 / np.linalg.norm(H, 2) ** 2
    O = np.full(shape, 0.5)
    best, best_loss = O.copy(), np.inf
    for _ in range(config.iterations):
        r = H @ O.reshape(-1) - I
        loss = 0.5 * r @ r + config.mu * tv_norm(O)
        if loss < best_loss:
            best, best_loss = O.copy(), loss
        g = (H.T @ r).reshape(shape) + config.mu * tv_gradient(O)
        O = np.clip(O - lr * g, 0.0, 1.0)
    r = H @ O.reshape(-1) - I
    if 0.5 * r @ r + config.mu * tv_norm(O) < best_loss:
        best = O
    return best


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(img, w):
    k = w.shape[0]
    win = sliding_window_view(img, (k, k))
    return np.einsum("ijkl,kl->ij", win, w)


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
         k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully contained Gaussian windows."""
    a, b = _same_shape(a, b)
    if min(a.shape) < window:
        raise ValueError(f"images must be at least {window}x{window} for SSIM")
    w = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a**2
    var_b = _filter_valid(b * b, w) - mu_b**2
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def write_pgm(path, image) -> None:
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    h, w = img.shape
    data = np.round(img * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM files are supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM files are supported")
    pos += 1
    data = np.frombuffer(raw, np.uint8, w * h, pos).reshape(h, w)
    return data / maxval


def write_csv(path, array) -> None:
    """Row-major floats with 17 significant digits, so values round-trip exactly."""
    arr = np.atleast_1d(np.asarray(array, dtype=float))
    with open(path, "w") as f:
        if arr.ndim == 1:
            f.writelines(f"{v:.17g}\n" for v in arr)
        else:
            f.writelines(",".join(f"{v:.17g}" for v in row) + "\n" for row in arr)


def read_csv(path) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    data = [[float(v) for v in r.split(",")] for r in rows]
    if all(len(r) == 1 for r in data):
        return np.array([r[0] for r in data])
    return np.array(data)


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    img = read_csv(path)
    if img.ndim != 2:
        raise ValueError(f"{path}: image CSV must have one row per image row")
    return check_image(img)
