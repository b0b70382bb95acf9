"""Command-line experiment drivers.

Every command reads one JSON experiment config, writes its artifacts into an
output directory and finishes by atomically writing ``manifest.json`` with a
config echo and a SHA-256 hash for every emitted file.

Exit codes: 0 success, 2 config error, 3 input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, imaging
from .fixtures import OBJECTS, make_object
from .qcircuit import CircuitSpec, NoiseSpec
from .qcsgi import TrainConfig, bp_variance_experiment, build_model, image_metrics, train

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))
_OPT_STR = (str, type(None))

# section -> key -> (accepted types, default)
SCHEMA: dict[str, dict[str, tuple[tuple, object]]] = {
    "object": {
        "source": ((str,), "glyph"),
        "side": ((int,), 32),
    },
    "data": {
        "patterns": (_OPT_STR, None),
        "buckets": (_OPT_STR, None),
    },
    "patterns": {
        "M": ((int,), 256),
        "seed": ((int,), 1),
    },
    "detection": {
        "dsnr": (_OPT_NUM, None),
        "sigma": (_NUM, 0.0),
        "seed": ((int,), 2),
    },
    "model": {
        "encoding": ((str,), "angle_reupload"),
        "qubits_per_patch": ((int,), 16),
        "layers": ((int,), 5),
        "entangler": ((str,), "cz_fixed"),
        "topology": ((str,), "linear"),
        "sharing": ((str,), "independent_params"),
        "trainable_weights": ((bool,), False),
        "trotter_steps": ((int,), 3),
        "evolution_time": (_OPT_NUM, None),
        "init_scale": (_NUM, 0.1),
        "seed": ((int,), 0),
    },
    "quantum_noise": {
        "kind": ((str,), "depolarizing"),
        "rate": (_NUM, 0.0),
    },
    "train": {
        "T": ((int,), 1000),
        "epsilon": (_NUM, 0.0),
        "grad_epsilon": (_NUM, 0.0),
        "alpha": (_NUM, 0.05),
        "classical_alpha": (_OPT_NUM, 0.003),
        "mu": (_NUM, 1e-6),
        "gain": ((bool,), True),
        "backend": ((str,), "auto"),
        "noise_seed": ((int,), 0),
    },
    "tvcs": {
        "mu": (_NUM, 1e-6),
        "iterations": ((int,), 2000),
        "learning_rate": (_OPT_NUM, None),
    },
    "sweep": {
        "seeds": ((list,), [0]),
    },
    "bp_variance": {
        "qubits": ((list,), [4, 8, 12]),
        "layers": ((list,), [5, 20, 50]),
        "trials": ((int,), 100),
        "side": ((int,), 32),
        "measurements": ((int, type(None)), 256),
        "encoding": ((str,), "angle_reupload"),
        "entangler": ((str,), "rzz_parameterized"),
        "seed": ((int,), 0),
    },
}
_TOP_LEVEL = {"output": (_OPT_STR, None)}


def default_config() -> dict:
    cfg = {s: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for s, keys in SCHEMA.items()}
    cfg["quantum_noise"] = None
    cfg["output"] = None
    return cfg


def _check_type(where: str, value, types: tuple) -> None:
    # bool is an int subclass; keep the two apart
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{where}: expected {_names(types)}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{where}: expected {_names(types)}, got {type(value).__name__}")


def _names(types: tuple) -> str:
    return " or ".join("null" if t is type(None) else t.__name__ for t in types)


def validate_config(raw: dict) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown keys and bad types."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = default_config()
    for section, value in raw.items():
        if section in _TOP_LEVEL:
            _check_type(section, value, _TOP_LEVEL[section][0])
            cfg[section] = value
            continue
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if section == "object" and isinstance(value, str):
            value = {"source": value}
        if section == "quantum_noise" and value is None:
            cfg[section] = None
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section {section!r} must be an object")
        merged = {k: copy.deepcopy(v[1]) for k, v in SCHEMA[section].items()}
        for key, v in value.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            _check_type(f"{section}.{key}", v, SCHEMA[section][key][0])
            merged[key] = v
        cfg[section] = merged
    _semantic_checks(cfg)
    cfg["_explicit"] = sorted(k for k in raw if k in SCHEMA)
    return cfg


def _semantic_checks(cfg: dict) -> None:
    try:
        TrainConfig(**_train_kwargs(cfg))
        _circuit_spec(cfg)
        if cfg["patterns"]["M"] < 1:
            raise ValueError("patterns.M must be >= 1")
        if cfg["object"]["side"] < 2:
            raise ValueError("object.side must be >= 2")
        if cfg["detection"]["sigma"] < 0:
            raise ValueError("detection.sigma must be >= 0")
        if not cfg["sweep"]["seeds"] or not all(isinstance(s, int) for s in cfg["sweep"]["seeds"]):
            raise ValueError("sweep.seeds must be a nonempty list of integers")
        bp = cfg["bp_variance"]
        for key in ("qubits", "layers"):
            if not bp[key] or not all(isinstance(v, int) and v >= 1 for v in bp[key]):
                raise ValueError(f"bp_variance.{key} must be a nonempty list of positive integers")
        if bp["trials"] < 1:
            raise ValueError("bp_variance.trials must be >= 1")
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | None) -> dict:
    if path is None:
        return validate_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(raw)


def _train_kwargs(cfg: dict) -> dict:
    t = cfg["train"]
    return dict(max_iterations=t["T"], mse_threshold=float(t["epsilon"]),
                grad_threshold=float(t["grad_epsilon"]), learning_rate=float(t["alpha"]),
                classical_learning_rate=t["classical_alpha"], mu=float(t["mu"]),
                gain_calibration=t["gain"], backend=t["backend"], noise_seed=t["noise_seed"])


def _circuit_spec(cfg: dict) -> CircuitSpec:
    m = cfg["model"]
    noise = cfg["quantum_noise"]
    if noise is not None and noise["rate"] > 0:
        noise = NoiseSpec(noise["kind"], float(noise["rate"]))
    else:
        noise = None
    if m["sharing"] not in ("independent_params", "shared_params"):
        raise ValueError(f"unknown sharing mode {m['sharing']!r}")
    return CircuitSpec(m["encoding"], qubits=m["qubits_per_patch"], layers=m["layers"],
                       entangler=m["entangler"], topology=m["topology"],
                       trotter_steps=m["trotter_steps"], evolution_time=m["evolution_time"],
                       noise=noise)


def apply_seed(cfg: dict, seed: int | None) -> dict:
    """Override every seed in the config from one root seed."""
    if seed is None:
        return cfg
    cfg = copy.deepcopy(cfg)
    cfg["patterns"]["seed"] = seed
    cfg["detection"]["seed"] = seed + 1
    cfg["model"]["seed"] = seed
    cfg["train"]["noise_seed"] = seed
    cfg["sweep"]["seeds"] = [seed]
    cfg["bp_variance"]["seed"] = seed
    return cfg


def config_echo(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_manifest(out: Path, command: str, cfg: dict, files: list[Path], timings: dict,
                   extra: dict | None = None) -> Path:
    """Hash every artifact and atomically write ``manifest.json`` into ``out``."""
    manifest = {
        "tool": "ghostqc",
        "version": __version__,
        "command": command,
        "config": config_echo(cfg),
        "files": [
            {"path": str(p.relative_to(out)), "sha256": sha256_file(p), "bytes": p.stat().st_size}
            for p in sorted(files)
        ],
        "timings": timings,
    }
    if extra:
        manifest.update(extra)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".manifest.", suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    target = out / "manifest.json"
    os.replace(tmp, target)
    return target


def _out_dir(cfg: dict, out: str | None, default: str) -> Path:
    path = Path(out or cfg.get("output") or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def load_truth(cfg: dict) -> np.ndarray:
    source, side = cfg["object"]["source"], cfg["object"]["side"]
    if source in OBJECTS:
        return make_object(source, side)
    try:
        return imaging.read_image(source)
    except FileNotFoundError:
        raise InputError(f"object image {source} not found") from None
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read object image {source}: {exc}") from None


def simulate_data(cfg: dict, truth: np.ndarray):
    """Patterns plus (possibly noisy) buckets, and the noise level used."""
    p = cfg["patterns"]
    h, w = truth.shape
    patterns = imaging.generate_patterns(p["M"], h, w, p["seed"])
    clean = imaging.forward_buckets(patterns, truth)
    d = cfg["detection"]
    if d["dsnr"] is not None:
        mean = float(np.mean(clean.values))
        if mean <= 0:
            raise InputError("dSNR needs a positive mean bucket value")
        sigma = imaging.sigma_from_dsnr(mean, float(d["dsnr"]))
    else:
        sigma = float(d["sigma"])
    noisy = imaging.add_detection_noise(clean, sigma, d["seed"])
    return patterns, noisy, sigma


def load_data(cfg: dict, truth: np.ndarray):
    """Patterns/buckets from the ``data`` files when given, else simulated."""
    d = cfg["data"]
    if d["patterns"] is None and d["buckets"] is None:
        return simulate_data(cfg, truth)
    if d["patterns"] is None or d["buckets"] is None:
        raise ConfigError("data.patterns and data.buckets must be given together")
    try:
        H = imaging.read_csv(d["patterns"])
        I = np.atleast_1d(imaging.read_csv(d["buckets"]))
    except FileNotFoundError as exc:
        raise InputError(f"missing input file: {exc.filename}") from None
    except ValueError as exc:
        raise InputError(f"malformed input CSV: {exc}") from None
    h, w = truth.shape
    if H.ndim == 1:
        # a one-column file reads back as a vector
        H = H.reshape(-1, 1) if h * w == 1 else H[None]
    if H.shape[1] != h * w:
        raise InputError(f"patterns have {H.shape[1]} pixels, object has {h * w}")
    if I.ndim != 1 or len(I) != H.shape[0]:
        raise InputError(f"{len(I)} buckets for {H.shape[0]} patterns")
    if not np.all((H == 0) | (H == 1)):
        raise InputError("patterns must be binary")
    patterns = imaging.PatternSet(H.astype(np.uint8), h, w, -1)
    return patterns, imaging.BucketSignals(I, float("nan"), float("nan")), float("nan")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out: Path) -> dict:
    t0 = time.perf_counter()
    truth = load_truth(cfg)
    patterns, buckets, sigma = simulate_data(cfg, truth)
    files = [out / "patterns.csv", out / "buckets.csv", out / "truth.csv", out / "truth.pgm"]
    imaging.write_csv(files[0], patterns.values)
    imaging.write_csv(files[1], buckets.values)
    imaging.write_csv(files[2], truth)
    imaging.write_pgm(files[3], truth)
    clean_mean = float(np.mean(imaging.forward_buckets(patterns, truth).values))
    info = {"sigma": sigma, "mean_bucket": clean_mean,
            "dsnr": imaging.dsnr(clean_mean, sigma) if sigma > 0 else None}
    write_manifest(out, "simulate", cfg, files, {"total": time.perf_counter() - t0},
                   {"simulation": info})
    return info


def reconstruct(cfg: dict, method: str, truth, patterns, buckets,
                log=print) -> tuple[np.ndarray, dict]:
    """Run one reconstruction; returns ``(image, report_dict)``."""
    I = buckets.values
    if method in ("dgi", "tvcs"):
        if "train" in cfg.get("_explicit", ()):
            warnings.warn(f"method {method} ignores the train section", stacklevel=2)
        if method == "dgi":
            if len(I) < 2:
                raise InputError("correlation imaging needs at least 2 measurements")
            # raw covariance; the PGM and the metrics use the rescaled image
            image = imaging.correlation_gi(patterns, I, raw=True)
        else:
            t = cfg["tvcs"]
            image = imaging.tvcs_reconstruct(
                patterns, I, imaging.TvCsConfig(mu=float(t["mu"]), iterations=t["iterations"],
                                                learning_rate=t["learning_rate"]))
        return image, {"method": method}
    if method not in ("qcsgi", "cnn"):
        raise ConfigError(f"unknown method {method!r}")
    h, w = truth.shape
    if h != w:
        raise InputError("the decoder needs a square image")
    m = cfg["model"]
    spec = _circuit_spec(cfg) if method == "qcsgi" else None
    model = build_model(len(I), h, spec, sharing=m["sharing"],
                        trainable_weights=m["trainable_weights"],
                        init_scale=float(m["init_scale"]), seed=m["seed"])
    counts = {"quantum": model.quantum_param_count(), "classical": model.classical_param_count(),
              "trunk": model.net.trunk_param_count()}
    if method == "cnn":
        counts["substitute"] = model.net.param_count("front")
        counts["projection"] = model.net.param_count("proj")
        log(f"parameters: substitute {counts['substitute']} + projection "
            f"{counts['projection']} + trunk {counts['trunk']} = {counts['classical']}")
    else:
        log(f"parameters: quantum {counts['quantum']} + classical {counts['classical']}")
    report = train(model, I, patterns, TrainConfig(**_train_kwargs(cfg)), truth=truth)
    d = report.to_dict()
    d["wall_time"] = None  # timings live in the manifest so artifacts hash reproducibly
    d["method"] = method
    d["param_counts"] = counts
    d["loss_trace_sha256"] = loss_trace_hash(report.losses)
    return report.image, d | {"_wall_time": report.wall_time}


def loss_trace_hash(losses) -> str:
    """Hash of the loss trace rounded to 10 significant digits."""
    text = "\n".join(f"{v:.10g}" for v in losses)
    return hashlib.sha256(text.encode()).hexdigest()


def cmd_reconstruct(cfg: dict, method: str, out: Path, log=print) -> dict:
    t0 = time.perf_counter()
    truth = load_truth(cfg)
    patterns, buckets, sigma = load_data(cfg, truth)
    image, report = reconstruct(cfg, method, truth, patterns, buckets, log)
    train_time = report.pop("_wall_time", None)
    metrics = image_metrics(image, truth)
    report["metrics"] = metrics
    files = [out / "image.pgm", out / "image.csv", out / "metrics.json", out / "report.json"]
    imaging.write_pgm(files[0], imaging.rescale(image))
    imaging.write_csv(files[1], image)
    _write_json(files[2], metrics)
    _write_json(files[3], report)
    timings = {"total": time.perf_counter() - t0}
    if train_time is not None:
        timings["train"] = train_time
    write_manifest(out, f"reconstruct --method {method}", cfg, files, timings,
                   {"sigma": sigma})
    log(json.dumps(metrics))
    return {"metrics": metrics, "sigma": sigma, "report": report}


SWEEP_AXES = ("measurements", "dsnr", "quantum_noise")


def _sweep_cell(args):
    cfg, method, out, axis, value, seed = args
    cell = apply_seed(cfg, seed)
    cell["sweep"]["seeds"] = cfg["sweep"]["seeds"]
    if axis == "measurements":
        cell["patterns"]["M"] = int(value)
    elif axis == "dsnr":
        cell["detection"]["dsnr"] = float(value)
    else:
        kind = (cfg["quantum_noise"] or {}).get("kind", "depolarizing")
        cell["quantum_noise"] = {"kind": kind, "rate": float(value)}
    _semantic_checks(cell)
    out.mkdir(parents=True, exist_ok=True)
    res = cmd_reconstruct(cell, method, out, log=lambda *a: None)
    rep = res["report"]
    return {"axis": axis, "value": value, "seed": seed, "sigma": res["sigma"],
            "psnr": res["metrics"]["psnr"], "ssim": res["metrics"].get("ssim"),
            "stop_reason": rep.get("stop_reason"), "iterations": rep.get("iterations"),
            "cell": out.name}


def cmd_sweep(cfg: dict, method: str, axis: str, values: list[float], out: Path,
              threads: int = 1, log=print) -> list[dict]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if axis == "quantum_noise" and method != "qcsgi":
        raise ConfigError("the quantum_noise axis only applies to method qcsgi")
    t0 = time.perf_counter()
    jobs = []
    for value in values:
        for seed in cfg["sweep"]["seeds"]:
            name = f"{axis}_{value:g}_seed{seed}"
            jobs.append((cfg, method, out / name, axis, value, seed))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]
    for r in rows:
        log(f"{axis}={r['value']:g} seed={r['seed']} psnr={r['psnr']:.3f} "
            f"ssim={r['ssim'] if r['ssim'] is None else round(r['ssim'], 4)}")
    table_csv, table_json = out / "sweep.csv", out / "sweep.json"
    fields = ["axis", "value", "seed", "sigma", "psnr", "ssim", "stop_reason", "iterations", "cell"]
    with open(table_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    _write_json(table_json, rows)
    files = [table_csv, table_json]
    for j in jobs:
        files.extend(p for p in j[2].iterdir() if p.is_file())
    write_manifest(out, f"sweep --axis {axis}", cfg, files,
                   {"total": time.perf_counter() - t0},
                   {"method": method, "values": values})
    return rows


def cmd_bp_variance(cfg: dict, out: Path, log=print) -> dict:
    t0 = time.perf_counter()
    bp = cfg["bp_variance"]
    result = bp_variance_experiment(
        bp["qubits"], bp["layers"], bp["trials"], bp["seed"], side=bp["side"],
        measurements=bp["measurements"], encoding=bp["encoding"], entangler=bp["entangler"],
        mu=float(cfg["train"]["mu"]), gain=cfg["train"]["gain"])
    for key in ("local", "entangle"):
        if not np.all(np.isfinite(result[key]) | np.isnan(result[key])):
            raise FloatingPointError(f"non-finite {key} variance")
    files = [out / "bp_local.csv", out / "bp_entangle.csv", out / "bp_variance.json"]
    imaging.write_csv(files[0], np.atleast_2d(result["local"]))
    imaging.write_csv(files[1], np.atleast_2d(result["entangle"]))
    _write_json(files[2], result | {
        "local": result["local"].tolist(),
        "entangle": [[None if math.isnan(x) else x for x in row] for row in result["entangle"]],
        "rows": "layers", "columns": "qubits"})
    write_manifest(out, "bp-variance", cfg, files, {"total": time.perf_counter() - t0})
    log(f"local variance (rows=layers {bp['layers']}, cols=qubits {bp['qubits']}):")
    for L, row in zip(bp["layers"], result["local"]):
        log(f"  L={L}: " + " ".join(f"{v:.3e}" for v in row))
    return result


def cmd_metrics(path_a: str, path_b: str, out: Path | None, log=print) -> dict:
    try:
        a, b = imaging.read_image(path_a), imaging.read_image(path_b)
    except FileNotFoundError as exc:
        raise InputError(f"missing image: {exc.filename}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    result = {"psnr": imaging.psnr(a, b)}
    if min(a.shape) >= 11:
        result["ssim"] = imaging.ssim(a, b)
    log(json.dumps(result))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "metrics.json"
        _write_json(path, result)
        write_manifest(out, "metrics", {"inputs": [str(path_a), str(path_b)]}, [path], {})
    return result


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("GHOSTQC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GHOSTQC_THREADS must be an integer, got {env!r}") from None
    return 1


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostqc", description="Hybrid quantum-classical ghost-imaging experiments.")
    parser.add_argument("--version", action="version", version=f"ghostqc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config",
                       help="experiment config JSON" if needs_config else argparse.SUPPRESS)
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="root seed overriding every config seed")
        p.add_argument("--threads", type=int, help="worker processes (env GHOSTQC_THREADS)")

    common(sub.add_parser("simulate", help="write patterns and bucket signals"))
    p = sub.add_parser("reconstruct", help="reconstruct an image from buckets")
    common(p)
    p.add_argument("--method", default="qcsgi", choices=("qcsgi", "cnn", "dgi", "tvcs"))
    p = sub.add_parser("sweep", help="reconstruct over a parameter axis")
    common(p)
    p.add_argument("--method", default="qcsgi", choices=("qcsgi", "cnn", "dgi", "tvcs"))
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    common(sub.add_parser("bp-variance", help="gradient variance over random initializations"))
    p = sub.add_parser("metrics", help="PSNR/SSIM between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--out", help="directory for metrics.json")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            cmd_metrics(args.image_a, args.image_b, Path(args.out) if args.out else None)
            return EXIT_OK
        cfg = apply_seed(load_config(args.config), args.seed)
        threads = _threads(args.threads)
        if args.command == "simulate":
            cmd_simulate(cfg, _out_dir(cfg, args.out, "ghostqc-simulate"))
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, args.method, _out_dir(cfg, args.out, "ghostqc-reconstruct"))
        elif args.command == "sweep":
            cmd_sweep(cfg, args.method, args.axis, _parse_values(args.values),
                      _out_dir(cfg, args.out, "ghostqc-sweep"), threads)
        else:
            cmd_bp_variance(cfg, _out_dir(cfg, args.out, "ghostqc-bp-variance"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
