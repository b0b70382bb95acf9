"""Reconstruct the 32x32 glyph from 256 bucket values with three methods.

Differential ghost imaging is a one-shot correlation, TV compressive sensing
solves a regularized inverse problem, and the hybrid network fits an
untrained quantum front end plus decoder to the measured buckets alone.

    python3 demos/reconstruct_glyph.py [out_dir]
"""

import sys
import time
from pathlib import Path

from ghostqc import imaging, qcsgi
from ghostqc.fixtures import glyph
from ghostqc.qcircuit import CircuitSpec

SIDE, M = 32, 256

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-glyph")
out.mkdir(parents=True, exist_ok=True)

truth = glyph(SIDE)
patterns = imaging.generate_patterns(M, SIDE, SIDE, seed=1)
buckets = imaging.forward_buckets(patterns, truth)
print(f"{M} buckets for {SIDE * SIDE} pixels (sampling ratio {M / SIDE**2:.2f})")

images = {
    "dgi": imaging.correlation_gi(patterns, buckets),
    "tvcs": imaging.tvcs_reconstruct(patterns, buckets),
}

# 8-qubit patches, 3 layers; 32 patches cover the 256 buckets
model = qcsgi.build_model(M, SIDE, CircuitSpec(qubits=8, layers=3), seed=0)


def progress(t, ev):
    if t % 50 == 0:
        print(f"  iter {t:4d} loss {ev.value:.4g}")


t0 = time.perf_counter()
report = qcsgi.train(model, buckets, patterns, qcsgi.TrainConfig(max_iterations=300),
                     truth=truth, callback=progress)
print(f"hybrid: {report.iterations} iterations in {time.perf_counter() - t0:.0f} s, "
      f"stop={report.stop_reason}")
images["hybrid"] = report.image

imaging.write_pgm(out / "truth.pgm", truth)
for name, img in images.items():
    img = imaging.rescale(img)
    imaging.write_pgm(out / f"{name}.pgm", img)
    score = f"PSNR {imaging.psnr(img, truth):6.2f} dB   SSIM {imaging.ssim(img, truth):.3f}"
    print(f"{name:>7}: {score}")
print(f"images written to {out}/")
