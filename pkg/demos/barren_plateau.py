"""Gradient variance of the hybrid loss over random circuit initializations.

For each (qubits, layers) cell the first local angle and the first
entangling angle of the first patch are differentiated over independent
random draws.  An exponential decay with qubit count would indicate a barren
plateau; the decoder and the bucket loss set the overall scale.

    python3 demos/barren_plateau.py [trials]
"""

import sys
import time

from ghostqc.qcsgi import bp_variance_experiment

QUBITS, LAYERS = [4, 6, 8], [2, 5, 10]
trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20

t0 = time.perf_counter()
result = bp_variance_experiment(QUBITS, LAYERS, trials=trials, seed=0)
print(f"{trials} trials per cell, {time.perf_counter() - t0:.0f} s")
for key in ("local", "entangle"):
    print(f"\nVar[dL/dtheta] for the {key} angle (rows: layers, columns: qubits)")
    print("        " + "".join(f"{n:>11d}" for n in QUBITS))
    for L, row in zip(LAYERS, result[key]):
        print(f"L={L:<5d} " + "".join(f"{v:11.3e}" for v in row))
