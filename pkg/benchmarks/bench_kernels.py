"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py

Run without FEDUAF_NO_NUMBA so both kernel sets are importable; the script
times each kernel on training-shaped inputs and then compares a full small
simulation under each backend via subprocesses (the backend is chosen at
import time, so end-to-end needs a fresh interpreter per backend).
"""

import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from feduaf import kernels
from feduaf.rng import Rng

REPEAT = 200


def time_call(fn, *args, repeat=REPEAT):
    fn(*args)  # warmup (jit compile / cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append((time.perf_counter() - t0) * 1e6)
    return np.mean(times), np.std(times)


def kernel_benchmarks():
    if kernels.NUMBA_KERNELS is None:
        print("numba kernels unavailable (FEDUAF_NO_NUMBA set or numba missing); "
              "nothing to compare")
        return
    rng = Rng(0)
    batch = rng.normal(size=(32, 128))           # training batch preacts
    probe = rng.normal(size=(160, 128))          # T=5 x B=32 probe stack
    mask_b = rng.random((32, 128)) < 0.9
    mask_p = rng.random((160, 128)) < 0.9
    grads = rng.normal(size=(32, 128))
    params = rng.normal(size=50_000)             # ~shared head + encoders
    g = rng.normal(size=50_000)
    preds = rng.normal(size=(5, 256))            # reliability pass

    cases = [
        ("relu_dropout_forward", (batch, mask_b, 0.9)),
        ("relu_dropout_forward[probe]", (probe, mask_p, 0.9)),
        ("relu_forward", (probe,)),
        ("relu_dropout_backward", (grads, batch, mask_b, 0.9)),
        ("relu_backward", (grads, batch)),
        ("adam_update", (params.copy(), g, np.zeros_like(g), np.zeros_like(g),
                         0.1, 0.001, 1e-3, 0.9, 0.999, 1e-8)),
        ("population_variance", (preds,)),
    ]
    print(f"{'kernel':34s} {'numpy us':>12s} {'numba us':>12s} {'speedup':>9s}")
    print("-" * 72)
    for label, args in cases:
        name = label.split("[")[0]
        np_mean, _ = time_call(kernels.NUMPY_KERNELS[name], *args)
        nb_mean, _ = time_call(kernels.NUMBA_KERNELS[name], *args)
        print(f"{label:34s} {np_mean:12.2f} {nb_mean:12.2f} "
              f"{np_mean / nb_mean:8.2f}x")


END_TO_END_SNIPPET = """
import json, sys, tempfile, time
from feduaf import kernels
from feduaf.config import config_from_dict
from feduaf.fedsim import run_simulation

cfg = config_from_dict({
    "federation": {"num_clients": 6, "samples_per_client": 60,
                    "missing_ratio": 0.5, "noniid_intensity": 0.5},
    "model": {"hidden_dim": 64},
    "training": {"rounds": 10, "local_epochs": 3},
})
kernels.warmup()
t0 = time.perf_counter()
with tempfile.TemporaryDirectory() as d:
    summary = run_simulation(cfg, 1, d, n_threads=1)
print(json.dumps({"backend": kernels.BACKEND,
                  "seconds": time.perf_counter() - t0,
                  "final_mae": summary["final_mae"]}))
"""


def end_to_end():
    print("\nend-to-end: 6 clients x 10 rounds, hidden 64")
    print("-" * 72)
    results = {}
    for backend, env_extra in (("numba", {}), ("numpy", {"FEDUAF_NO_NUMBA": "1"})):
        env = dict(os.environ, **env_extra)
        out = subprocess.run([sys.executable, "-c", END_TO_END_SNIPPET],
                             capture_output=True, text=True, env=env, check=True)
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        results[backend] = payload
        print(f"{payload['backend']:8s} {payload['seconds']:8.2f}s   "
              f"final MAE {payload['final_mae']:.4f}")
    drift = abs(results["numba"]["final_mae"] - results["numpy"]["final_mae"])
    print(f"cross-backend MAE drift: {drift:.2e} "
          f"(elementwise kernels agree bitwise; BLAS reductions may differ "
          f"in the last ulp)")


if __name__ == "__main__":
    kernel_benchmarks()
    end_to_end()
