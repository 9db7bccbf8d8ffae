#!/usr/bin/env python3
"""Timing comparison of the compiled kernels against the numpy fallback.

Runs the hot paths (moment RK4 stepping, covariance assembly, lag-kernel
spectra) under the current backend, then re-runs itself in a subprocess
with CCSN_NO_NUMBA=1 and prints both timing columns.

Usage: python benchmarks/bench_backends.py [--inner]
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def run_cases():
    import ccsnlab as cl
    from ccsnlab import inference as inf, wvspec as wv
    from ccsnlab.backend import backend_name

    results = {"backend": backend_name()}
    d = cl.derive(cl.table_defaults())
    st = cl.initial_squeezed_thermal(4.5, beta0=2.8e3)

    # warm-up to exclude jit compilation from the timings
    cl.integrate_moments(st, d, 5.0)
    mom_small = cl.integrate_moments(st, d, 22.0, dt=0.05)
    inf.build_covariance(d, mom_small, 64, 0.05)

    t0 = time.perf_counter()
    traj = cl.integrate_moments(st, d, 2.0e4, dt=0.05, store_every=100)
    results["moments_rk4_400k_steps_s"] = time.perf_counter() - t0

    n, dt = 400, 0.05
    mom = cl.integrate_moments(st, d, n * dt + 1.0, dt=dt)
    t0 = time.perf_counter()
    cov = inf.build_covariance(d, mom, n, dt)
    results["covariance_n400_s"] = time.perf_counter() - t0

    om = np.linspace(0.02, 1.2, 400)
    t0 = time.perf_counter()
    wv.wv_from_kernel(d, mom, 10.0, om, dt)
    results["wv_kernel_400bins_s"] = time.perf_counter() - t0

    results["_checksum"] = float(np.sum(traj.h1) + cov.logdet)
    return results


def main():
    if "--inner" in sys.argv:
        print(json.dumps(run_cases()))
        return
    here = run_cases()
    env = dict(os.environ, CCSN_NO_NUMBA="1")
    out = subprocess.run([sys.executable, os.path.abspath(__file__), "--inner"],
                         env=env, capture_output=True, text=True, check=True)
    other = json.loads(out.stdout.strip().splitlines()[-1])
    keys = [k for k in here if not k.startswith("_") and k != "backend"]
    print(f"{'case':34s} {here['backend']:>12s} {other['backend']:>12s} {'speedup':>9s}")
    for k in keys:
        a, b = here[k], other[k]
        print(f"{k:34s} {a:12.4f} {b:12.4f} {b / a:8.1f}x")
    da = abs(here["_checksum"] - other["_checksum"])
    scale = max(1.0, abs(here["_checksum"]))
    print(f"\nchecksum agreement: {da / scale:.3e} (relative)")


if __name__ == "__main__":
    main()
