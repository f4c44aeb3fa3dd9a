#!/usr/bin/env python3
"""Compiled versus pure-numpy kernels.

Each mode runs in its own interpreter because the switch is read at import
time.  Prints one JSON object with per-workload medians and the speedup.

    python3 benchmarks/bench_kernels.py [--runs 3]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

WORKLOADS = ("x_solve", "g_solve", "classify", "flow")


def _workload(name):
    from spherelab.family import Tau, _integrate_g, _integrate_x
    from spherelab.ivp import DEFAULT_CONFIG
    from spherelab.portrait import classify_orbit
    from spherelab.profile import build_profile
    from spherelab.sphere import PhaseState, hamiltonian_flow

    if name == "x_solve":
        return lambda: _integrate_x(0.3, 12.0, DEFAULT_CONFIG)
    if name == "g_solve":
        return lambda: _integrate_g(0.3, 1e-6, DEFAULT_CONFIG)
    if name == "classify":
        return lambda: classify_orbit(-0.5)
    profile = build_profile(Tau(0.3))
    start = PhaseState(0.7, 0.3, 0.2, -0.5)
    return lambda: hamiltonian_flow(start, 0.3, (0.0, 20.0), profile=profile)


def run_child(runs):
    from spherelab._accel import NUMBA_ENABLED

    out = {"numba": NUMBA_ENABLED}
    for name in WORKLOADS:
        fn = _workload(name)
        fn()  # warm-up, includes compilation or cache load
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        out[name] = statistics.median(times)
    print(json.dumps(out))


def spawn(flag, runs):
    env = dict(os.environ, SPHERELAB_NUMBA=flag)
    proc = subprocess.run([sys.executable, __file__, "--child", "--runs", str(runs)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=3)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        run_child(args.runs)
        return
    fast = spawn("1", args.runs)
    slow = spawn("0", args.runs)
    result = {"runs": args.runs, "compiled_available": fast["numba"], "workloads": {}}
    for name in WORKLOADS:
        result["workloads"][name] = {
            "numba_s": fast[name],
            "numpy_s": slow[name],
            "speedup": slow[name] / fast[name],
        }
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
