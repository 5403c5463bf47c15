"""Race the compiled kernels against the pure-Python fallback.

For every kernel workload this times both backends on identical seeded
inputs, checks the results are bit-identical (the engine's determinism
guarantee does not depend on which backend is active), and prints the
speedup. With ``--end-to-end`` it also runs the CLI ``bench`` command once
per backend on a synthetic replay scenario.
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

from kernel_bench import WORKLOADS, time_workload

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def _identical(a, b):
    return type(a) is type(b) and a == b


def compare_kernels(reps):
    from roadsim.kernels import pure

    try:
        from roadsim.kernels import _speedups
    except ImportError:
        print("error: compiled extension not built; run pip install -e .",
              file=sys.stderr)
        return 1
    print(f"{'kernel':24s} {'pure ns/call':>14s} {'compiled':>10s} "
          f"{'speedup':>8s}  identical")
    mismatches = 0
    for name, make_state, run, calls in WORKLOADS:
        t_pure, r_pure = time_workload(pure, make_state, run, reps)
        t_fast, r_fast = time_workload(_speedups, make_state, run, reps)
        same = _identical(r_pure, r_fast)
        mismatches += 0 if same else 1
        print(f"{name:24s} {t_pure / calls * 1e9:14.0f} "
              f"{t_fast / calls * 1e9:10.0f} {t_pure / t_fast:7.1f}x  "
              f"{'yes' if same else 'NO'}")
    if mismatches:
        print(f"error: {mismatches} workload(s) differ between backends",
              file=sys.stderr)
        return 1
    return 0


def end_to_end(steps):
    scenario = {
        "kind": "highway",
        "map": {"path": str(FIXTURES / "straight.osm"),
                "origin": {"lat": 49.0, "lon": 8.4}},
        "traffic": {"synthetic": {"tracks": 10}},
        "agents": [
            {"id": "ego", "class": "car",
             "spawn": {"x": 390.0, "y": 5.25, "heading": 0.0, "speed": 0.0}},
        ],
        "max_steps": steps,
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bench.json"
        path.write_text(json.dumps(scenario))
        print(f"\nenv.step throughput ({steps} steps, 10 replay tracks, "
              f"no sensors):")
        for backend, forced in (("compiled", None), ("pure", "1")):
            env = {k: v for k, v in os.environ.items()
                   if k != "ROADSIM_PURE_KERNELS"}
            if forced:
                env["ROADSIM_PURE_KERNELS"] = forced
            proc = subprocess.run(
                [sys.executable, "-m", "roadsim.cli", "bench",
                 "--scenario", str(path), "--seed", "1",
                 "--steps", str(steps)],
                capture_output=True, text=True, env=env,
            )
            if proc.returncode != 0:
                print(f"  {backend}: bench failed: {proc.stderr.strip()}")
                return 1
            rate = next(line.split(":")[1].strip()
                        for line in proc.stdout.splitlines()
                        if line.startswith("steps_per_s:"))
            print(f"  {backend:9s} {rate:>10s} steps/s")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=5,
                        help="timed repetitions per workload (best is kept)")
    parser.add_argument("--end-to-end", action="store_true",
                        help="also compare CLI bench throughput per backend")
    parser.add_argument("--steps", type=int, default=2000,
                        help="steps for the end-to-end comparison")
    args = parser.parse_args(argv)
    code = compare_kernels(args.reps)
    if code == 0 and args.end_to_end:
        code = end_to_end(args.steps)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
