"""Time the marching core under both backends.

Each backend runs in its own interpreter because the choice is made at
import (WAVESMITH_PURE_PYTHON=1 forces the Python fallback).

    python benchmarks/bench_core.py [--eps 0.3] [--length 40] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from wavesmith import volterra_march as vm
eps, length, repeat = float(sys.argv[1]), float(sys.argv[2]), int(sys.argv[3])
from wavesmith.dispersion import find_roots
from wavesmith.kernel_constants import constant_state
roots, state = find_roots(eps, certify=False), constant_state(eps)
x0 = vm.default_x0(vm.SeedSpec(1.0), roots, state)
params = vm.MarchParams(eps, 0.05, (x0, x0 + length))
spec = vm.SeedSpec(1.0, 0.0, x0)
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    h = vm.march(spec, params, roots, state, classify=False)
    best = min(best, time.perf_counter() - t0)
print(json.dumps({"backend": vm.BACKEND, "seconds": best, "nodes": h.n - h.n_seed,
                  "G_end": float(h.G[h.n - 1])}))
"""


def run(pure, args):
    env = dict(os.environ, WAVESMITH_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, str(args.eps), str(args.length),
                          str(args.repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, default=0.3)
    ap.add_argument("--length", type=float, default=40.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args), run(True, args)
    for r in (fast, slow):
        print(f"{r['backend']:>9}: {r['seconds']:.3f} s for {r['nodes']} nodes")
    if fast["backend"] == "compiled":
        print(f"  speedup: {slow['seconds'] / fast['seconds']:.1f}x, "
              f"|dG_end| = {abs(fast['G_end'] - slow['G_end']):.3e}")
    else:
        print("  compiled extension not built; both runs used the fallback")


if __name__ == "__main__":
    main()
