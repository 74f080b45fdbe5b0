"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_backends.py [--repeat 3] [--json out.json]

Each row is the best of ``--repeat`` runs. Outputs are compared, so a
speedup is only reported for kernels that agree.
"""
import argparse
import json
import sys
import time

import numpy as np

from stereorisk import RiskConfig, match, synthetic_pair
from stereorisk._backend import available_backends, get_kernels
from stereorisk.costvol import downsample, sample_coarse, softmax_costs
from stereorisk.risk import solve_batch


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(size):
    left, right, _ = synthetic_pair(size, size, 5, seed=0)
    lq, rq = downsample(left, 4), downsample(right, 4)
    h, w = lq.shape
    shifts = np.ascontiguousarray(np.broadcast_to(sample_coarse(192) / 4, (h, w, 192)))
    rng = np.random.default_rng(0)
    costs = rng.integers(0, 49, (h * w, 192)).astype(np.float64)
    probs = softmax_costs(costs, 2.0)
    hyp = sample_coarse(192)
    cfg = RiskConfig(tau=0.1)

    def census(name):
        return get_kernels(name).census(lq, 7)

    def cost(name):
        k = get_kernels(name)
        return k.census_cost(k.census(lq, 7), rq, shifts, 7)

    def bisect(name):
        return solve_batch(hyp, probs, cfg, backend=name)[:2]

    def pipeline(name):
        return match(left, right, backend=name).disparity.values

    return {"census": census, "census_cost": cost, "bisect_batch": bisect, "match": pipeline}


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the fallback can be timed", file=sys.stderr)
    rows = []
    for name, fn in cases(args.size).items():
        row = {"kernel": name}
        outs = {}
        for b in backends:
            row[b], outs[b] = best_of(lambda: fn(b), args.repeat)
        if "cython" in outs:
            row["agree"] = same(outs["python"], outs["cython"])
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)

    print(f"{'kernel':<14}" + "".join(f"{b + ' [s]':>14}" for b in backends)
          + ("   speedup  agree" if "cython" in backends else ""))
    for r in rows:
        line = f"{r['kernel']:<14}" + "".join(f"{r[b]:>14.4f}" for b in backends)
        if "speedup" in r:
            line += f"{r['speedup']:>9.1f}x  {r['agree']}"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
