"""Time the compiled and pure-Python kernels on the same random workload.

    python3 benchmarks/bench_kernels.py [--beams 20000] [--poses 200] [--repeat 3]
"""

import argparse
import math
import time

import numpy as np

from gridbelief import kernels
from gridbelief.grid import Pose

DIMS = (48, 48, 10)
EDGE = 0.5
G0 = (0.0, 0.0, 0.0)


def workload(rng, beams, poses):
    hi = np.array(DIMS) * EDGE
    origins = rng.uniform(0.1 * hi, 0.9 * hi, size=(beams, 3))
    dirs = rng.normal(size=(beams, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(0.5, 8.0, beams)
    status = rng.choice(3, size=beams, p=[0.8, 0.05, 0.15])
    n = math.prod(DIMS)
    tables = (rng.uniform(0.5, 3.0, n), rng.uniform(0.5, 5.0, n))
    pos = rng.uniform(0.3 * hi, 0.7 * hi, size=(poses, 3))
    rots = np.stack([Pose(tuple(p), (math.cos(y / 2), 0.0, 0.0, math.sin(y / 2))).rotation()
                     for p, y in zip(pos, rng.uniform(0, 2 * math.pi, poses))])
    return origins, dirs, radii, status, tables, pos, rots


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--beams", type=int, default=20_000, help="beams for trace/accumulate")
    ap.add_argument("--poses", type=int, default=200, help="particle poses for the likelihood kernel")
    ap.add_argument("--scan-beams", type=int, default=288)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    o, d, r, s, (pa, pb), pos, rots = workload(np.random.default_rng(args.seed), args.beams, args.poses)
    sd, sr, ss = d[: args.scan_beams], r[: args.scan_beams], s[: args.scan_beams]
    n = math.prod(DIMS)
    backends = kernels.available_backends()
    cases = {
        f"trace x{args.beams}": lambda m: [m.trace(o[k], d[k], r[k], s[k] == 0, DIMS, EDGE, G0)
                                          for k in range(args.beams)],
        f"accumulate x{args.beams}": lambda m: m.accumulate(o, d, r, s, DIMS, EDGE, G0, np.zeros(n, np.int64),
                                                           np.zeros(n, np.int64), np.zeros(n)),
        f"scan_loglik {args.poses}x{args.scan_beams}": lambda m: m.scan_loglik(
            pos, rots, sd, sr, ss, DIMS, EDGE, G0, kernels.GAMMA, pa, pb),
    }
    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in cases.items():
        t = {name: best_of(args.repeat, lambda m=mod: fn(m)) for name, mod in backends.items()}
        row = f"{label:<28}" + "".join(f"{t[name]:>11.4f}s" for name in backends)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:>11.1f}x"
        print(row)
    if "cython" not in backends:
        print("compiled kernels not built; only the pure-Python backend was timed")


if __name__ == "__main__":
    main()
