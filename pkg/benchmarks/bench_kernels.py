"""Time the compiled kernels against the NumPy fallback and check they agree bit for bit.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]
"""
import argparse
import time

import numpy as np

from hwflow import _pycore
from hwflow.measures import CharacteristicMeasure as M
from hwflow.seeding import stream_key

try:
    from hwflow import _core
except ImportError:
    _core = None

MU = M(((0.0, 0.2), (0.6, 0.3)), ((2.0, 3.0, 0.5),))


def cases(scale):
    table = MU.sampling_table()
    ck, vk, wk = (stream_key(1, t) for t in ("omega.component", "omega.value", "walker"))
    nx, nt = int(512 * scale), int(256 * scale)
    omega = np.nan_to_num(_pycore.fill_omega(*table, ck, vk, 0, 0, nx, nt))
    rho0 = np.where(np.arange(nx) % 2 == 0, 1.0, 0.0)
    al, ar = _pycore.fill_pair(wk, 0, 0, nx, nt, 0.1, 0.45)
    occ = (np.arange(nx) % 2 == 0).astype(np.uint8)
    R = int(2000 * scale)
    keys = [np.array([stream_key(s, t) for s in range(R)], dtype=np.uint64) for t in ("c", "v", "w")]
    x0 = np.zeros(3, dtype=np.int64)
    snaps = np.array([nt - 1], dtype=np.int64)
    return {
        "fill_omega": lambda m: m.fill_omega(*table, ck, vk, 0, 0, nx, nt),
        "hw_evolve": lambda m: m.hw_evolve(omega, rho0, 0, nt - 1, True),
        "hw_evolve_hashed": lambda m: m.hw_evolve_hashed(*table, ck, vk, 0, 0, rho0, nt - 1, snaps, True),
        "reach_evolve": lambda m: m.reach_evolve(al, ar, occ, 0, nt - 1, True),
        "npoint_paths": lambda m: m.npoint_paths(*table, *keys, x0, 0, 100),
        "rightmost_walk": lambda m: m.rightmost_walk(*table, keys[0], keys[1], 0, 0, 400),
    }


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def as_bytes(res):
    if isinstance(res, tuple):
        return b"".join(np.asarray(r).tobytes() for r in res)
    return np.asarray(res).tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args(argv)
    if _core is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'kernel':<18}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}  identical")
    for name, fn in cases(args.scale).items():
        tp, a = best_of(lambda: fn(_pycore), args.repeat)
        tc, b = best_of(lambda: fn(_core), args.repeat)
        same = as_bytes(a) == as_bytes(b)
        print(f"{name:<18}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {same}")
        assert same, f"{name}: backends disagree"


if __name__ == "__main__":
    main()
