"""Time the numba kernels against the pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--particles N] [--steps S] [--cells M] [--repeat R]

Both backends run the same inputs; the script also reports the largest
difference between their outputs.
"""
import argparse
import time

import numpy as np

from cnpullback.kernels import HAS_NUMBA, fp, particles
from cnpullback.noise import StreamRole, stream_k1
from cnpullback.potentials import Potential


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_particles(n, steps, repeat):
    pot = Potential.double_well(1.0)
    rng = np.random.default_rng(0)
    eta_db = 0.5 * np.sqrt(1e-3) * rng.standard_normal(steps)
    x0 = rng.uniform(-1, 1, n)
    k0, k1 = np.uint64(1), stream_k1(StreamRole.intrinsic)

    def run(use_numba):
        x = x0.copy()
        particles.evolve_1d(x, pot.dcoeffs, 0.7, eta_db, 1e-3, k0, k1, 0, 0, 1e6, use_numba=use_numba)
        return x

    rows = {}
    for name, flag in (("numba", True), ("numpy", False)):
        if flag and not HAS_NUMBA:
            continue
        if flag:
            run(True)  # compile
        rows[name] = best_of(lambda: run(flag), repeat)
    return rows


def bench_fp(m, steps, repeat):
    y = np.linspace(-4, 4, m)
    q0 = np.exp(-y ** 2)
    U = [(y + 0.001 * k) ** 4 / 4 - (y + 0.001 * k) ** 2 / 2 for k in range(2)]

    def run(use_numba):
        q = q0.copy()
        for k in range(steps):
            q = fp.step(q, U[k % 2], U[(k + 1) % 2], 0.25, y[1] - y[0], 1e-4, 1.0, False, use_numba)
        return q

    rows = {}
    for name, flag in (("numba", True), ("numpy", False)):
        if flag and not HAS_NUMBA:
            continue
        if flag:
            run(True)
        rows[name] = best_of(lambda: run(flag), repeat)
    return rows


def report(title, rows, work, unit):
    print(title)
    for name, (t, _) in rows.items():
        print(f"  {name:6s} {t * 1e3:10.1f} ms   {t / work * 1e9:8.2f} ns/{unit}")
    if len(rows) == 2:
        (ta, a), (tb, b) = rows["numba"], rows["numpy"]
        print(f"  speed-up {tb / ta:.1f}x, max |numba - numpy| = {np.max(np.abs(a - b)):.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--cells", type=int, default=2000)
    ap.add_argument("--fp-steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba disabled (CNPULLBACK_DISABLE_NUMBA set or numba missing): numpy timings only")
    report(f"Euler-Maruyama, double well, {args.particles} particles x {args.steps} steps",
           bench_particles(args.particles, args.steps, args.repeat), args.particles * args.steps, "particle-step")
    report(f"Fokker-Planck step, {args.cells} cells x {args.fp_steps} steps",
           bench_fp(args.cells, args.fp_steps, args.repeat), args.cells * args.fp_steps, "cell-step")


if __name__ == "__main__":
    main()
