"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--streams 8000]
"""
import argparse
import math
import timeit

import numpy as np

from swarmsense import kernels


def workloads(streams: int, n: int, robots: int, seed: int):
    rng = np.random.default_rng(seed)
    fs, w = 10e3, 2 * math.pi * 2.5e3
    amps = rng.uniform(1e-5, 1.5e-3, streams)
    phases = rng.uniform(0, 2 * math.pi, streams)
    noise = rng.standard_normal((streams, n))
    t = np.arange(n) / fs
    x = amps[:, None] * np.sin(w * t[None, :] + phases[:, None])
    quads = rng.uniform(0.5, 2.0, (streams, 4))
    pos = rng.uniform(0, 2, (robots, 3))
    tx = np.full(robots, 1.2)
    emitting = np.ones(robots, dtype=bool)
    return {
        "lockin_amplitudes": lambda k: k.lockin_amplitudes(x, w, fs),
        "chain_amplitudes": lambda k: k.chain_amplitudes(amps, phases, noise, 3e-5, w, fs, n, 1000.0, 3.3 / 2**14, 1.65),
        "localize_batch": lambda k: k.localize_batch(quads, 0.05, 1e-6),
        "linear_intensity_sum": lambda k: k.linear_intensity_sum(pos, tx, 1.0, 0.0, emitting),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--streams", type=int, default=8000, help="signal streams / quads per call")
    ap.add_argument("--samples", type=int, default=500, help="samples per stream")
    ap.add_argument("--robots", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    jobs = workloads(args.streams, args.samples, args.robots, args.seed)
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'kernel':<22}" + "".join(f"{b + ' ms':>14}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name, job in jobs.items():
        best = {}
        for b in backends:
            impl = kernels.get_backend(b)
            job(impl)  # warm up
            best[b] = min(timeit.repeat(lambda: job(impl), number=1, repeat=args.repeat)) * 1e3
        line = f"{name:<22}" + "".join(f"{best[b]:>14.2f}" for b in backends)
        if "cython" in best:
            line += f"{best['python'] / best['cython']:>10.1f}x"
        print(line)


if __name__ == "__main__":
    main()
