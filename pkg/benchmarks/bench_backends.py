"""Benchmark the compiled precoder core against the pure-python fallback.

Times wmmse and swmmse on random channel instances at two array sizes and
prints a table with per-call medians and the compiled speedup. Run:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fddlab.pilots import UraGeometry
from fddlab.precoding import (PrecoderConfig, get_backend, swmmse, wmmse)
from fddlab.vqvae import ChannelStatistics


def _random_channels(rng, users: int, n: int) -> np.ndarray:
    parts = rng.standard_normal((users, n, 2))
    return (parts[..., 0] + 1j * parts[..., 1]) / np.sqrt(2.0)


def _random_stats(rng, users: int, n: int):
    stats = []
    for _ in range(users):
        mu = _random_channels(rng, 1, n)[0]
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        cov = a @ a.conj().T / n * 0.5
        stats.append(ChannelStatistics(mu=mu, c=None, cov=cov))
    return stats


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    try:
        get_backend("compiled")
    except Exception as exc:
        print(f"compiled backend unavailable ({exc}); nothing to compare")
        return

    cfg = PrecoderConfig(max_iters=100)
    cases = [("small", UraGeometry(2, 8), 4),
             ("paper", UraGeometry(4, 16), 8)]
    rows = []
    for label, geom, users in cases:
        rng = np.random.default_rng(12345)
        channels = _random_channels(rng, users, geom.n)
        stats = _random_stats(rng, users, geom.n)

        for kernel in ("wmmse", "swmmse"):
            def run(backend):
                if kernel == "wmmse":
                    return lambda: wmmse(channels, 0.1, cfg=cfg,
                                         backend=backend)
                sw_rng_seed = 7
                return lambda: swmmse(
                    stats, 0.1, cfg=cfg,
                    rng=np.random.default_rng(sw_rng_seed),
                    backend=backend)

            t_py = _median_time(run("python"), args.repeats)
            t_c = _median_time(run("compiled"), args.repeats)
            rows.append((label, f"{geom.n_v}x{geom.n_h}, J={users}",
                         kernel, t_py, t_c, t_py / t_c))

    header = ("case", "geometry", "kernel", "python_s", "compiled_s",
              "speedup")
    print(f"{header[0]:<7} {header[1]:<14} {header[2]:<7} "
          f"{header[3]:>10} {header[4]:>11} {header[5]:>8}")
    for label, geom, kernel, t_py, t_c, speedup in rows:
        print(f"{label:<7} {geom:<14} {kernel:<7} "
              f"{t_py:>10.4f} {t_c:>11.4f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
