"""Compare the numba kernels against the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are imported directly, so the MIXEDADC_BACKEND setting
does not matter here. JIT compilation is triggered once before timing.
"""
import argparse
import time

import numpy as np

from mixedadc.kernels import numba_impl, numpy_impl


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    x = rng.normal(scale=4.0, size=200_000)
    delta = np.zeros(64, dtype=bool)
    delta[rng.choice(64, 10, replace=False)] = True
    rl, rh = 2 / np.pi, 1.0
    yield ("log_ndtr (2e5)", lambda: numpy_impl.log_ndtr(x), lambda: numba_impl.log_ndtr_1d(x))
    yield ("pdf_over_cdf (2e5)", lambda: numpy_impl.pdf_over_cdf(x), lambda: numba_impl.pdf_over_cdf_1d(x))
    yield ("b_function (2e5)", lambda: numpy_impl.b_function(x), lambda: numba_impl.b_function_1d(x))
    yield ("nll sum+grad (2e5)", lambda: numpy_impl.neg_log_ndtr_sum_grad(x),
           lambda: numba_impl.neg_log_ndtr_sum_grad_1d(x))
    yield ("exhaustive C(20,6)", lambda: numpy_impl.exhaustive_best(20, 6, rl, rh),
           lambda: numba_impl.exhaustive_best(20, 6, rl, rh))
    yield ("swap loop M=64", lambda: numpy_impl.swap_loop(delta, rl, rh),
           lambda: numba_impl.swap_loop(delta, rl, rh, 1_000_000))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, f_np, f_nb in cases():
        f_nb()
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:<24}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
