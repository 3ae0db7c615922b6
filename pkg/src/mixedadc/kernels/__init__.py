"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active path is chosen once at import from ``MIXEDADC_BACKEND``; both
implementations stay importable (``kernels.numpy_impl`` and, when numba is
present, ``kernels.numba_impl``) so they can be cross-checked and benchmarked.
"""
import numpy as np

from .._backend import BACKEND, HAS_NUMBA
from . import _numpy as numpy_impl

if HAS_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

__all__ = [
    "BACKEND",
    "log_ndtr",
    "pdf_over_cdf",
    "b_function",
    "log_b_function",
    "neg_log_ndtr_sum_grad",
    "exhaustive_best",
    "swap_loop",
    "numpy_impl",
    "numba_impl",
]


def _flat(x):
    x = np.asarray(x, dtype=np.float64)
    return x, np.ascontiguousarray(x.ravel())


if BACKEND == "numba":

    def log_ndtr(x):
        x, f = _flat(x)
        return numba_impl.log_ndtr_1d(f).reshape(x.shape)

    def pdf_over_cdf(x):
        x, f = _flat(x)
        return numba_impl.pdf_over_cdf_1d(f).reshape(x.shape)

    def b_function(x):
        x, f = _flat(x)
        return numba_impl.b_function_1d(f).reshape(x.shape)

    def log_b_function(x):
        x, f = _flat(x)
        return numba_impl.log_b_function_1d(f).reshape(x.shape)

    def neg_log_ndtr_sum_grad(alpha):
        alpha, f = _flat(alpha)
        total, grad = numba_impl.neg_log_ndtr_sum_grad_1d(f)
        return float(total), grad.reshape(alpha.shape)

    def exhaustive_best(M, M0, rho_low, rho_high):
        delta, s = numba_impl.exhaustive_best(int(M), int(M0), float(rho_low), float(rho_high))
        return delta, float(s)

    def swap_loop(delta, rho_low, rho_high, max_swaps=1_000_000):
        d, n = numba_impl.swap_loop(np.asarray(delta, dtype=np.bool_), float(rho_low),
                                    float(rho_high), int(max_swaps))
        return d, int(n)

else:
    log_ndtr = numpy_impl.log_ndtr
    pdf_over_cdf = numpy_impl.pdf_over_cdf
    b_function = numpy_impl.b_function
    log_b_function = numpy_impl.log_b_function
    neg_log_ndtr_sum_grad = numpy_impl.neg_log_ndtr_sum_grad
    exhaustive_best = numpy_impl.exhaustive_best
    swap_loop = numpy_impl.swap_loop
