"""Backend selection for the numeric kernels.

Set ``MIXEDADC_BACKEND=numpy`` to force the pure-numpy path; the default is
``numba`` whenever numba imports cleanly.
"""
import os

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_requested = os.environ.get("MIXEDADC_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"MIXEDADC_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAS_NUMBA) else "numpy"
