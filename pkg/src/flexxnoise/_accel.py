"""Backend selection for the hot kernels.

Set ``FLEXXNOISE_NO_JIT=1`` to force the pure-numpy implementation. When numba
is missing the numpy path is used automatically.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

JIT_DISABLED = os.environ.get("FLEXXNOISE_NO_JIT", "").strip().lower() not in _FALSY

try:
    if JIT_DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
    if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        # the bundled TBB is often too old; try OpenMP first
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
except ImportError:
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")
DEFAULT_BACKEND = "numba" if HAS_NUMBA else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return DEFAULT_BACKEND
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}, expected one of {BACKENDS}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    return backend
