"""Kernel backend selection.

Hot numeric kernels (BCJR recursions, de-quantizer moment updates) exist in
two flavours: plain-loop functions compiled with numba's ``@njit`` and
vectorised pure-numpy fallbacks.  The active flavour is chosen once at import
time from the ``TURBOCS_BACKEND`` environment variable:

    TURBOCS_BACKEND=auto   use numba when importable, else numpy (default)
    TURBOCS_BACKEND=numba  require numba, fail loudly if missing
    TURBOCS_BACKEND=numpy  force the pure-numpy path

Both flavours are always importable under their private names so tests and
benchmarks can compare them directly.
"""

import os

_CHOICES = ("auto", "numba", "numpy")


def _resolve(value):
    value = (value or "auto").strip().lower()
    if value not in _CHOICES:
        raise ValueError(
            f"TURBOCS_BACKEND must be one of {_CHOICES}, got {value!r}"
        )
    if value == "numpy":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if value == "numba":
            raise
        return False
    return True


USE_NUMBA = _resolve(os.environ.get("TURBOCS_BACKEND"))


def jit_or_fallback(loop_fn, numpy_fn):
    """Return the compiled loop kernel or the numpy fallback per backend."""
    if USE_NUMBA:
        from numba import njit

        return njit(cache=True)(loop_fn)
    return numpy_fn


def compile_loops(loop_fn):
    """Compile a loop kernel unconditionally (used by benchmarks/tests)."""
    from numba import njit

    return njit(cache=True)(loop_fn)
