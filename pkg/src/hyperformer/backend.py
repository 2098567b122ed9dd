"""Kernel backend selection.

The ragged-segment kernels come in two flavours: numba-jitted loops (fast)
and pure-numpy ufunc code (no compilation step, always available).  The
active backend is chosen once at import time:

    HYPERFORMER_BACKEND=numba   force numba (error if not importable)
    HYPERFORMER_BACKEND=numpy   force the pure-numpy path
    unset                       numba if importable, else numpy

HYPERFORMER_THREADS caps numba's internal thread pool.
"""

import os

from .errors import ConfigError

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _pick_backend():
    raw = os.environ.get("HYPERFORMER_BACKEND", "").strip().lower()
    if raw in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if raw == "numpy":
        return "numpy"
    if raw == "numba":
        if not HAS_NUMBA:
            raise ConfigError("HYPERFORMER_BACKEND=numba but numba is not importable")
        return "numba"
    raise ConfigError(f"HYPERFORMER_BACKEND: unknown backend {raw!r}")


ACTIVE_BACKEND = _pick_backend()


def _apply_thread_cap():
    raw = os.environ.get("HYPERFORMER_THREADS", "").strip()
    if not raw or not HAS_NUMBA:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HYPERFORMER_THREADS: not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError(f"HYPERFORMER_THREADS: must be >= 1, got {n}")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


_apply_thread_cap()
