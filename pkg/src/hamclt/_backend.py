"""Backend switch for the compiled kernels.

Set ``HAMCLT_DISABLE_NUMBA=1`` to force the pure-numpy code paths, and
``HAMCLT_NUM_THREADS`` to bound the numba thread pool.  Neither setting
changes numerical results: parallel kernels write per-sample values and all
reductions happen afterwards in a fixed order.
"""

from __future__ import annotations

import os

DISABLE_FLAG = "HAMCLT_DISABLE_NUMBA"
THREADS_FLAG = "HAMCLT_NUM_THREADS"

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; avoid the noisy fallback warning
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAVE_NUMBA and not _flag_set(DISABLE_FLAG) else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch between ``"numba"`` and ``"numpy"`` at runtime."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def configure_threads() -> int | None:
    """Apply ``HAMCLT_NUM_THREADS`` to numba; returns the thread count used."""
    raw = os.environ.get(THREADS_FLAG)
    if not HAVE_NUMBA:
        return None
    import numba

    if raw:
        n = max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()
