"""Optional numba acceleration.

Hot loops are written once as plain Python and compiled with ``numba.njit``
when numba is importable.  Every kernel also has a vectorised numpy twin.
The numpy path is used when numba is missing or when the environment
variable ``EVIDENCE_POLICY_DISABLE_NUMBA`` is set to a truthy value.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("EVIDENCE_POLICY_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def jit(fn):
    """Compile ``fn`` in nopython mode if numba exists, else return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
