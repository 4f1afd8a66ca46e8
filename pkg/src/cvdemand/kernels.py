"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` are used. Set ``CVDEMAND_PURE_PYTHON=1`` to force
the fallback.
"""

import os

from . import _pykernels as python_backend

if os.environ.get("CVDEMAND_PURE_PYTHON", "") not in ("", "0"):
    _impl = python_backend
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None
    _impl = compiled_backend if compiled_backend is not None else python_backend

BACKEND = _impl.BACKEND
SOLVE_OK = _impl.SOLVE_OK
SOLVE_CLAMPED = _impl.SOLVE_CLAMPED
SOLVE_FAILED = _impl.SOLVE_FAILED
SOLVE_RENORMALIZED = _impl.SOLVE_RENORMALIZED

simulate_phase = _impl.simulate_phase
scan_episodes = _impl.scan_episodes
solve_reduced = _impl.solve_reduced
