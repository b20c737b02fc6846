"""Hot-kernel backend selection.

The compiled Cython core is preferred when it was built; otherwise the
pure-Python fallback is used. Set NGHF_KERNEL_BACKEND=python (or
=compiled) to force a backend, e.g. for the benchmark in
``benchmarks/kernel_bench.py``.
"""

import os

from . import _fallback

_forced = os.environ.get("NGHF_KERNEL_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _fallback
    BACKEND = "python"
elif _forced == "compiled":
    from . import _core as _impl  # noqa: F401  (ImportError is intentional here)

    BACKEND = "compiled"
elif _forced:
    raise ValueError(f"NGHF_KERNEL_BACKEND must be 'compiled' or 'python', got {_forced!r}")
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

forward_backward = _impl.forward_backward
accumulate_frame_state = _impl.accumulate_frame_state
viterbi_segments = _impl.viterbi_segments
edit_distance = _impl.edit_distance
segment_state_bounds = _fallback.segment_state_bounds


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name in (None, BACKEND):
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
