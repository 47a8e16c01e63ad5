"""Kernel backend selection.

The compiled extension is preferred when importable; setting ``TINYASR_PURE=1``
forces the numpy fallback (used by the benchmark and the equivalence tests).
"""

import os

from . import pure as _pure

if os.environ.get("TINYASR_PURE"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

dw_conv_fwd = _impl.dw_conv_fwd
dw_conv_bwd = _impl.dw_conv_bwd
ctc_forward_backward = _impl.ctc_forward_backward


def backend_name() -> str:
    return "compiled" if _impl is not _pure else "pure"
