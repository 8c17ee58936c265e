"""Selects the compiled consensus kernel when available.

Set ``GCTS_PURE_PYTHON=1`` to force the numpy implementation.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

if os.environ.get("GCTS_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        log.info("compiled kernel unavailable; using the numpy fallback")
        _impl = _kernels_py
        BACKEND = "python"

consensus_rounds = _impl.consensus_rounds
