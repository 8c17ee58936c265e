"""Multi-area interchange clearing, distributed price recovery and rent allocation."""

from __future__ import annotations

__version__ = "0.1.0"
