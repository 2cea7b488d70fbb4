"""Kernel backend selection: compiled extension when available, numpy
fallback otherwise.

``CAUSEWAY_BACKEND`` (or an explicit name passed to :func:`get_backend`)
forces a choice: ``cython``, ``python``, or ``auto``.
"""

from __future__ import annotations

import os
from types import ModuleType

from ..errors import ConfigInvalid
from . import _pure

try:
    from . import _corekern
except ImportError:
    _corekern = None

__all__ = ["get_backend", "available_backends", "default_backend_name"]

_BY_NAME: dict[str, ModuleType] = {"python": _pure}
if _corekern is not None:
    _BY_NAME["cython"] = _corekern


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BY_NAME))


def default_backend_name() -> str:
    env = os.environ.get("CAUSEWAY_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        return "cython" if "cython" in _BY_NAME else "python"
    return env


def get_backend(name: str | None = None) -> ModuleType:
    """Resolve a backend module by name (default: env var, then compiled
    if built, else pure Python)."""
    chosen = (name or default_backend_name()).strip().lower()
    if chosen == "auto":
        chosen = "cython" if "cython" in _BY_NAME else "python"
    if chosen not in _BY_NAME:
        raise ConfigInvalid(
            f"backend {chosen!r} unavailable; choose from {available_backends()}"
        )
    return _BY_NAME[chosen]
