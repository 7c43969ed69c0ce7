"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback. ``PERFCAST_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None):
    if name is None:
        name = os.environ.get("PERFCAST_BACKEND") or ("compiled" if _compiled else "python")
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available()}") from None


def default_name() -> str:
    backend = get()
    return next(name for name, mod in _BACKENDS.items() if mod is backend)
