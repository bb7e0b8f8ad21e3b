"""Hot-loop kernels with import-time selection of the compiled core.

The compiled Cython extension is preferred when present; the pure-numpy
twin is the fallback and the reference.  Set the environment variable
``PHI4KZ_PURE=1`` before import to force the pure path, or use ``force``
to switch temporarily (the benchmark does this to compare both).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import pure
from .pure import truncation_rank

try:
    from . import _gatecore
except ImportError:
    _gatecore = None

HAVE_COMPILED = _gatecore is not None

_active = pure if (os.environ.get("PHI4KZ_PURE") or not HAVE_COMPILED) else _gatecore


def active_name() -> str:
    return _active.NAME


def apply_bond_gate(a1, a2, gate, m_max, weight_tol, fold_left=False):
    return _active.apply_bond_gate(a1, a2, gate, m_max, weight_tol, fold_left)


@contextmanager
def force(which: str):
    """Temporarily pin the kernel implementation ('pure' or 'compiled')."""
    global _active
    if which == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled kernel not available")
    previous = _active
    _active = pure if which == "pure" else _gatecore
    try:
        yield
    finally:
        _active = previous


__all__ = ["apply_bond_gate", "truncation_rank", "active_name", "force", "HAVE_COMPILED"]
