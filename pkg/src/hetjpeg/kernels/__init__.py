"""Kernel backend selection.

Two backends implement the batch entry points (``prepare_scan``,
``decode_mcu_rows``, ``render_rows_444``, ``render_rows_422``): a compiled
extension (``_native``) and a numpy implementation (``fallback``).  The
native one is preferred when importable; set ``HETJPEG_BACKEND=fallback``
to force the pure-Python path, or ``=native`` to fail loudly if the
extension is missing.  Both produce bit-identical output.

Single-block operations always come from ``fallback`` (re-exported by
``hetjpeg.block_transforms``); only the batch paths are duplicated.
"""
import contextlib
import importlib
import os

from . import fallback

_native = None
_forced = os.environ.get("HETJPEG_BACKEND")
if _forced != "fallback":
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError:
        if _forced == "native":
            raise
        _native = None

_active = _native if _native is not None else fallback


def active():
    """The currently selected backend module."""
    return _active


def backend_name() -> str:
    return _active.NAME


def available_backends() -> dict:
    out = {"fallback": fallback}
    if _native is not None:
        out["native"] = _native
    return out


@contextlib.contextmanager
def use(name: str):
    """Temporarily switch the active backend (tests and benchmarks)."""
    global _active
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"backend {name!r} not available (have {sorted(backends)})")
    previous = _active
    _active = backends[name]
    try:
        yield _active
    finally:
        _active = previous
