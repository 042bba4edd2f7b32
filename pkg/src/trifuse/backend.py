"""Kernel backend selection.

The compiled extension is preferred when it has been built; otherwise
the numpy fallback is used. ``set_backend`` swaps the active backend at
runtime (the two are semantically interchangeable), which the parity
tests and the benchmark rely on.
"""

from __future__ import annotations

from . import _kernels_np

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

active = _ckernels if _ckernels is not None else _kernels_np


def available_backends() -> tuple[str, ...]:
    names = ["numpy"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return tuple(names)


def get_backend() -> str:
    return active.NAME


def set_backend(name: str) -> None:
    global active
    if name == "numpy":
        active = _kernels_np
    elif name == "compiled":
        if _ckernels is None:
            raise ValueError("compiled backend is not available (extension not built)")
        active = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}; expected 'numpy' or 'compiled'")
