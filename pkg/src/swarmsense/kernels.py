"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy versions in ``_pykernels`` are used. Set ``SWARMSENSE_BACKEND=python``
to force the fallback.
"""
import os
from types import ModuleType

from . import _pykernels

WELL_CONDITIONED = _pykernels.WELL_CONDITIONED
NEAR_AXIS = _pykernels.NEAR_AXIS
DEGENERATE = _pykernels.DEGENERATE
INVALID = _pykernels.INVALID

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on build
    _ckernels = None
else:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str) -> ModuleType:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}") from None


_requested = os.environ.get("SWARMSENSE_BACKEND", "").strip().lower()
if _requested in ("python", "py"):
    BACKEND = "python"
elif _requested in ("", "auto"):
    BACKEND = "cython" if "cython" in _BACKENDS else "python"
else:
    get_backend(_requested)
    BACKEND = _requested

_impl = _BACKENDS[BACKEND]

lockin_amplitudes = _impl.lockin_amplitudes
chain_amplitudes = _impl.chain_amplitudes
localize_batch = _impl.localize_batch
linear_intensity_sum = _impl.linear_intensity_sum
