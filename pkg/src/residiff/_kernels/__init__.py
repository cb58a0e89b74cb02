"""Backend selection for the hot stepping kernels.

The compiled Cython kernel is used when importable; the numpy fallback
otherwise.  RESIDIFF_BACKEND=python forces the fallback (useful for
benchmarks and differential tests).  Both expose the same functions with
the same addressing contract; see fallback.py and _mc.pyx.

Equivalence contract: the philox words are bit-identical across backends
(pure integer arithmetic), and so is noise-free stepping (the extension
is compiled with -ffp-contract=off, so the affine updates round exactly
like numpy's).  Gaussian draws may differ by 1-2 ulp on ~0.3% of values
-- C libm and numpy's vectorized log/cos round transcendentals
differently -- and expanding dynamics amplify any ulp to O(1) over ~50
steps, so noisy cross-backend trajectories agree statistically, not
bitwise.  Within one backend every result is a pure function of
(seed, stream, index).
"""

from __future__ import annotations

import importlib
import os

from . import fallback

_FORCED = os.environ.get("RESIDIFF_BACKEND", "").strip().lower()

# NB: must use importlib here -- a pre-assigned `_mc = None` shadows the
# submodule for `from . import _mc` (the attribute wins over the loader).
_mc = None
_IMPORT_ERROR = None
if _FORCED not in ("python", "numpy", "fallback"):
    try:
        _mc = importlib.import_module("._mc", __name__)
    except ImportError as exc:
        _mc = None
        _IMPORT_ERROR = str(exc)

if _mc is not None:
    BACKEND = "cython"
    step_block_d1 = _mc.step_block_d1
    philox_probe = _mc.philox_probe
    gaussian_probe = _mc.gaussian_probe
else:
    BACKEND = "python"
    step_block_d1 = fallback.step_block_d1
    philox_probe = fallback.philox_probe
    gaussian_probe = fallback.gaussian_probe


def available_backends() -> dict:
    """Name -> kernel module for every importable backend."""
    out = {"python": fallback}
    if _mc is not None:
        out["cython"] = _mc
    return out


def get_backend(name: str | None = None):
    """Kernel module by name (None: the active default)."""
    backends = available_backends()
    if name is None:
        return backends.get("cython" if BACKEND == "cython" else "python")
    if name in ("numpy", "fallback"):
        name = "python"
    if name not in backends:
        raise KeyError(
            f"backend {name!r} not available (have {sorted(backends)})")
    return backends[name]
