"""Backend selection for the simulation hot loops.

The compiled Cython extension is preferred when present; the numpy
fallback keeps the package fully functional from a plain source tree.
``ABC_LOCALIZE_KERNELS`` overrides the choice:

* ``auto`` (default) -- compiled if importable, else pure numpy;
* ``c``  -- require the compiled extension, raise if missing;
* ``py`` -- force the numpy fallback.
"""

import os

from . import _pure

_choice = os.environ.get("ABC_LOCALIZE_KERNELS", "auto").lower()
if _choice not in ("auto", "c", "py"):
    raise ValueError(f"ABC_LOCALIZE_KERNELS must be auto, c or py, got {_choice!r}")

if _choice == "py":
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        if _choice == "c":
            raise ImportError(
                "ABC_LOCALIZE_KERNELS=c but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )
        _impl = _pure
        BACKEND = "python"

gandk_transform = _impl.gandk_transform
ma2_series = _impl.ma2_series
autocov = _impl.autocov

__all__ = ["BACKEND", "gandk_transform", "ma2_series", "autocov", "_pure"]
