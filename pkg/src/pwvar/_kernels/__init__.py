"""Backend selection for the image kernels.

The compiled extension (pwvar._kernels._fast) is preferred when it built;
otherwise the NumPy fallback is used.  Setting PWVAR_NO_EXT=1 in the
environment forces the fallback, which is how the equivalence tests pin
each side.  Both backends expose das_block and ebmv_block with identical
signatures and identical include/exclude semantics.
"""

import os

from ..errors import ConfigError
from . import py_backend

_backends = {"fallback": py_backend}
_active = "fallback"

if os.environ.get("PWVAR_NO_EXT") != "1":
    try:
        from . import _fast
    except ImportError:
        pass
    else:
        _backends["compiled"] = _fast
        _active = "compiled"


def active_name():
    """Name of the backend image drivers use by default."""
    return _active


def available():
    return sorted(_backends)


def get_backend(name=None):
    """Resolve a backend module by name; None means the active default."""
    if name is None:
        name = _active
    try:
        return _backends[name]
    except KeyError:
        raise ConfigError(
            f"unknown kernel backend {name!r}; available: {available()}"
        ) from None
