"""Hot-loop kernels: compiled when available, pure Python otherwise.

Set ``MPCAL_PURE_PYTHON=1`` to force the fallback.  Both backends expose the
same three functions (``residual_derivs``, ``objective_derivs``,
``solve_history``) and share the status codes below.
"""

import os

from . import _pure

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_MAXITER = 2
STATUS_SINGULAR = 3

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pure}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available() -> list[str]:
    return list(_BACKENDS)


def get(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available (have {available()})") from None


if os.environ.get("MPCAL_PURE_PYTHON") or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

impl = _BACKENDS[BACKEND]


def use(name: str) -> None:
    """Switch the active backend process-wide."""
    global impl, BACKEND
    impl = get(name)
    BACKEND = name
