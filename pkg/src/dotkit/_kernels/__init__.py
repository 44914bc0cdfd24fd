"""Backend selection for the exponential-comb kernels.

The compiled Cython extension is preferred when it was built; otherwise the
pure-NumPy twin is used. Set ``DOTKIT_KERNELS=numpy`` or
``DOTKIT_KERNELS=cython`` to force a backend (the latter raises if the
extension is missing). ``BACKEND`` records the selection.
"""

import os

from . import _pure

_requested = os.environ.get("DOTKIT_KERNELS", "").strip().lower()

if _requested == "numpy":
    _impl = _pure
    BACKEND = "numpy"
elif _requested == "cython":
    from . import _core as _impl  # noqa: F401  (ImportError is the contract)

    BACKEND = "cython"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "numpy"

group_exp_comb = _impl.group_exp_comb
exp_comb = _impl.exp_comb

__all__ = ["BACKEND", "group_exp_comb", "exp_comb"]
