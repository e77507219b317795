"""Hot loops behind the filter, with a numba and a pure-numpy implementation.

The numba backend is used when numba imports cleanly. Setting
``BELIEFGRID_NO_NUMBA=1`` in the environment before import selects the numpy
fallback instead; both expose the same functions:

``shift_pass``, ``motion_pass``, ``angular_pass``, ``loglik_grid``,
``loglik_poses``, ``cast_ray``, ``cast_rays``, ``dither``.
"""

import os

from . import _numpy as numpy_backend

numba_backend = None
if os.environ.get("BELIEFGRID_NO_NUMBA", "").strip().lower() in ("", "0", "false", "no"):
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_backend = None

backend = numba_backend if numba_backend is not None else numpy_backend
USE_NUMBA = backend is numba_backend


def available_backends():
    return [b for b in (numba_backend, numpy_backend) if b is not None]
