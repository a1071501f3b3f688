"""Hot inner loops: upwind derivative application.

Two interchangeable implementations are provided — a compiled one (numba
``@njit``) and a pure-numpy one.  Selection happens once at import via the
``SHOCKLAB_KERNELS`` environment variable: ``numba``, ``numpy``, or unset
(numba when importable, else numpy).  Both paths are bit-identical on the
same input, which the test suite checks.
"""

from __future__ import annotations

import os

import numpy as np

_CHOICE = os.environ.get("SHOCKLAB_KERNELS", "").strip().lower()
if _CHOICE not in ("", "numba", "numpy"):
    raise ValueError(
        f"SHOCKLAB_KERNELS must be 'numba' or 'numpy' (or unset), got {_CHOICE!r}"
    )

if _CHOICE in ("", "numba"):
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _CHOICE == "numba":
            raise
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False


def _upwind_dx_numpy(f, speed, w_pos, w_neg, i_pos, i_neg, out):
    """df/dx with the stencil chosen per node by the sign of ``speed``.

    The four products are summed left to right so the result is bit-identical
    to the compiled loop.
    """
    dpos = w_pos[:, 0] * f[i_pos]
    dneg = w_neg[:, 0] * f[i_neg]
    for k in (1, 2, 3):
        dpos = dpos + w_pos[:, k] * f[i_pos + k]
        dneg = dneg + w_neg[:, k] * f[i_neg + k]
    np.copyto(out, np.where(speed >= 0.0, dpos, dneg))
    return out


def _upwind_dx_loop(f, speed, w_pos, w_neg, i_pos, i_neg, out):
    n = f.shape[0]
    for j in range(n):
        if speed[j] >= 0.0:
            s = i_pos[j]
            out[j] = (
                w_pos[j, 0] * f[s]
                + w_pos[j, 1] * f[s + 1]
                + w_pos[j, 2] * f[s + 2]
                + w_pos[j, 3] * f[s + 3]
            )
        else:
            s = i_neg[j]
            out[j] = (
                w_neg[j, 0] * f[s]
                + w_neg[j, 1] * f[s + 1]
                + w_neg[j, 2] * f[s + 2]
                + w_neg[j, 3] * f[s + 3]
            )
    return out


if _HAVE_NUMBA:
    # no fastmath: reassociation would break cross-path bit-identity
    _upwind_dx_impl = njit(
        "f8[:](f8[:], f8[:], f8[:, :], f8[:, :], i4[:], i4[:], f8[:])",
        cache=True,
    )(_upwind_dx_loop)
    ACTIVE = "numba"
else:
    _upwind_dx_impl = _upwind_dx_numpy
    ACTIVE = "numpy"


def upwind_dx(f: np.ndarray, speed: np.ndarray, stencils, out: np.ndarray | None = None) -> np.ndarray:
    """Third-order upwind-biased first derivative of ``f`` on the grid.

    ``stencils`` is a core.StencilSet; ``speed`` decides the bias node by node.
    """
    if out is None:
        out = np.empty_like(f)
    return _upwind_dx_impl(
        f, speed, stencils.w_pos, stencils.w_neg, stencils.i_pos, stencils.i_neg, out
    )
