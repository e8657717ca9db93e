"""Special functions used by the interaction kernels and the weight analysis.

All functions accept scalars or numpy arrays and are pure/reentrant.  The
property bounds relied on elsewhere (|J1(t)/t| <= 1/2, |D(t)| < 3/5,
|t D(t)| < 2/3) are asserted in the test suite against independent oracles,
never assumed.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

__all__ = ["bessel_j1_ratio", "dawson", "erfi", "ERFI_MAX_ARG"]

# erfi(t) ~ exp(t^2)/(sqrt(pi) t); exp(709) is the float64 ceiling, so the
# overflow-safe domain is |t| <= 26.5 (erfi(26.5) ~ 5.5e303).
ERFI_MAX_ARG = 26.5


def _check_finite(t, name):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite argument")
    return arr


def bessel_j1_ratio(t):
    """J1(t)/t for t >= 0, with the analytic limit 1/2 at t = 0.

    Bounded by 1/2 in absolute value on the whole half line.
    """
    arr = _check_finite(t, "bessel_j1_ratio")
    if np.any(arr < 0.0):
        raise ValueError("bessel_j1_ratio: negative argument")
    # J1(t) ~ t/2 for small t, so the quotient is well conditioned; only the
    # exact zero needs the series limit.
    out = np.where(arr == 0.0, 0.5, _sp.j1(np.where(arr == 0.0, 1.0, arr)) / np.where(arr == 0.0, 1.0, arr))
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def dawson(t):
    """Dawson integral D(t) = exp(-t^2) * int_0^t exp(tau^2) dtau (odd)."""
    arr = _check_finite(t, "dawson")
    out = _sp.dawsn(arr)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def erfi(t):
    """Imaginary error function, erfi(t) = (2/sqrt(pi)) exp(t^2) D(t).

    Raises OverflowError outside |t| <= ERFI_MAX_ARG where float64 overflows.
    """
    arr = _check_finite(t, "erfi")
    if np.any(np.abs(arr) > ERFI_MAX_ARG):
        raise OverflowError(f"erfi: |t| > {ERFI_MAX_ARG} overflows float64")
    out = _sp.erfi(arr)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out
