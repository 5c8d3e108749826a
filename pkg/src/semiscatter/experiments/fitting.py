"""Power-law fits in the bracket variable <t>."""
from __future__ import annotations

import numpy as np

from ..errors import FitError


def fit_power_law(series, window=None, min_points: int = 5, return_residuals: bool = False):
    """OLS slope of log(value) against log<t>, with its standard error.

    ``series`` is an (m, 2) array-like of (t, value) rows; ``window`` an
    optional (t_lo, t_hi) pair selecting the rows used.
    """
    s = np.asarray(series, float)
    if s.ndim != 2 or s.shape[1] != 2:
        raise FitError("series must have shape (m, 2)")
    t, v = s[:, 0], s[:, 1]
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < min_points:
        raise FitError(f"need at least {min_points} points in the window, got {t.size}")
    if np.any(~(v > 0)):
        raise FitError("power-law fit needs positive values")
    x = 0.5 * np.log1p(t**2)
    y = np.log(v)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    dof = x.size - 2
    if dof > 0:
        s2 = float(res @ res) / dof
        sxx = float(np.sum((x - x.mean()) ** 2))
        err = float(np.sqrt(s2 / sxx)) if sxx > 0 else float("inf")
    else:
        err = 0.0
    if return_residuals:
        return float(coef[0]), err, res
    return float(coef[0]), err
