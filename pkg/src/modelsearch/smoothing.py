"""Savitzky-Golay smoothing for reward curves.

Interior points use the classic convolution with least-squares polynomial
coefficients; near the ends the window is truncated to the valid range and
the polynomial re-fit, so short series keep sensible boundary values.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import BadWindow

log = logging.getLogger(__name__)


def _center_coefficients(window: int, poly_order: int) -> np.ndarray:
    # row of the pseudoinverse that evaluates the fit at the window center
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    vander = np.vander(offsets, poly_order + 1, increasing=True)
    return np.linalg.pinv(vander)[0]


def savgol_smooth(values, window: int, poly_order: int) -> np.ndarray:
    """Least-squares polynomial smoothing with end re-fitting.

    ``window`` must be odd, larger than ``poly_order`` and no longer than
    the series.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise BadWindow("expected a 1-D series")
    n = values.shape[0]
    if window % 2 == 0 or window <= poly_order or poly_order < 0:
        raise BadWindow(f"window {window} incompatible with order {poly_order}")
    if n < window:
        raise BadWindow(f"series of length {n} shorter than window {window}")

    half = window // 2
    out = np.empty(n)
    coeffs = _center_coefficients(window, poly_order)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        if hi - lo == window:
            out[i] = coeffs @ values[lo:hi]
        else:
            # truncated end window: re-fit the polynomial and evaluate at i
            offsets = np.arange(lo, hi, dtype=np.float64) - i
            vander = np.vander(offsets, poly_order + 1, increasing=True)
            fit, *_ = np.linalg.lstsq(vander, values[lo:hi], rcond=None)
            out[i] = fit[0]
    return out


def largest_valid_window(n: int, window: int, poly_order: int) -> int | None:
    """The biggest odd window <= min(n, window) still above poly_order."""
    w = min(window, n)
    if w % 2 == 0:
        w -= 1
    if w <= poly_order:
        return None
    return w


def smooth_with_auto_window(values, window: int = 101, poly_order: int = 3) -> np.ndarray:
    """Smooth a series, shrinking the window for short desk-scale runs."""
    values = np.asarray(values, dtype=np.float64)
    w = largest_valid_window(values.shape[0], window, poly_order)
    if w is None:
        log.info("series too short to smooth (n=%d); returning a copy", values.shape[0])
        return values.copy()
    if w != window:
        log.info("smoothing window shrunk from %d to %d for a short series", window, w)
    return savgol_smooth(values, w, poly_order)
