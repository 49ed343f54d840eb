"""One-dimensional filters used by rest detection."""

import numpy as np
from scipy.ndimage import convolve1d

BINOMIAL_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def median_filter(series, window: int, axis: int = 0) -> np.ndarray:
    """Running median with the window clipped at the boundaries.

    Element ``i`` is the median of ``series[i - h : i + h + 1]`` intersected
    with the valid index range, where ``h = window // 2``.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    x = np.moveaxis(np.asarray(series, dtype=float), axis, 0)
    n = x.shape[0]
    h = window // 2
    if window == 1 or n == 0:
        return np.moveaxis(x.copy(), 0, axis)
    out = np.empty_like(x)
    if n > 2 * h:
        windows = np.lib.stride_tricks.sliding_window_view(x, window, axis=0)
        out[h:n - h] = np.median(windows, axis=-1)
    for i in list(range(min(h, n))) + list(range(max(n - h, h), n)):
        out[i] = np.median(x[max(0, i - h):i + h + 1], axis=0)
    return np.moveaxis(out, 0, axis)


def gaussian_smooth(series, levels: int, axis: int = 0) -> np.ndarray:
    """Apply ``levels`` passes of the (1,4,6,4,1)/16 kernel, reflecting at the edges.

    No decimation: the output keeps the input length.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    x = np.asarray(series, dtype=float)
    for _ in range(levels):
        x = convolve1d(x, BINOMIAL_KERNEL, axis=axis, mode="reflect")
    return x.copy() if levels == 0 else x
