"""Smooth cutoffs built from the exp(-1/x) step.

Every cutoff here is an indicator convolved with a compactly supported
C-infinity kernel whose CDF is :func:`smooth_step`.  Translates of such a
mollified indicator of a fundamental interval telescope, so partitions of
unity built from them sum to one exactly (up to rounding).
"""
import numpy as np


def _flat(x):
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, monotone in between."""
    x = np.asarray(x, dtype=float)
    a = _flat(x)
    b = _flat(1.0 - x)
    return a / (a + b)


def mollified_indicator(x, a, b, width):
    """Indicator of [a, b] convolved with a kernel of half-width ``width``.

    Supported on [a - width, b + width]; equal to one on
    [a + width, b - width] when that interval is non-empty.
    """
    x = np.asarray(x, dtype=float)
    if width <= 0:
        raise ValueError("kernel width must be positive")
    rise = smooth_step((x - a + width) / (2 * width))
    fall = smooth_step((x - b + width) / (2 * width))
    return rise - fall
