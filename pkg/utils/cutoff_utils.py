# Smooth characteristic functions
import numpy as np


def transition_profile(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, e^{-1/s}/(e^{-1/s}+e^{-1/(1-s)}) between"""
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    # Placeholder 0.5 keeps the exponentials finite outside (0, 1)
    safe = np.where(inside, s, 0.5)
    a = np.exp(-1.0 / safe)
    b = np.exp(-1.0 / (1.0 - safe))
    value = np.where(inside, a / (a + b), 0.0)
    return np.where(s >= 1.0, 1.0, value)


def unit_cutoff(k):
    """F(k): 0 for k <= 1/2, 1 for k >= 1, monotone between"""
    return transition_profile(2.0 * np.asarray(k, dtype=float) - 1.0)


def lower_cutoff(k, b: float):
    """F(k > b)"""
    return unit_cutoff(np.asarray(k, dtype=float) / b)


def upper_cutoff(k, b: float):
    """F(k <= b)"""
    return 1.0 - lower_cutoff(k, b)


def band_cutoff(k, b: float, c: float):
    """F(b < k <= c)"""
    return lower_cutoff(k, b) - lower_cutoff(k, c)


def dyadic_band(k, j: int):
    return band_cutoff(k, 2.0 ** j, 2.0 ** (j + 1))
