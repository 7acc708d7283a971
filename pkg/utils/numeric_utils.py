# Numerical helper functions
from fractions import Fraction
from typing import Dict, Sequence

import numpy as np
from scipy import optimize, special

from exceptions import DegenerateInput


def bessel_zeros(nu: float, count: int, step: float = 0.1) -> np.ndarray:
    """First `count` positive zeros of J_nu, for any real order nu >= 0

    Sign changes of J_nu are located on a uniform scan and each bracket is
    refined with brentq. Consecutive zeros are separated by more than pi,
    so a scan step of 0.1 never skips a root.
    """
    if count < 1:
        return np.zeros(0)
    # McMahon: j_{nu,m} ~ (m + nu/2 - 1/4) pi; pad the scan range generously
    x_end = (count + nu / 2.0 + 2.0) * np.pi
    while True:
        x = np.arange(step, x_end + step, step)
        values = special.jv(nu, x)
        crossings = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
        if crossings.size >= count:
            break
        x_end *= 1.5

    def j(z):
        return special.jv(nu, z)

    return np.array([optimize.brentq(j, x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
                     for i in crossings[:count]])


def next_power_of_two(value: float) -> int:
    n = 1
    while n < value:
        n *= 2
    return n


def geometric_grid(start: float, stop: float, count: int) -> np.ndarray:
    return np.geomspace(start, stop, count)


def loglog_fit(times: Sequence[float], values: Sequence[float]) -> Dict[str, float]:
    """Least-squares fit of log(values) = slope * log(times) + intercept"""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 5 or t.size != v.size:
        raise DegenerateInput(f"log-log fit needs at least 5 paired points, got {t.size}")
    if np.any(t <= 0) or np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DegenerateInput("log-log fit needs positive finite times and values")
    x = np.log(t)
    y = np.log(v)
    if np.ptp(x) == 0.0:
        raise DegenerateInput("log-log fit needs at least two distinct times")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2)}


def trapezoid_weights(times: Sequence[float]) -> np.ndarray:
    """Composite-trapezoid weights for samples at the given (increasing) times"""
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if t.size < 2:
        return w
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def cumulative_trapezoid(times: Sequence[float], values: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(t)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
    return out


def trend_slope(times: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of values against times"""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.polyfit(t, v, 1)[0])


def nearly_rational(ratio: float, max_denominator: int = 64, tol: float = 1e-6) -> bool:
    approx = Fraction(ratio).limit_denominator(max_denominator)
    return abs(float(approx) - ratio) <= tol * max(1.0, abs(ratio))


def japanese_bracket(r, power: float = 1.0):
    """<r>^power = (1 + r^2)^(power/2)"""
    return (1.0 + np.asarray(r, dtype=float) ** 2) ** (0.5 * power)
