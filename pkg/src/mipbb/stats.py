"""Benchmark aggregation and significance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CF_EPS = 1e-15
CF_TINY = 1e-300
CF_MAX_ITER = 10_000
STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "·"))


def shifted_geo_mean(values, shift: float = 1.0) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("shifted geometric mean of an empty sequence")
    if np.any(v < 0):
        raise ValueError("shifted geometric mean needs nonnegative values")
    return float(np.exp(np.mean(np.log(v + shift))) - shift)


def harmonic_mean2(a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError("harmonic mean needs positive inputs")
    return 2 * a * b / (a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > CF_TINY else CF_TINY)
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > CF_TINY else CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > CF_TINY else CF_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > CF_TINY else CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > CF_TINY else CF_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


@dataclass
class TTest:
    statistic: float
    p_value: float
    df: int
    degenerate: bool = False

    @property
    def stars(self) -> str:
        return stars(self.p_value)


def paired_t_test(x, y) -> TTest:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two pairs")
    d = x - y
    mean = d.mean()
    sd = d.std(ddof=1)
    df = n - 1
    if sd == 0.0 or not math.isfinite(sd):
        if mean == 0.0:
            return TTest(0.0, 1.0, df, True)
        return TTest(math.copysign(math.inf, mean), 0.0, df, True)
    t = mean / (sd / math.sqrt(n))
    return TTest(float(t), t_two_sided_p(t, df), df)


def pareto_front(points) -> np.ndarray:
    """Mask of points not dominated under joint minimization of every coordinate."""
    P = np.asarray(points, dtype=float)
    keep = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        others = np.delete(P, i, axis=0)
        dominated = np.all(others <= P[i], axis=1) & np.any(others < P[i], axis=1)
        keep[i] = not dominated.any()
    return keep
