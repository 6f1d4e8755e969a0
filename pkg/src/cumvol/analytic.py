"""Closed-form references for narrow (small-variance) noise.

These are leading-order results in the noise variance, used to size grids,
to cross-check the exact engine, and to form the exact-vs-approximation
ratio. Each function raises ``DomainError`` outside its validity domain
instead of extrapolating silently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "ybar",
    "var_logZ_saddle",
    "var_dz_saddle",
    "sigma_y_fixed_point",
    "sigma_recursion_step",
    "sigma_dz_narrow",
]


def ybar(g: float, t) -> float:
    """log sum_{j=0..t} exp(-j*g); with t = inf, -log(1 - exp(-g)) for g > 0."""
    if t == math.inf:
        if not g > 0.0:
            raise DomainError("ybar at t = inf requires g > 0 (divergent sum otherwise)")
        return -math.log1p(-math.exp(-g))
    t = int(t)
    if t < 0:
        raise DomainError("ybar requires t >= 0")
    exponents = -g * np.arange(t + 1, dtype=float)
    return float(np.logaddexp.reduce(exponents))


def var_logZ_saddle(g: float, sigma_a: float, t: int) -> float:
    """Leading-order Var(log Z_t) = sigma_a^2 ((2 e^g + 1)/(1 - e^{2g}) + t).

    Accurate only to O(sigma_a^4); singular at g = 0.
    """
    if g == 0.0:
        raise DomainError("var_logZ_saddle is singular at g = 0")
    return sigma_a * sigma_a * ((2.0 * math.exp(g) + 1.0) / (-math.expm1(2.0 * g)) + t)


def var_dz_saddle(g: float, sigma_a: float) -> float:
    """Leading-order steady-state volatility sigma_a^2 tanh(g/2), g > 0.

    Always below sigma_a^2: one-step changes of the cumulative total are
    steadier than the per-step noise itself.
    """
    if not g > 0.0:
        raise DomainError("var_dz_saddle requires g > 0")
    return sigma_a * sigma_a * math.tanh(0.5 * g)


def sigma_y_fixed_point(g: float, sigma_a: float) -> float:
    """Fixed-point width of the reversed recursion: sqrt(sigma_a^2/(e^{2g}-1))."""
    if not g > 0.0:
        raise DomainError("sigma_y_fixed_point requires g > 0")
    return sigma_a / math.sqrt(math.expm1(2.0 * g))


def sigma_recursion_step(sigma_t: float, sigma_a: float, g: float, t) -> float:
    """One step of the narrow-width recursion.

    The convolution adds variances, then the coordinate change divides by the
    Jacobian e^x/(e^x - 1) evaluated at x = ybar(g, t). Pass t = inf to use
    the fixed-point location.
    """
    if sigma_t < 0.0 or sigma_a < 0.0:
        raise DomainError("widths must be non-negative")
    x = ybar(g, t)
    # 1/J = (e^x - 1)/e^x = 1 - e^{-x}; zero at t = 0 where x = 0
    return math.sqrt(sigma_t * sigma_t + sigma_a * sigma_a) * (-math.expm1(-x))


def sigma_dz_narrow(g: float, sigma_a: float) -> float:
    """Steady-state volatility width sqrt(tanh(g/2)) * sigma_a, g > 0.

    Equal to (e^g - 1) * sigma_y_fixed_point(g, sigma_a): the coordinate
    change from the reversed variable evaluated at its long-time location
    x = g, which ties the fixed-point width to the volatility width.
    """
    if not g > 0.0:
        raise DomainError("sigma_dz_narrow requires g > 0")
    return math.sqrt(math.tanh(0.5 * g)) * sigma_a
