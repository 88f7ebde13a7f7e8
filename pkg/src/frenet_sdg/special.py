"""Power-series Bessel functions of orders 0-2 on a bounded argument range."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["bessel_j1_y1", "j0", "j1", "y0", "y1", "j1_over_x", "j2_over_x2", "X_MAX"]

X_MAX = 5.0
_TERMS = 40
_EULER = 0.57721566490153286061

_k = np.arange(_TERMS)
_fact = np.array([math.factorial(int(k)) for k in range(_TERMS + 2)], dtype=float)
_harm = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, _TERMS + 2))])  # H_0 .. H_{T+1}
_sign = (-1.0) ** _k


def _series(x, coef, offset):
    """sum_k coef[k] * (x/2)^(2k + offset), vectorised over x."""
    z = (np.asarray(x, float)[..., None] / 2.0) ** 2
    return np.sum(coef * z ** _k, axis=-1) * (np.asarray(x, float) / 2.0) ** offset


def j0(x):
    return _series(x, _sign / _fact[:_TERMS] ** 2, 0)


def j1(x):
    return _series(x, _sign / (_fact[:_TERMS] * _fact[1:_TERMS + 1]), 1)


def j1_over_x(x):
    """J1(x)/x, regular at 0."""
    return 0.5 * _series(x, _sign / (_fact[:_TERMS] * _fact[1:_TERMS + 1]), 0)


def j2_over_x2(x):
    """J2(x)/x^2, regular at 0."""
    return 0.25 * _series(x, _sign / (_fact[:_TERMS] * _fact[2:_TERMS + 2]), 0)


def y0(x):
    x = np.asarray(x, float)
    # H_k for k >= 1 with alternating sign starting at +
    coef = np.concatenate([[0.0], (-(_sign[1:])) * _harm[1:_TERMS] / _fact[1:_TERMS] ** 2])
    return (2 / math.pi) * ((np.log(x / 2) + _EULER) * j0(x) + _series(x, coef, 0))


def y1(x):
    x = np.asarray(x, float)
    # digamma(k+1) + digamma(k+2) = H_k + H_{k+1} - 2 gamma
    dg = _harm[:_TERMS] + _harm[1:_TERMS + 1] - 2 * _EULER
    coef = _sign * dg / (_fact[:_TERMS] * _fact[1:_TERMS + 1])
    return (2 / math.pi) * j1(x) * np.log(x / 2) - 2 / (math.pi * x) - _series(x, coef, 1) / math.pi


def bessel_j1_y1(x):
    """(J1, Y1, J1', Y1') for ``0 < x <= 5``."""
    x = np.asarray(x, float)
    if np.any(~(x > 0)) or np.any(x > X_MAX):
        raise ValueError(f"bessel_j1_y1 supports 0 < x <= {X_MAX}")
    J1, Y1 = j1(x), y1(x)
    return J1, Y1, j0(x) - J1 / x, y0(x) - Y1 / x
