"""
Special functions for spherical wave evaluation.

Normalized associated Legendre functions follow

    P̄_n^|m|(cos θ) = sqrt((2n + 1) / 2 * (n - |m|)! / (n + |m|)!) * P_n^|m|(cos θ)

without Condon-Shortley phase, so that the integral of (P̄_n^|m|)² over cos θ in [-1, 1] is one.
The sign convention of the wave functions is carried by :py:func:`sign_factor` instead.
"""

import enum
import logging
from collections import namedtuple
from typing import Tuple, Union

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from spheremimo import DomainError

_log = logging.getLogger(__name__)

# Supported range of degrees and radial arguments.
MAX_DEGREE = 20
MAX_ARGUMENT = 1e4


class RadialKind(enum.IntEnum):
    """Radial function z_n^(c) of a spherical wave."""
    BESSEL = 1
    NEUMANN = 2
    HANKEL1 = 3
    HANKEL2 = 4


# Legendre function of given degree and order, with the pole-safe angular combinations.
LegendreEval = namedtuple("LegendreEval", ["value", "theta_derivative", "m_over_sin"])


def sign_factor(m: int) -> int:
    """The azimuthal sign factor (-m/|m|)^m, taken as 1 for m = 0."""
    if m > 0 and m % 2 == 1:
        return -1
    return 1


def _as_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(np.isnan(theta)):
        raise DomainError("Polar angle must not be NaN.")
    if np.any(theta < 0) or np.any(theta > np.pi):
        raise DomainError("Polar angle out of range [0, pi]: {t!r}".format(t=theta[(theta < 0) | (theta > np.pi)]))
    return theta


def _check_degree(n: int, minimum: int = 0):
    if int(n) != n or n < minimum or n > MAX_DEGREE:
        raise DomainError("Degree n={n!r} outside supported range [{a}, {b}].".format(n=n, a=minimum, b=MAX_DEGREE))


def legendre_table(n_max: int, theta) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate all normalized associated Legendre functions up to degree `n_max` at once.

    Uses the three-term recurrence in degree, run in parallel on P̄ and on P̄/sin θ,
    so that nothing is ever divided by sin θ.

    :param n_max: maximum degree
    :param theta: polar angle(s) in radians, in [0, pi]
    :return: tuple of arrays (value, theta_derivative, over_sin),
        each of shape ``(n_max + 1, n_max + 1) + theta.shape`` and indexed as ``[n, m]`` with ``0 <= m <= n``.
        ``over_sin`` holds P̄/sin θ (with its finite pole limit), which is zero for m = 0.
    """
    _check_degree(n_max)
    theta = _as_theta(theta)
    ct = np.cos(theta)
    # Exact poles get exact zeros.
    st = np.where((theta == 0) | (theta == np.pi), 0.0, np.sin(theta))
    ct = np.where(theta == 0, 1.0, np.where(theta == np.pi, -1.0, ct))

    shape = (n_max + 1, n_max + 1) + theta.shape
    value = np.zeros(shape)
    over_sin = np.zeros(shape)
    derivative = np.zeros(shape)

    # Order m = 0: plain recurrence plus the derivative with respect to cos θ.
    dvalue = np.zeros((n_max + 1,) + theta.shape)
    value[0, 0] = np.sqrt(0.5)
    for n in range(0, n_max):
        a = np.sqrt((2 * n + 1) * (2 * n + 3)) / (n + 1)
        value[n + 1, 0] = a * ct * value[n, 0]
        if n > 0:
            b = np.sqrt((2 * n + 3) / (2 * n - 1)) * n / (n + 1)
            value[n + 1, 0] -= b * value[n - 1, 0]
        c = np.sqrt((2 * n + 3) / (2 * n + 1))
        dvalue[n + 1] = c * ((n + 1) * value[n, 0] + ct * dvalue[n])
    derivative[:, 0] = -st * dvalue

    # Orders m >= 1: recurrences on P̄ and P̄/sin θ from the sectoral start P̄_m^m.
    coefficient = np.sqrt(0.5)
    for m in range(1, n_max + 1):
        coefficient *= np.sqrt((2 * m + 1) / (2 * m))
        over_sin[m, m] = coefficient * st ** (m - 1)
        value[m, m] = over_sin[m, m] * st
        derivative[m, m] = m * ct * over_sin[m, m]
        for n in range(m, n_max):
            a = np.sqrt((2 * n + 1) * (2 * n + 3) / ((n + 1 - m) * (n + 1 + m)))
            value[n + 1, m] = a * ct * value[n, m]
            over_sin[n + 1, m] = a * ct * over_sin[n, m]
            if n > m:
                b = np.sqrt((2 * n + 3) * (n - m) * (n + m) / ((2 * n - 1) * (n + 1 - m) * (n + 1 + m)))
                value[n + 1, m] -= b * value[n - 1, m]
                over_sin[n + 1, m] -= b * over_sin[n - 1, m]
            d = (n + 1 + m) * np.sqrt((2 * n + 3) * (n + 1 - m) / ((2 * n + 1) * (n + 1 + m)))
            derivative[n + 1, m] = (n + 1) * ct * over_sin[n + 1, m] - d * over_sin[n, m]

    return value, derivative, over_sin


def legendre_eval(n: int, m: int, theta) -> LegendreEval:
    """
    Normalized associated Legendre function P̄_n^|m|(cos θ),
    with its θ derivative and m·P̄_n^|m|/sin θ (signed m, finite at the poles).
    """
    _check_degree(n, minimum=1)
    if int(m) != m or abs(m) > n:
        raise DomainError("Order m={m!r} invalid for degree n={n!r}.".format(m=m, n=n))
    value, derivative, over_sin = legendre_table(n, theta)
    mu = abs(m)
    return LegendreEval(value=value[n, mu], theta_derivative=derivative[n, mu], m_over_sin=m * over_sin[n, mu])


def _as_argument(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("Radial argument must not be NaN.")
    if np.any(x <= 0):
        raise DomainError("Radial argument must be positive, got {x!r}.".format(x=x[x <= 0]))
    if np.any(x > MAX_ARGUMENT):
        raise DomainError("Radial argument above supported maximum {a}.".format(a=MAX_ARGUMENT))
    return x


def _radial(kind: RadialKind, n: int, x: np.ndarray, derivative: bool = False):
    kind = RadialKind(kind)
    if kind == RadialKind.BESSEL:
        return spherical_jn(n, x, derivative=derivative)
    elif kind == RadialKind.NEUMANN:
        return spherical_yn(n, x, derivative=derivative)
    elif kind == RadialKind.HANKEL1:
        return spherical_jn(n, x, derivative=derivative) + 1j * spherical_yn(n, x, derivative=derivative)
    else:
        return spherical_jn(n, x, derivative=derivative) - 1j * spherical_yn(n, x, derivative=derivative)


def radial_eval(kind: Union[RadialKind, int], n: int, x) -> Union[float, complex, np.ndarray]:
    """
    Radial function z_n^(c)(x): spherical Bessel (c=1), Neumann (c=2)
    or Hankel function of the first (c=3) or second (c=4) kind.
    Real valued for c in {1, 2}.
    """
    _check_degree(n)
    return _radial(kind, n, _as_argument(x))


def radial_kr_derivative(kind: Union[RadialKind, int], n: int, x) -> Union[float, complex, np.ndarray]:
    """The radial factor (1/x) d/dx (x z_n^(c)(x)) of TM waves."""
    _check_degree(n)
    x = _as_argument(x)
    return _radial(kind, n, x) / x + _radial(kind, n, x, derivative=True)
