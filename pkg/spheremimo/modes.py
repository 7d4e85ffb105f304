"""
Vector spherical waves: mode indexing, truncation, spherical wave functions,
far-field pattern functions and directivities built from spherical mode coefficients (SMCs).

Modes are addressed by (s, m, n) with s = 1 (TE) or s = 2 (TM), 1 <= n <= N and |m| <= n,
or by the single index ``j = 2 (n² + n - 1 + m) + s`` (1-based).
All mode-indexed arrays in this package are ordered by ascending j, with mode j at row ``j - 1``.
"""

import logging
import math
from collections import namedtuple
from typing import List, Union

import numpy as np

from spheremimo import DomainError
from spheremimo.specialfn import MAX_DEGREE, RadialKind, legendre_table, radial_eval, radial_kr_derivative, \
    sign_factor

_log = logging.getLogger(__name__)

# Diagonal of the far-field Gram matrix: ∮ k_j · k_j* dΩ for every j.
FAR_FIELD_NORM = 4 * np.pi

ModeIndex = namedtuple("ModeIndex", ["s", "m", "n", "j"])

FieldVector = namedtuple("FieldVector", ["e_r", "e_theta", "e_phi"])


class Truncation(namedtuple("Truncation", ["k", "r0", "N", "J"])):
    """Mode truncation for an antenna volume of radius `r0` at wavenumber `k`."""
    __slots__ = ()

    @property
    def kr0(self) -> float:
        return self.k * self.r0


def mode_flatten(s: int, m: int, n: int) -> int:
    """Single mode index j of mode (s, m, n)."""
    if s not in (1, 2):
        raise DomainError("Invalid mode family s={s!r} (expected 1 or 2).".format(s=s))
    if int(n) != n or n < 1 or int(m) != m or abs(m) > n:
        raise DomainError("Invalid mode degree/order (m={m!r}, n={n!r}).".format(m=m, n=n))
    return 2 * (n * n + n - 1 + m) + s


def mode_unflatten(j: int) -> ModeIndex:
    """Mode (s, m, n) of single index j."""
    if int(j) != j or j < 1:
        raise DomainError("Invalid mode index j={j!r}.".format(j=j))
    j = int(j)
    n = max(1, math.isqrt(j // 2))
    while mode_count(n) < j:
        n += 1
    while n > 1 and mode_count(n - 1) >= j:
        n -= 1
    rest = j - 2 * (n * n + n - 1)
    s = 1 if rest % 2 else 2
    m = (rest - s) // 2
    return ModeIndex(s=s, m=m, n=n, j=j)


def mode_count(n_max: int) -> int:
    """Number of modes J = 2N(N + 2) up to degree N."""
    return 2 * n_max * (n_max + 2)


def mode_indices(n_max: int) -> List[ModeIndex]:
    """All modes up to degree `n_max`, in ascending j."""
    return [mode_unflatten(j) for j in range(1, mode_count(n_max) + 1)]


def degree_from_count(count: int) -> int:
    """Inverse of :py:func:`mode_count`."""
    n = 1
    while mode_count(n) < count:
        n += 1
    if mode_count(n) != count:
        raise DomainError("Length {c} is not a valid mode count 2N(N+2).".format(c=count))
    return n


def truncate(k: float, r0: float) -> Truncation:
    """Truncation N = floor(k r0) for an antenna enclosed in a sphere of radius r0."""
    if not (k > 0 and r0 > 0) or not np.isfinite(k * r0):
        raise DomainError("Wavenumber and radius must be positive, got k={k!r}, r0={r!r}.".format(k=k, r=r0))
    kr0 = k * r0
    # Absorb roundoff of products like (2π/λ)·(λ/2π).
    n = int(math.floor(kr0 * (1 + 1e-12)))
    if n < 1:
        raise DomainError("Antenna volume too small for one mode (k r0 = {v:.6g} < 1).".format(v=kr0))
    if n > MAX_DEGREE:
        raise DomainError("Truncation N={n} above supported maximum {m}.".format(n=n, m=MAX_DEGREE))
    return Truncation(k=k, r0=r0, N=n, J=mode_count(n))


def _angles(theta, phi):
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    if not np.all(np.isfinite(phi)):
        raise DomainError("Azimuth angle must be finite.")
    return theta, phi


def far_field_basis(n_max: int, theta, phi) -> np.ndarray:
    """
    Far-field pattern functions k_j(θ, φ) of all modes up to degree `n_max`.

    :return: complex array of shape ``(J, 2) + shape``: (θ, φ) components per mode.
    """
    theta, phi = _angles(theta, phi)
    _, derivative, over_sin = legendre_table(n_max, theta)
    basis = np.zeros((mode_count(n_max), 2) + theta.shape, dtype=complex)
    for n in range(1, n_max + 1):
        norm = np.sqrt(2 / (n * (n + 1)))
        for m in range(-n, n + 1):
            common = norm * sign_factor(m) * np.exp(1j * m * phi)
            m_over_sin = m * over_sin[n, abs(m)]
            d_theta = derivative[n, abs(m)]
            te = common * (-1j) ** (n + 1)
            tm = common * (-1j) ** n
            j = mode_flatten(1, m, n) - 1
            basis[j, 0] = te * 1j * m_over_sin
            basis[j, 1] = -te * d_theta
            basis[j + 1, 0] = tm * d_theta
            basis[j + 1, 1] = tm * 1j * m_over_sin
    return basis


def far_field_pattern(j: int, theta, phi) -> FieldVector:
    """Far-field pattern function k_j(θ, φ) of single mode j."""
    mode = mode_unflatten(j)
    if mode.n > MAX_DEGREE:
        raise DomainError("Mode j={j} above supported degree.".format(j=j))
    basis = far_field_basis(mode.n, theta, phi)[j - 1]
    return FieldVector(e_r=np.zeros_like(basis[0]), e_theta=basis[0], e_phi=basis[1])


def spherical_wave_basis(kind: Union[RadialKind, int], n_max: int, kr, theta, phi) -> np.ndarray:
    """
    Spherical wave functions f_j^(c)(kr, θ, φ) of all modes up to degree `n_max`.

    :return: complex array of shape ``(J, 3) + shape``: (r, θ, φ) components per mode.
    """
    kr, theta, phi = np.broadcast_arrays(np.asarray(kr, dtype=float), *_angles(theta, phi))
    value, derivative, over_sin = legendre_table(n_max, theta)
    basis = np.zeros((mode_count(n_max), 3) + theta.shape, dtype=complex)
    for n in range(1, n_max + 1):
        z = radial_eval(kind, n, kr)
        dz = radial_kr_derivative(kind, n, kr)
        norm = 1 / np.sqrt(2 * np.pi * n * (n + 1))
        for m in range(-n, n + 1):
            common = norm * sign_factor(m) * np.exp(1j * m * phi)
            m_over_sin = m * over_sin[n, abs(m)]
            d_theta = derivative[n, abs(m)]
            j = mode_flatten(1, m, n) - 1
            basis[j, 1] = common * z * 1j * m_over_sin
            basis[j, 2] = -common * z * d_theta
            basis[j + 1, 0] = common * n * (n + 1) / kr * z * value[n, abs(m)]
            basis[j + 1, 1] = common * dz * d_theta
            basis[j + 1, 2] = common * dz * 1j * m_over_sin
    return basis


def spherical_wave(kind: Union[RadialKind, int], j: int, k: float, r, theta, phi) -> FieldVector:
    """Spherical wave function f_j^(c)(r, θ, φ) of single mode j."""
    if np.any(np.asarray(r) <= 0) or k <= 0:
        raise DomainError("Radius and wavenumber must be positive.")
    mode = mode_unflatten(j)
    if mode.n > MAX_DEGREE:
        raise DomainError("Mode j={j} above supported degree.".format(j=j))
    wave = spherical_wave_basis(kind, mode.n, k * np.asarray(r, dtype=float), theta, phi)[j - 1]
    return FieldVector(e_r=wave[0], e_theta=wave[1], e_phi=wave[2])


def pattern_components(q: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """
    Combine SMCs with a precomputed basis table (g = Qᵀ k).

    :param q: SMC vector of length J or matrix of shape (J, n_ant)
    :param basis: far-field basis table of shape ``(J, 2) + shape``
    :return: array ``(2,) + shape`` for a vector, ``(n_ant, 2) + shape`` for a matrix
    """
    q = np.asarray(q)
    if q.shape[0] != basis.shape[0]:
        raise DomainError("SMC length {a} does not match mode count {b}.".format(a=q.shape[0], b=basis.shape[0]))
    return np.tensordot(q.T, basis, axes=1)


def directivity(q, theta, phi) -> FieldVector:
    """
    Directivity g(θ, φ) = Σ_j q_j k_j(θ, φ) of an SMC vector (or of each column of an SMC matrix,
    stacked along a leading antenna axis).
    """
    q = np.asarray(q)
    if q.ndim not in (1, 2):
        raise DomainError("SMCs must be a vector or a matrix, got shape {s}.".format(s=q.shape))
    n_max = degree_from_count(q.shape[0])
    g = pattern_components(q, far_field_basis(n_max, theta, phi))
    e_theta, e_phi = (g[0], g[1]) if q.ndim == 1 else (g[:, 0], g[:, 1])
    return FieldVector(e_r=np.zeros_like(e_theta), e_theta=e_theta, e_phi=e_phi)


def gram_matrix(n_max: int, quad) -> np.ndarray:
    """Far-field Gram matrix G_jj' = ∮ k_j · k_j'* dΩ by sphere quadrature."""
    basis = far_field_basis(n_max, quad.theta, quad.phi)
    return np.einsum("jcq,kcq,q->jk", basis, basis.conj(), quad.weights)
