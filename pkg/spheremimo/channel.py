"""
Propagation environment: joint angular power profiles over departure and arrival directions,
directivity weighted marginal profiles and ray based channel synthesis.

Angles are in radians, ordered as x = [θ_t, φ_t, θ_r, φ_r].
"""

import enum
import logging
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from spheremimo import DomainError, ProfileError
from spheremimo.modes import degree_from_count, far_field_basis, pattern_components
from spheremimo.util import LazyLoadCache

_log = logging.getLogger(__name__)

# Number of kernel entries evaluated per block in pairwise profile integrals.
_BLOCK_SIZE = 2 ** 22

# Polar angles this close to 0 or π are treated as exact poles.
_POLE_ATOL = 1e-12


class Polarization(str, enum.Enum):
    """Polarization content of the angular profile."""
    THETA = "theta"
    BOTH = "both"

    @property
    def weights(self) -> np.ndarray:
        """Power share of the (θ, φ) components."""
        if self is Polarization.THETA:
            return np.array([1.0, 0.0])
        return np.array([0.5, 0.5])


class Side(str, enum.Enum):
    TX = "tx"
    RX = "rx"

    @property
    def other(self) -> "Side":
        return Side.RX if self is Side.TX else Side.TX


def wrap_angle(a):
    """Map azimuth differences to [-π, π)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def polar_sin(theta) -> np.ndarray:
    """sin θ with directions at (or within rounding of) a pole snapped to exactly zero."""
    theta = np.asarray(theta, dtype=float)
    pole = np.isclose(theta, 0, rtol=0, atol=_POLE_ATOL) | np.isclose(theta, np.pi, rtol=0, atol=_POLE_ATOL)
    return np.where(pole, 0.0, np.sin(theta))


class SphereQuadrature:
    """
    Product rule on the unit sphere: Gauss-Legendre in cos θ times uniform trapezoid in φ.
    Node tables are read-only.
    """

    def __init__(self, n_theta: int, n_phi: int):
        if n_theta < 2 or n_phi < 2:
            raise DomainError("Degenerate sphere quadrature {a}x{b}.".format(a=n_theta, b=n_phi))
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        theta, phi = np.meshgrid(np.arccos(x), phi, indexing="ij")
        self.theta = theta.ravel()
        self.phi = phi.ravel()
        self.weights = np.repeat(w * 2 * np.pi / self.n_phi, self.n_phi)
        for a in (self.theta, self.phi, self.weights):
            a.setflags(write=False)
        self._cache = LazyLoadCache()

    def __repr__(self):
        return "<{c} {a}x{b}>".format(c=type(self).__name__, a=self.n_theta, b=self.n_phi)

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> np.ndarray:
        """Integrate node values (last axis) over the sphere."""
        return np.asarray(values) @ self.weights

    def far_field_basis(self, n_max: int) -> np.ndarray:
        """Far-field pattern functions at the nodes (cached per degree)."""
        return self._cache.get(("far_field_basis", n_max), lambda: far_field_basis(n_max, self.theta, self.phi))

    def refined(self) -> "SphereQuadrature":
        """Quadrature with twice as many nodes along both axes."""
        return SphereQuadrature(2 * self.n_theta, 2 * self.n_phi)


def sphere_quadrature(n_theta: int, n_phi: int) -> SphereQuadrature:
    return SphereQuadrature(n_theta=n_theta, n_phi=n_phi)


class AngularProfile:
    """
    Base class for joint angular power profiles.

    Subclasses provide the pairwise density per unit solid angle on both sides
    and a sampler of ray directions.
    """

    polarization = Polarization.THETA

    def __init__(self):
        self._cache = LazyLoadCache()

    def pair_density(self, theta_t, phi_t, theta_r, phi_r, box_side: Optional[Side] = None) -> np.ndarray:
        """
        Unnormalized density for all (tx, rx) pairs: shape (n_t, n_r).

        Per unit solid angle on both sides, except on `box_side` (if given),
        whose directions are taken per unit dθ dφ. The latter stays finite at the poles.
        """
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw `count` direction pairs as array of shape (count, 4)."""
        raise NotImplementedError

    def mass(self, quad: SphereQuadrature) -> float:
        """Total mass of :py:meth:`pair_density` over both spheres (cached per quadrature size)."""
        return self._cache.get(("mass", quad.n_theta, quad.n_phi), lambda: float(
            quad.weights @ self.side_integral(quad.theta, quad.phi, quad.weights, quad.theta, quad.phi, Side.RX)
        ))

    def side_integral(self, fixed_theta, fixed_phi, fixed_weights, theta, phi, side: Side,
                      per_solid_angle: bool = True) -> np.ndarray:
        """
        Weighted sum over fixed-side nodes of the pair density, evaluated at directions (theta, phi) of `side`.
        Blocked over evaluation points to bound memory use.

        :param per_solid_angle: density of `side` per unit solid angle, or per unit dθ dφ if False
        """
        side = Side(side)
        box_side = None if per_solid_angle else side
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        shape = np.broadcast(theta, phi).shape
        theta, phi = [a.ravel() for a in np.broadcast_arrays(theta, phi)]
        step = max(1, _BLOCK_SIZE // max(1, len(fixed_weights)))
        out = np.empty(theta.size)
        for start in range(0, theta.size, step):
            sl = slice(start, start + step)
            if side is Side.RX:
                block = self.pair_density(fixed_theta, fixed_phi, theta[sl], phi[sl], box_side=box_side)
                out[sl] = fixed_weights @ block
            else:
                block = self.pair_density(theta[sl], phi[sl], fixed_theta, fixed_phi, box_side=box_side)
                out[sl] = block @ fixed_weights
        return out.reshape(shape)


class JointAngularProfile(AngularProfile):
    """
    Multivariate Gaussian angular profile over x = [θ_t, φ_t, θ_r, φ_r]
    with covariance Σ = (c cᵀ) ∘ P, where P has unit diagonal,
    uncorrelated θ/φ within a side and correlation ρ_h between every tx and rx component.
    """

    def __init__(self, mean: Sequence[float], spreads: Sequence[float], rho: float = 0.0,
                 polarization: Union[str, Polarization] = Polarization.THETA):
        super().__init__()
        self.mean = np.asarray(mean, dtype=float)
        self.spreads = np.asarray(spreads, dtype=float)
        if self.mean.shape != (4,) or self.spreads.shape != (4,):
            raise ProfileError("Profile mean and spreads must be 4-vectors.")
        if not np.all(np.isfinite(self.mean)) or not np.all(self.spreads > 0):
            raise ProfileError("Profile spreads must be positive, got {s!r}.".format(s=self.spreads))
        if not 0 <= rho < 1:
            raise ProfileError(
                "Correlation rho_h={r!r} outside [0, 1): the covariance would not be positive definite.".format(r=rho)
            )
        self.rho = float(rho)
        self.polarization = Polarization(polarization)
        self.covariance = covariance_matrix(self.spreads, self.rho)
        try:
            self._cholesky = scipy.linalg.cholesky(self.covariance, lower=True)
        except np.linalg.LinAlgError:
            smallest = np.linalg.eigvalsh(self.covariance)[0]
            raise ProfileError(
                "Covariance not positive definite for rho_h={r} (smallest eigenvalue {e:.3g});"
                " with all tx/rx correlations equal to rho_h this requires rho_h < 0.5.".format(r=rho, e=smallest)
            ) from None
        self.precision = scipy.linalg.cho_solve((self._cholesky, True), np.eye(4))
        self.peak = 1 / np.sqrt((2 * np.pi) ** 4 * np.linalg.det(self.covariance))

    @classmethod
    def from_degrees(cls, mean_deg: Sequence[float], spreads_deg: Sequence[float], rho: float = 0.0,
                     polarization: Union[str, Polarization] = Polarization.THETA) -> "JointAngularProfile":
        return cls(mean=np.deg2rad(mean_deg), spreads=np.deg2rad(spreads_deg), rho=rho, polarization=polarization)

    def __repr__(self):
        return "<{c} mean={m} spreads={s} rho={r} polarization={p}>".format(
            c=type(self).__name__, m=np.rad2deg(self.mean).round(3).tolist(),
            s=np.rad2deg(self.spreads).round(3).tolist(), r=self.rho, p=self.polarization.value
        )

    def _deviation(self, theta, phi, side: Side) -> np.ndarray:
        offset = 0 if side is Side.TX else 2
        return np.stack([np.asarray(theta) - self.mean[offset], wrap_angle(np.asarray(phi) - self.mean[offset + 1])],
                        axis=-1)

    def pdf(self, x) -> np.ndarray:
        """Gaussian density over raw angle coordinates x (..., 4); azimuth offsets taken to the nearest image."""
        x = np.asarray(x, dtype=float)
        d = np.concatenate([self._deviation(x[..., 0], x[..., 1], Side.TX),
                            self._deviation(x[..., 2], x[..., 3], Side.RX)], axis=-1)
        return self.peak * np.exp(-0.5 * np.einsum("...a,ab,...b->...", d, self.precision, d))

    def pair_density(self, theta_t, phi_t, theta_r, phi_r, box_side: Optional[Side] = None) -> np.ndarray:
        theta_t = np.asarray(theta_t, dtype=float)
        theta_r = np.asarray(theta_r, dtype=float)
        dt = self._deviation(theta_t, phi_t, Side.TX)
        dr = self._deviation(theta_r, phi_r, Side.RX)
        lt, lx, lr = self.precision[:2, :2], self.precision[:2, 2:], self.precision[2:, 2:]
        exponent = (
                np.einsum("ia,ab,ib->i", dt, lt, dt)[:, None]
                + np.einsum("ia,ab,ib->i", dr, lr, dr)[None, :]
                + 2 * dt @ lx @ dr.T
        )
        density = self.peak * np.exp(-0.5 * exponent)
        # Angle-box density to solid-angle density; poles carry no solid angle.
        jacobian = np.ones_like(density)
        if box_side is not Side.TX:
            jacobian = jacobian * polar_sin(theta_t)[:, None]
        if box_side is not Side.RX:
            jacobian = jacobian * polar_sin(theta_r)[None, :]
        return np.divide(density, jacobian, out=np.zeros_like(density), where=jacobian > 0)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        samples = []
        needed = count
        while needed > 0:
            z = rng.standard_normal(size=(max(needed, 16), 4))
            x = self.mean + z @ self._cholesky.T
            keep = (x[:, 0] >= 0) & (x[:, 0] <= np.pi) & (x[:, 2] >= 0) & (x[:, 2] <= np.pi)
            samples.append(x[keep][:needed])
            needed -= samples[-1].shape[0]
        return np.concatenate(samples, axis=0)


class IsotropicProfile(AngularProfile):
    """Uniform joint profile over both spheres."""

    def __init__(self, polarization: Union[str, Polarization] = Polarization.BOTH):
        super().__init__()
        self.polarization = Polarization(polarization)

    def __repr__(self):
        return "<{c} polarization={p}>".format(c=type(self).__name__, p=self.polarization.value)

    def pair_density(self, theta_t, phi_t, theta_r, phi_r, box_side: Optional[Side] = None) -> np.ndarray:
        density = np.full((np.size(theta_t), np.size(theta_r)), 1 / (4 * np.pi) ** 2)
        if box_side is Side.TX:
            density *= polar_sin(np.ravel(theta_t))[:, None]
        elif box_side is Side.RX:
            density *= polar_sin(np.ravel(theta_r))[None, :]
        return density

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.uniform(-1, 1, size=(count, 2))
        phi = rng.uniform(0, 2 * np.pi, size=(count, 2))
        return np.stack([np.arccos(u[:, 0]), phi[:, 0], np.arccos(u[:, 1]), phi[:, 1]], axis=-1)


def isotropic_profile(polarization: Union[str, Polarization] = Polarization.BOTH) -> IsotropicProfile:
    return IsotropicProfile(polarization=polarization)


def covariance_matrix(spreads: Sequence[float], rho: float) -> np.ndarray:
    """Σ = (c cᵀ) ∘ P for standard deviations c = [σ_tθ, σ_tφ, σ_rθ, σ_rφ]."""
    c = np.asarray(spreads, dtype=float)
    pattern = np.eye(4)
    pattern[:2, 2:] = rho
    pattern[2:, :2] = rho
    return np.outer(c, c) * pattern


def covariance(profile: JointAngularProfile) -> np.ndarray:
    return profile.covariance.copy()


def joint_pdf(profile: JointAngularProfile, x) -> np.ndarray:
    return profile.pdf(x)


def pattern_power(q: Optional[np.ndarray], basis: np.ndarray, polarization: Polarization) -> np.ndarray:
    """Total polarization weighted power Σ_ports Σ_c w_c |g_c|² of the directivities of SMC matrix `q`."""
    if q is None:
        return np.ones(basis.shape[2:])
    g = pattern_components(np.asarray(q).reshape(basis.shape[0], -1), basis)
    return np.einsum("c,ac...->...", polarization.weights, np.abs(g) ** 2)


class MarginalProfile:
    """
    Directivity weighted angular profile of one side: the joint profile integrated
    over the opposite side, weighted by the opposite side's total antenna power gain.
    """

    def __init__(self, profile: AngularProfile, side: Side, quad: SphereQuadrature, fixed_power: np.ndarray):
        self.profile = profile
        self.side = Side(side)
        self.quad = quad
        self.polarization = profile.polarization
        self._fixed_weights = quad.weights * fixed_power / profile.mass(quad)

    def __repr__(self):
        return "<{c} side={s} {q!r}>".format(c=type(self).__name__, s=self.side.value, q=self.quad)

    def __call__(self, theta, phi) -> np.ndarray:
        """Density per unit solid angle. Integrable but unbounded towards the poles; zero on them."""
        return self.profile.side_integral(
            self.quad.theta, self.quad.phi, self._fixed_weights, theta, phi, side=self.side
        )

    def box_density(self, theta, phi) -> np.ndarray:
        """Density per unit dθ dφ: the solid angle density times sin θ, finite everywhere."""
        return self.profile.side_integral(
            self.quad.theta, self.quad.phi, self._fixed_weights, theta, phi, side=self.side, per_solid_angle=False
        )


def marginal_profile(profile: AngularProfile, fixed_side_directivities: Optional[np.ndarray],
                     side: Union[str, Side], quad: SphereQuadrature) -> MarginalProfile:
    """
    Marginal angular profile of `side`, given the SMCs of the antennas at the opposite side.

    :param fixed_side_directivities: SMC matrix (J, n_ant) of the opposite side,
        or None for an ideal omnidirectional port with unit gain.
    """
    side = Side(side)
    if fixed_side_directivities is None:
        power = np.ones(quad.size)
    else:
        q = np.asarray(fixed_side_directivities)
        n_max = degree_from_count(q.shape[0])
        power = pattern_power(q, quad.far_field_basis(n_max), profile.polarization)
    return MarginalProfile(profile=profile, side=side, quad=quad, fixed_power=power)


class RayBundle:
    """
    Specular rays of one channel realization.

    Gains `alpha` have shape (n_rays, 2, 2): rx polarization × tx polarization (θ, φ),
    with Σ|α|² = 1.
    """

    __slots__ = ["theta_t", "phi_t", "theta_r", "phi_r", "alpha"]

    def __init__(self, theta_t, phi_t, theta_r, phi_r, alpha):
        self.theta_t = theta_t
        self.phi_t = phi_t
        self.theta_r = theta_r
        self.phi_r = phi_r
        self.alpha = alpha

    @property
    def count(self) -> int:
        return len(self.alpha)

    def __repr__(self):
        return "<{c} count={n}>".format(c=type(self).__name__, n=self.count)


def draw_rays(profile: AngularProfile, n_rays: int, seed: Union[int, np.random.Generator, None]) -> RayBundle:
    """Draw the rays of one channel realization: directions from the profile, iid uniform phases."""
    if n_rays < 1:
        raise DomainError("Number of rays must be at least 1, got {n!r}.".format(n=n_rays))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = profile.sample(rng, n_rays)
    phases = rng.uniform(0, 2 * np.pi, size=(n_rays, 2, 2))
    w = np.sqrt(np.outer(profile.polarization.weights, profile.polarization.weights))
    alpha = w * np.exp(1j * phases) / np.sqrt(n_rays)
    return RayBundle(theta_t=x[:, 0], phi_t=x[:, 1], theta_r=x[:, 2], phi_r=x[:, 3], alpha=alpha)
