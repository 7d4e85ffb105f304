import numpy as np
import pytest

from spheremimo import DomainError, ProfileError
from spheremimo.channel import JointAngularProfile, MarginalProfile, Polarization, RayBundle, Side, \
    SphereQuadrature, covariance, covariance_matrix, draw_rays, isotropic_profile, joint_pdf, marginal_profile, \
    pattern_power, sphere_quadrature, wrap_angle
from spheremimo.modes import mode_flatten

from .conftest import DEFAULT_MEAN_DEG, DEFAULT_SPREADS_DEG, default_profile


def _z_dipole_smcs() -> np.ndarray:
    q = np.zeros((16, 1), dtype=complex)
    q[mode_flatten(2, 0, 1) - 1, 0] = 1
    return q


class TestSphereQuadrature:

    @pytest.mark.parametrize(["n_theta", "n_phi"], [(2, 2), (3, 7), (32, 64), (64, 128)])
    def test_weights_sum(self, n_theta, n_phi):
        quad = sphere_quadrature(n_theta, n_phi)
        assert quad.size == n_theta * n_phi
        assert np.all(quad.weights > 0)
        assert quad.weights.sum() == pytest.approx(4 * np.pi, rel=1e-12)

    def test_low_degree_exact(self, quad):
        assert quad.integrate(np.ones(quad.size)) == pytest.approx(4 * np.pi, rel=1e-12)
        assert quad.integrate(np.cos(quad.theta)) == pytest.approx(0, abs=1e-13)
        assert quad.integrate(np.cos(quad.theta) ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-12)

    def test_read_only(self, quad):
        with pytest.raises(ValueError):
            quad.weights[0] = 1.0
        with pytest.raises(ValueError):
            quad.theta[0] = 1.0

    def test_refined(self):
        quad = SphereQuadrature(5, 8).refined()
        assert (quad.n_theta, quad.n_phi) == (10, 16)

    def test_cached_basis(self, quad):
        assert quad.far_field_basis(2) is quad.far_field_basis(2)
        assert quad.far_field_basis(2).shape == (16, 2, quad.size)

    @pytest.mark.parametrize(["n_theta", "n_phi"], [(1, 4), (4, 1), (0, 0)])
    def test_degenerate(self, n_theta, n_phi):
        with pytest.raises(DomainError):
            sphere_quadrature(n_theta, n_phi)


def test_wrap_angle():
    np.testing.assert_allclose(wrap_angle([0, np.pi / 2, 3 * np.pi / 2, -3 * np.pi / 2, 4 * np.pi]),
                               [0, np.pi / 2, -np.pi / 2, np.pi / 2, 0], atol=1e-12)
    assert wrap_angle(np.pi) == pytest.approx(-np.pi)


def test_polarization_weights():
    np.testing.assert_array_equal(Polarization("theta").weights, [1, 0])
    np.testing.assert_array_equal(Polarization("both").weights, [0.5, 0.5])
    with pytest.raises(ValueError):
        Polarization("phi")


def test_side_other():
    assert Side("tx").other is Side.RX
    assert Side.RX.other is Side.TX


class TestCovariance:

    def test_independent(self):
        profile = default_profile(rho=0)
        np.testing.assert_allclose(covariance(profile), np.diag(np.deg2rad(DEFAULT_SPREADS_DEG) ** 2))

    def test_structure(self):
        c = np.array([1.0, 2.0, 3.0, 4.0])
        sigma = covariance_matrix(c, 0.3)
        np.testing.assert_allclose(np.diag(sigma), c ** 2)
        assert sigma[0, 1] == sigma[2, 3] == 0
        assert sigma[0, 2] == pytest.approx(0.3 * 3)
        assert sigma[1, 3] == pytest.approx(0.3 * 8)
        assert sigma[0, 3] == pytest.approx(0.3 * 4)
        np.testing.assert_array_equal(sigma, sigma.T)

    @pytest.mark.parametrize("rho", [0.0, 0.2, 0.4, 0.49])
    def test_positive_definite(self, rho):
        profile = default_profile(rho=rho)
        assert np.linalg.eigvalsh(profile.covariance)[0] > 0

    def test_copy(self, profile):
        sigma = covariance(profile)
        sigma[0, 0] = 100
        assert profile.covariance[0, 0] != 100

    @pytest.mark.parametrize("rho", [0.6, 0.999])
    def test_not_positive_definite(self, rho):
        with pytest.raises(ProfileError, match="rho_h < 0.5"):
            default_profile(rho=rho)

    @pytest.mark.parametrize("rho", [1.0, 1.5, -0.1])
    def test_rho_outside_range(self, rho):
        with pytest.raises(ProfileError, match="positive definite"):
            default_profile(rho=rho)

    def test_profile_error_is_domain_error(self):
        with pytest.raises(DomainError):
            default_profile(rho=1.0)

    @pytest.mark.parametrize(["mean", "spreads"], [
        ([0, 0, 0], [1, 1, 1, 1]),
        ([0, 0, 0, 0], [1, 0, 1, 1]),
        ([0, 0, np.nan, 0], [1, 1, 1, 1]),
    ])
    def test_invalid_shape_or_spread(self, mean, spreads):
        with pytest.raises(ProfileError):
            JointAngularProfile(mean, spreads)


class TestJointPdf:

    def test_peak(self, profile):
        expected = ((2 * np.pi) ** 4 * np.linalg.det(profile.covariance)) ** -0.5
        assert joint_pdf(profile, profile.mean) == pytest.approx(expected, rel=1e-12)

    def test_one_sigma(self):
        profile = default_profile(rho=0)
        x = profile.mean + np.array([profile.spreads[0], 0, 0, 0])
        assert joint_pdf(profile, x) == pytest.approx(profile.peak * np.exp(-0.5), rel=1e-12)

    def test_nonnegative(self, profile):
        rng = np.random.default_rng(4)
        x = rng.uniform([0, -np.pi, 0, -np.pi], [np.pi, np.pi, np.pi, np.pi], size=(500, 4))
        assert np.all(joint_pdf(profile, x) >= 0)

    def test_azimuth_nearest_image(self, profile):
        shifted = profile.mean + np.array([0, 2 * np.pi, 0, -2 * np.pi])
        assert joint_pdf(profile, shifted) == pytest.approx(profile.peak, rel=1e-12)

    @pytest.mark.parametrize("rho", [0.0, 0.2, 0.4])
    def test_total_mass(self, quad, rho):
        # The solid angle density integrates to one over both spheres.
        assert default_profile(rho=rho).mass(quad) == pytest.approx(1, abs=1e-3)

    def test_pair_density_matches_pdf(self, profile):
        theta_t, phi_t = np.array([1.3, 1.6]), np.array([0.1, -0.2])
        theta_r, phi_r = np.array([1.5, 1.8, 1.4]), np.array([0.0, 0.3, -0.4])
        density = profile.pair_density(theta_t, phi_t, theta_r, phi_r)
        assert density.shape == (2, 3)
        for i in range(2):
            for k in range(3):
                x = [theta_t[i], phi_t[i], theta_r[k], phi_r[k]]
                expected = joint_pdf(profile, x) / (np.sin(theta_t[i]) * np.sin(theta_r[k]))
                assert density[i, k] == pytest.approx(expected, rel=1e-12)

    def test_pair_density_at_poles(self, profile):
        theta_r = np.array([0.0, np.pi, np.pi - 1e-14])
        density = profile.pair_density(np.array([np.pi / 2]), np.array([0.0]), theta_r, np.zeros(3))
        np.testing.assert_array_equal(density, 0)
        box = profile.pair_density(np.array([np.pi / 2]), np.array([0.0]), theta_r, np.zeros(3), box_side=Side.RX)
        assert np.all(np.isfinite(box)) and np.all(box > 0)


class TestMarginalProfile:

    def test_isotropic_omni_constant(self, quad):
        marginal = marginal_profile(isotropic_profile(), None, "rx", quad)
        assert isinstance(marginal, MarginalProfile)
        rng = np.random.default_rng(5)
        values = marginal(rng.uniform(0, np.pi, 50), rng.uniform(0, 2 * np.pi, 50))
        np.testing.assert_allclose(values, 1 / (4 * np.pi), rtol=1e-12)

    @pytest.mark.parametrize("side", ["tx", "rx"])
    def test_omni_unit_mass(self, quad, profile, side):
        marginal = marginal_profile(profile, None, side, quad)
        assert quad.integrate(marginal(quad.theta, quad.phi)) == pytest.approx(1, rel=1e-12)

    def test_shape(self, quad, profile):
        marginal = marginal_profile(profile, None, "rx", quad)
        assert marginal(np.ones((3, 4)), np.zeros((3, 4))).shape == (3, 4)

    def test_independent_sides_factorize(self, quad):
        profile = default_profile(rho=0)
        rng = np.random.default_rng(6)
        q = rng.normal(size=(16, 2)) + 1j * rng.normal(size=(16, 2))
        theta, phi = np.meshgrid(np.linspace(1.2, 1.9, 5), np.linspace(-0.5, 0.5, 5))
        omni = marginal_profile(profile, None, "rx", quad)(theta, phi)
        weighted = marginal_profile(profile, q, "rx", quad)(theta, phi)
        ratio = weighted / omni
        np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-10)

    def test_unitary_invariance(self, quad, profile):
        rng = np.random.default_rng(7)
        q = rng.normal(size=(16, 2)) + 1j * rng.normal(size=(16, 2))
        u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        theta, phi = rng.uniform(1.0, 2.1, 20), rng.uniform(-1, 1, 20)
        np.testing.assert_allclose(
            marginal_profile(profile, q @ u, "tx", quad)(theta, phi),
            marginal_profile(profile, q, "tx", quad)(theta, phi),
            rtol=1e-10,
        )

    @pytest.mark.parametrize("fixed", [None, "dipole"])
    @pytest.mark.parametrize("per_solid_angle", [True, False])
    def test_peak_at_profile_mean(self, quad, profile, fixed, per_solid_angle):
        q = _z_dipole_smcs() if fixed else None
        theta, phi = np.meshgrid(np.linspace(0, np.pi, 37), np.linspace(-np.pi, np.pi, 73), indexing="ij")
        marginal = marginal_profile(profile, q, "rx", quad)
        values = marginal(theta, phi) if per_solid_angle else marginal.box_density(theta, phi)
        assert np.unravel_index(np.argmax(values), values.shape) == (18, 36)
        assert np.deg2rad(DEFAULT_MEAN_DEG[2]) == pytest.approx(theta[18, 36])

    @pytest.mark.parametrize("side", ["tx", "rx"])
    def test_pole_directions(self, quad, profile, side):
        marginal = marginal_profile(profile, None, side, quad)
        theta = np.array([0.0, 1e-9, np.pi - 1e-9, np.pi])
        box = marginal.box_density(theta, np.zeros(4))
        assert np.all(np.isfinite(box))
        assert np.all(box < 1e-6 * marginal.box_density(np.pi / 2, 0.0))
        np.testing.assert_array_equal(marginal(np.array([0.0, np.pi]), np.zeros(2)), 0)

    def test_box_density_is_solid_angle_density_times_sin(self, quad, profile):
        marginal = marginal_profile(profile, _z_dipole_smcs(), "rx", quad)
        theta, phi = np.array([0.4, 1.2, 1.6, 2.7]), np.array([0.3, -0.1, 0.0, 2.0])
        np.testing.assert_allclose(marginal.box_density(theta, phi), marginal(theta, phi) * np.sin(theta),
                                   rtol=1e-12)

    def test_isotropic_box_density(self, quad):
        marginal = marginal_profile(isotropic_profile(), None, "tx", quad)
        theta = np.array([0.0, 0.5, np.pi / 2, np.pi])
        np.testing.assert_allclose(marginal.box_density(theta, np.zeros(4)), np.sin(theta) / (4 * np.pi),
                                   rtol=1e-12, atol=1e-15)

    @pytest.mark.slow
    def test_quadrature_refinement(self, quad, profile):
        q = _z_dipole_smcs()
        theta, phi = np.array([1.2, 1.5708, 1.9]), np.array([-0.3, 0.0, 0.4])
        coarse = marginal_profile(profile, q, "rx", quad)(theta, phi)
        fine = marginal_profile(profile, q, "rx", quad.refined())(theta, phi)
        np.testing.assert_allclose(coarse, fine, rtol=1e-6)

    def test_dimension_mismatch(self, quad, profile):
        with pytest.raises(DomainError):
            marginal_profile(profile, np.ones((10, 2)), "rx", quad)

    def test_invalid_side(self, quad, profile):
        with pytest.raises(ValueError):
            marginal_profile(profile, None, "up", quad)


def test_pattern_power_omni(quad):
    np.testing.assert_array_equal(pattern_power(None, quad.far_field_basis(2), Polarization.THETA), 1)


def test_pattern_power_theta_only(quad):
    q = np.zeros(16, dtype=complex)
    q[mode_flatten(1, 0, 1) - 1] = 1
    # A TE mode radiates only φ-polarized power.
    np.testing.assert_allclose(pattern_power(q, quad.far_field_basis(2), Polarization.THETA), 0, atol=1e-28)
    assert np.max(pattern_power(q, quad.far_field_basis(2), Polarization.BOTH)) > 0


class TestDrawRays:

    @pytest.mark.parametrize("polarization", ["theta", "both"])
    def test_unit_power(self, polarization):
        rays = draw_rays(default_profile(polarization=polarization), 200, seed=1)
        assert isinstance(rays, RayBundle)
        assert rays.count == 200
        assert rays.alpha.shape == (200, 2, 2)
        assert np.sum(np.abs(rays.alpha) ** 2) == pytest.approx(1, rel=1e-12)

    def test_theta_only_gains(self, profile):
        rays = draw_rays(profile, 50, seed=2)
        np.testing.assert_array_equal(rays.alpha[:, 1, :], 0)
        np.testing.assert_array_equal(rays.alpha[:, :, 1], 0)

    def test_deterministic(self, profile):
        a = draw_rays(profile, 100, seed=42)
        b = draw_rays(profile, 100, seed=42)
        for name in RayBundle.__slots__:
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_generator_argument(self, profile):
        a = draw_rays(profile, 30, np.random.default_rng(9))
        b = draw_rays(profile, 30, seed=9)
        np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_theta_in_range(self):
        profile = JointAngularProfile.from_degrees([10, 0, 170, 0], [20, 30, 20, 30], rho=0.3)
        rays = draw_rays(profile, 2000, seed=3)
        assert rays.count == 2000
        for theta in (rays.theta_t, rays.theta_r):
            assert np.all((theta >= 0) & (theta <= np.pi))

    def test_zero_rays(self, profile):
        with pytest.raises(DomainError):
            draw_rays(profile, 0, seed=1)

    def test_independent_sides(self):
        rays = draw_rays(default_profile(rho=0), 100000, seed=11)
        assert abs(np.corrcoef(rays.theta_t, rays.theta_r)[0, 1]) < 0.01

    def test_correlated_sides(self):
        rays = draw_rays(default_profile(rho=0.4), 100000, seed=12)
        assert np.corrcoef(rays.theta_t, rays.theta_r)[0, 1] == pytest.approx(0.4, abs=0.01)
        assert np.corrcoef(rays.phi_t, rays.phi_r)[0, 1] == pytest.approx(0.4, abs=0.01)

    def test_sample_covariance(self):
        profile = default_profile(rho=0.2)
        rays = draw_rays(profile, 100000, seed=13)
        x = np.stack([rays.theta_t, rays.phi_t, rays.theta_r, rays.phi_r])
        np.testing.assert_allclose(np.cov(x), profile.covariance, atol=0.05 * np.max(profile.covariance))

    def test_isotropic(self):
        rays = draw_rays(isotropic_profile(), 20000, seed=14)
        assert np.mean(np.cos(rays.theta_t)) == pytest.approx(0, abs=0.03)
        assert np.mean(np.cos(rays.theta_r) ** 2) == pytest.approx(1 / 3, abs=0.02)
        assert np.sum(np.abs(rays.alpha) ** 2) == pytest.approx(1)
