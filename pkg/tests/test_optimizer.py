import logging
from unittest import mock

import numpy as np
import pytest

from spheremimo import ConvergenceError, DomainError, NumericalError
from spheremimo.capacity import dipole_array_smcs
from spheremimo.channel import isotropic_profile, marginal_profile
from spheremimo.optimizer import EigenSolution, EpsilonRule, SequentialTrace, channel_correlation, det_db, \
    det_value, eigen_solution, evaluate_det, log_det_capacity, mode_correlation, optimal_smcs, \
    sequential_optimize, side_correlation

from .conftest import default_profile


def _random_psd(rng, size=16) -> np.ndarray:
    a = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    return a @ a.conj().T / size


def _unit_columns(rng, rows=16, cols=2) -> np.ndarray:
    q = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    return q / np.linalg.norm(q, axis=0)


class TestModeCorrelation:

    def test_isotropic_both_polarizations(self, quad, trunc):
        marginal = marginal_profile(isotropic_profile("both"), None, "rx", quad)
        r = mode_correlation(marginal, trunc, quad)
        np.testing.assert_allclose(r, 0.5 * np.eye(16), atol=1e-12)

    def test_trace_omni(self, quad, trunc):
        # Σ_j |K_j|² is the same in every direction, so tr R only depends on the total profile mass.
        marginal = marginal_profile(default_profile(polarization="both"), None, "rx", quad)
        assert np.trace(mode_correlation(marginal, trunc, quad)).real == pytest.approx(trunc.J / 2, rel=1e-10)

    @pytest.mark.parametrize("side", ["tx", "rx"])
    def test_rank_concentration_omni(self, quad, trunc, profile, side):
        lam = np.linalg.eigvalsh(side_correlation(profile, None, side, trunc, quad))[::-1]
        fraction = lam[:4].sum() / lam.sum()
        assert fraction > 0.95
        assert fraction == pytest.approx(0.972, abs=0.01)

    def test_hermitian_psd(self, quad, trunc, profile):
        rng = np.random.default_rng(1)
        r = side_correlation(profile, _unit_columns(rng), "rx", trunc, quad)
        np.testing.assert_array_equal(r, r.conj().T)
        assert np.linalg.eigvalsh(r)[0] > -1e-12

    def test_values_array(self, quad, trunc, profile):
        marginal = marginal_profile(profile, None, "tx", quad)
        values = marginal(quad.theta, quad.phi)
        np.testing.assert_allclose(mode_correlation(values, trunc, quad), mode_correlation(marginal, trunc, quad))

    def test_independent_sides_scale(self, quad, trunc):
        profile = default_profile(rho=0)
        rng = np.random.default_rng(2)
        omni = side_correlation(profile, None, "rx", trunc, quad)
        weighted = side_correlation(profile, _unit_columns(rng), "rx", trunc, quad)
        scale = np.trace(weighted).real / np.trace(omni).real
        np.testing.assert_allclose(weighted, scale * omni, atol=1e-10 * np.max(np.abs(weighted)))

    @pytest.mark.parametrize("values", [np.ones(5), -np.ones(32 * 64), np.full(32 * 64, np.nan)])
    def test_invalid_values(self, quad, trunc, values):
        with pytest.raises(DomainError):
            mode_correlation(values, trunc, quad)


class TestEigenSolution:

    def test_descending(self):
        rng = np.random.default_rng(3)
        r = _random_psd(rng)
        solution = eigen_solution(r)
        assert isinstance(solution, EigenSolution)
        assert np.all(np.diff(solution.eigenvalues) <= 0)
        v, lam = solution.eigenvectors, solution.eigenvalues
        np.testing.assert_allclose(v @ np.diag(lam) @ v.conj().T, r, atol=1e-10)

    def test_phase_fixed(self):
        rng = np.random.default_rng(4)
        v = eigen_solution(_random_psd(rng)).eigenvectors
        pivot = v[np.argmax(np.abs(v), axis=0), np.arange(v.shape[1])]
        np.testing.assert_allclose(pivot.imag, 0, atol=1e-14)
        assert np.all(pivot.real > 0)

    def test_not_square(self):
        with pytest.raises(DomainError):
            eigen_solution(np.ones((3, 4)))


class TestOptimalSmcs:

    @pytest.mark.parametrize("seed", range(20))
    def test_determinant_is_eigenvalue_product(self, seed):
        rng = np.random.default_rng(seed)
        r = _random_psd(rng)
        lam = np.linalg.eigvalsh(r)[::-1]
        best = det_value(channel_correlation(optimal_smcs(r, 2), r))
        assert best == pytest.approx(lam[0] * lam[1], rel=1e-10)
        q = rng.normal(size=(1000, 16, 2)) + 1j * rng.normal(size=(1000, 16, 2))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        dets = np.linalg.det(np.einsum("aji,jk,akl->ail", q, r, q.conj())).real
        assert np.all(dets <= best * (1 + 1e-12))

    @pytest.mark.parametrize("seed", range(3))
    def test_hadamard_bound(self, seed):
        rng = np.random.default_rng(100 + seed)
        r = _random_psd(rng)
        q = rng.normal(size=(1000, 16, 2)) + 1j * rng.normal(size=(1000, 16, 2))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        rc = np.einsum("aji,jk,akl->ail", q, r, q.conj())
        dets = np.linalg.det(rc).real
        diagonal_products = np.prod(np.einsum("aii->ai", rc).real, axis=1)
        assert np.all(dets >= -1e-12)
        assert np.all(dets <= diagonal_products * (1 + 1e-10))

    def test_diagonal_channel_correlation(self):
        rng = np.random.default_rng(21)
        r = _random_psd(rng)
        lam = np.linalg.eigvalsh(r)[::-1]
        rc = channel_correlation(optimal_smcs(r, 3), r)
        np.testing.assert_allclose(rc, np.diag(lam[:3]), atol=1e-10)

    def test_phase_invariance(self):
        rng = np.random.default_rng(22)
        r = _random_psd(rng)
        q = optimal_smcs(r, 2)
        rotated = q @ np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 2)))
        assert det_value(channel_correlation(rotated, r)) == pytest.approx(
            det_value(channel_correlation(q, r)), rel=1e-12)

    def test_unit_columns(self):
        q = optimal_smcs(_random_psd(np.random.default_rng(23)), 4)
        np.testing.assert_allclose(np.linalg.norm(q, axis=0), 1)
        np.testing.assert_allclose(q.conj().T @ q, np.eye(4), atol=1e-12)

    @pytest.mark.parametrize("n_ant", [0, 17])
    def test_invalid_antenna_count(self, n_ant):
        with pytest.raises(DomainError):
            optimal_smcs(np.eye(16), n_ant)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            channel_correlation(np.ones((6, 2)), np.eye(16))


def test_det_value_non_finite():
    with pytest.raises(NumericalError):
        det_value(np.array([[np.nan, 0], [0, 1]]))


def test_det_db():
    assert det_db(10.0, 1.0) == pytest.approx(10)
    assert det_db(2.0, 2.0) == 0


def test_log_det_capacity():
    assert log_det_capacity(np.eye(2), 1.0) == pytest.approx(2)
    assert log_det_capacity(np.diag([3.0, 0.0]), 1.0) == pytest.approx(2)


class TestEpsilonRule:

    def test_needs_three_values(self):
        assert not EpsilonRule().converged([1.0, 1.0])

    @pytest.mark.parametrize(["values", "expected"], [
        ([1.0, 2.0, 2.005], True),
        ([1.0, 2.0, 2.5], False),
        ([1.0, 1.0, 1.0], True),
        ([1.0, 1.5, 1.75, 1.7501], True),
        ([1.0, 1.5, 1.5, 1.6], False),
    ])
    def test_converged(self, values, expected):
        assert EpsilonRule(fraction=0.01).converged(values) is expected

    @pytest.mark.parametrize(["fraction", "floor"], [(0, 0), (1, 0), (0.1, -1)])
    def test_invalid(self, fraction, floor):
        with pytest.raises(DomainError):
            EpsilonRule(fraction=fraction, floor=floor)

    def test_describe(self):
        assert "0.05" in EpsilonRule(fraction=0.05).describe()


class TestSequentialTrace:

    def test_steps(self):
        trace = SequentialTrace(reference_det=2.0, epsilon_rule=EpsilonRule(), rho=0.2)
        trace.append("init", 2.0, 1.0, 16)
        trace.append("rx", 20.0, 2.0, 16)
        assert len(trace) == 2
        np.testing.assert_allclose(trace.normalized, [1, 10])
        assert trace.final.det_db == pytest.approx(10)
        df = trace.to_dataframe()
        assert list(df.columns) == [
            "rho", "iter", "side", "det_db", "n_modes", "det_value", "capacity_proxy", "accepted"
        ]
        assert df["iter"].tolist() == [0, 1]
        assert df["side"].tolist() == ["init", "rx"]
        assert df["rho"].tolist() == [0.2, 0.2]

    def test_decrease_warning(self, caplog):
        caplog.set_level(logging.WARNING)
        trace = SequentialTrace(reference_det=1.0, epsilon_rule=EpsilonRule())
        trace.append("init", 1.0, 0.0, 16)
        trace.append("rx", 0.5, 0.0, 16)
        assert "Determinant decreased at iteration 1" in caplog.text


class TestSequentialOptimize:

    @pytest.fixture
    def initial(self):
        return _unit_columns(np.random.default_rng(31))

    def test_independent_sides_monotone(self, quad, trunc, initial):
        profile = default_profile(rho=0)
        q_t, q_r, trace = sequential_optimize(profile, trunc, trunc, 2, 2, initial, quad=quad)
        assert trace.converged
        assert len(trace) <= 6
        assert np.all(np.diff(trace.normalized) >= -1e-9 * trace.normalized[1:])
        assert trace.final.det_db > 0
        assert [s.side for s in trace.steps[:3]] == ["init", "rx", "tx"]
        assert q_t.shape == q_r.shape == (16, 2)

    @pytest.mark.slow
    def test_correlated_sides(self, quad, trunc, initial):
        profile = default_profile(rho=0.2)
        q_t, q_r, trace = sequential_optimize(profile, trunc, trunc, 2, 2, initial, quad=quad)
        assert trace.converged
        assert trace.normalized[1] >= 1
        assert trace.final.det_value >= trace.reference_det
        assert trace.rho == 0.2

    @pytest.mark.parametrize("rho", [0.0, 0.2, 0.4])
    def test_dipole_array_start_monotone(self, quad, fine_quad, trunc, rho):
        q_dipole = dipole_array_smcs(trunc, 0.35, n_elements=2, quad=fine_quad)
        _, _, trace = sequential_optimize(default_profile(rho=rho), trunc, trunc, 2, 2, q_dipole, quad=quad,
                                          max_iter=20)
        assert trace.converged
        assert len(trace) <= 21
        values = trace.normalized
        assert np.all(np.diff(values) >= -1e-9 * values[1:])
        assert trace.final.det_db > 0
        assert all(s.accepted for s in trace.steps[:-1])

    def test_rejected_transmitter_step(self, quad, trunc, initial):
        def weakest_on_tx(r, n_ant):
            # Every second call is a transmitter step.
            weakest_on_tx.calls += 1
            if weakest_on_tx.calls % 2 == 0:
                return eigen_solution(r).eigenvectors[:, -n_ant:].conj()
            return optimal_smcs(r, n_ant)

        weakest_on_tx.calls = 0
        with mock.patch("spheremimo.optimizer.optimal_smcs", side_effect=weakest_on_tx):
            q_t, q_r, trace = sequential_optimize(default_profile(rho=0.2), trunc, trunc, 2, 2, initial, quad=quad)
        assert [s.accepted for s in trace.steps] == [True, True, False]
        assert trace.converged
        assert trace.steps[2].det_value == trace.steps[1].det_value
        np.testing.assert_array_equal(q_t, initial)

    def test_reference_det(self, quad, trunc, initial):
        profile = default_profile(rho=0)
        _, _, trace = sequential_optimize(profile, trunc, trunc, 2, 2, initial, quad=quad)
        assert trace.steps[0].det_value == pytest.approx(evaluate_det(profile, initial, initial, trunc, quad),
                                                         rel=1e-12)
        assert trace.steps[0].det_db == 0

    def test_not_converged(self, quad, trunc, initial, profile):
        with pytest.raises(ConvergenceError) as exc_info:
            sequential_optimize(profile, trunc, trunc, 2, 2, initial, quad=quad, max_iter=1)
        assert len(exc_info.value.trace) == 2

    def test_initial_shape(self, quad, trunc, profile):
        with pytest.raises(DomainError):
            sequential_optimize(profile, trunc, trunc, 2, 2, np.ones((16, 3)), quad=quad)
        with pytest.raises(DomainError):
            sequential_optimize(profile, trunc, trunc, 2, 2, np.ones((16, 2)), quad=quad,
                                initial_qr=np.ones((6, 2)))
