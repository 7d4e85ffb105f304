"""
Monte Carlo average capacity of MIMO channels built from spherical mode coefficients,
the dipole baselines, and the end-to-end comparison of design schemes.
"""

import logging
from collections import namedtuple
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from spheremimo import DomainError, NumericalError
from spheremimo.channel import AngularProfile, RayBundle, Side, SphereQuadrature, draw_rays
from spheremimo.currents import SurfaceGrid, coupling_matrix, recalc_smcs, synthesize_current
from spheremimo.modes import FAR_FIELD_NORM, Truncation, degree_from_count, far_field_basis, pattern_components, \
    truncate
from spheremimo.optimizer import EpsilonRule, SequentialTrace, channel_correlation, det_db, det_value, \
    sequential_optimize, side_correlation
from spheremimo.util import TimingLogger, ensure_list

_log = logging.getLogger(__name__)

ChannelRealization = namedtuple("ChannelRealization", ["H"])

ProjectedPattern = namedtuple("ProjectedPattern", ["q", "residual"])

# Design schemes of the comparison, best first.
SCHEMES = ("proposed", "planar", "dipole", "siso")


class CapacityConfig:
    """Monte Carlo settings: SNR grid (dB), number of channel realizations and rays per realization."""

    def __init__(self, snr_db: Sequence[float] = (0, 5, 10, 15, 20, 25, 30), n_realizations: int = 2000,
                 n_rays: int = 200, realizations_per_block: int = 100):
        self.snr_db = np.array(ensure_list(snr_db), dtype=float)
        if self.snr_db.size == 0 or not np.all(np.isfinite(self.snr_db)):
            raise DomainError("SNR grid must be a non-empty list of finite values.")
        if int(n_realizations) != n_realizations or n_realizations < 1:
            raise DomainError("Number of realizations must be at least 1, got {n!r}.".format(n=n_realizations))
        if int(n_rays) != n_rays or n_rays < 1:
            raise DomainError("Number of rays must be at least 1, got {n!r}.".format(n=n_rays))
        self.n_realizations = int(n_realizations)
        self.n_rays = int(n_rays)
        self.realizations_per_block = max(1, int(realizations_per_block))

    def __repr__(self):
        return "<{c} snr_db={s} n_realizations={n} n_rays={r}>".format(
            c=type(self).__name__, s=self.snr_db.tolist(), n=self.n_realizations, r=self.n_rays)


def _port_patterns(q: Optional[np.ndarray], theta, phi) -> np.ndarray:
    """(θ, φ) directivity components of all ports at given directions: shape (n_ant, 2) + shape."""
    if q is None:
        # Ideal omnidirectional port with unit gain in both polarizations.
        return np.ones((1, 2) + np.shape(theta), dtype=complex)
    q = np.asarray(q)
    if q.ndim != 2:
        raise DomainError("SMC matrix must be 2-dimensional, got shape {s}.".format(s=q.shape))
    return pattern_components(q, far_field_basis(degree_from_count(q.shape[0]), theta, phi))


def _check_truncation(q: Optional[np.ndarray], trunc: Optional[Truncation]):
    if q is not None and trunc is not None and np.shape(q)[0] != trunc.J:
        raise DomainError("SMC matrix with {a} rows does not match J={b}.".format(a=np.shape(q)[0], b=trunc.J))


def channel_matrix(rays: RayBundle, q_t: Optional[np.ndarray], q_r: Optional[np.ndarray],
                   trunc_t: Optional[Truncation] = None, trunc_r: Optional[Truncation] = None) -> ChannelRealization:
    """
    Channel matrix H = Σ_p α_p g_r(ψ_r,p) g_tᵀ(ψ_t,p) of one ray bundle (N_r x N_t).
    `q_t`/`q_r` of None stand for a single omnidirectional port.
    """
    _check_truncation(q_t, trunc_t)
    _check_truncation(q_r, trunc_r)
    g_t = _port_patterns(q_t, rays.theta_t, rays.phi_t)
    g_r = _port_patterns(q_r, rays.theta_r, rays.phi_r)
    h = np.einsum("pab,iap,kbp->ik", rays.alpha, g_r, g_t)
    if not np.all(np.isfinite(h)):
        raise NumericalError("Non-finite channel matrix.")
    return ChannelRealization(H=h)


def channel_matrices(rays: Sequence[RayBundle], q_t: Optional[np.ndarray], q_r: Optional[np.ndarray]) -> np.ndarray:
    """Channel matrices of equally sized ray bundles, stacked: shape (n_realizations, N_r, N_t)."""
    theta_t = np.stack([r.theta_t for r in rays])
    phi_t = np.stack([r.phi_t for r in rays])
    theta_r = np.stack([r.theta_r for r in rays])
    phi_r = np.stack([r.phi_r for r in rays])
    alpha = np.stack([r.alpha for r in rays])
    g_t = _port_patterns(q_t, theta_t, phi_t)
    g_r = _port_patterns(q_r, theta_r, phi_r)
    return np.einsum("rpab,iarp,kbrp->rik", alpha, g_r, g_t)


def realization_seeds(seed: Optional[int], count: int) -> List[np.random.SeedSequence]:
    """Independent child seeds, one per realization."""
    return np.random.SeedSequence(seed).spawn(count)


def _stream_count(q_t, q_r) -> int:
    n_t = 1 if q_t is None else np.shape(q_t)[1]
    n_r = 1 if q_r is None else np.shape(q_r)[1]
    return min(n_t, n_r)


def snr_linear(snr_db, n_streams: int) -> np.ndarray:
    """Per stream SNR γ₀ = P/(N_min P_n) for total SNR in dB."""
    return 10 ** (np.asarray(snr_db, dtype=float) / 10) / n_streams


@TimingLogger(title="Average capacity", logger=_log)
def average_capacity(q_t: Optional[np.ndarray], q_r: Optional[np.ndarray], profile: AngularProfile,
                     cfg: CapacityConfig, seed: Optional[int] = None) -> pd.DataFrame:
    """
    Average capacity E[log₂ det(I + γ₀ H Hᴴ)] over random channel realizations, per SNR.

    Realization i uses its own child seed of `seed`, so results do not depend on block size
    and different antenna designs see the same channel realizations.

    :return: DataFrame with columns snr_db, mean_capacity, stderr
    """
    n_streams = _stream_count(q_t, q_r)
    gamma = snr_linear(cfg.snr_db, n_streams)
    seeds = realization_seeds(seed, cfg.n_realizations)
    capacities = np.empty((cfg.n_realizations, gamma.size))
    for start in range(0, cfg.n_realizations, cfg.realizations_per_block):
        block = seeds[start:start + cfg.realizations_per_block]
        rays = [draw_rays(profile, cfg.n_rays, np.random.default_rng(s)) for s in block]
        h = channel_matrices(rays, q_t, q_r)
        eigenvalues = np.clip(np.linalg.eigvalsh(h @ np.conj(np.swapaxes(h, -1, -2))), 0, None)
        capacities[start:start + len(block)] = np.log2(1 + eigenvalues[:, None, :] * gamma[None, :, None]).sum(axis=-1)
    if not np.all(np.isfinite(capacities)):
        raise NumericalError("Non-finite capacity values.")
    stderr = capacities.std(axis=0, ddof=1) / np.sqrt(cfg.n_realizations) if cfg.n_realizations > 1 \
        else np.zeros(gamma.size)
    return pd.DataFrame({"snr_db": cfg.snr_db, "mean_capacity": capacities.mean(axis=0), "stderr": stderr})


def capacity_upper_bound(rc: np.ndarray, snr_db, n_streams: Optional[int] = None) -> np.ndarray:
    """Jensen bound log₂ det(I + γ₀ R̄_c) of the average capacity, per SNR."""
    rc = np.asarray(rc)
    gamma = snr_linear(snr_db, n_streams or rc.shape[0])
    eigenvalues = np.clip(np.linalg.eigvalsh(rc), 0, None)
    return np.log2(1 + np.multiply.outer(np.atleast_1d(gamma), eigenvalues)).sum(axis=-1)


def dipole_pattern(theta, phi, offset: float = 0.0, k: float = 2 * np.pi) -> np.ndarray:
    """
    Far field (θ, φ components) of a z-oriented half-wave dipole displaced by `offset` along the y-axis.
    Zero along the dipole axis.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    st = np.sin(theta)
    safe = np.abs(st) > 1e-12
    element = np.divide(np.cos(np.pi / 2 * np.cos(theta)), st, out=np.zeros_like(st), where=safe)
    e_theta = element * np.exp(1j * k * offset * st * np.sin(phi))
    return np.stack([e_theta, np.zeros_like(e_theta)])


def project_pattern(pattern: np.ndarray, n_max: int, quad: SphereQuadrature) -> ProjectedPattern:
    """
    SMCs q_j = ⟨g, k_j⟩ / c_K of a far-field pattern sampled at the quadrature nodes,
    with the relative residual ‖g - Σ q_j k_j‖ / ‖g‖ of the truncated expansion.
    """
    basis = quad.far_field_basis(n_max)
    pattern = np.asarray(pattern)
    if pattern.shape != (2, quad.size):
        raise DomainError("Pattern shape {s} does not match {q!r}.".format(s=pattern.shape, q=quad))
    q = np.einsum("cq,jcq,q->j", pattern, basis.conj(), quad.weights) / FAR_FIELD_NORM
    rest = pattern - pattern_components(q, basis)
    norm = np.sqrt(quad.integrate(np.sum(np.abs(pattern) ** 2, axis=0)))
    residual = float(np.sqrt(quad.integrate(np.sum(np.abs(rest) ** 2, axis=0))) / norm)
    return ProjectedPattern(q=q, residual=residual)


def dipole_offsets(n_elements: int, spacing: float) -> np.ndarray:
    return (np.arange(n_elements) - (n_elements - 1) / 2) * spacing


def dipole_array_smcs(trunc: Truncation, spacing: float, n_elements: int = 2, orientation: str = "z",
                      quad: Optional[SphereQuadrature] = None) -> np.ndarray:
    """
    SMC matrix (J x n_elements) of a linear array of z-oriented half-wave dipoles along the y-axis,
    columns normalized to unit norm.
    """
    if orientation != "z":
        raise DomainError("Only z-oriented dipoles are supported, got {o!r}.".format(o=orientation))
    if n_elements < 1 or spacing < 0:
        raise DomainError("Invalid dipole array: {n} elements with spacing {d}.".format(n=n_elements, d=spacing))
    offsets = dipole_offsets(n_elements, spacing)
    wavelength = 2 * np.pi / trunc.k
    extent = np.hypot(np.max(np.abs(offsets)), wavelength / 4)
    if extent > trunc.r0 * (1 + 1e-12):
        raise DomainError("Dipole array exceeds sphere: extent {e:.6g} > r0 = {r:.6g}.".format(e=extent, r=trunc.r0))
    quad = quad or SphereQuadrature(64, 128)
    columns = []
    for offset in offsets:
        projected = project_pattern(dipole_pattern(quad.theta, quad.phi, offset=offset, k=trunc.k), trunc.N, quad)
        _log.debug("Dipole at y={y:.4g}: projection residual {r:.4g}".format(y=offset, r=projected.residual))
        columns.append(projected.q / np.linalg.norm(projected.q))
    return np.stack(columns, axis=1)


def siso_smcs(trunc: Truncation, quad: Optional[SphereQuadrature] = None) -> np.ndarray:
    """SMC matrix (J x 1) of a single centered half-wave dipole."""
    return dipole_array_smcs(trunc, spacing=0.0, n_elements=1, quad=quad)


def normalize_columns(q: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(q, axis=0)
    if np.any(norms == 0):
        raise NumericalError("Cannot normalize SMC matrix with a zero column.")
    return q / norms


class Comparison:
    """Outcome of :py:func:`scenario_comparison`: designs per scheme, determinant gains and capacities."""

    def __init__(self):
        self.smcs: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        self.gains_db: Dict[str, float] = {}
        self.correlations: Dict[str, np.ndarray] = {}
        self.trace: Optional[SequentialTrace] = None
        self.currents: Dict[str, object] = {}
        self.grid: Optional[SurfaceGrid] = None
        self.coupling = None
        self.trunc: Optional[Truncation] = None
        self.capacity: Optional[pd.DataFrame] = None

    def capacity_at(self, scheme: str, snr_db: float) -> float:
        df = self.capacity
        row = df[(df["scheme"] == scheme) & np.isclose(df["snr_db"], snr_db)]
        if row.empty:
            raise KeyError((scheme, snr_db))
        return float(row["mean_capacity"].iloc[0])


def _planar_smcs(coupling, q: np.ndarray, svd_tol: float) -> Tuple[np.ndarray, list]:
    synthesized = [synthesize_current(coupling, q[:, i], svd_tol=svd_tol) for i in range(q.shape[1])]
    recalculated = np.stack([recalc_smcs(coupling, c.a) for c in synthesized], axis=1)
    return normalize_columns(recalculated), synthesized


def scenario_comparison(scenario, rho: Optional[float] = None) -> Comparison:
    """
    Run the full design pipeline for a scenario: sequential optimization from the dipole array,
    planar current synthesis of the optimal SMCs, and Monte Carlo capacity of the
    proposed, planar, dipole array and SISO designs.

    :param scenario: :py:class:`spheremimo.config.Scenario`
    :param rho: tx/rx correlation, defaults to the scenario's
    """
    result = Comparison()
    profile = scenario.profile(rho=rho)
    quad = SphereQuadrature(scenario.n_theta, scenario.n_phi)
    trunc = result.trunc = truncate(scenario.k, scenario.r0)
    baseline_quad = SphereQuadrature(64, 128)

    q_dipole_t = dipole_array_smcs(trunc, scenario.dipole_spacing, n_elements=scenario.n_tx, quad=baseline_quad)
    q_dipole_r = dipole_array_smcs(trunc, scenario.dipole_spacing, n_elements=scenario.n_rx, quad=baseline_quad)
    q_siso = siso_smcs(trunc, quad=baseline_quad)

    q_t, q_r, trace = sequential_optimize(
        profile, trunc, trunc, scenario.n_tx, scenario.n_rx, initial_qt=q_dipole_t, initial_qr=q_dipole_r,
        eps_rule=EpsilonRule(scenario.epsilon_fraction, scenario.epsilon_floor), quad=quad,
        max_iter=scenario.max_iter,
    )
    result.trace = trace

    result.grid = SurfaceGrid.from_cells(scenario.plane_side, scenario.cells, wavelength=scenario.wavelength)
    result.coupling = coupling_matrix(result.grid, trunc, eta=scenario.eta, gauss_points=scenario.gauss_points)
    planar_t, currents_t = _planar_smcs(result.coupling, q_t, scenario.svd_tol)
    planar_r, currents_r = _planar_smcs(result.coupling, q_r, scenario.svd_tol)
    result.currents = {"tx": currents_t, "rx": currents_r}

    result.smcs = {
        "proposed": (q_t, q_r),
        "planar": (planar_t, planar_r),
        "dipole": (q_dipole_t, q_dipole_r),
        "siso": (q_siso, q_siso),
    }
    reference = None
    for scheme in SCHEMES:
        s_t, s_r = result.smcs[scheme]
        r = side_correlation(profile, s_t, Side.RX, trunc=trunc, quad=quad)
        result.correlations[scheme] = r
        value = det_value(channel_correlation(s_r, r))
        if scheme == "dipole":
            reference = value
        result.gains_db[scheme] = value
    result.gains_db = {s: det_db(v, reference) for s, v in result.gains_db.items()}
    _log.info("Determinant gains over dipole array: " + ", ".join(
        "{s} {d:.2f} dB".format(s=s, d=d) for s, d in result.gains_db.items()))

    cfg = CapacityConfig(snr_db=scenario.snr_db, n_realizations=scenario.n_realizations, n_rays=scenario.n_rays)
    frames = []
    for scheme in SCHEMES:
        s_t, s_r = result.smcs[scheme]
        df = average_capacity(s_t, s_r, profile, cfg, seed=scenario.seed)
        rc = channel_correlation(s_r, result.correlations[scheme])
        df["upper_bound"] = capacity_upper_bound(rc, cfg.snr_db, n_streams=_stream_count(s_t, s_r))
        df.insert(1, "scheme", scheme)
        frames.append(df)
    result.capacity = pd.concat(frames, ignore_index=True)
    return result
