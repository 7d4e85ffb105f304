"""
Capacity oriented antenna design in the spherical mode domain.

The channel correlation matrix of one side is a quadratic form R̄_c = Qᵀ R Q* of the SMC matrix Q
in the spherical mode correlation matrix R of that side.
Its determinant is maximized by the conjugated eigenvectors of R belonging to the largest eigenvalues.
Transmitter and receiver are optimized in turn until the determinant stops improving.
"""

import logging
from collections import namedtuple
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from spheremimo import ConvergenceError, DomainError, NumericalError
from spheremimo.channel import AngularProfile, MarginalProfile, Polarization, Side, SphereQuadrature, \
    marginal_profile
from spheremimo.modes import Truncation, mode_count
from spheremimo.util import TimingLogger

_log = logging.getLogger(__name__)

EigenSolution = namedtuple("EigenSolution", ["eigenvalues", "eigenvectors"])

TraceStep = namedtuple(
    "TraceStep", ["iteration", "side", "det_value", "det_db", "capacity_proxy", "n_modes", "accepted"]
)

# Relative slack on the monotonicity of the sequential determinant trace.
MONOTONE_SLACK = 1e-9


def mode_correlation(marginal: Union[MarginalProfile, np.ndarray], trunc: Truncation, quad: SphereQuadrature,
                     polarization: Union[str, Polarization, None] = None) -> np.ndarray:
    """
    Spherical mode correlation matrix R = ∮ k(ψ) P(ψ) kᴴ(ψ) dψ of a (marginal) angular profile.

    :param marginal: marginal profile, or its values at the quadrature nodes
    :param polarization: polarization content, defaults to the one of the marginal profile
    """
    if trunc.J != mode_count(trunc.N):
        raise DomainError("Inconsistent truncation {t!r}.".format(t=trunc))
    if callable(marginal):
        values = np.asarray(marginal(quad.theta, quad.phi))
    else:
        values = np.asarray(marginal, dtype=float)
    if values.shape != (quad.size,):
        raise DomainError("Profile values shape {s} does not match {q!r}.".format(s=values.shape, q=quad))
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("Angular profile must be finite and non-negative on all quadrature nodes.")
    polarization = Polarization(polarization or getattr(marginal, "polarization", Polarization.THETA))
    basis = quad.far_field_basis(trunc.N)
    r = np.einsum("c,jcq,kcq,q->jk", polarization.weights, basis, basis.conj(), quad.weights * values,
                  optimize=True)
    return 0.5 * (r + r.conj().T)


def side_correlation(profile: AngularProfile, fixed_side_smcs: Optional[np.ndarray], side: Union[str, Side],
                     trunc: Truncation, quad: SphereQuadrature) -> np.ndarray:
    """Mode correlation matrix of `side`, with the opposite side's antennas given by their SMCs."""
    marginal = marginal_profile(profile, fixed_side_smcs, side=side, quad=quad)
    return mode_correlation(marginal, trunc=trunc, quad=quad)


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so that its largest magnitude entry is real positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    pivot = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (pivot.conj() / np.abs(pivot))


def eigen_solution(r: np.ndarray) -> EigenSolution:
    """Eigen decomposition of a Hermitian matrix, eigenvalues descending, phase fixed eigenvectors."""
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DomainError("Mode correlation matrix must be square, got shape {s}.".format(s=r.shape))
    values, vectors = scipy.linalg.eigh(r)
    return EigenSolution(eigenvalues=values[::-1], eigenvectors=_fix_phase(vectors[:, ::-1]))


def optimal_smcs(r: np.ndarray, n_ant: int) -> np.ndarray:
    """Optimal SMC matrix: conjugated eigenvectors of the `n_ant` largest eigenvalues."""
    if n_ant < 1 or n_ant > r.shape[0]:
        raise DomainError("Number of antennas {n} not in [1, J={j}].".format(n=n_ant, j=r.shape[0]))
    return eigen_solution(r).eigenvectors[:, :n_ant].conj()


def channel_correlation(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Channel correlation matrix R̄_c = Qᵀ R Q*."""
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[0] != r.shape[0] or r.shape[0] != r.shape[1]:
        raise DomainError("Shape mismatch between SMCs {a} and mode correlation {b}.".format(a=q.shape, b=r.shape))
    rc = q.T @ r @ q.conj()
    return 0.5 * (rc + rc.conj().T)


def det_value(rc: np.ndarray) -> float:
    """Determinant of a Hermitian matrix (real)."""
    value = np.linalg.det(rc).real
    if not np.isfinite(value):
        raise NumericalError("Non-finite determinant.")
    return float(value)


def det_db(value: float, reference: float) -> float:
    """Determinant gain over a reference, in dB."""
    return float(10 * np.log10(value / reference))


def log_det_capacity(rc: np.ndarray, gamma: float) -> float:
    """log₂ det(I + γ R̄_c): the Jensen upper bound of the average capacity."""
    sign, logdet = np.linalg.slogdet(np.eye(rc.shape[0]) + gamma * rc)
    return float(logdet / np.log(2))


def evaluate_det(profile: AngularProfile, q_t: np.ndarray, q_r: np.ndarray, trunc_r: Truncation,
                 quad: SphereQuadrature) -> float:
    """det R̄_c,r at the receiver for given transmitter and receiver SMCs."""
    r = side_correlation(profile, q_t, Side.RX, trunc=trunc_r, quad=quad)
    return det_value(channel_correlation(q_r, r))


class EpsilonRule:
    """
    Stopping rule of the sequential optimization:
    stop when the latest change of the normalized determinant is below `fraction` of the change before,
    or below `floor` (relative to the determinant itself).
    """

    def __init__(self, fraction: float = 0.01, floor: float = 1e-12):
        if not (0 < fraction < 1) or floor < 0:
            raise DomainError("Invalid epsilon rule fraction={f!r} floor={l!r}.".format(f=fraction, l=floor))
        self.fraction = fraction
        self.floor = floor

    def __repr__(self):
        return "<{c} fraction={f} floor={l}>".format(c=type(self).__name__, f=self.fraction, l=self.floor)

    def describe(self) -> str:
        return "|d_k - d_k-1| < max({f} * |d_k-1 - d_k-2|, {l} * max(1, |d_k|))".format(f=self.fraction, l=self.floor)

    def converged(self, values) -> bool:
        if len(values) < 3:
            return False
        current, previous, before = values[-1], values[-2], values[-3]
        epsilon = max(self.fraction * abs(previous - before), self.floor * max(1.0, abs(current)))
        return abs(current - previous) < epsilon


class SequentialTrace:
    """Determinant history of the sequential transmitter/receiver optimization."""

    def __init__(self, reference_det: float, epsilon_rule: EpsilonRule, rho: Optional[float] = None):
        self.reference_det = reference_det
        self.epsilon_rule = epsilon_rule
        self.rho = rho
        self.steps = []
        self.converged = False

    def __repr__(self):
        return "<{c} steps={n} converged={v}>".format(c=type(self).__name__, n=len(self.steps), v=self.converged)

    def __len__(self):
        return len(self.steps)

    def append(self, side: str, det_value: float, capacity_proxy: float, n_modes: int,
               accepted: bool = True) -> TraceStep:
        step = TraceStep(
            iteration=len(self.steps), side=side, det_value=det_value,
            det_db=det_db(det_value, self.reference_det), capacity_proxy=capacity_proxy, n_modes=n_modes,
            accepted=accepted,
        )
        if self.steps and det_value < self.steps[-1].det_value * (1 - MONOTONE_SLACK):
            _log.warning("Determinant decreased at iteration {i}: {a:.6g} -> {b:.6g}".format(
                i=step.iteration, a=self.steps[-1].det_value, b=det_value
            ))
        self.steps.append(step)
        return step

    @property
    def normalized(self) -> np.ndarray:
        return np.array([s.det_value for s in self.steps]) / self.reference_det

    @property
    def final(self) -> TraceStep:
        return self.steps[-1]

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.steps, columns=TraceStep._fields).rename(columns={"iteration": "iter"})
        df.insert(0, "rho", self.rho if self.rho is not None else np.nan)
        return df[["rho", "iter", "side", "det_db", "n_modes", "det_value", "capacity_proxy", "accepted"]]


@TimingLogger(title="Sequential optimization", logger=_log)
def sequential_optimize(
        profile: AngularProfile, trunc_t: Truncation, trunc_r: Truncation, n_t: int, n_r: int,
        initial_qt: np.ndarray, eps_rule: Optional[EpsilonRule] = None, quad: Optional[SphereQuadrature] = None,
        max_iter: int = 50, initial_qr: Optional[np.ndarray] = None, proxy_snr_db: float = 15.0,
) -> Tuple[np.ndarray, np.ndarray, SequentialTrace]:
    """
    Alternate receiver and transmitter optimization, starting from transmitter SMCs `initial_qt`.

    The tracked objective is the receiver determinant det(Q_rᵀ R_r(Q_t) Q_r*).
    The trace starts with its value for the initial antennas on both sides
    (`initial_qr` defaults to `initial_qt`), which is the 0 dB reference.
    A receiver step maximizes the objective exactly. A transmitter step maximizes the transmitter
    determinant instead, and is only accepted if it does not lower the objective;
    otherwise the previous transmitter SMCs are kept, which ends the iteration.
    The trace is therefore non-decreasing.

    :return: tuple (Q_t, Q_r, trace)
    """
    eps_rule = eps_rule or EpsilonRule()
    quad = quad or SphereQuadrature(32, 64)
    initial_qt = np.asarray(initial_qt)
    if initial_qt.shape != (trunc_t.J, n_t):
        raise DomainError("Initial SMCs shape {s} does not match ({j}, {n}).".format(
            s=initial_qt.shape, j=trunc_t.J, n=n_t))
    initial_qr = initial_qt if initial_qr is None else np.asarray(initial_qr)
    if initial_qr.shape != (trunc_r.J, n_r):
        raise DomainError("Initial receiver SMCs shape {s} does not match ({j}, {n}).".format(
            s=initial_qr.shape, j=trunc_r.J, n=n_r))
    gamma = 10 ** (proxy_snr_db / 10) / min(n_t, n_r)

    r = side_correlation(profile, initial_qt, Side.RX, trunc=trunc_r, quad=quad)
    rc = channel_correlation(initial_qr, r)
    trace = SequentialTrace(reference_det=det_value(rc), epsilon_rule=eps_rule, rho=getattr(profile, "rho", None))
    trace.append("init", trace.reference_det, log_det_capacity(rc, gamma), trunc_r.J)

    q_t, q_r = initial_qt, initial_qr
    for iteration in range(1, max_iter + 1):
        accepted = True
        if iteration % 2:
            side = Side.RX
            q_r = optimal_smcs(r, n_r)
            n_modes = trunc_r.J
        else:
            side = Side.TX
            candidate = optimal_smcs(side_correlation(profile, q_r, side, trunc=trunc_t, quad=quad), n_t)
            r_candidate = side_correlation(profile, candidate, Side.RX, trunc=trunc_r, quad=quad)
            value = det_value(channel_correlation(q_r, r_candidate))
            accepted = value >= trace.final.det_value * (1 - MONOTONE_SLACK)
            if accepted:
                q_t, r = candidate, r_candidate
            else:
                _log.info("Iteration {i} (tx): update would lower the determinant ({a:.6g} -> {b:.6g}),"
                          " keeping previous transmitter SMCs".format(i=iteration, a=trace.final.det_value, b=value))
            n_modes = trunc_t.J
        rc = channel_correlation(q_r, r)
        step = trace.append(side.value, det_value(rc), log_det_capacity(rc, gamma), n_modes, accepted=accepted)
        _log.info("Iteration {i} ({s}): det {d:.4f} dB".format(i=iteration, s=side.value, d=step.det_db))
        if eps_rule.converged(trace.normalized):
            trace.converged = True
            break
    else:
        raise ConvergenceError(
            "Sequential optimization did not converge in {n} iterations.".format(n=max_iter), trace=trace
        )
    return q_t, q_r, trace
