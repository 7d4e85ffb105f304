"""
Tables and static plots of a scenario run.

CSV files are the authoritative output: UTF-8, header row, ``.`` decimal separator
and round-trip exact float formatting. SVG plots are derived from the same tables.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import xarray

from spheremimo.channel import AngularProfile, Side, SphereQuadrature, marginal_profile
from spheremimo.currents import SurfaceGrid, TruncatedSvd, current_map
from spheremimo.modes import degree_from_count, directivity, mode_indices
from spheremimo.optimizer import SequentialTrace, eigen_solution

_log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

# Headline values of the default scenario with their tolerances.
HEADLINE_TARGETS = {
    "det_gain_proposed_db": (50.0, 6.0),
    "det_gain_planar_db": (42.0, 6.0),
    "capacity_delta_dipole_15db": (7.3, 2.0),
    "capacity_delta_siso_15db": (9.4, 2.0),
    "capacity_delta_planar_15db": (2.3, 1.5),
}


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    _log.info(f"Wrote {path}")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a table written by :py:func:`write_csv`, with exact float values."""
    return pd.read_csv(path, float_precision="round_trip", encoding="utf-8")


def convergence_table(traces: Iterable[SequentialTrace]) -> pd.DataFrame:
    return pd.concat([t.to_dataframe() for t in traces], ignore_index=True)


def cut_directions(plane: str, n_points: int = 361) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Directions of a pattern cut, parametrized by an angle in [0°, 360°].

    ``"horizontal"`` is the θ = 90° plane, ``"vertical_<φ>"`` the great circle
    through the poles at azimuth φ (degrees).
    """
    angle = np.linspace(0, 360, n_points)
    if plane == "horizontal":
        return angle, np.full_like(angle, np.pi / 2), np.deg2rad(angle)
    phi0 = float(plane.split("_", 1)[1])
    front = angle <= 180
    theta = np.deg2rad(np.where(front, angle, 360 - angle))
    phi = np.deg2rad(np.where(front, phi0, phi0 + 180))
    return angle, theta, phi


CUT_PLANES = ("horizontal", "vertical_0", "vertical_45")


def directivity_cuts(q: np.ndarray, planes: Sequence[str] = CUT_PLANES, n_points: int = 361) -> xarray.Dataset:
    """Directivity (dB over isotropic) and polarization components of every column of `q` along pattern cuts."""
    gains, e_theta, e_phi = [], [], []
    for plane in planes:
        angle, theta, phi = cut_directions(plane, n_points=n_points)
        g = directivity(q, theta, phi)
        power = np.abs(g.e_theta) ** 2 + np.abs(g.e_phi) ** 2
        gains.append(10 * np.log10(np.maximum(power, 1e-30)))
        e_theta.append(np.abs(g.e_theta))
        e_phi.append(np.abs(g.e_phi))
    dims = ("plane", "antenna", "angle_deg")
    return xarray.Dataset(
        data_vars={
            "gain_db": (dims, np.stack(gains)),
            "abs_e_theta": (dims, np.stack(e_theta)),
            "abs_e_phi": (dims, np.stack(e_phi)),
        },
        coords={"plane": list(planes), "antenna": np.arange(1, q.shape[1] + 1), "angle_deg": angle},
    )


def _labelled(df: pd.DataFrame, **labels) -> pd.DataFrame:
    for i, (name, value) in enumerate(labels.items()):
        df.insert(i, name, value)
    return df


def directivity_cut_table(smcs: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> pd.DataFrame:
    frames = []
    for scheme, pair in smcs.items():
        for side, q in zip(("tx", "rx"), pair):
            df = directivity_cuts(q).to_dataframe().reset_index()
            frames.append(_labelled(df, scheme=scheme, side=side))
    return pd.concat(frames, ignore_index=True)


def smc_tables(smcs: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """SMC magnitudes per mode, and the complex SMC matrices (re/im)."""
    magnitudes, matrices = [], []
    for scheme, pair in smcs.items():
        for side, q in zip(("tx", "rx"), pair):
            modes = mode_indices(degree_from_count(q.shape[0]))
            for antenna in range(q.shape[1]):
                for mode in modes:
                    value = q[mode.j - 1, antenna]
                    key = {"scheme": scheme, "side": side, "antenna": antenna + 1, "j": mode.j}
                    magnitudes.append(dict(key, s=mode.s, m=mode.m, n=mode.n, magnitude=abs(value)))
                    matrices.append(dict(key, re=value.real, im=value.imag))
    return pd.DataFrame(magnitudes), pd.DataFrame(matrices)


def smc_matrix_from_table(df: pd.DataFrame, scheme: str, side: str) -> np.ndarray:
    rows = df[(df["scheme"] == scheme) & (df["side"] == side)]
    n_modes, n_ant = rows["j"].max(), rows["antenna"].max()
    q = np.zeros((n_modes, n_ant), dtype=complex)
    q[rows["j"].to_numpy() - 1, rows["antenna"].to_numpy() - 1] = rows["re"].to_numpy() + 1j * rows["im"].to_numpy()
    return q


def mode_correlation_table(correlations: Dict[str, np.ndarray]) -> pd.DataFrame:
    frames = []
    for scheme, r in correlations.items():
        j, k = np.meshgrid(np.arange(1, r.shape[0] + 1), np.arange(1, r.shape[1] + 1), indexing="ij")
        frames.append(pd.DataFrame({
            "scheme": scheme, "j": j.ravel(), "k": k.ravel(), "re": r.real.ravel(), "im": r.imag.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def mode_correlation_from_table(df: pd.DataFrame, scheme: str) -> np.ndarray:
    rows = df[df["scheme"] == scheme]
    n = rows["j"].max()
    r = np.zeros((n, n), dtype=complex)
    r[rows["j"].to_numpy() - 1, rows["k"].to_numpy() - 1] = rows["re"].to_numpy() + 1j * rows["im"].to_numpy()
    return r


def eigenvalue_table(correlations: Dict[str, np.ndarray]) -> pd.DataFrame:
    """Eigenvalue spectrum of mode correlation matrices, with cumulative fraction of the trace."""
    frames = []
    for scheme, r in correlations.items():
        values = eigen_solution(r).eigenvalues
        frames.append(pd.DataFrame({
            "scheme": scheme, "index": np.arange(1, values.size + 1), "eigenvalue": values,
            "cumulative_fraction": np.cumsum(values) / np.sum(values),
        }))
    return pd.concat(frames, ignore_index=True)


def current_table(grid: SurfaceGrid, currents: Dict[str, list], per_cell: int = 1) -> pd.DataFrame:
    frames = []
    for side, coefficients in currents.items():
        for antenna, c in enumerate(coefficients, start=1):
            df = current_map(grid, c.a, per_cell=per_cell).to_dataframe().reset_index()
            frames.append(_labelled(df, side=side, antenna=antenna))
    return pd.concat(frames, ignore_index=True)[
        ["side", "antenna", "y", "z", "abs_j", "abs_jy", "arg_jy", "abs_jz", "arg_jz"]
    ]


def profile_map_table(profile: AngularProfile, quad: SphereQuadrature, n_theta: int = 91, n_phi: int = 181
                      ) -> pd.DataFrame:
    """
    Marginal angular profiles of both sides seen through an omnidirectional port at the other side,
    as densities per unit dθ dφ so that the pole rows stay finite.
    """
    theta = np.linspace(0, np.pi, n_theta)
    phi = np.linspace(-np.pi, np.pi, n_phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    frames = []
    for side in (Side.TX, Side.RX):
        values = marginal_profile(profile, None, side=side, quad=quad).box_density(tt, pp)
        frames.append(pd.DataFrame({
            "side": side.value, "theta_deg": np.rad2deg(tt.ravel()), "phi_deg": np.rad2deg(pp.ravel()),
            "density": values.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def headline_summary(comparison, snr_db: float = 15.0, svd_tol: float = 1e-6) -> Dict[str, object]:
    """Flat summary of determinant gains, capacity deltas and synthesis figures of a comparison."""
    gains = comparison.gains_db
    summary = {
        "N": comparison.trunc.N,
        "J": comparison.trunc.J,
        "rho": comparison.trace.rho,
        "iterations": len(comparison.trace) - 1,
        "converged": comparison.trace.converged,
        "det_gain_proposed_db": gains["proposed"],
        "det_gain_planar_db": gains["planar"],
        "det_gain_siso_db": gains["siso"],
        "synthesis_gap_db": gains["proposed"] - gains["planar"],
        "z_rank": TruncatedSvd(comparison.coupling.matrix, rcond=svd_tol).rank,
    }
    for side, currents in comparison.currents.items():
        for antenna, c in enumerate(currents, start=1):
            summary[f"residual_{side}_{antenna}"] = c.residual
    if np.any(np.isclose(comparison.capacity["snr_db"], snr_db)):
        proposed = comparison.capacity_at("proposed", snr_db)
        for scheme in ("dipole", "siso", "planar"):
            summary[f"capacity_delta_{scheme}_15db"] = proposed - comparison.capacity_at(scheme, snr_db)
    for key, (target, tolerance) in HEADLINE_TARGETS.items():
        if key in summary:
            summary[f"{key}_within_tolerance"] = bool(abs(summary[key] - target) <= tolerance)
    summary["synthesis_gap_within_range"] = bool(3 <= summary["synthesis_gap_db"] <= 15)
    return summary


def write_summary(summary: Dict[str, object], path: Union[str, Path]) -> Path:
    path = Path(path)
    lines = []
    for key, value in summary.items():
        if isinstance(value, (float, np.floating)):
            value = FLOAT_FORMAT % value
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log.info(f"Wrote {path}")
    return path


def read_summary(path: Union[str, Path]) -> Dict[str, str]:
    result = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition(" = ")
        result[key] = value
    return result


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "spheremimo"
    from matplotlib import pyplot
    return pyplot


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    fig.savefig(str(path), format="svg", metadata={"Date": None})
    fig.clf()
    _log.info(f"Wrote {path}")
    return path


def plot_convergence(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    pyplot = _pyplot()
    fig, ax = pyplot.subplots(figsize=(6, 4))
    for rho, group in df.groupby("rho"):
        ax.plot(group["iter"], group["det_db"], marker="o", label=f"rho = {rho:g}")
    ax.set_xlabel("Iteration")
    ax.set_ylabel("det gain over dipole array [dB]")
    ax.grid(True)
    ax.legend()
    path = _save(fig, path)
    pyplot.close(fig)
    return path


def plot_directivity_cuts(df: pd.DataFrame, path: Union[str, Path], floor_db: float = -30.0) -> Path:
    pyplot = _pyplot()
    planes = list(dict.fromkeys(df["plane"]))
    fig, axes = pyplot.subplots(1, len(planes), subplot_kw={"projection": "polar"}, figsize=(5 * len(planes), 5))
    for ax, plane in zip(np.atleast_1d(axes), planes):
        for (scheme, side, antenna), group in df[df["plane"] == plane].groupby(["scheme", "side", "antenna"]):
            if side != "rx":
                continue
            ax.plot(np.deg2rad(group["angle_deg"]), np.maximum(group["gain_db"], floor_db),
                    label=f"{scheme} #{antenna}")
        ax.set_ylim(floor_db, None)
        ax.set_title(plane)
    np.atleast_1d(axes)[-1].legend(loc="lower left", bbox_to_anchor=(1.05, 0), fontsize="small")
    path = _save(fig, path)
    pyplot.close(fig)
    return path


def plot_smc_magnitudes(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    pyplot = _pyplot()
    rows = df[df["side"] == "rx"]
    schemes = list(dict.fromkeys(rows["scheme"]))
    fig, axes = pyplot.subplots(len(schemes), 1, figsize=(7, 2.5 * len(schemes)), sharex=True)
    for ax, scheme in zip(np.atleast_1d(axes), schemes):
        for antenna, group in rows[rows["scheme"] == scheme].groupby("antenna"):
            ax.stem(group["j"] + 0.15 * (antenna - 1), group["magnitude"], label=f"#{antenna}",
                    linefmt=f"C{antenna - 1}-", markerfmt=f"C{antenna - 1}o", basefmt=" ")
        ax.set_ylabel(f"|q| {scheme}")
        ax.legend()
    np.atleast_1d(axes)[-1].set_xlabel("Mode index j")
    path = _save(fig, path)
    pyplot.close(fig)
    return path


def plot_currents(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    pyplot = _pyplot()
    groups = list(df.groupby(["side", "antenna"]))
    fig, axes = pyplot.subplots(2, len(groups), figsize=(4 * len(groups), 7), squeeze=False)
    for col, ((side, antenna), group) in enumerate(groups):
        grid = group.set_index(["z", "y"]).to_xarray()
        extent = (float(grid.y.min()), float(grid.y.max()), float(grid.z.min()), float(grid.z.max()))
        axes[0, col].imshow(grid["abs_j"].values, origin="lower", extent=extent)
        axes[0, col].set_title(f"{side} #{antenna} |J|")
        axes[1, col].imshow(grid["arg_jz"].values, origin="lower", extent=extent, cmap="twilight", vmin=-np.pi,
                            vmax=np.pi)
        axes[1, col].set_title(f"{side} #{antenna} arg Jz")
    path = _save(fig, path)
    pyplot.close(fig)
    return path


def plot_capacity(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    pyplot = _pyplot()
    fig, ax = pyplot.subplots(figsize=(6, 4))
    for scheme, group in df.groupby("scheme", sort=False):
        ax.errorbar(group["snr_db"], group["mean_capacity"], yerr=group["stderr"], marker="o", label=scheme)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("Average capacity [bps/Hz]")
    ax.grid(True)
    ax.legend()
    path = _save(fig, path)
    pyplot.close(fig)
    return path


def plot_profile_map(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    pyplot = _pyplot()
    fig, axes = pyplot.subplots(1, 2, figsize=(10, 4))
    for ax, (side, group) in zip(axes, df.groupby("side")):
        grid = group.set_index(["theta_deg", "phi_deg"]).to_xarray()["density"]
        ax.pcolormesh(grid.phi_deg, grid.theta_deg, grid.values, shading="auto")
        ax.set_title(f"{side} marginal profile")
        ax.set_xlabel("phi [deg]")
        ax.set_ylabel("theta [deg]")
        ax.invert_yaxis()
    path = _save(fig, path)
    pyplot.close(fig)
    return path
