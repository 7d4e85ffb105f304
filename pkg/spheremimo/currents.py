"""
Far to near field conversion on a planar antenna structure.

Surface currents on a square plate in the yz-plane (centered at the origin) are expanded in
rooftop basis functions: one y-directed and one z-directed function per cell, with a sine profile
along the current direction and a constant profile across the cell.
The coupling matrix Z maps current coefficients to the SMCs they radiate (q = Z a),
and current coefficients for prescribed SMCs follow from a truncated SVD pseudo-inverse.
"""

import logging
from collections import namedtuple
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse
import xarray

from spheremimo import DomainError
from spheremimo.modes import Truncation, mode_flatten, mode_indices, spherical_wave_basis
from spheremimo.specialfn import RadialKind
from spheremimo.util import TimingLogger

_log = logging.getLogger(__name__)

BasisIndex = namedtuple("BasisIndex", ["component", "iy", "iz"])

CurrentCoefficients = namedtuple("CurrentCoefficients", ["a", "residual"])

_COMPONENTS = ("y", "z")


class SurfaceGrid:
    """
    Square plate of side `side_length` in the yz-plane, split into L x L cells.

    Basis function l (0-based) is ``2 * (iz * L + iy) + c`` with c = 0 for the y-directed
    and c = 1 for the z-directed rooftop of cell (iy, iz).
    Lengths are in the same unit as `wavelength`.
    """

    def __init__(self, side_length: float, cells_per_axis: int, wavelength: float = 1.0):
        if side_length <= 0 or wavelength <= 0:
            raise DomainError("Plate side and wavelength must be positive.")
        if int(cells_per_axis) != cells_per_axis or cells_per_axis < 1:
            raise DomainError("Invalid number of cells per axis {n!r}.".format(n=cells_per_axis))
        self.side_length = float(side_length)
        self.cells_per_axis = int(cells_per_axis)
        self.wavelength = float(wavelength)
        self.k = 2 * np.pi / self.wavelength
        # Half support of a rooftop (λ/(4L) for a λ/2 plate).
        self.delta = self.side_length / (2 * self.cells_per_axis)
        l = np.arange(1, self.cells_per_axis + 1)
        # Rooftop peak positions measured from the plate edge, and centered coordinates.
        self.positions = self.side_length * l / self.cells_per_axis - self.delta
        self.centers = self.positions - self.side_length / 2

    @classmethod
    def from_cells(cls, side_length: float, cells: int, wavelength: float = 1.0) -> "SurfaceGrid":
        """Grid from a total cell count, which must be a perfect square."""
        per_axis = int(round(np.sqrt(cells)))
        if per_axis * per_axis != cells:
            raise DomainError("Total cell count {c} is not a perfect square.".format(c=cells))
        return cls(side_length=side_length, cells_per_axis=per_axis, wavelength=wavelength)

    def __repr__(self):
        return "<{c} side={s} cells={n}x{n}>".format(c=type(self).__name__, s=self.side_length, n=self.cells_per_axis)

    @property
    def basis_count(self) -> int:
        return 2 * self.cells_per_axis ** 2

    @property
    def enclosing_radius(self) -> float:
        """Distance from the center to the plate corners."""
        return self.side_length / np.sqrt(2)

    def fits_in(self, r0: float) -> bool:
        return self.enclosing_radius <= r0 * (1 + 1e-12)

    def basis_index(self, l: int) -> BasisIndex:
        if int(l) != l or not 0 <= l < self.basis_count:
            raise DomainError("Basis index {l!r} outside [0, {n}).".format(l=l, n=self.basis_count))
        cell, c = divmod(int(l), 2)
        iz, iy = divmod(cell, self.cells_per_axis)
        return BasisIndex(component=_COMPONENTS[c], iy=iy, iz=iz)

    def basis_flatten(self, component: str, iy: int, iz: int) -> int:
        return 2 * (iz * self.cells_per_axis + iy) + _COMPONENTS.index(component)

    def mirror_index(self, l: int) -> int:
        """Basis function mirrored under y -> -y."""
        b = self.basis_index(l)
        return self.basis_flatten(b.component, self.cells_per_axis - 1 - b.iy, b.iz)

    def rooftop(self, u) -> np.ndarray:
        """Sine rooftop profile at offset `u` from the peak."""
        u = np.abs(np.asarray(u, dtype=float))
        inside = u <= self.delta
        return np.where(inside, np.sin(self.k * (self.delta - np.minimum(u, self.delta))) / np.sin(self.k * self.delta),
                        0.0)

    def cell_index(self, u) -> np.ndarray:
        """Cell index along an axis, -1 outside of the plate."""
        u = np.asarray(u, dtype=float)
        half = self.side_length / 2
        idx = np.clip(np.floor((u + half) / (2 * self.delta)).astype(int), 0, self.cells_per_axis - 1)
        return np.where((u >= -half) & (u <= half), idx, -1)


def _plane_point(point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.shape == (3,):
        if point[0] != 0:
            raise DomainError("Point {p!r} is not on the yz-plane.".format(p=point))
        point = point[1:]
    if point.shape != (2,):
        raise DomainError("Expected (y, z) or (x, y, z) point, got {p!r}.".format(p=point))
    return point


def basis_eval(grid: SurfaceGrid, l: int, point) -> np.ndarray:
    """In-plane (y, z) value of basis function `l` at `point`."""
    b = grid.basis_index(l)
    y, z = _plane_point(point)
    cy, cz = grid.centers[b.iy], grid.centers[b.iz]
    if b.component == "y":
        inside = grid.cell_index(z) == b.iz
        return np.array([grid.rooftop(y - cy) * inside, 0.0])
    inside = grid.cell_index(y) == b.iy
    return np.array([0.0, grid.rooftop(z - cz) * inside])


def basis_gram(grid: SurfaceGrid) -> scipy.sparse.spmatrix:
    """Gram matrix ∫ b_l · b_l' dS of the basis functions (diagonal, supports are disjoint)."""
    k, d = grid.k, grid.delta
    along = (d - np.sin(2 * k * d) / (2 * k)) / np.sin(k * d) ** 2
    return scipy.sparse.diags(np.full(grid.basis_count, along * 2 * d))


def _cell_rule(grid: SurfaceGrid, gauss_points: int):
    """
    Cell-local product rule for a rooftop of a cell centered at the origin:
    Gauss-Legendre on both halves along the current, and across the cell.
    Returns (along offsets, across offsets, weights times profile).
    """
    x, w = np.polynomial.legendre.leggauss(gauss_points)
    d = grid.delta
    along = np.concatenate([(x - 1) * d / 2, (x + 1) * d / 2])
    w_along = np.concatenate([w, w]) * d / 2
    across = x * d
    w_across = w * d
    u, v = np.meshgrid(along, across, indexing="ij")
    weights = np.outer(w_along * grid.rooftop(along), w_across)
    return u.ravel(), v.ravel(), weights.ravel()


class CouplingMatrix:
    """Coupling matrix Z (J x basis count) between rooftop current coefficients and SMCs."""

    def __init__(self, matrix: np.ndarray, grid: SurfaceGrid, trunc: Truncation, eta: float):
        self.matrix = matrix
        self.grid = grid
        self.trunc = trunc
        self.eta = eta
        self.k = trunc.k

    def __repr__(self):
        return "<{c} {s[0]}x{s[1]} {g!r}>".format(c=type(self).__name__, s=self.matrix.shape, g=self.grid)

    @property
    def shape(self):
        return self.matrix.shape


def _as_matrix(z: Union[CouplingMatrix, np.ndarray]) -> np.ndarray:
    return z.matrix if isinstance(z, CouplingMatrix) else np.asarray(z)


@TimingLogger(title="Coupling matrix assembly", logger=_log)
def coupling_matrix(grid: SurfaceGrid, trunc: Truncation, eta: float = 1.0, gauss_points: int = 4,
                    cells_per_block: int = 256) -> CouplingMatrix:
    """
    Z matrix with entries z_jl = (-1)^(m+1) (k/√η) ∫ f^(1)_{s,-m,n} · b_l dS
    for mode j = (s, m, n), by cell-local quadrature.
    """
    if not grid.fits_in(trunc.r0):
        raise DomainError("Plate exceeds sphere: corner radius {a:.6g} > r0 = {b:.6g}.".format(
            a=grid.enclosing_radius, b=trunc.r0))
    if not np.isclose(grid.k, trunc.k, rtol=1e-9):
        raise DomainError("Grid wavenumber {a} does not match truncation wavenumber {b}.".format(a=grid.k, b=trunc.k))
    if eta <= 0:
        raise DomainError("Characteristic admittance must be positive.")

    modes = mode_indices(trunc.N)
    flipped = np.array([mode_flatten(q.s, -q.m, q.n) - 1 for q in modes])
    signs = np.array([(-1) ** (q.m + 1) for q in modes]) * trunc.k / np.sqrt(eta)
    along, across, weights = _cell_rule(grid, gauss_points)

    L = grid.cells_per_axis
    iz, iy = np.divmod(np.arange(L * L), L)
    matrix = np.zeros((trunc.J, grid.basis_count), dtype=complex)
    for start in range(0, L * L, cells_per_block):
        cells = slice(start, start + cells_per_block)
        cy = grid.centers[iy[cells]][:, None]
        cz = grid.centers[iz[cells]][:, None]
        for c, (y, z) in enumerate([(cy + along, cz + across), (cy + across, cz + along)]):
            r = np.hypot(y, z)
            theta = np.arccos(np.clip(z / r, -1, 1))
            phi = np.arctan2(y, 0.0)
            waves = spherical_wave_basis(RadialKind.BESSEL, trunc.N, trunc.k * r, theta, phi)[flipped]
            if c == 0:
                # ŷ in spherical components
                unit = np.stack([np.sin(theta) * np.sin(phi), np.cos(theta) * np.sin(phi), np.cos(phi)])
            else:
                unit = np.stack([np.cos(theta), -np.sin(theta), np.zeros_like(theta)])
            projected = np.einsum("jcbp,cbp->jbp", waves, unit)
            matrix[:, 2 * np.arange(L * L)[cells] + c] = projected @ weights
    matrix *= signs[:, None]
    _log.debug("Coupling matrix {s}, norm {n:.6g}".format(s=matrix.shape, n=np.linalg.norm(matrix)))
    return CouplingMatrix(matrix=matrix, grid=grid, trunc=trunc, eta=eta)


class TruncatedSvd:
    """
    Singular value decomposition with relative cutoff:
    singular values below ``rcond * largest singular value`` are treated as zero.
    """

    def __init__(self, matrix: np.ndarray, rcond: float = 1e-6):
        self.u, self.s, self.vh = scipy.linalg.svd(np.asarray(matrix), full_matrices=False)
        self.rcond = rcond

    @property
    def cutoff(self) -> float:
        return self.rcond * (self.s[0] if self.s.size else 0.0)

    @property
    def rank(self) -> int:
        return int(np.sum(self.s > self.cutoff))

    def _s_inv(self) -> np.ndarray:
        keep = self.s > self.cutoff
        return np.where(keep, 1 / np.where(keep, self.s, 1), 0)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Minimum norm least squares solution."""
        b = np.asarray(b)
        s_inv = self._s_inv().reshape((-1,) + (1,) * (b.ndim - 1))
        return self.vh.conj().T @ (s_inv * (self.u.conj().T @ b))

    def pinv(self) -> np.ndarray:
        return self.solve(np.eye(self.u.shape[0]))


def pseudo_inverse(z: Union[CouplingMatrix, np.ndarray], svd_tol: float = 1e-6) -> np.ndarray:
    return TruncatedSvd(_as_matrix(z), rcond=svd_tol).pinv()


def synthesize_current(z: Union[CouplingMatrix, np.ndarray], q: np.ndarray, svd_tol: float = 1e-6
                       ) -> CurrentCoefficients:
    """Current coefficients ã = Z⁺ q and the relative residual ‖Z ã - q‖ / ‖q‖."""
    matrix = _as_matrix(z)
    q = np.asarray(q)
    if q.ndim != 1 or q.shape[0] != matrix.shape[0]:
        raise DomainError("SMC vector length {a} does not match J={b}.".format(a=q.shape, b=matrix.shape[0]))
    a = TruncatedSvd(matrix, rcond=svd_tol).solve(q)
    norm = np.linalg.norm(q)
    residual = float(np.linalg.norm(matrix @ a - q) / norm) if norm > 0 else 0.0
    return CurrentCoefficients(a=a, residual=residual)


def recalc_smcs(z: Union[CouplingMatrix, np.ndarray], a: np.ndarray) -> np.ndarray:
    """SMCs q' = Z a radiated by current coefficients `a`."""
    matrix = _as_matrix(z)
    a = np.asarray(a)
    if a.shape[0] != matrix.shape[1]:
        raise DomainError("Current coefficient length {a} does not match basis count {b}.".format(
            a=a.shape[0], b=matrix.shape[1]))
    return matrix @ a


def _current_at(grid: SurfaceGrid, a: np.ndarray, y, z) -> np.ndarray:
    a = np.asarray(a)
    if a.shape != (grid.basis_count,):
        raise DomainError("Current coefficient length {a} does not match basis count {b}.".format(
            a=a.shape, b=grid.basis_count))
    coefficients = a.reshape(grid.cells_per_axis, grid.cells_per_axis, 2)
    iy, iz = grid.cell_index(y), grid.cell_index(z)
    inside = (iy >= 0) & (iz >= 0)
    iy, iz = np.where(inside, iy, 0), np.where(inside, iz, 0)
    jy = coefficients[iz, iy, 0] * grid.rooftop(y - grid.centers[iy])
    jz = coefficients[iz, iy, 1] * grid.rooftop(z - grid.centers[iz])
    return np.where(inside, np.stack([jy, jz]), 0)


def current_field(grid: SurfaceGrid, a: np.ndarray, point) -> np.ndarray:
    """Surface current (J_y, J_z) = Σ_l a_l b_l(point)."""
    y, z = _plane_point(point)
    return _current_at(grid, a, y, z)


def current_map(grid: SurfaceGrid, a: np.ndarray, per_cell: int = 1) -> xarray.Dataset:
    """Amplitude and phase of the surface current sampled `per_cell` times per cell along each axis."""
    offsets = ((np.arange(per_cell) + 0.5) / per_cell - 0.5) * 2 * grid.delta
    axis = (grid.centers[:, None] + offsets[None, :]).ravel()
    y, z = np.meshgrid(axis, axis, indexing="xy")
    jy, jz = _current_at(grid, a, y, z)
    return xarray.Dataset(
        data_vars={
            "abs_j": (("z", "y"), np.sqrt(np.abs(jy) ** 2 + np.abs(jz) ** 2)),
            "abs_jy": (("z", "y"), np.abs(jy)),
            "arg_jy": (("z", "y"), np.angle(jy)),
            "abs_jz": (("z", "y"), np.abs(jz)),
            "arg_jz": (("z", "y"), np.angle(jz)),
        },
        coords={"z": axis, "y": axis},
    )
