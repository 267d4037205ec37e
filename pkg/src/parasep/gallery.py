"""Concrete parameter-dependent matrix families and dense utilities.

Two providers are available:

* :class:`Fem1DProblem`, P1 finite elements for
  ``-(g(mu, x) u')' + mu u = 1`` on an interval with homogeneous Dirichlet
  conditions, so that ``A_mu = A1_mu + mu A0``.
* :class:`KernelProblem`, a dense complex matrix built from the oscillatory
  kernel ``exp(i mu r) / (4 pi r)`` on a point cloud.

Both expose the hooks used by the intrusive reference model
(``term_matrices`` and ``psi_matrix``) besides plain assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .eim import SampleGrid, lu_factor_quiet
from .exceptions import SingularMatrixError
from .separated import KernelBlock, TermLayout, exp_i_mu_r, exp_mu_x


# -- 1D finite elements -----------------------------------------------------

@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of ``[a, b]`` with a 3-point Gauss rule in each cell."""

    a: float
    b: float
    h_x: float
    vertices: np.ndarray = field(init=False, repr=False)
    gauss_nodes: np.ndarray = field(init=False, repr=False)
    gauss_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.b > self.a or not self.h_x > 0:
            raise ValueError("need a < b and h_x > 0")
        n_cells = int(round((self.b - self.a) / self.h_x))
        if n_cells < 2 or not math.isclose(n_cells * self.h_x, self.b - self.a, rel_tol=1e-9):
            raise ValueError("h_x must divide b - a into at least two cells")
        vertices = np.linspace(self.a, self.b, n_cells + 1)
        ref_nodes, ref_weights = np.polynomial.legendre.leggauss(3)
        left, right = vertices[:-1], vertices[1:]
        half = 0.5 * (right - left)
        nodes = 0.5 * (left + right)[:, None] + half[:, None] * ref_nodes[None, :]
        weights = half[:, None] * ref_weights[None, :]
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "gauss_nodes", nodes)
        object.__setattr__(self, "gauss_weights", weights)

    @property
    def n_cells(self) -> int:
        return self.vertices.size - 1

    @property
    def cell_sizes(self):
        return np.diff(self.vertices)


@dataclass(frozen=True)
class Fem1DProblem:
    """P1 discretization of ``-(g(mu,x) u')' + mu u = 1`` with ``u = 0`` at both ends.

    ``kernel(mu, x)`` must broadcast over numpy arrays. Boundary vertices are
    eliminated, so matrices have order ``n = n_vertices - 2``.
    """

    mesh: Mesh1D
    kernel: object = exp_mu_x
    kernel_name: str = "exp_mu_x"

    @property
    def n(self) -> int:
        return self.mesh.vertices.size - 2

    @property
    def omega_trial(self):
        """Gauss points of the mesh, in cell order."""
        return self.mesh.gauss_nodes.ravel()

    def stiffness(self, coef_at_gauss):
        """Stiffness matrix for a coefficient sampled at the Gauss points."""
        coef = np.asarray(coef_at_gauss).reshape(self.mesh.gauss_nodes.shape)
        h = self.mesh.cell_sizes
        k = (self.mesh.gauss_weights * coef).sum(axis=1) / h**2
        return self._tridiag(k, -k)

    def kernel_part(self, mu):
        """``A1_mu``: the stiffness term carrying the parameter-dependent coefficient."""
        return self.stiffness(self.kernel(mu, self.mesh.gauss_nodes))

    def mass_part(self):
        """``A0``: the P1 mass matrix, integrated with the same Gauss rule."""
        return self._mass.copy()

    @cached_property
    def _mass(self):
        x = self.mesh.gauss_nodes
        left, h = self.mesh.vertices[:-1, None], self.mesh.cell_sizes[:, None]
        phi_r = (x - left) / h
        phi_l = 1.0 - phi_r
        w = self.mesh.gauss_weights
        diag = (w * phi_l * phi_l).sum(axis=1), (w * phi_r * phi_r).sum(axis=1)
        off = (w * phi_l * phi_r).sum(axis=1)
        return self._tridiag(diag, off)

    def _tridiag(self, diag, off):
        # cell c couples vertices c and c+1; diag is either one array used
        # for both ends or a (left, right) pair
        if isinstance(diag, tuple):
            d_left, d_right = diag
        else:
            d_left = d_right = diag
        nv = self.mesh.vertices.size
        full_diag = np.zeros(nv, dtype=np.result_type(d_left, off))
        full_diag[:-1] += d_left
        full_diag[1:] += d_right
        n = nv - 2
        A = np.zeros((n, n), dtype=full_diag.dtype)
        idx = np.arange(n)
        A[idx, idx] = full_diag[1:-1]
        A[idx[:-1], idx[1:]] = off[1:-1]
        A[idx[1:], idx[:-1]] = off[1:-1]
        return A

    def matrix(self, mu):
        return self.kernel_part(mu) + mu * self._mass

    def rhs(self):
        """``C_i = int theta_i``, i.e. the cell size for a uniform mesh."""
        h = self.mesh.cell_sizes
        return 0.5 * (h[:-1] + h[1:])

    def layout(self, itp) -> TermLayout:
        """One kernel block with weight 1 plus the ``mu * A0`` term."""
        return TermLayout(
            blocks=[KernelBlock(itp, self.kernel, ("1",), self.kernel_name)],
            psis=("mu",),
        )

    def eim_grid(self, mu_trial):
        return SampleGrid.from_function(self.kernel, mu_trial, self.omega_trial)

    # hooks for the intrusive reference model
    def term_matrices(self, block, weight, basis):
        q = basis(self.omega_trial)
        return [self.stiffness(q[:, m]) for m in range(q.shape[1])]

    def psi_matrix(self, index, name):
        if name != "mu":
            raise KeyError(name)
        return self.mass_part()


def assemble_fem1d(problem: Fem1DProblem, mu):
    """Return ``(A_mu, C)`` for the 1D problem."""
    return problem.matrix(mu), problem.rhs()


def assemble_fem1d_split(problem: Fem1DProblem, mu):
    """Return ``(A1_mu, A0)`` with ``A_mu = A1_mu + mu A0``."""
    return problem.kernel_part(mu), problem.mass_part()


# -- oscillatory kernel family ----------------------------------------------

def fibonacci_sphere(n: int, radius: float = 1.0):
    """Deterministic, nearly uniform points on a sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z**2)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n)
    return radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


@dataclass(frozen=True)
class KernelProblem:
    """Dense complex matrices ``(1 + mu^2) exp(i mu r_ij) / (4 pi r_ij)``.

    The diagonal, where the kernel is singular, is replaced by its regular
    part ``i mu / (4 pi)`` times the same prefactor.
    """

    points: np.ndarray
    distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        r = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        off = ~np.eye(len(pts), dtype=bool)
        if np.any(r[off] <= 0):
            raise ValueError("point cloud contains coincident points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "distances", r)

    @classmethod
    def on_sphere(cls, n_points=200, radius=1.0):
        return cls(fibonacci_sphere(n_points, radius))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def diameter(self) -> float:
        return float(self.distances.max())

    def r_trial(self, n_r: int):
        """Uniform distances ``h, 2h, ..., n_r h`` with ``n_r h`` the cloud diameter."""
        return self.diameter * np.arange(1, n_r + 1) / n_r

    def _offdiag(self, values):
        out = np.zeros((self.n, self.n), dtype=complex)
        mask = ~np.eye(self.n, dtype=bool)
        out[mask] = values[mask] / (4 * np.pi * self.distances[mask])
        return out

    def matrix(self, mu):
        A = self._offdiag(np.exp(1j * mu * self.distances))
        A[np.diag_indices(self.n)] = 1j * mu / (4 * np.pi)
        return (1.0 + mu**2) * A

    def monopole_rhs(self, source=(0.0, 0.0, 3.0)):
        dist = np.linalg.norm(self.points - np.asarray(source), axis=1)
        return (1.0 / (4 * np.pi * dist)).astype(complex)

    def layout(self, itp) -> TermLayout:
        """Kernel block with weights ``{1, mu^2}`` and the diagonal as ``mu, mu^3`` rows."""
        return TermLayout(
            blocks=[KernelBlock(itp, exp_i_mu_r, ("1", "mu^2"), "exp_i_mu_r")],
            psis=("mu", "mu^3"),
        )

    def eim_grid(self, mu_trial, n_r):
        return SampleGrid.from_function(exp_i_mu_r, mu_trial, self.r_trial(n_r))

    def term_matrices(self, block, weight, basis):
        mask = ~np.eye(self.n, dtype=bool)
        q = basis(self.distances[mask])
        out = []
        for m in range(q.shape[1]):
            vals = np.zeros((self.n, self.n), dtype=complex)
            vals[mask] = q[:, m]
            out.append(self._offdiag(vals))
        return out

    def psi_matrix(self, index, name):
        if name not in ("mu", "mu^3"):
            raise KeyError(name)
        return (1j / (4 * np.pi)) * np.eye(self.n)


def assemble_kernel(problem: KernelProblem, mu):
    return problem.matrix(mu)


# -- dense utilities ----------------------------------------------------------

def solve_dense(A, C, mu=None):
    """LU solve of ``A alpha = C``; raises :class:`SingularMatrixError` on a zero pivot."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != np.shape(C)[0]:
        raise ValueError("A must be square and conform with C")
    lu, piv = lu_factor_quiet(A, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.min() == 0.0 or not np.all(np.isfinite(lu)):
        raise SingularMatrixError("singular matrix", mu=mu, rcond=0.0)
    return scipy.linalg.lu_solve((lu, piv), C)


def l2_relative_error(u1, u2, mass):
    """``|u1 - u2|_M / |u2|_M`` in the norm induced by the mass matrix ``M``."""
    u1, u2 = np.asarray(u1), np.asarray(u2)
    if u1.shape != u2.shape:
        raise ValueError("vectors must have the same length")
    e = u1 - u2
    ref = np.real(np.vdot(u2, mass @ u2))
    if ref <= 0:
        raise ValueError("reference vector has zero norm")
    return float(np.sqrt(max(np.real(np.vdot(e, mass @ e)), 0.0) / ref))


def rel_frobenius_error(approx, exact):
    """``|approx - exact|_F / |exact|_F``."""
    exact = np.asarray(exact)
    return float(np.linalg.norm(np.asarray(approx) - exact) / np.linalg.norm(exact))


def rel_euclidean_error(approx, exact):
    return float(np.linalg.norm(np.asarray(approx) - exact) / np.linalg.norm(exact))
