"""Greedy empirical interpolation of a tabulated bivariate function.

The engine works on a :class:`SampleGrid`, i.e. the values of a function
``f(row, col)`` on two finite trial sets. Rows play the role of the
parameter and columns the role of the variable; the same code is used with
the roles swapped by transposing the grid.

The interpolant after ``d`` steps reads

    f(row, col) ~ sum_m lambda_m(row) q_m(col),

where ``lambda(row)`` solves the unit lower triangular system
``B lambda = f(row, col_sel)``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, solve_triangular

from .exceptions import DegenerateInputError

#: Default stopping threshold, relative to the first selected residual.
DEFAULT_RTOL = 1e-12


def lu_factor_quiet(A, check_finite=False):
    """``scipy.linalg.lu_factor`` without the singularity warning.

    Callers inspect the pivots themselves and raise a typed error instead.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        return lu_factor(A, check_finite=check_finite)


def _field_of(values):
    return "complex" if np.iscomplexobj(values) else "real"


def _check_labels(labels, name):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError(f"{name} must be a nonempty 1d sequence")
    if len(set(labels.tolist())) != labels.size:
        raise ValueError(f"{name} contains duplicates")
    return labels


@dataclass(frozen=True)
class SampleGrid:
    """Values of a bivariate function on ``row_labels x col_labels``.

    Parameters
    ----------
    row_labels, col_labels : array_like
        Ordered, duplicate-free identifiers (parameter values, points,
        row indices...). They are only used for bookkeeping.
    values : array_like, shape (len(row_labels), len(col_labels))
        Real or complex samples; every entry must be finite.
    """

    row_labels: np.ndarray
    col_labels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = _check_labels(self.row_labels, "row_labels")
        cols = _check_labels(self.col_labels, "col_labels")
        values = np.asarray(self.values)
        if not (np.issubdtype(values.dtype, np.floating) or np.iscomplexobj(values)):
            values = values.astype(float)
        if values.shape != (rows.size, cols.size):
            raise ValueError(
                f"values has shape {values.shape}, expected {(rows.size, cols.size)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        object.__setattr__(self, "values", values)

    @property
    def field_tag(self) -> str:
        return _field_of(self.values)

    @property
    def shape(self):
        return self.values.shape

    def transpose(self) -> "SampleGrid":
        return SampleGrid(self.col_labels, self.row_labels, self.values.T)

    @classmethod
    def from_function(cls, func, row_labels, col_labels) -> "SampleGrid":
        """Tabulate a broadcasting callable ``func(row, col)``."""
        rows = np.asarray(row_labels)
        cols = np.asarray(col_labels)
        return cls(rows, cols, func(rows[:, None], cols[None, :]))


@dataclass(frozen=True)
class EimInterpolant:
    """State of a greedy empirical interpolation.

    ``Q[:, k]`` holds the k-th basis function sampled on all column labels
    and ``B[l, k] = Q[col_sel[l], k]``. ``pivots`` are the signed residual
    values used to normalize each basis function; ``residual_history`` holds
    their moduli.
    """

    row_labels: np.ndarray
    col_labels: np.ndarray
    row_sel: np.ndarray
    col_sel: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    residual_history: np.ndarray
    pivots: np.ndarray
    tol: float = field(default=0.0)

    @property
    def d(self) -> int:
        return int(self.row_sel.size)

    @property
    def field_tag(self) -> str:
        return _field_of(self.Q)

    @property
    def selected_rows(self):
        """Row labels picked by the greedy loop, in selection order."""
        return self.row_labels[self.row_sel]

    @property
    def magic_points(self):
        """Column labels picked by the greedy loop, in selection order."""
        return self.col_labels[self.col_sel]

    def truncate(self, k: int) -> "EimInterpolant":
        """Interpolant made of the first ``k`` greedy steps."""
        if not 1 <= k <= self.d:
            raise ValueError(f"cannot truncate a {self.d}-term interpolant to {k}")
        return EimInterpolant(
            self.row_labels,
            self.col_labels,
            self.row_sel[:k],
            self.col_sel[:k],
            self.Q[:, :k],
            self.B[:k, :k],
            self.residual_history[:k],
            self.pivots[:k],
            self.tol,
        )


def build_interpolant(grid: SampleGrid, max_terms: int, tol=None, rtol=DEFAULT_RTOL):
    """Run the greedy offline stage on a tabulated function.

    At step k the row with the largest sup-norm residual is selected, then
    the column where that residual row peaks; the residual row normalized at
    that column becomes the new basis function. Ties go to the lowest index.

    Parameters
    ----------
    grid : SampleGrid
    max_terms : int
        Upper bound on the number of terms, at most ``min(grid.shape)``.
    tol : float, optional
        Absolute threshold: the loop stops before adding a term whose
        selected residual modulus is ``<= tol``. Defaults to ``rtol`` times
        the first selected residual.
    rtol : float
        Relative threshold used when ``tol`` is None.

    Returns
    -------
    EimInterpolant

    Raises
    ------
    DegenerateInputError
        If the grid is identically zero, so no first basis function exists.
    """
    nrows, ncols = grid.shape
    max_terms = int(max_terms)
    if not 1 <= max_terms <= min(nrows, ncols):
        raise ValueError(f"max_terms must lie in [1, {min(nrows, ncols)}], got {max_terms}")
    if tol is not None and tol < 0:
        raise ValueError("tol must be nonnegative")

    R = np.array(grid.values, dtype=np.result_type(grid.values, float), copy=True)
    rows, cols, pivots, history, basis = [], [], [], [], []
    threshold = tol
    for k in range(max_terms):
        absR = np.abs(R)
        i = int(np.argmax(absR.max(axis=1)))
        j = int(np.argmax(absR[i]))
        mag = float(absR[i, j])
        if k == 0:
            if mag == 0.0:
                raise DegenerateInputError("first selected row vanishes identically")
            if threshold is None:
                threshold = rtol * mag
        elif mag <= threshold or mag == 0.0:
            break
        pivot = R[i, j]
        q = R[i] / pivot
        q[j] = 1.0  # complex division z / z may be off by one ulp
        # column j of the new residual is exactly zero since q[j] == 1; row i
        # vanishes in exact arithmetic and is zeroed so it is never reselected
        R -= np.outer(R[:, j], q)
        R[i] = 0.0
        rows.append(i)
        cols.append(j)
        pivots.append(pivot)
        history.append(mag)
        basis.append(q)

    Q = np.stack(basis, axis=1)
    col_sel = np.array(cols, dtype=int)
    return EimInterpolant(
        row_labels=grid.row_labels,
        col_labels=grid.col_labels,
        row_sel=np.array(rows, dtype=int),
        col_sel=col_sel,
        Q=Q,
        B=Q[col_sel, :].copy(),
        residual_history=np.array(history),
        pivots=np.array(pivots),
        tol=float(threshold),
    )


def online_coefficients(itp: EimInterpolant, values):
    """Solve ``B lambda = values`` by forward substitution.

    ``values`` may be a vector of length ``d`` or a ``(d, m)`` array holding
    one right-hand side per column.
    """
    values = np.asarray(values)
    if values.shape[0] != itp.d:
        raise ValueError(f"expected {itp.d} values at the magic points, got {values.shape[0]}")
    return solve_triangular(itp.B, values, lower=True, unit_diagonal=True, check_finite=False)


def evaluate(itp: EimInterpolant, coeffs):
    """Return ``sum_m coeffs[m] * Q[:, m]`` on every column label."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != itp.d:
        raise ValueError(f"expected {itp.d} coefficients, got {coeffs.shape[0]}")
    return itp.Q @ coeffs


def interpolate(itp: EimInterpolant, values_at_selected_cols):
    """Shorthand for ``evaluate(itp, online_coefficients(itp, values))``."""
    return evaluate(itp, online_coefficients(itp, values_at_selected_cols))


def sup_residual(itp: EimInterpolant, grid: SampleGrid):
    """Per-row maximum of ``|grid - interpolant|`` over the column labels."""
    if grid.col_labels.shape != itp.col_labels.shape or not np.array_equal(
        grid.col_labels, itp.col_labels
    ):
        raise ValueError("grid column labels differ from the interpolant's")
    coeffs = online_coefficients(itp, grid.values[:, itp.col_sel].T)
    return np.abs(grid.values - (itp.Q @ coeffs).T).max(axis=1)


def basis_at(itp: EimInterpolant, func, points):
    """Evaluate the basis functions at arbitrary column points.

    The basis is regenerated from ``func(row, col)`` with the same recursion
    as the greedy loop, so this works off the trial set as long as ``func``
    is the function that was tabulated.

    Returns
    -------
    ndarray, shape (len(points), d)
    """
    points = np.asarray(points)
    rows = itp.selected_rows
    magic = itp.magic_points
    out = None
    for k in range(itp.d):
        num = np.asarray(func(rows[k], points))
        den = func(rows[k], magic[k])
        if k:
            lam = online_coefficients(itp.truncate(k), func(rows[k], magic[:k]))
            num = num - out[:, :k] @ lam
            den = den - itp.B[k, :k] @ lam
        if out is None:
            out = np.empty((points.size, itp.d), dtype=np.result_type(num, den, float))
        out[:, k] = num / den
    return out


# -- CSV layout: first row holds column labels, first column row labels ----

def _format_scalar(v) -> str:
    if isinstance(v, (complex, np.complexfloating)):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return format(float(v), ".17g")


def _format_label(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_label(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def write_grid_csv(grid: SampleGrid, path) -> None:
    """Write ``grid`` to ``path``; complex entries are written as ``re+imj``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [_format_label(c) for c in grid.col_labels])
        for label, row in zip(grid.row_labels, grid.values):
            writer.writerow([_format_label(label)] + [_format_scalar(v) for v in row])


def read_grid_csv(path) -> SampleGrid:
    with open(path, newline="") as fh:
        table = list(csv.reader(fh))
    cols = [_parse_label(c) for c in table[0][1:]]
    rows = [_parse_label(r[0]) for r in table[1:]]
    cells = [r[1:] for r in table[1:]]
    if any("j" in c for row in cells for c in row):
        values = np.array([[complex(c) for c in row] for row in cells])
    else:
        values = np.array([[float(c) for c in row] for row in cells])
    return SampleGrid(np.array(rows), np.array(cols), values)
