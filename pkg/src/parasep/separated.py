"""Nonintrusive separated representation ``A_mu ~ sum_m beta_m(mu) A_{mu_m}``.

The parameter dependence of ``A_mu`` is declared with a :class:`TermLayout`:
kernel blocks (a function ``g(mu, x)`` interpolated by a first EIM, whose
coefficients ``lambda_m(mu)`` may be multiplied by weight functions) and
plain scalar functions ``psi_s(mu)``. Tabulating all these coefficient
functions on the parameter trial set gives the :class:`ZTable`; a second EIM
on that table (rows = coefficient index, columns = parameter) picks the
parameter values at which full matrices are assembled.

Online, ``beta(mu)`` solves the interpolation conditions ``Z beta = w(mu)``,
with ``Z[l, m] = z_{p_l}(mu_m)`` and ``w_l(mu) = z_{p_l}(mu)``.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .eim import (
    EimInterpolant,
    SampleGrid,
    basis_at,
    build_interpolant,
    lu_factor_quiet,
    online_coefficients,
)
from .exceptions import (
    IllConditionedError,
    IllConditionedWarning,
    LayoutError,
    ProviderError,
    UnsupportedOracleError,
)

#: Reciprocal condition number below which a warning is emitted for Z.
RCOND_WARN = 1e-14


def exp_mu_x(mu, x):
    return np.exp(np.multiply(mu, x))


def exp_i_mu_r(mu, r):
    return np.exp(1j * np.multiply(mu, r))


def _ones(mu):
    return np.ones_like(np.asarray(mu, dtype=float))


FUNCTIONS: dict[str, Callable] = {
    "1": _ones,
    "mu": lambda mu: np.asarray(mu, dtype=float) * 1.0,
    "mu^2": lambda mu: np.asarray(mu, dtype=float) ** 2,
    "mu^3": lambda mu: np.asarray(mu, dtype=float) ** 3,
}

KERNELS: dict[str, Callable] = {
    "exp_mu_x": exp_mu_x,
    "exp_i_mu_r": exp_i_mu_r,
}

_CONVECTED = re.compile(r"^convected:(?P<c>[-+0-9.eE]+)$")


def register_function(name: str, func: Callable) -> None:
    """Make a scalar function of ``mu`` available under ``name``."""
    FUNCTIONS[name] = func


def register_kernel(name: str, func: Callable) -> None:
    KERNELS[name] = func


def convected_weight(c: float) -> Callable:
    """``mu (2 i pi mu / c - 1)``, the weight of the flow term in convected acoustics."""
    return lambda mu: np.asarray(mu) * (2j * np.pi * np.asarray(mu) / c - 1.0)


def resolve_function(name: str, extra=None) -> Callable:
    """Look up a scalar function by identifier.

    ``convected:<c>`` is accepted for any sound speed ``c``.
    """
    if extra and name in extra:
        return extra[name]
    if name in FUNCTIONS:
        return FUNCTIONS[name]
    match = _CONVECTED.match(name)
    if match:
        return convected_weight(float(match["c"]))
    raise LayoutError(f"unknown scalar function {name!r}")


def resolve_kernel(name: str, extra=None) -> Callable:
    if extra and name in extra:
        return extra[name]
    try:
        return KERNELS[name]
    except KeyError:
        raise LayoutError(f"unknown kernel {name!r}") from None


# -- layout -------------------------------------------------------------------

@dataclass(frozen=True)
class KernelBlock:
    """A kernel ``g(mu, x)`` with its first-level interpolant and weights.

    Each weight ``w`` contributes the rows ``w(mu) lambda_m(mu)``,
    ``m = 1..d``.
    """

    interpolant: EimInterpolant
    kernel: Callable
    weights: tuple = ("1",)
    name: str | None = None

    @property
    def d(self) -> int:
        return self.interpolant.d

    def lambdas(self, mu):
        """Interpolation coefficients at ``mu`` (scalar) or at each entry of ``mu``.

        Only the kernel values at the magic points are needed.
        """
        mu = np.asarray(mu)
        x = self.interpolant.magic_points
        if mu.ndim == 0:
            return online_coefficients(self.interpolant, self.kernel(mu, x))
        return online_coefficients(self.interpolant, self.kernel(mu[None, :], x[:, None]))


@dataclass(frozen=True)
class RowTag:
    """Origin of one z-row: ``kind`` is ``"lambda"`` or ``"psi"``."""

    kind: str
    block: int
    weight: str
    index: int

    def to_json(self):
        return [self.kind, self.block, self.weight, self.index]

    @classmethod
    def from_json(cls, data):
        kind, block, weight, index = data
        return cls(kind, int(block), weight, int(index))


@dataclass(frozen=True)
class TermLayout:
    """Declarative description of the parameter dependence of ``A_mu``.

    Rows are ordered block by block (weights outer, basis index inner),
    followed by the scalar functions ``psis``. ``functions`` extends the
    global registry of scalar functions for this layout only.
    """

    blocks: Sequence[KernelBlock]
    psis: tuple = ()
    functions: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "psis", tuple(self.psis))
        for name in self.function_names():
            resolve_function(name, self.functions)
        if self.d_max <= 0:
            raise LayoutError("layout has no terms")

    def function_names(self):
        names = [w for b in self.blocks for w in b.weights]
        return names + list(self.psis)

    @property
    def d_max(self) -> int:
        return sum(len(b.weights) * b.d for b in self.blocks) + len(self.psis)

    @property
    def rows(self) -> list[RowTag]:
        tags = []
        for rho, block in enumerate(self.blocks):
            for w in block.weights:
                tags.extend(RowTag("lambda", rho, w, m) for m in range(block.d))
        tags.extend(RowTag("psi", -1, name, s) for s, name in enumerate(self.psis))
        return tags

    def func(self, name):
        return resolve_function(name, self.functions)

    def z_values(self, mu, rows=None):
        """Evaluate ``z_p(mu)`` for the requested rows (all rows by default).

        ``mu`` may be a scalar or a 1d array, in which case the result has
        one column per parameter value.
        """
        tags = self.rows if rows is None else rows
        mu = np.asarray(mu)
        lam_cache = {}
        out = []
        for tag in tags:
            if tag.kind == "lambda":
                if tag.block not in lam_cache:
                    lam_cache[tag.block] = self.blocks[tag.block].lambdas(mu)
                value = self.func(tag.weight)(mu) * lam_cache[tag.block][tag.index]
            else:
                value = self.func(tag.weight)(mu) * np.ones_like(mu, dtype=float)
            out.append(value)
        return np.array(out)


@dataclass(frozen=True)
class ZTable:
    """``z_p(mu)`` tabulated on the parameter trial set (``d_max`` rows)."""

    layout: TermLayout
    rows: list
    mu_labels: np.ndarray
    values: np.ndarray

    @property
    def d_max(self) -> int:
        return len(self.rows)

    def as_grid(self) -> SampleGrid:
        """Rows are coefficient indices ``p``, columns are parameter values."""
        return SampleGrid(np.arange(self.d_max), self.mu_labels, self.values)


def build_z_table(layout: TermLayout, mu_trial) -> ZTable:
    """Tabulate every coefficient function of ``layout`` on ``mu_trial``."""
    mu_trial = np.asarray(mu_trial, dtype=float)
    for rho, block in enumerate(layout.blocks):
        labels = np.asarray(block.interpolant.row_labels, dtype=float)
        if labels.shape != mu_trial.shape or not np.allclose(labels, mu_trial, rtol=1e-13, atol=0):
            raise LayoutError(f"block {rho} was not built on this parameter trial set")
    values = layout.z_values(mu_trial)
    if not np.all(np.isfinite(values)):
        raise LayoutError("coefficient functions are not finite on the trial set")
    return ZTable(layout, layout.rows, mu_trial, values)


def select_snapshots(ztable: ZTable, max_terms: int, tol=None, rtol=None) -> EimInterpolant:
    """Second-level EIM on the z-table; ``row_sel`` are the ``p`` indices and
    ``col_sel`` the selected parameters."""
    if max_terms > ztable.d_max or max_terms > ztable.mu_labels.size:
        raise ValueError(
            f"max_terms={max_terms} exceeds d_max={ztable.d_max} or the trial set size"
        )
    kwargs = {} if rtol is None else {"rtol": rtol}
    return build_interpolant(ztable.as_grid(), max_terms, tol=tol, **kwargs)


# -- snapshot model -----------------------------------------------------------

@dataclass(frozen=True)
class SnapshotModel:
    """Separated representation built from ``d^z`` stored snapshots.

    ``snapshots[m]`` is the payload (matrix, functional value or vector)
    assembled at ``mu_sel[m]``. ``provider_calls`` records how many times the
    provider was invoked to build it.
    """

    layout: TermLayout
    mu_sel: np.ndarray
    p_sel: np.ndarray
    rows: list
    Z: np.ndarray
    snapshots: np.ndarray
    provider_calls: int
    rcond: float = field(init=False)
    _lu: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Z = np.asarray(self.Z)
        d = len(self.mu_sel)
        if Z.shape != (d, d) or len(self.p_sel) != d or len(self.snapshots) != d:
            raise ValueError("inconsistent snapshot model sizes")
        if not np.all(np.isfinite(Z)):
            raise IllConditionedError("interpolation matrix has non-finite entries")
        lu, piv = lu_factor_quiet(Z, check_finite=False)
        if np.abs(np.diag(lu)).min() == 0.0:
            raise IllConditionedError("interpolation matrix is singular")
        rcond = 1.0 / float(np.real(np.linalg.cond(Z, 1)))
        if not rcond >= RCOND_WARN:
            warnings.warn(
                f"interpolation matrix is nearly singular (rcond={rcond:.2e})",
                IllConditionedWarning,
                stacklevel=3,
            )
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "rcond", float(rcond))
        object.__setattr__(self, "_lu", (lu, piv))

    @property
    def d(self) -> int:
        return len(self.mu_sel)

    def rhs_values(self, mu):
        """``w(mu)``: the selected coefficient functions evaluated at ``mu``."""
        return self.layout.z_values(mu, self.rows)

    def beta(self, mu, counter=None):
        """Coefficients ``beta(mu)`` solving ``Z beta = w(mu)``."""
        w = self.rhs_values(mu)
        if counter is not None:
            for rho in {t.block for t in self.rows if t.kind == "lambda"}:
                d_g = self.layout.blocks[rho].d
                counter.add("kernel_evals", d_g)
                counter.add("flops", d_g * d_g)
            counter.add("flops", 2 * self.d * self.d)
        return scipy.linalg.lu_solve(self._lu, w, check_finite=False)

    def combine(self, beta, payloads=None):
        payloads = self.snapshots if payloads is None else payloads
        return np.tensordot(beta, payloads, axes=1)

    def approximate(self, mu):
        """``sum_m beta_m(mu) snapshots[m]``."""
        return self.combine(self.beta(mu))


def beta(model: SnapshotModel, mu):
    return model.beta(mu)


def approximate(model: SnapshotModel, mu):
    return model.approximate(mu)


def instantiate(selection: EimInterpolant, ztable: ZTable, provider: Callable, functional=None):
    """Assemble the snapshots at the selected parameters.

    ``provider(mu)`` is called exactly once per selected parameter. If
    ``functional`` is given, it is applied right away and only its value is
    kept (e.g. ``lambda A: U.T @ A @ U``). Vector payloads, such as a
    parameter-dependent right-hand side, need no special handling.

    Raises
    ------
    ProviderError
        If the provider fails; the offending parameter is attached.
    """
    mu_sel = ztable.mu_labels[selection.col_sel]
    payloads = []
    calls = 0
    for mu in mu_sel:
        try:
            value = provider(float(mu))
        except Exception as exc:
            raise ProviderError(float(mu), exc) from exc
        calls += 1
        value = np.asarray(value)
        payloads.append(np.asarray(functional(value)) if functional is not None else value)
    rows = [ztable.rows[p] for p in selection.row_sel]
    # same code path as the online right-hand side, so that w(mu_sel[k]) is
    # bitwise the k-th column of Z
    Z = np.column_stack([ztable.layout.z_values(float(mu), rows) for mu in mu_sel])
    return SnapshotModel(
        layout=ztable.layout,
        mu_sel=mu_sel.copy(),
        p_sel=selection.row_sel.copy(),
        rows=rows,
        Z=Z,
        snapshots=np.stack(payloads),
        provider_calls=calls,
    )


def literal_beta(selection: EimInterpolant, mu_index: int):
    """``beta`` from the transposed triangular system ``B^T beta = q(mu)``.

    Only available on the parameter trial set, where the second-level basis
    functions are tabulated; used to cross-check :meth:`SnapshotModel.beta`.
    """
    q = selection.Q[mu_index]
    return scipy.linalg.solve_triangular(selection.B.T, q, lower=False, unit_diagonal=True)


# -- reference models -------------------------------------------------------

@dataclass(frozen=True)
class IntrusiveModel:
    """``sum_p z_p(mu) T_p`` with ``T_p`` integrated against the basis functions."""

    layout: TermLayout
    T: np.ndarray

    def evaluate(self, mu):
        return np.tensordot(self.layout.z_values(mu), self.T, axes=1)


def build_intrusive(layout: TermLayout, access) -> IntrusiveModel:
    """Integrate each basis function against the problem's bilinear structure.

    ``access`` must provide ``term_matrices(block, weight, basis)``, where
    ``basis(points)`` returns the block's basis functions at arbitrary points,
    and ``psi_matrix(index, name)``.
    """
    if not (hasattr(access, "term_matrices") and hasattr(access, "psi_matrix")):
        raise UnsupportedOracleError(f"{type(access).__name__} exposes no quadrature access")
    mats = []
    for rho, block in enumerate(layout.blocks):
        def basis(points, block=block):
            itp = block.interpolant
            # tabulated values are exact on the trial set; the recursion
            # loses accuracy through the small late pivots
            if np.shape(points) == itp.col_labels.shape and np.array_equal(points, itp.col_labels):
                return itp.Q
            return basis_at(itp, block.kernel, points)

        for w in block.weights:
            mats.extend(access.term_matrices(rho, w, basis))
    for s, name in enumerate(layout.psis):
        mats.append(access.psi_matrix(s, name))
    return IntrusiveModel(layout, np.stack(mats))


@dataclass(frozen=True)
class WeaklyIntrusiveModel:
    """``sum_m eta_m(mu) A1_{mu_m} + mu A0`` from separately assembled terms.

    ``Gamma[l, k]`` expresses the k-th basis function in terms of the kernel
    sections at the selected parameters: ``q_k = sum_l Gamma[l, k] g(mu_l, .)``.
    """

    block: KernelBlock
    Gamma: np.ndarray
    kernel_snapshots: np.ndarray
    constant_part: np.ndarray

    def eta(self, mu):
        return self.Gamma @ self.block.lambdas(mu)

    def evaluate(self, mu):
        return np.tensordot(self.eta(mu), self.kernel_snapshots, axes=1) + mu * self.constant_part

    def basis_values(self, points):
        """Basis functions rebuilt from ``Gamma`` at arbitrary points."""
        itp, g = self.block.interpolant, self.block.kernel
        sections = np.array([g(mu, np.asarray(points)) for mu in itp.selected_rows]).T
        return sections @ self.Gamma


def build_weakly_intrusive(block: KernelBlock, split_provider) -> WeaklyIntrusiveModel:
    """Assemble ``A1`` at each selected parameter of ``block`` and ``A0`` once.

    ``split_provider`` must expose ``kernel_part(mu)`` and ``mass_part()``.
    """
    if not (hasattr(split_provider, "kernel_part") and hasattr(split_provider, "mass_part")):
        raise UnsupportedOracleError("provider does not expose split assembly")
    itp = block.interpolant
    mus, xs = itp.selected_rows, itp.magic_points
    G = np.array([[block.kernel(mu, x) for mu in mus] for x in xs])
    lu, piv = lu_factor_quiet(G)
    if np.abs(np.diag(lu)).min() == 0.0:
        raise IllConditionedError("kernel sections are linearly dependent at the magic points")
    Gamma = scipy.linalg.lu_solve((lu, piv), itp.B)
    kernel_snapshots = np.stack([np.asarray(split_provider.kernel_part(float(mu))) for mu in mus])
    return WeaklyIntrusiveModel(block, Gamma, kernel_snapshots, np.asarray(split_provider.mass_part()))


# -- serialization ------------------------------------------------------------
#
# A model directory holds ``manifest.json`` plus one ``.npy`` file per
# snapshot payload and one ``.npz`` archive per kernel block interpolant.
# Complex arrays are stored in JSON as {"re": ..., "im": ...} objects.

MANIFEST_VERSION = 1


def _array_json(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"re": a.real.tolist(), "im": a.imag.tolist()}
    return a.tolist()


def _array_from_json(data):
    if isinstance(data, dict):
        return np.array(data["re"]) + 1j * np.array(data["im"])
    return np.array(data, dtype=float)


def _save_interpolant(itp: EimInterpolant, path: Path):
    np.savez(
        path,
        row_labels=itp.row_labels,
        col_labels=itp.col_labels,
        row_sel=itp.row_sel,
        col_sel=itp.col_sel,
        Q=itp.Q,
        B=itp.B,
        residual_history=itp.residual_history,
        pivots=itp.pivots,
        tol=np.array(itp.tol),
    )


def _load_interpolant(path: Path) -> EimInterpolant:
    with np.load(path) as data:
        return EimInterpolant(
            row_labels=data["row_labels"],
            col_labels=data["col_labels"],
            row_sel=data["row_sel"],
            col_sel=data["col_sel"],
            Q=data["Q"],
            B=data["B"],
            residual_history=data["residual_history"],
            pivots=data["pivots"],
            tol=float(data["tol"]),
        )


def save_model(model: SnapshotModel, directory) -> Path:
    """Write ``model`` to ``directory`` and return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blocks = []
    for rho, block in enumerate(model.layout.blocks):
        if block.name is None:
            raise LayoutError(f"block {rho} has no kernel name and cannot be serialized")
        fname = f"block{rho}.npz"
        _save_interpolant(block.interpolant, directory / fname)
        blocks.append({"kernel": block.name, "weights": list(block.weights), "interpolant": fname})
    snapshots = []
    for m, payload in enumerate(model.snapshots):
        fname = f"snapshot{m:03d}.npy"
        np.save(directory / fname, np.ascontiguousarray(payload))
        snapshots.append(fname)
    manifest = {
        "version": MANIFEST_VERSION,
        "field": "complex" if np.iscomplexobj(model.snapshots) else "real",
        "payload_shape": list(model.snapshots.shape[1:]),
        "mu_sel": [float(m) for m in model.mu_sel],
        "p_sel": [int(p) for p in model.p_sel],
        "rows": [t.to_json() for t in model.rows],
        "Z": _array_json(model.Z),
        "provider_calls": model.provider_calls,
        "blocks": blocks,
        "psis": list(model.layout.psis),
        "snapshots": snapshots,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def load_model(manifest_path, functions=None, kernels=None) -> SnapshotModel:
    """Reload a model written by :func:`save_model`; no assembly is performed.

    Custom scalar functions and kernels that are not in the global
    registries can be passed by name.
    """
    manifest_path = Path(manifest_path)
    directory = manifest_path.parent
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r}")
    blocks = [
        KernelBlock(
            _load_interpolant(directory / b["interpolant"]),
            resolve_kernel(b["kernel"], kernels),
            tuple(b["weights"]),
            b["kernel"],
        )
        for b in manifest["blocks"]
    ]
    layout = TermLayout(blocks, tuple(manifest["psis"]), dict(functions or {}))
    snapshots = np.stack([np.load(directory / f) for f in manifest["snapshots"]])
    return SnapshotModel(
        layout=layout,
        mu_sel=np.array(manifest["mu_sel"], dtype=float),
        p_sel=np.array(manifest["p_sel"], dtype=int),
        rows=[RowTag.from_json(r) for r in manifest["rows"]],
        Z=_array_from_json(manifest["Z"]),
        snapshots=snapshots,
        provider_calls=manifest["provider_calls"],
    )
