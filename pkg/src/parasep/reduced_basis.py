"""Greedy reduced basis and online solves through the separated representation.

Offline, solution snapshots are selected greedily on a training set and
orthonormalized; every stored matrix snapshot ``A_{mu_m}`` of a
:class:`~parasep.separated.SnapshotModel` is then projected once. Online, the
reduced matrix is ``sum_m beta_m(mu) U^H A_{mu_m} U``, whose cost does not
depend on the full dimension.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .eim import lu_factor_quiet
from .exceptions import SingularMatrixError
from .gallery import solve_dense
from .separated import SnapshotModel


class OpCounter:
    """Tally of arithmetic work, keyed by category (``flops``, ``kernel_evals``...)."""

    def __init__(self):
        self.counts = Counter()

    def add(self, key, n):
        self.counts[key] += int(n)

    def __getitem__(self, key):
        return self.counts[key]

    def as_dict(self):
        return dict(sorted(self.counts.items()))


def _dagger(U):
    return U.conj().T


def _norm(v, mass):
    if mass is None:
        return float(np.linalg.norm(v))
    return float(np.sqrt(max(np.real(np.vdot(v, mass @ v)), 0.0)))


@dataclass(frozen=True)
class ReducedBasis:
    """Column-orthonormal ``U`` (``n x n_hat``) and the parameters it came from.

    ``max_errors[k]`` is the largest training error with ``k + 1`` basis
    vectors, when the greedy loop computed it.
    """

    U: np.ndarray
    mu_rb: np.ndarray
    gram_tol: float
    max_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stop_reason: str = "n_max"

    @property
    def n_hat(self) -> int:
        return self.U.shape[1]

    def orthonormality_error(self) -> float:
        return float(np.abs(_dagger(self.U) @ self.U - np.eye(self.n_hat)).max())


def _orthonormalize(U, v, gram_tol):
    """Modified Gram-Schmidt with one reorthogonalization pass."""
    norm0 = np.linalg.norm(v)
    w = np.array(v, dtype=np.result_type(v, U, float))
    for _ in range(2):
        for k in range(U.shape[1]):
            w = w - np.vdot(U[:, k], w) * U[:, k]
    norm = np.linalg.norm(w)
    if norm0 == 0.0 or norm < gram_tol * norm0:
        return None
    return w / norm


def greedy_build(assemble, rhs, train, n_max, tol=0.0, mass=None, gram_tol=1e-12):
    """Select solution snapshots by maximizing the true reduced error.

    Parameters
    ----------
    assemble : callable
        ``assemble(mu)`` returns the full matrix ``A_mu``.
    rhs : array_like
        Right-hand side ``C``.
    train : sequence of float
        Training parameters.
    n_max : int
        Maximum basis size, at most ``len(train)``.
    tol : float
        Stop once the largest relative training error is ``<= tol``.
    mass : ndarray, optional
        Gram matrix of the error norm (Euclidean when omitted).
    gram_tol : float
        A new snapshot whose orthogonalized norm falls below ``gram_tol``
        times its original norm is declared dependent and ends the loop.

    Returns
    -------
    ReducedBasis
    """
    train = np.asarray(train, dtype=float)
    if train.size == 0:
        raise ValueError("empty training set")
    if not 1 <= n_max <= train.size:
        raise ValueError(f"n_max must lie in [1, {train.size}]")
    C = np.asarray(rhs)
    sols = np.stack([solve_dense(assemble(mu), C, mu=mu) for mu in train], axis=1)
    ref_norms = np.array([_norm(sols[:, i], mass) for i in range(train.size)])

    U = np.zeros((sols.shape[0], 0), dtype=sols.dtype)
    # A_mu U for every training parameter, grown one column per step
    AU = [np.zeros((sols.shape[0], 0), dtype=sols.dtype) for _ in train]
    chosen, max_errors = [], []
    errors = ref_norms.copy()
    stop = "n_max"
    while U.shape[1] < n_max:
        # first pick: largest solution norm
        i = int(np.argmax(errors))
        u = _orthonormalize(U, sols[:, i], gram_tol)
        if u is None:
            stop = "dependent"
            break
        U = np.column_stack([U, u])
        Ud = _dagger(U)
        C_hat = Ud @ C
        chosen.append(train[i])
        errors = np.empty(train.size)
        for j, mu in enumerate(train):
            AU[j] = np.column_stack([AU[j], assemble(mu) @ u])
            a_hat = solve_dense(Ud @ AU[j], C_hat, mu=mu)
            errors[j] = _norm(U @ a_hat - sols[:, j], mass) / ref_norms[j]
        max_errors.append(errors.max())
        if errors.max() <= tol:
            stop = "tol"
            break
    return ReducedBasis(U, np.array(chosen), gram_tol, np.array(max_errors), stop)


@dataclass(frozen=True)
class ReducedModel:
    """Projected snapshots ``U^H A_{mu_m} U`` and ``U^H C``."""

    model: SnapshotModel
    basis: ReducedBasis
    reduced_snapshots: np.ndarray
    reduced_rhs: np.ndarray

    @property
    def n_hat(self) -> int:
        return self.basis.n_hat


def project(model: SnapshotModel, basis: ReducedBasis, rhs) -> ReducedModel:
    """Offline projection of every matrix snapshot onto the reduced basis."""
    U = basis.U
    snaps = model.snapshots
    if snaps.ndim != 3 or snaps.shape[1:] != (U.shape[0], U.shape[0]):
        raise ValueError("model snapshots must be full matrices conforming with U")
    Ud = _dagger(U)
    reduced = np.stack([Ud @ S @ U for S in snaps])
    return ReducedModel(model, basis, reduced, Ud @ np.asarray(rhs))


def online_solve(rmodel: ReducedModel, mu, lift=True, counter=None):
    """Solve the reduced system at ``mu``.

    Returns ``(alpha_hat, u_hat)``; ``u_hat = U alpha_hat`` is None when
    ``lift`` is false. ``counter`` (an :class:`OpCounter`) receives the
    work spent on ``alpha_hat``, which never scales with ``n``.
    """
    beta = rmodel.model.beta(mu, counter=counter)
    d, n_hat = rmodel.reduced_snapshots.shape[:2]
    A_hat = np.tensordot(beta, rmodel.reduced_snapshots, axes=1)
    if counter is not None:
        counter.add("flops", 2 * d * n_hat * n_hat)
        counter.add("flops", n_hat**3 + 2 * n_hat * n_hat)
    lu, piv = lu_factor_quiet(A_hat, check_finite=False)
    if np.abs(np.diag(lu)).min() == 0.0:
        raise SingularMatrixError("reduced matrix is singular", mu=mu, rcond=0.0)
    alpha = scipy.linalg.lu_solve((lu, piv), rmodel.reduced_rhs)
    if not np.all(np.isfinite(alpha)):
        rcond = 1.0 / float(np.real(np.linalg.cond(A_hat, 1)))
        raise SingularMatrixError(f"reduced solve failed at mu={mu}", mu=mu, rcond=rcond)
    u = rmodel.basis.U @ alpha if lift else None
    return alpha, u
