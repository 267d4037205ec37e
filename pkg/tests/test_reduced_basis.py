import numpy as np
import pytest

from parasep import (
    Fem1DProblem,
    KernelProblem,
    Mesh1D,
    OpCounter,
    ReducedBasis,
    build_interpolant,
    build_z_table,
    greedy_build,
    instantiate,
    online_solve,
    project,
    select_snapshots,
    solve_dense,
)
from parasep.gallery import l2_relative_error, rel_euclidean_error


def _separated(problem, grid, mu_trial, dg, dz):
    itp = build_interpolant(grid, dg, tol=0.0)
    ztable = build_z_table(problem.layout(itp), mu_trial)
    return instantiate(select_snapshots(ztable, dz, tol=0.0), ztable, problem.matrix)


@pytest.fixture(scope="module")
def coarse_rb(coarse_problem, mu_trial):
    model = _separated(coarse_problem, coarse_problem.eim_grid(mu_trial), mu_trial, 12, 13)
    train = mu_trial[::8]
    basis = greedy_build(coarse_problem.matrix, coarse_problem.rhs(), train, 6, mass=coarse_problem.mass_part())
    return model, basis, project(model, basis, coarse_problem.rhs())


def test_single_parameter_basis_is_exact(coarse_problem, coarse_rb):
    model = coarse_rb[0]
    mu = 1.7
    basis = greedy_build(coarse_problem.matrix, coarse_problem.rhs(), [mu], 1)
    assert basis.mu_rb.tolist() == [mu]
    rmodel = project(model, basis, coarse_problem.rhs())
    _, u_hat = online_solve(rmodel, mu)
    u = solve_dense(coarse_problem.matrix(mu), coarse_problem.rhs())
    assert l2_relative_error(u_hat, u, coarse_problem.mass_part()) <= 1e-10


def test_basis_is_orthonormal(coarse_rb):
    basis = coarse_rb[1]
    assert basis.n_hat == 6
    assert basis.orthonormality_error() <= 1e-12


def test_greedy_errors_decrease(coarse_rb):
    errs = coarse_rb[1].max_errors
    assert len(errs) == 6
    assert np.all(np.diff(errs) < 0)


def test_greedy_stops_on_tolerance(coarse_problem, mu_trial):
    basis = greedy_build(coarse_problem.matrix, coarse_problem.rhs(), mu_trial[::8], 20, tol=1e-4)
    assert basis.stop_reason == "tol"
    assert basis.max_errors[-1] <= 1e-4 < basis.max_errors[-2]


def test_greedy_stops_on_dependent_snapshots():
    C = np.arange(1.0, 6.0)
    basis = greedy_build(lambda mu: mu * np.eye(5), C, [1.0, 2.0, 3.0], 3)
    assert basis.n_hat == 1
    assert basis.stop_reason in ("dependent", "tol")


def test_online_error_small(coarse_problem, coarse_rb, mu_trial):
    rmodel = coarse_rb[2]
    M = coarse_problem.mass_part()
    errs = []
    for mu in mu_trial[::20]:
        _, u_hat = online_solve(rmodel, mu)
        u = solve_dense(coarse_problem.matrix(mu), coarse_problem.rhs())
        errs.append(l2_relative_error(u_hat, u, M))
    assert max(errs) < 1e-3


def test_alpha_only_without_lift(coarse_rb):
    alpha, u = online_solve(coarse_rb[2], 2.0, lift=False)
    assert u is None and alpha.shape == (6,)


def test_op_count_independent_of_mesh(mu_trial):
    counts = []
    for h in (0.1, 0.05):
        prob = Fem1DProblem(Mesh1D(-3.0, 3.0, h))
        model = _separated(prob, prob.eim_grid(mu_trial), mu_trial, 8, 9)
        basis = greedy_build(prob.matrix, prob.rhs(), mu_trial[::20], 4)
        counter = OpCounter()
        online_solve(project(model, basis, prob.rhs()), 2.2, counter=counter)
        counts.append(counter.as_dict())
    assert counts[0] == counts[1]
    assert counts[0]["kernel_evals"] == 8


def test_complex_kernel_reduced_basis():
    prob = KernelProblem.on_sphere(60, 2.0)
    mu_trial = 0.005 * np.arange(1, 201)
    model = _separated(prob, prob.eim_grid(mu_trial, 600), mu_trial, 12, 16)
    C = prob.monopole_rhs((0.0, 0.0, 6.0))
    basis = greedy_build(prob.matrix, C, mu_trial[::10], 6)
    assert np.iscomplexobj(basis.U)
    assert basis.orthonormality_error() <= 1e-12
    _, u_hat = online_solve(project(model, basis, C), 0.5)
    assert rel_euclidean_error(u_hat, solve_dense(prob.matrix(0.5), C)) < 1e-3


def test_project_checks_shapes(coarse_rb):
    model, basis, _ = coarse_rb
    small = type(basis)(basis.U[:10], basis.mu_rb, basis.gram_tol)
    with pytest.raises(ValueError):
        project(model, small, np.ones(10))


def test_ten_dimensional_subspace_error_floor(fem_problem, mu_trial):
    # best 10-dimensional approximation of the solution manifold in the mass
    # norm, from an SVD of the mass-weighted snapshot matrix: no reduced
    # space of that size can beat sqrt(tail energy / N) / max |u|
    M = fem_problem.mass_part()
    C = fem_problem.rhs()
    S = np.column_stack([solve_dense(fem_problem.matrix(mu), C) for mu in mu_trial])
    R = np.linalg.cholesky(M).T
    sigma = np.linalg.svd(R @ S, compute_uv=False)
    norms = np.linalg.norm(R @ S, axis=0)
    floor = np.sqrt(np.sum(sigma[10:] ** 2) / len(mu_trial)) / norms.max()
    assert floor > 1e-6
    assert np.sqrt(np.sum(sigma[12:] ** 2) / len(mu_trial)) / norms.max() < 1e-6


def test_full_basis_reproduces_separated_solution(coarse_problem, coarse_rb):
    model = coarse_rb[0]
    n = coarse_problem.n
    basis = ReducedBasis(np.linalg.qr(np.random.default_rng(2).standard_normal((n, n)))[0], np.zeros(n), 1e-12)
    C = coarse_problem.rhs()
    _, u_hat = online_solve(project(model, basis, C), 2.4)
    u_sep = solve_dense(model.approximate(2.4), C)
    assert np.linalg.norm(u_hat - u_sep) <= 1e-10 * np.linalg.norm(u_sep)


@pytest.fixture(scope="module")
def full_trial_greedy(fem_problem, mu_trial):
    return greedy_build(fem_problem.matrix, fem_problem.rhs(), mu_trial, 10, mass=fem_problem.mass_part())


def test_full_trial_greedy_monotone(full_trial_greedy):
    assert np.all(np.diff(full_trial_greedy.max_errors) < 0)
    assert full_trial_greedy.orthonormality_error() <= 1e-12


def test_full_trial_greedy_reaches_1e6_with_ten_vectors(full_trial_greedy):
    assert full_trial_greedy.max_errors[-1] <= 1e-6
