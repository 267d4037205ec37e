import numpy as np
import pytest

from parasep import (
    IllConditionedError,
    KernelProblem,
    LayoutError,
    ProviderError,
    SnapshotModel,
    UnsupportedOracleError,
    build_interpolant,
    build_intrusive,
    build_weakly_intrusive,
    build_z_table,
    instantiate,
    literal_beta,
    load_model,
    rel_frobenius_error,
    save_model,
    select_snapshots,
)
from parasep.separated import TermLayout, convected_weight, resolve_function, resolve_kernel


def _pipeline(problem, itp, mu_trial, dz):
    layout = problem.layout(itp)
    ztable = build_z_table(layout, mu_trial)
    sel = select_snapshots(ztable, dz, tol=0.0)
    calls = []

    def provider(mu):
        calls.append(mu)
        return problem.matrix(mu)

    return ztable, sel, instantiate(sel, ztable, provider), calls


@pytest.fixture(scope="module")
def model16(fem_problem, fem_eim16, mu_trial):
    return _pipeline(fem_problem, fem_eim16, mu_trial, 17)


def test_z_table_layout(model16, fem_eim16):
    ztable, _, _, _ = model16
    assert ztable.d_max == 17
    assert [t.kind for t in ztable.rows] == ["lambda"] * 16 + ["psi"]
    np.testing.assert_allclose(ztable.values[-1], ztable.mu_labels)
    # lambda rows reproduce the first-level coefficients
    lam = np.linalg.solve(fem_eim16.B, fem_eim16.Q[fem_eim16.col_sel] @ np.eye(16))
    np.testing.assert_allclose(lam, np.eye(16), atol=1e-12)


def test_provider_called_once_per_snapshot(model16):
    _, sel, model, calls = model16
    assert len(calls) == model.d == sel.d == 17
    assert model.provider_calls == 17
    assert sorted(calls) == sorted(model.mu_sel.tolist())
    assert len(set(calls)) == 17


def test_exact_at_selected_parameters(model16, fem_problem):
    _, _, model, _ = model16
    for mu in model.mu_sel:
        assert rel_frobenius_error(model.approximate(mu), fem_problem.matrix(mu)) <= 1e-12


def test_beta_is_kronecker_at_selected_parameters(fem_problem, fem_eim16, mu_trial):
    # at d^g = 16 the interpolation matrix has rcond ~ 1e-16 and beta is only
    # determined up to directions that the snapshots do not see
    _, sel, model, _ = _pipeline(fem_problem, fem_eim16.truncate(6), mu_trial, 7)
    assert model.rcond > 1e-10
    for k, mu in enumerate(model.mu_sel):
        np.testing.assert_allclose(model.beta(mu), np.eye(model.d)[k], atol=1e-9)


def test_beta_matches_triangular_formulation(fem_problem, fem_eim16, mu_trial):
    ztable, sel, model, _ = _pipeline(fem_problem, fem_eim16.truncate(6), mu_trial, 7)
    for idx in (0, 57, 200, 399, *sel.col_sel):
        np.testing.assert_allclose(model.beta(ztable.mu_labels[idx]), literal_beta(sel, idx), atol=1e-8)


def test_accuracy_off_selection(model16, fem_problem):
    _, _, model, _ = model16
    for mu in (1.0025, 1.9, 2.777):
        assert rel_frobenius_error(model.approximate(mu), fem_problem.matrix(mu)) <= 1e-10


def test_functional_payload(fem_problem, fem_eim16, mu_trial):
    itp = fem_eim16.truncate(8)
    ztable = build_z_table(fem_problem.layout(itp), mu_trial)
    sel = select_snapshots(ztable, 9, tol=0.0)
    U = np.linalg.qr(np.random.default_rng(1).standard_normal((fem_problem.n, 4)))[0]
    full = instantiate(sel, ztable, fem_problem.matrix)
    reduced = instantiate(sel, ztable, fem_problem.matrix, functional=lambda A: U.T @ A @ U)
    assert reduced.snapshots.shape == (9, 4, 4)
    mu = 2.21
    np.testing.assert_allclose(reduced.approximate(mu), U.T @ full.approximate(mu) @ U, atol=1e-9)


def test_vector_payload(coarse_problem, mu_trial):
    itp = build_interpolant(coarse_problem.eim_grid(mu_trial), 5, tol=0.0)
    ztable = build_z_table(coarse_problem.layout(itp), mu_trial)
    sel = select_snapshots(ztable, 6, tol=0.0)
    model = instantiate(sel, ztable, lambda mu: mu * coarse_problem.rhs())
    np.testing.assert_allclose(model.approximate(2.5), 2.5 * coarse_problem.rhs(), rtol=1e-12)


def test_provider_failure_carries_mu(coarse_problem, mu_trial):
    itp = build_interpolant(coarse_problem.eim_grid(mu_trial), 3, tol=0.0)
    ztable = build_z_table(coarse_problem.layout(itp), mu_trial)
    sel = select_snapshots(ztable, 4, tol=0.0)

    def broken(mu):
        raise RuntimeError("mesh file missing")

    with pytest.raises(ProviderError) as info:
        instantiate(sel, ztable, broken)
    assert info.value.mu == ztable.mu_labels[sel.col_sel[0]]


def test_save_load_is_bitwise(tmp_path, model16):
    _, _, model, _ = model16
    manifest = save_model(model, tmp_path / "m")
    back = load_model(manifest)
    for mu in (1.0, 1.5555, 3.0):
        np.testing.assert_array_equal(back.approximate(mu), model.approximate(mu))
    np.testing.assert_array_equal(back.Z, model.Z)


def test_save_load_complex(tmp_path):
    prob = KernelProblem.on_sphere(40, 2.0)
    mu_trial = 0.005 * np.arange(1, 201)
    itp = build_interpolant(prob.eim_grid(mu_trial, 500), 10, tol=0.0)
    ztable, sel, model, _ = _pipeline(prob, itp, mu_trial, 12)
    back = load_model(save_model(model, tmp_path))
    assert back.snapshots.dtype == complex
    np.testing.assert_array_equal(back.approximate(0.731), model.approximate(0.731))


def test_layout_mismatch(fem_eim16):
    layout = TermLayout([fem_eim16_block(fem_eim16)], ("mu",))
    with pytest.raises(LayoutError):
        build_z_table(layout, np.linspace(1, 3, 11))


def fem_eim16_block(itp):
    from parasep import KernelBlock
    from parasep.separated import exp_mu_x

    return KernelBlock(itp, exp_mu_x, ("1",), "exp_mu_x")


def test_d_max_counts_weights_and_psis(fem_eim16):
    block = fem_eim16_block(fem_eim16)
    from parasep import KernelBlock

    two = KernelBlock(block.interpolant, block.kernel, ("1", "mu^2"), "exp_mu_x")
    assert TermLayout([two], ("mu", "mu^3")).d_max == 2 * 16 + 2


def test_function_registry():
    f = resolve_function("convected:340")
    assert f(2.0) == pytest.approx(convected_weight(340)(2.0))
    assert f(2.0) == pytest.approx(2.0 * (2j * np.pi * 2.0 / 340 - 1))
    with pytest.raises(LayoutError):
        resolve_function("nope")
    with pytest.raises(LayoutError):
        resolve_kernel("nope")


def test_singular_interpolation_matrix():
    with pytest.raises(IllConditionedError):
        SnapshotModel(None, np.array([1.0, 2.0]), np.array([0, 1]), [None, None],
                      np.zeros((2, 2)), np.zeros((2, 1)), 2)


def test_weakly_intrusive_reconstructs_basis(fem_problem, fem_eim16):
    block = fem_problem.layout(fem_eim16.truncate(6)).blocks[0]
    wi = build_weakly_intrusive(block, fem_problem)
    q = wi.basis_values(fem_problem.omega_trial)
    np.testing.assert_allclose(q, block.interpolant.Q, atol=1e-10)


def test_reference_models_agree(model16, fem_problem, fem_eim16):
    _, _, model, _ = model16
    layout = model.layout
    intr = build_intrusive(layout, fem_problem)
    wi = build_weakly_intrusive(layout.blocks[0], fem_problem)
    for mu in (1.234, 2.0, 2.9):
        A_i, A_w, A_n = intr.evaluate(mu), wi.evaluate(mu), model.approximate(mu)
        assert rel_frobenius_error(A_w, A_i) <= 1e-10
        assert rel_frobenius_error(A_n, A_i) <= 1e-10


def test_oracles_require_access(model16):
    _, _, model, _ = model16
    with pytest.raises(UnsupportedOracleError):
        build_intrusive(model.layout, object())
    with pytest.raises(UnsupportedOracleError):
        build_weakly_intrusive(model.layout.blocks[0], object())


def test_too_many_snapshots(model16):
    ztable, _, _, _ = model16
    with pytest.raises(ValueError):
        select_snapshots(ztable, 18)


def test_weakly_intrusive_matches_intrusive_on_trial_set(model16, fem_problem, mu_trial):
    _, _, model, _ = model16
    intr = build_intrusive(model.layout, fem_problem)
    wi = build_weakly_intrusive(model.layout.blocks[0], fem_problem)
    worst = max(rel_frobenius_error(wi.evaluate(mu), intr.evaluate(mu)) for mu in mu_trial)
    assert worst <= 1e-10


def test_exact_rank_table_collapses(mu_trial):
    from parasep import Fem1DProblem, Mesh1D

    def separable(mu, x):
        return 2.0 + mu * x**2 / 9.0 + np.exp(-mu) * np.cos(x)

    prob = Fem1DProblem(Mesh1D(-3.0, 3.0, 0.05), separable, "separable")
    itp = build_interpolant(prob.eim_grid(mu_trial), 10)
    assert itp.d == 3
    ztable = build_z_table(prob.layout(itp), mu_trial)
    # rows: lambda_1..3 (combinations of 1, mu, exp(-mu)) and mu itself
    sel = select_snapshots(ztable, ztable.d_max)
    assert sel.d == 3
    model = instantiate(sel, ztable, prob.matrix)
    intr = build_intrusive(model.layout, prob)
    for mu in mu_trial[::25]:
        assert rel_frobenius_error(model.approximate(mu), intr.evaluate(mu)) <= 1e-10
