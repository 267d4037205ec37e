"""Separated representation of a 1D finite element matrix family.

The problem is -(exp(mu x) u')' + mu u = 1 on (-3, 3), mu in [1, 3].
We sweep the number of kernel interpolation terms d^g and watch the
matrix and solution errors fall towards machine precision.
"""

import numpy as np

from parasep import (
    Fem1DProblem,
    Mesh1D,
    build_interpolant,
    build_z_table,
    instantiate,
    l2_relative_error,
    rel_frobenius_error,
    select_snapshots,
    solve_dense,
)

problem = Fem1DProblem(Mesh1D(-3.0, 3.0, 0.015))
mu_trial = np.linspace(1.0, 3.0, 401)
validation = mu_trial[::10]
C, M = problem.rhs(), problem.mass_part()

# first level: interpolate the kernel exp(mu x) on (trial mu) x (Gauss points)
eim_g = build_interpolant(problem.eim_grid(mu_trial), 16, tol=0.0)
print(f"n = {problem.n}, kernel residuals: {eim_g.residual_history[[0, 5, 10, 15]]}")

for dg in (3, 6, 9, 12, 14, 16):
    layout = problem.layout(eim_g.truncate(dg))
    # second level: pick d^z parameters from the table of coefficient functions
    ztable = build_z_table(layout, mu_trial)
    selection = select_snapshots(ztable, dg + 1, tol=0.0)
    # the only access to the assembly code: d^z full matrices
    model = instantiate(selection, ztable, problem.matrix)

    mat_err, sol_err = [], []
    for mu in validation:
        A, A_sep = problem.matrix(mu), model.approximate(mu)
        mat_err.append(rel_frobenius_error(A_sep, A))
        sol_err.append(l2_relative_error(solve_dense(A_sep, C), solve_dense(A, C), M))
    print(f"d^g={dg:2d} d^z={model.d:2d}  matrix {max(mat_err):.2e}  solution {max(sol_err):.2e}")
