"""Nonintrusive separated representations of parameter-dependent matrices.

``A_mu ~ sum_m beta_m(mu) A_{mu_m}`` is obtained from a handful of fully
assembled matrices, using one empirical interpolation on the kernel of the
variational form and a second one on the table of coefficient functions.
"""

from .eim import (
    EimInterpolant,
    SampleGrid,
    basis_at,
    build_interpolant,
    evaluate,
    interpolate,
    online_coefficients,
    read_grid_csv,
    sup_residual,
    write_grid_csv,
)
from .exceptions import (
    DegenerateInputError,
    IllConditionedError,
    IllConditionedWarning,
    LayoutError,
    ParasepError,
    ProviderError,
    SingularMatrixError,
    UnsupportedOracleError,
)
from .gallery import (
    Fem1DProblem,
    KernelProblem,
    Mesh1D,
    assemble_fem1d,
    assemble_fem1d_split,
    assemble_kernel,
    fibonacci_sphere,
    l2_relative_error,
    rel_frobenius_error,
    solve_dense,
)
from .reduced_basis import OpCounter, ReducedBasis, greedy_build, online_solve, project
from .separated import (
    KernelBlock,
    SnapshotModel,
    TermLayout,
    ZTable,
    build_intrusive,
    build_weakly_intrusive,
    build_z_table,
    instantiate,
    literal_beta,
    load_model,
    save_model,
    select_snapshots,
)

__version__ = "0.1.0"
