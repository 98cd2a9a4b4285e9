"""Mixed finite element solver for the evolutionary incompressible
Navier-Stokes equations with grad-div stabilization, plus the
manufactured-solution verification harness around it."""

from .elements import P1, P1Bubble, P2, eval_basis, quadrature_rule
from .mesh import mesh_stats, refine_uniform, unit_square_mesh
from .solver import (
    InfSupEstimate,
    LinearSystem,
    NonlinearConfig,
    discrete_leray_project,
    estimate_inf_sup,
    solve_nonlinear,
    solve_saddle,
    stokes_projection,
)
from .spaces import (
    FEFunction,
    FESpace,
    MixedSpace,
    build_space,
    enforce_zero_mean,
    interpolate,
    l2_project_pressure,
    mini,
    mixed_pair,
    taylor_hood,
)
from .timestepping import SchemeConfig, Trajectory, TransientProblem, run_transient
from .verification import (
    ErrorAccumulator,
    ErrorReport,
    RunMetadata,
    convergence_table,
    error_norms,
    nu_sweep_comparison,
    paper_solution,
    steady_solution,
)

__version__ = "0.1.0"
