"""Frenet immersed finite elements with a selective DG scheme for 2D elliptic
interface problems on Cartesian meshes."""

from .assembly import (
    GlobalSpace,
    LinearSystem,
    QuadratureConfig,
    SchemeParams,
    assemble,
    build_global_space,
    energy_norm,
)
from .geometry import (
    Curve,
    FrenetPoint,
    circle,
    edge_intersection,
    frenet_frame,
    laplacian_coeffs,
    line,
    pull_back,
    push_forward,
    star,
)
from .ife_space import build_ife_basis, eval_ife, jump_residual, lagrange_basis
from .mesh import build_mesh, classify, dof_counts, fictitious_element
from .problems import ManufacturedProblem, bessel_problem, problem_from_config, radial_problem, star_problem
from .quadrature import cut_cell_rule, edge_rule, gauss_rule_1d, interface_segment_rule
from .solve_post import DiscreteSolution, ErrorReport, convergence_rates, error_norms, project, solve
from .special import bessel_j1_y1

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
