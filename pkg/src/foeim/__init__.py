"""Reduced-basis model reduction of parametrized nonlinear elliptic PDEs.

The package builds truth finite-element solvers for two model problems,
compresses their solution manifolds into orthonormal reduced bases, and
accelerates the nonlinear terms with empirical interpolation enriched by
first-order derivative information (Lagrange-Taylor candidate spaces).
"""

from .mesh import (ConfigurationError, GeometrySpec, DiscreteSpace,
                   build_space, unit_square, t_shape)
from .terms import (NonlinearTerm, EllipticTerm, GaussianTerm,
                    DiffusionFluxTerm, get_term)
from .fem import (Field, FomProblem, NewtonReport, SolverError,
                  elliptic_problem, diffusion_problem, solve_fom,
                  newton_solve, integrate_field, inner_product_x)
from .sampling import (ParameterDomain, SampleSet, SnapshotBasis,
                       build_sample_grid, log_map, orthonormalize,
                       compute_snapshot_basis)
from .interpolation import (CandidateSpace, InterpolationSystem,
                            RegressionSystem, snapshot_nonlinear,
                            taylor_candidates, independent_subset,
                            eim_greedy, foeim1_construct, foeim2_construct,
                            interp_coeffs, regress_coeffs, interpolant_values,
                            lebesgue_constant, max_interp_error)
from .rom import (RomOperators, RomSolution, ErrorReport,
                  build_standard_rb, build_ei_rb,
                  StandardRbSolver, EiRbSolver,
                  solve_standard_rb, solve_ei_rb,
                  error_and_effectivity, timing_harness)

__version__ = "0.1.0"
