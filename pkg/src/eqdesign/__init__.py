"""Optimal experimental designs, equilibrium measures and Christoffel functions
on semi-algebraic sets."""

__version__ = "0.1.0"

from .basis import (MonomialBasis, Polynomial, dim_poly, monomial_basis, monomial_vector,
                    multi_indices, poly_eval, vandermonde, vandermonde_grad)
from .christoffel import (KernelEvaluator, VarianceFunction, build_kernel, christoffel_value,
                          christoffel_values, equilibrium_variance, variance_function)
from .cubature import caratheodory_prune, cubature_for_equilibrium, fit_weights
from .equilibrium import (CubatureRule, SemiAlgebraicSet, ball, box, chebyshev_nodes,
                          description_family, equilibrium_moments, family_trace,
                          gauss_chebyshev, generator_set, interval, make_set, simplex,
                          tensor_chebyshev, variant_family)
from .errors import (DegreeError, InfeasibleGridError, InvalidDimensionError, NumericalError,
                     SingularMomentMatrixError, UnsupportedKindError)
from .moments import (MomentVector, affine_moments, is_psd, localizing_matrix, moment_matrix,
                      riesz, shifted_moments)
from .solver import (CandidateGrid, DesignMeasure, GapReport, SolveReport, default_grid,
                     equivalence_gap, objective_value, refine_grid, solve_design)
from .verify import (CheckReport, check_boundary_maxima, check_kkt_general, check_pell,
                     check_pstar, check_weakstar, pstar_value, vdm_logdet, weak_star_gap)
