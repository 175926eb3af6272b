"""HDG solver for distributed optimal control of convection-diffusion PDEs.

The package discretizes the optimality system of

    min  1/2 ||y - y_d||^2 + gamma/2 ||u||^2
    s.t. -lap(y) + beta.grad(y) = f + u  in the unit square/cube,
         y = g on the boundary,

with a hybridizable discontinuous Galerkin method of degree k: fluxes,
states, and face traces are approximated independently, the element-local
unknowns are eliminated by static condensation, and only the interior-face
traces of the state and adjoint state remain globally coupled.
"""

from .convergence import (ConvergenceReport, ErrorRecord, l2_error_scalar,
                          l2_error_vector, run_convergence_study, run_single,
                          solution_errors)
from .local import (CondensationFactors, LocalBlocks, assemble_local_blocks,
                    condense, local_recover)
from .mesh import SimplicialMesh, build_structured_mesh
from .problem import (AssumptionViolation, ExactSolution, ProblemSpec,
                      TauField, constant_vector_field,
                      derive_manufactured_data, get_example,
                      register_example, validate_assumptions)
from .refelem import (QuadratureRule, ReferenceBasis, make_basis,
                      make_quadrature)
from .solve import (CondensedSystem, SingularSystemError, SolutionFields,
                    TraceNumbering, assemble, build_numbering, recover_all,
                    solve, solve_problem)
from .verify import dense_solve, run_verification

__version__ = "0.1.0"
