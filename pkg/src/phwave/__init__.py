"""P1 finite elements for the boundary-damped wave equation in port-Hamiltonian form.

State ``(p, phi)`` with Hamiltonian ``H = 1/2 (v^T M v + w^T K w)``, where
``w`` is the displacement and ``v = p / rho`` the velocity on the free
(non-Gamma0) vertices. Gamma0 carries Dirichlet data, Gamma1 the passive
feedback ``rho v = -k T grad w . n``.
"""

from .equilibrium import EquilibriumSolution, solve_equilibrium
from .errors import (CoefficientError, ConfigError, ConvergenceError, ExprDomainError, ExprError,
                     ExprSyntaxError, InvariantViolation, MeshError, NearSpectrumError, NumericalError,
                     PhwaveError, SingularMatrixError, SizeLimitError)
from .evolve import (CayleyStepper, DecayProfile, EnergyTrace, cayley_step, decay_profile, evolve_free,
                     resolvent_norm_dense, simulate, solution_equivalence_check)
from .expr import eval_expr, evaluate, parse_expr, to_source
from .fem import (Factorization, OperatorMatrices, assemble_boundary_mass, assemble_mass, assemble_operators,
                  assemble_stiffness, build_space, l2_error, solve_linear)
from .helmholtz import (HelmholtzProblem, Resolvent, apply_resolvent, nondegeneracy_sweep, resolvent_defect,
                        solve_helmholtz, verify_garding)
from .mesh import (BoundaryPartition, CoefficientSet, Mesh, generate_rect_mesh, read_mesh, sample_coefficients,
                   tag_boundary, write_mesh)
from .problem import Discretization, discretize, interpolate
from .spectral import (a0_kernel_field, certify_left_half_plane, compute_spectrum, conjugation_gap,
                       spectral_abscissa, zero_injectivity_check)
from .state import GeneratorMatrix, PHState, energy

__version__ = "0.1.0"
