"""Asymptotic-preserving solvers for a 1D linear kinetic equation.

The package discretizes a kinetic distribution f(t, x, v) on a torus in
space and a bounded symmetric velocity interval, with either a linearized
BGK or a Fokker-Planck collision operator, using implicit finite-volume
schemes that remain stable and accurate uniformly in the scaling parameter
epsilon.  The core pieces:

* mesh / equilibrium: antisymmetric velocity meshes and discrete
  Maxwellians with exact unit mass.
* scheme: micro-macro and direct formulations, the overdetermined
  least-squares variant that is well posed at epsilon = 0, and the limiting
  heat scheme.
* diagnostics: weighted norms, entropy slack, a discrete Poisson solver,
  the modified entropy functional with certified decay constants, decay
  rate and oscillation period estimators.
* inequalities: discrete Poincare verifiers on velocity lines and on the
  torus.
* experiments / cli: reproducible preset studies writing delimited output
  and figures.
"""
from .diagnostics import (DecayFit, DiagnosticsError, DiagnosticsRecord,
                          EntropyConfig, EntropyTracker, MomentSet,
                          PeriodEstimate, PoissonSolution, PoissonSolver,
                          StateNorms, compute_eta_admissible, dx_grad,
                          entropy_slack, entropy_slack_states,
                          estimate_oscillation_period, fit_decay_rate,
                          macro_norm, modified_entropy, moments,
                          moments_from_state, poisson_solve, state_mass,
                          state_norms, torus_poincare_constant, weighted_norm)
from .equilibrium import (BGK, FOKKER_PLANCK, DiscreteMaxwellian,
                          EquilibriumError, gaussian_bgk, gaussian_fp,
                          maxwellian_from_file, maxwellian_from_interfaces,
                          nongaussian_bgk)
from .experiments import (ExperimentConfig, ExperimentError, InitialData,
                          SimulationResult, build_problem, generate_initial,
                          preset, run, simulate, sweep)
from .inequalities import (InequalityError, PoincareReport,
                           torus_sharpness_mode, verify_gaussian_poincare,
                           verify_torus_poincare)
from .mesh import (MeshError, SpatialMesh, VelocityMesh, build_spatial_mesh,
                   build_velocity_mesh, load_mesh_config,
                   spatial_mesh_from_edges, velocity_mesh_from_interfaces)
from .scheme import (DIRECT, MICRO_MACRO, OVERDETERMINED, CellDistribution,
                     DirectScheme, HeatSolver, MicroMacroState, PhaseMesh,
                     SchemeConfig, SchemeError, SchemeSystem, decompose,
                     heat_step, init_state, reconstruct, step_direct)
from .solver import (ConditionEstimate, LuFactorization, NotSpdError,
                     SolverError, SparseMatrix, SpdFactorization,
                     condition_estimate, dense_lstsq, normal_system,
                     solve_spd)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
