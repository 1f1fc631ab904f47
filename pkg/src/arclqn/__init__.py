"""Exact cubic-regularization steps for limited-memory SR1 models.

The main entry points are :class:`LqnState` (the compact quasi-Newton
matrix), :func:`solve_subproblem` (global minimizer of the cubic model) and
:func:`run` (the adaptive-regularization outer loop).
"""
from .arc import ArcConfig, Branch, Budget, StepReport, Trace, adam_step, rho, run, sigma_update, step
from .dense import brute_force_min, dense_solve_subproblem, dense_sr1_update
from .errors import (ArcLqnError, BenchTimeout, DegenerateModel, DegenerateProbe, DomainError,
                     MaxIterations, NonFiniteObjective, NotPositiveDefinite, SingularM,
                     SolverError)
from .lqn import LqnState, UpdateOutcome, UpdateReason
from .problems import (Kind, LogisticSynth, Problem, Quadratic, Rosenbrock, SubproblemCase,
                       make_problem, make_subproblem_case)
from .small_eig import GeneralizedEig, cholesky, generalized_eigh, jacobi_eigh
from .subproblem import (Case, ImplicitSpectrum, Mode, SubproblemSolution, ToleranceSet,
                         cauchy_point, hard_case_alpha, implicit_spectrum, leftmost_eigvec,
                         newton_step, norms_at, phi1, recover_step, solve_lambda,
                         solve_subproblem)

__version__ = "0.1.0"
