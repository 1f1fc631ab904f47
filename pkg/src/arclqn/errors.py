"""Exception types shared across the solver layers."""


class ArcLqnError(Exception):
    """Base class for all library errors."""


class SolverError(ArcLqnError):
    """A subproblem solve could not produce a step.

    The outer loop treats any subclass as a rejected step.
    """


class SingularM(SolverError):
    """The small middle matrix of the compact representation is singular."""


class NotPositiveDefinite(SolverError):
    """Cholesky pivot fell below tolerance (rank-deficient Gram matrix)."""


class DomainError(SolverError):
    """A secular-function evaluation was requested outside its domain."""


class MaxIterations(SolverError):
    """Newton iteration cap reached before the stopping test was met."""


class DegenerateProbe(SolverError):
    """Every probe vector was annihilated by the eigenspace projector."""


class DegenerateModel(SolverError):
    """Predicted model decrease is too small to form a success ratio."""


class BenchTimeout(ArcLqnError):
    """A timed solve exceeded its deadline."""


class NonFiniteObjective(ArcLqnError):
    """The objective or its gradient became NaN or infinite at an iterate."""
