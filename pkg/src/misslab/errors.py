"""Exception hierarchy for misslab.

Domain errors (analysis outcomes that are the caller's problem, such as a
query over an unknown node) all derive from :class:`MisslabError` so the CLI
can map them to a single exit code.
"""


class MisslabError(Exception):
    """Base class for all misslab domain errors."""


# -- graph construction / parsing --------------------------------------------

class CycleDetected(MisslabError):
    """The directed part of the graph is not acyclic."""


class MechanismHasForbiddenChild(MisslabError):
    """A mechanism node has a child outside the proxy layer."""


class DanglingProxy(MisslabError):
    """A proxy node exists without a matching partially observed variable."""


class DuplicateName(MisslabError):
    """A node name is declared twice or collides with a derived name."""


class UnknownNode(MisslabError):
    """A query or edge references a node that is not in the graph."""


class MGraphSyntaxError(MisslabError):
    """Malformed graph/model text.  Carries the offending line and column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class ModelOutsideStandardClass(MisslabError):
    """The graph uses the mechanism-children override; this operation refuses it."""


# -- estimand algebra ---------------------------------------------------------

class UnguardedPartialVariable(MisslabError):
    """An atom mentions a partially observed variable without its R=0 guard.

    This indicates a bug in a recovery routine, never a user error.
    """


class UnboundVariable(MisslabError):
    """An estimand references a variable absent from the distribution."""


# -- recovery -----------------------------------------------------------------

class NotMar(MisslabError):
    """The graph is not MAR/MCAR, so the MAR joint decomposition is invalid."""


class REdgesPresent(MisslabError):
    """Edges between mechanism variables violate a precondition."""


class SearchBudgetExceeded(MisslabError):
    """The factorization search hit its ordering budget."""


class PatternNotApplicable(MisslabError):
    """The graph/query does not match the matrix-recovery pattern."""


class DepthCapExceeded(MisslabError):
    """The derivation search hit its depth cap."""


class NoPartialVariables(MisslabError):
    """The operation needs at least one partially observed variable."""


# -- estimation ---------------------------------------------------------------

class EmptyDataset(MisslabError):
    """The dataset contains no rows."""


class DomainMismatch(MisslabError):
    """Dataset values do not fit the declared or inferred domains."""


class ZeroProbabilityConditioning(MisslabError):
    """Evaluation conditioned on a zero-probability event.

    Names the offending event; positivity of the observed-data distribution
    is a standing assumption and violations are never silently imputed.
    """


class SingularSystem(MisslabError):
    """The matrix-recovery linear system is numerically singular."""


class InfeasibleSolution(MisslabError):
    """Matrix recovery produced entries far outside [0, 1]."""


class InsufficientData(MisslabError):
    """Too few observations in every stratum to run the test."""


# -- simulation ---------------------------------------------------------------

class StateSpaceTooLarge(MisslabError):
    """Exact enumeration would exceed the configuration budget."""


class FloorTooLarge(MisslabError):
    """The positivity floor is incompatible with the domain size."""
