"""Exception hierarchy.

Configuration and precondition problems are kept apart from hypothesis
violations: a check whose hypotheses fail is skipped, it never reports Fail.
"""


class CurvlabError(Exception):
    """Base class for all curvlab errors."""


class ConfigurationError(CurvlabError):
    """Bad input: schema violations, out-of-range parameters, unmet preconditions."""


class PreconditionError(ConfigurationError):
    pass


class ModelConstraintError(PreconditionError):
    """A point or vector is not on (tangent to) the ambient embedding model."""


class SingularGradientError(PreconditionError):
    """Distance function is not differentiable at the requested point."""


class DegenerateImmersionError(CurvlabError):
    pass


class EvaluationError(CurvlabError):
    """An integrand produced NaN/inf at some quadrature node."""


class TracingError(CurvlabError):
    pass


class HypothesisViolation(CurvlabError):
    """The geometric hypotheses of a check do not hold on the data.

    ``details`` carries diagnostics such as the minimal admissible constant.
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class NotAShrinkerError(HypothesisViolation):
    pass
