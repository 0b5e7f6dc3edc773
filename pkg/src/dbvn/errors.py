"""Exception hierarchy shared by all dbvn modules."""


class DBvNError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DBvNError, ValueError):
    """Input rejected before any computation took place."""


# -- schedule ---------------------------------------------------------------

class DimensionError(ValidationError):
    pass


class StochasticityError(ValidationError):
    pass


class NegativeEntryError(ValidationError):
    pass


class DecompositionStall(DBvNError):
    """No perfect matching on the positive support while residual >= tol."""


class FrameTooSmall(ValidationError):
    pass


# -- fluid analysis -----------------------------------------------------------

class ParameterError(ValidationError):
    pass


class DegenerateParams(DBvNError):
    pass


class NoConvergence(DBvNError):
    pass


class NegativeResult(DBvNError):
    pass


class QuadratureFailure(DBvNError):
    pass


class UnstableRegime(DBvNError):
    pass


class TargetUnreachable(DBvNError):
    pass


# -- simulation / harness ---------------------------------------------------

class ConfigError(ValidationError):
    pass


class NotBracketed(DBvNError):
    pass
