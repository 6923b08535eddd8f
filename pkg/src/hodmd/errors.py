"""Exception hierarchy.

Every error raised by the package derives from :class:`HodmdError`. The two
intermediate classes split usage/validation problems from numerical failures,
which the CLI maps to exit codes 2 and 3.
"""


class HodmdError(Exception):
    """Base class for all package errors."""


class ValidationError(HodmdError, ValueError):
    """Bad input, bad configuration or a violated precondition."""


class NumericalError(HodmdError, ArithmeticError):
    """A numerical kernel or integrator could not produce a result."""


class InvalidInput(ValidationError):
    pass


class NonUniformSampling(ValidationError):
    def __init__(self, message, worst_index=None):
        super().__init__(message)
        self.worst_index = worst_index


class InsufficientData(ValidationError):
    pass


class InvalidEmbeddingDepth(ValidationError):
    pass


class InvalidRank(ValidationError):
    pass


class UnknownPreset(ValidationError):
    pass


class ZeroReference(ValidationError):
    pass


class UnsupportedModelVersion(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class NumericalFailure(NumericalError):
    pass


class DegenerateSpectrum(NumericalError):
    pass


class IllConditionedTruncation(NumericalError):
    pass


class GrowthOverflow(NumericalError):
    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class SingularSystem(NumericalError):
    pass


class NewtonDivergence(NumericalError):
    def __init__(self, message, step=None, norm=None):
        super().__init__(message)
        self.step = step
        self.norm = norm


class HodmdWarning(UserWarning):
    """Recoverable numerical condition (dropped modes, tiny singular values)."""
