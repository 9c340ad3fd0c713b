"""Exception hierarchy. Subclasses group errors by CLI exit code."""


class NeurocnnError(Exception):
    exit_code = 1


class PreconditionError(NeurocnnError):
    """Caller violated a documented precondition."""
    exit_code = 2


class PropertyError(NeurocnnError):
    """A mathematical property that must hold was violated."""
    exit_code = 3


class DegeneracyError(NeurocnnError):
    """Numerically degenerate input (singular or ill-conditioned data)."""
    exit_code = 4


class NonIntegralWidth(PreconditionError):
    pass


class NonPositiveWidth(PreconditionError):
    pass


class LengthMismatch(PreconditionError):
    pass


class VarMismatch(PreconditionError):
    pass


class ZeroFilter(PreconditionError):
    pass


class RequiresRGreaterOne(PreconditionError):
    pass


class ShapeMismatch(PreconditionError):
    pass


class InadmissibleShift(PreconditionError):
    pass


class MaterializationLimit(PreconditionError):
    pass


class NonIntegralDegree(PropertyError):
    pass


class NonIntegralGED(PropertyError):
    pass


class FormulaMismatch(PropertyError):
    pass


class SingularPointRejected(PropertyError):
    pass


class SingularGram(DegeneracyError):
    pass


class IllConditionedProjection(DegeneracyError):
    pass
