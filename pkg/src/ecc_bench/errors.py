"""Exception hierarchy shared by every ecc_bench module."""


class EccError(Exception):
    """Base class for all ecc_bench errors."""


class MismatchedGridError(EccError, ValueError):
    """Curves combined together do not share a grid resolution."""


class WeightSumError(EccError, ValueError):
    """Child weights of a composite do not sum to one."""


class InvalidGraphError(EccError, ValueError):
    """An operation requiring a valid graph received a violating one."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class CycleError(InvalidGraphError):
    """The utilization graph contains a directed cycle."""


class NotCompositeError(EccError, ValueError):
    pass


class EmptyInputError(EccError, ValueError):
    pass


class MissingUtilizationError(EccError, ValueError):
    """A component has no current utilization to evaluate against."""


class UnknownNodeError(EccError, KeyError):
    pass


class LastChildError(EccError, ValueError):
    """Removing the node would leave its parent without children."""


class ParseError(EccError, ValueError):
    """Input file is not well-formed (bad JSON, bad CSV row)."""


class SchemaError(EccError, ValueError):
    """Input is well-formed but violates the file schema."""


class ValidationError(InvalidGraphError):
    """A loaded graph violates the structural graph constraints."""


class UnknownComponentError(EccError, KeyError):
    pass


class UnknownInterventionTargetError(EccError, KeyError):
    pass


class ZeroEfficiencyError(EccError, ZeroDivisionError):
    pass
