"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class PoisonCertError(Exception):
    """Base class; ``code`` is the machine-readable tag printed by the CLI."""

    code = "ERROR"


class InvalidInput(PoisonCertError, ValueError):
    code = "INVALID_INPUT"


class CapacityExceeded(PoisonCertError):
    code = "CAPACITY_EXCEEDED"


class DegenerateModel(PoisonCertError):
    code = "DEGENERATE_MODEL"


class NotSaturated(PoisonCertError):
    code = "NOT_SATURATED"


class FormatError(PoisonCertError, ValueError):
    code = "FORMAT_ERROR"
