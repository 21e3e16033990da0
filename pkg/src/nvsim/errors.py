"""Exception hierarchy for the simulator.

Every error raised for bad input or an illegal request derives from
``NvsimError`` so the CLI can map it to exit code 1.
"""


class NvsimError(Exception):
    """Base class for all validation and model errors."""


class MalformedLine(NvsimError):
    def __init__(self, line_number, reason=""):
        self.line_number = line_number
        self.reason = reason
        msg = f"malformed trace line {line_number}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class InvalidParams(NvsimError):
    pass


class ConfigError(NvsimError):
    pass


class UnknownKey(ConfigError):
    pass


class Misaligned(NvsimError):
    pass


class KeysUnavailable(NvsimError):
    pass


class BadTransition(NvsimError):
    pass


class OutOfRange(NvsimError):
    pass


class PageAbsent(NvsimError):
    pass


class Disabled(NvsimError):
    pass


class AlreadyResident(NvsimError):
    pass


class BadDistribution(NvsimError):
    pass


class NonMonotonicFraction(NvsimError):
    pass


class MismatchedBaseline(NvsimError):
    pass


class UnsupportedShape(NvsimError):
    pass
