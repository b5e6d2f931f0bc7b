"""Exception hierarchy shared by all psyprobe modules."""


class PsyprobeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PsyprobeError):
    """Image or buffer dimensions are invalid or incompatible."""


class BoundsError(PsyprobeError):
    """A rectangle falls outside the image it is applied to."""


class TilingError(PsyprobeError):
    """A cell or window size does not tile the given area."""


class ParameterError(PsyprobeError):
    """A numeric parameter is outside its valid range."""


class InputError(PsyprobeError):
    """Caller-supplied inputs violate an operation's precondition."""


class ClassError(PsyprobeError):
    """Unknown class id requested from an oracle."""


class BudgetExhaustedError(PsyprobeError):
    """The oracle query budget has been fully consumed."""


class TransportError(PsyprobeError):
    """Remote oracle could not be reached or returned an HTTP error."""


class ProtocolError(PsyprobeError):
    """Remote oracle response violates the classification protocol."""


class EmptyError(PsyprobeError):
    """An operation received an empty collection it cannot work on."""


class FormatError(PsyprobeError):
    """A serialized buffer or file does not match its expected format."""


class ConfigError(PsyprobeError):
    """Campaign configuration is invalid; carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
