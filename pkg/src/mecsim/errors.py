"""Exception types raised by the simulator and solvers."""


class MecsimError(Exception):
    """Base class for all package errors."""


class ConfigError(MecsimError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Config file is malformed or contains unknown keys."""


class ValidationError(ConfigError):
    """A config field violates its constraint."""


class AllZeroThroughput(MecsimError):
    """No bits were processed over the whole record sequence."""


class ZeroArrivalRate(MecsimError):
    """Mean arrival rate is zero; delay is undefined."""


class NoAssociation(MecsimError):
    """Power solver called for a device with no associated server."""


class BracketFailure(MecsimError):
    """Multiplier bracket does not straddle the root after expansion."""


class DegenerateDenominator(MecsimError):
    """A theoretical bound has a zero or negative denominator."""


class SolverError(MecsimError):
    """A per-slot solver failed; carries the slot index when raised by a run."""

    def __init__(self, message, slot=None):
        super().__init__(message if slot is None else f"slot {slot}: {message}")
        self.slot = slot
