"""Error taxonomy shared across the simulator.

Config/validation problems exit the CLI with code 1, runtime/numeric
problems with code 2.
"""


class FeduafError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FeduafError):
    """Invalid configuration value or unusable call arguments."""


class ValidationError(FeduafError):
    """Input data violates a documented schema or invariant."""


class ParseError(ValidationError):
    """Unparseable input file (reported with a line number where possible)."""


class ShapeError(FeduafError):
    """Array dimensions do not match the declared contract."""


class NumericError(FeduafError):
    """Non-finite values where finite ones are required."""


class StateError(FeduafError):
    """Mismatched or stale state objects (e.g. tape from another network)."""


class DegenerateInputError(FeduafError):
    """Input admits no prediction path (e.g. all modalities missing)."""


class ProtocolError(FeduafError):
    """Federated protocol violation (empty update set, shape drift)."""


CONFIG_EXIT_ERRORS = (ConfigError, ValidationError)
