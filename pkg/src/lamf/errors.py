"""Exception types shared across the package.

Everything derives from LamfError so callers (the HTTP service, the CLI)
can map failures to diagnostics without catching bare Exception.
"""


class LamfError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LamfError, ValueError):
    """Array lengths or dimensions inconsistent with the declared shape."""


class InvalidValueError(LamfError, ValueError):
    """Non-finite input, out-of-range parameter, or bad argument value."""


class UnsupportedConfigError(LamfError, ValueError):
    """Configuration outside what a component supports (e.g. non-power-of-two group size)."""


class PositionError(LamfError, ValueError):
    """Sequence position outside [0, seq_len)."""


class TokenError(LamfError, ValueError):
    """Token id outside the vocabulary."""


class DistributionError(LamfError, ValueError):
    """Logits do not describe a usable probability distribution."""


class StateError(LamfError, RuntimeError):
    """Operation attempted against inconsistent runtime state (e.g. unfilled cache)."""


class FormatError(LamfError, ValueError):
    """A binary file failed its magic/version/layout checks."""


class ModelIOError(LamfError, OSError):
    """I/O failure while reading or writing model data; message carries context."""


class InfeasibleError(LamfError, ValueError):
    """A calibration or search target that no parameter value can reach."""
