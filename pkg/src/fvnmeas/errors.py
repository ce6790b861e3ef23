"""Exception types shared across the toolkit."""


class FvnError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(FvnError, ValueError):
    """Invalid argument or configuration value."""


class SyncError(FvnError):
    """Recovered pulse grid does not line up with the plan geometry."""


class RegionError(FvnError):
    """No usable cross-correlation-free region for the given plan."""


class NumericalError(FvnError):
    """A numerical procedure broke down (non-positive-definite, overflow)."""


class WavFormatError(FvnError):
    """Malformed or unsupported WAV file."""
