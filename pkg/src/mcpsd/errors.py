"""Exception types shared across the package."""


class McpsdError(Exception):
    """Base class for all errors raised by mcpsd."""


class InvalidDimensions(McpsdError):
    """A dimensional precondition is violated (segment count, channel count, ...)."""


class FeasibilityExhausted(McpsdError):
    """No full-rank measurement system was found within the allowed attempts."""


class RankDeficient(McpsdError):
    """The measurement system is rank deficient; recovery is not defined."""


class DelayOutOfRange(McpsdError):
    """Requested delay cannot be realized by a filter of the given length."""


class InvalidLength(McpsdError):
    """A record or per-channel sample count is too short for the operation."""


class RecordTooShort(McpsdError):
    """The Nyquist-rate record holds fewer samples than one sampling period."""


class InstanceTooLarge(McpsdError):
    """A brute-force computation was requested beyond its allowed problem size."""
