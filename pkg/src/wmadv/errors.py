"""Error types shared across the package.

Transport-level oracle failures (OracleError) are retryable by callers;
protocol violations (ProtocolError) and capability gaps (CapabilityError)
are not.
"""


class DecodeError(ValueError):
    """Image bytes could not be decoded."""


class DimensionError(ValueError):
    """Array dimensions violate an operation's precondition."""


class ConfigError(ValueError):
    """Malformed config input (weights file, manifest, schedule, ...)."""


class OracleError(RuntimeError):
    """Transport-level oracle failure (process died, connection refused, 5xx)."""


class ProtocolError(RuntimeError):
    """Oracle spoke, but the payload violates the wire contract."""


class CapabilityError(RuntimeError):
    """Oracle lacks a requested capability (e.g. unknown feature layer)."""
