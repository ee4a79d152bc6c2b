"""Exception hierarchy shared across the gateway."""


class SafehomeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SafehomeError, ValueError):
    """Malformed value: bad MAC, out-of-range RSSI, broken invariant."""


class DomainError(ValidationError):
    """Numeric argument outside the function's domain (e.g. distance <= 0)."""


class ConfigurationError(SafehomeError):
    """Inconsistent or missing configuration (unknown backend, bad CIDR...)."""


class ContractError(SafehomeError):
    """A caller violated an operation precondition (wrong role, mixed ids)."""


class TrainingError(SafehomeError):
    """Training cannot proceed (e.g. single-class dataset)."""
