"""Exception types shared across the package.

The split matters for the command line tool: configuration problems,
violated call contracts and I/O trouble map to different exit codes.
"""


class QdtpError(Exception):
    """Base class for everything raised on purpose by this package."""


class ConfigurationError(QdtpError):
    """A scenario, manifest or forwarder configuration is unusable."""


class ContractViolation(QdtpError):
    """An operation was called with arguments that break its preconditions."""


class InvariantViolation(QdtpError):
    """A post-run self-check failed; results cannot be trusted."""
