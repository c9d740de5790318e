"""Exception hierarchy.

Every error raised by this package derives from :class:`CaptenError`, split
by who is at fault: bad caller input, a violated usage contract, a fit that
could not complete, or a numerical breakdown.
"""


class CaptenError(Exception):
    """Base class for all package errors."""


class InputError(CaptenError, ValueError):
    """Malformed or out-of-range input (indices, labels, shapes, files)."""


class ContractError(CaptenError):
    """An operation was invoked in a state its contract forbids."""


class FitError(CaptenError):
    """Optimization failed: divergence, separation, or degenerate data."""


class NumericalError(CaptenError):
    """A numerical quantity left its valid range beyond tolerance."""
