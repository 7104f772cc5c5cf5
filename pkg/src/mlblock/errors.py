"""Exception types shared across the package.

Every error raised on purpose derives from :class:`MlblockError` so callers
(and the command line front end) can tell domain failures apart from bugs.
Plain ``OSError`` is left alone; file problems surface as the operating
system reports them.
"""

from __future__ import annotations


class MlblockError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MlblockError):
    """Malformed input: shapes, names, ranges, or file contents."""


class SpecError(MlblockError):
    """A model or analysis request is inconsistent with the network."""


class FeasibilityError(MlblockError):
    """A partition violates the feasible set (empty cluster, bad sizing)."""


class CapacityError(MlblockError):
    """An enumeration would exceed the configured size cap."""


class DegenerateWeightError(MlblockError):
    """Relation weights cannot be derived (zero one-cluster inconsistency)."""


class MembershipError(MlblockError):
    """A unit has no membership tie, so its class cannot be inherited."""


class TieError(MlblockError):
    """Class inheritance hit a tie under the error_on_tie rule."""


class DegenerateError(MlblockError):
    """A comparison index is undefined for the given pair of partitions."""
