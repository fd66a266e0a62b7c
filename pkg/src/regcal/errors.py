"""Exception hierarchy for the regcal package.

Every error raised by this package derives from :class:`RegcalError`, so
callers can catch one type to handle any domain failure.  Subclasses are
fine-grained because simulation drivers need to distinguish recoverable
per-replication failures (separation, non-convergence) from caller bugs
(dimension mismatches, bad roles).
"""

from __future__ import annotations


class RegcalError(Exception):
    """Base class for all regcal errors."""


class DimensionMismatchError(RegcalError):
    """Array shapes are inconsistent with the declared dimensions."""


class NotPositiveDefiniteError(RegcalError):
    """A matrix that must be (semi)definite, or a scale that must be
    positive, fails the requirement."""


class SingularC1Error(RegcalError):
    """The surrogate loading matrix C1 is singular; calibration requires
    it to be invertible."""


class GammaRequiresScalarError(RegcalError):
    """The centered-gamma exposure shape is defined for scalar exposure
    only (p = 1)."""


class MissingColumnError(RegcalError):
    """A dataset lacks a column its role requires."""


class RoleColumnConflictError(RegcalError):
    """A dataset carries a column its role forbids (outcome in a
    validation study, reference measurement in a main study)."""


class NonFiniteValueError(RegcalError):
    """NaN or infinity found where finite values are required."""


class EmptyDatasetError(RegcalError):
    """The dataset has no rows."""


class RankDeficientDesignError(RegcalError):
    """The design matrix does not have full column rank."""


class InsufficientRowsError(RegcalError):
    """Fewer rows than the fit needs (n must exceed the number of
    coefficients)."""


class SeparationError(RegcalError):
    """Logistic coefficients are diverging; the classes are (quasi-)
    separable."""


class NoVariationInResponseError(RegcalError):
    """A binary response contains only one class."""


class NotConvergedError(RegcalError):
    """Iterative fitting did not converge within the iteration budget."""


class WrongRoleError(RegcalError):
    """A dataset with the wrong role was passed (main study where a
    validation study is needed, or vice versa)."""


class FamilyMismatchError(RegcalError):
    """The outcome family does not match the response (logistic requires
    a 0/1 outcome)."""


class SingularGamma1Error(RegcalError):
    """The fitted calibration matrix is numerically singular (condition
    number above 1e12); the correction is not computable."""


class SingularInputError(RegcalError):
    """A closed-form expression received a singular or non-definite
    matrix argument."""


class DegenerateTransformError(RegcalError):
    """The combined transform L1 C1' + L2 is not invertible, so the
    objective is undefined at this point."""


class TooManyFailuresError(RegcalError):
    """More than the tolerated share of replications failed."""


class CsvSchemaError(RegcalError):
    """A CSV file does not conform to the expected column schema."""
