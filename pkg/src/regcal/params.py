"""Parameter and data containers for measurement-error studies.

The package models two study designs.  A main study observes an outcome
``Y``, an error-prone surrogate exposure ``Z``, and error-free confounders
``W``.  An external validation study (EVS) observes a reference measurement
``X`` alongside ``Z`` and ``W`` but no outcome.  The generative model is

    x = a0 + A2' W + e_x                 true exposure given confounders
    X = x + e_b                          reference measurement (Berkson-like error)
    Z = c0 + C1' x + C2' W + e           surrogate (classical-like error)
    g{E(Y | x, W)} = beta0 + beta1' x + beta2' W

with e_x ~ (0, Sigma_x), e_b ~ N(0, Sigma_b), e ~ N(0, Sigma), and g the
identity or logit link.  The true exposure x is never observed; datasets
carry only (Y, Z, W) or (X, Z, W).

All containers own read-only copies of their arrays and are safe to share
between threads after construction.  Shape and definiteness rules are
enforced by :func:`validate_params` and :func:`validate_dataset`, which act
as the input-validation step before any fitting or generation.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    GammaRequiresScalarError,
    MissingColumnError,
    NonFiniteValueError,
    NotPositiveDefiniteError,
    RoleColumnConflictError,
    SingularC1Error,
)

__all__ = [
    "Dims",
    "ExposureShape",
    "ExposureModel",
    "ErrorModel",
    "LinearFamily",
    "LogisticFamily",
    "Family",
    "as_family",
    "OutcomeParams",
    "StudyParams",
    "Role",
    "Dataset",
    "validate_params",
    "validate_dataset",
]

# Relative tolerance for the positive-definiteness check: smallest
# eigenvalue must exceed 1e-10 times the largest.
_PD_RTOL = 1e-10
_SINGULAR_RTOL = 1e-12


def _own_vector(value: Any, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.array(value, dtype=float))
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _own_matrix(value: Any, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.array(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _own_columns(value: Any, name: str) -> np.ndarray:
    """Coerce an (n,) or (n, d) array-like to a read-only (n, d) matrix."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 1- or 2-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_shape(arr: np.ndarray, expected: tuple[int, ...], name: str) -> None:
    if arr.shape != expected:
        raise DimensionMismatchError(f"{name} must have shape {expected}, got {arr.shape}")


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"{name} contains non-finite values")


def _check_symmetric_definite(mat: np.ndarray, name: str, *, semi: bool = False) -> None:
    if mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got {mat.shape}")
    scale = np.abs(mat).max() if mat.size else 0.0
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise NotPositiveDefiniteError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    tol = _PD_RTOL * max(float(eigs[-1]), 0.0)
    if semi:
        if eigs[0] < -max(tol, _PD_RTOL):
            raise NotPositiveDefiniteError(f"{name} must be positive semi-definite")
    elif eigs[0] <= max(tol, 0.0) or eigs[-1] <= 0.0:
        raise NotPositiveDefiniteError(f"{name} must be positive definite")


class ExposureShape(enum.Enum):
    """Conditional distribution of the true exposure given confounders."""

    NORMAL = "normal"
    CENTERED_GAMMA = "centered_gamma"


class Role(enum.Enum):
    """Which study design a dataset comes from."""

    MAIN = "main"
    EVS = "evs"


@dataclass(frozen=True)
class Dims:
    """Exposure dimension ``p`` and confounder dimension ``q`` (both >= 1).

    Confounders are required by the measurement model, so ``q = 0`` is
    rejected.
    """

    p: int
    q: int

    def __post_init__(self) -> None:
        for name in ("p", "q"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise DimensionMismatchError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise DimensionMismatchError(f"{name} must be >= 1, got {value}")
            object.__setattr__(self, name, int(value))


@dataclass(frozen=True)
class ExposureModel:
    """True-exposure model x = a0 + A2' W + e_x with e_x ~ (0, Sigma_x).

    ``shape`` selects the distribution of e_x: normal, or (for scalar
    exposure only) a gamma with shape ``Sigma_x`` and rate 1 centered to
    mean zero, which keeps the variance equal to ``Sigma_x`` while making
    the distribution strongly non-normal.
    """

    a0: np.ndarray
    A2: np.ndarray
    Sigma_x: np.ndarray
    shape: ExposureShape = ExposureShape.NORMAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "a0", _own_vector(self.a0, "a0"))
        object.__setattr__(self, "A2", _own_matrix(self.A2, "A2"))
        object.__setattr__(self, "Sigma_x", _own_matrix(self.Sigma_x, "Sigma_x"))
        if not isinstance(self.shape, ExposureShape):
            object.__setattr__(self, "shape", ExposureShape(self.shape))


@dataclass(frozen=True)
class ErrorModel:
    """Surrogate model Z = c0 + C1' x + C2' W + e plus the reference-
    measurement error X = x + e_b.

    ``Sigma`` is the classical-like error variance (must be positive
    definite), ``Sigma_b`` the Berkson-like error variance of the reference
    measurement (may be zero).
    """

    c0: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    Sigma: np.ndarray
    Sigma_b: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "c0", _own_vector(self.c0, "c0"))
        object.__setattr__(self, "C1", _own_matrix(self.C1, "C1"))
        object.__setattr__(self, "C2", _own_matrix(self.C2, "C2"))
        object.__setattr__(self, "Sigma", _own_matrix(self.Sigma, "Sigma"))
        object.__setattr__(self, "Sigma_b", _own_matrix(self.Sigma_b, "Sigma_b"))


@dataclass(frozen=True)
class LinearFamily:
    """Identity link with normal residuals of standard deviation
    ``residual_sd``."""

    residual_sd: float = 1.0
    name = "linear"

    def __post_init__(self) -> None:
        object.__setattr__(self, "residual_sd", float(self.residual_sd))


@dataclass(frozen=True)
class LogisticFamily:
    """Logit link with Bernoulli outcomes."""

    name = "logistic"


Family = LinearFamily | LogisticFamily


def as_family(value: Family | str) -> Family:
    """Resolve a family given either an instance or a name.

    Accepts ``"linear"``/``"continuous"`` and ``"logistic"``/``"binary"``
    so CLI vocabulary and library vocabulary both work.
    """
    if isinstance(value, (LinearFamily, LogisticFamily)):
        return value
    name = str(value).lower()
    if name in ("linear", "continuous", "gaussian"):
        return LinearFamily()
    if name in ("logistic", "binary", "binomial"):
        return LogisticFamily()
    raise ValueError(f"unknown outcome family {value!r}")


@dataclass(frozen=True)
class OutcomeParams:
    """Outcome model g{E(Y | x, W)} = beta0 + beta1' x + beta2' W."""

    beta0: float
    beta1: np.ndarray
    beta2: np.ndarray
    family: Family

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta1", _own_vector(self.beta1, "beta1"))
        object.__setattr__(self, "beta2", _own_vector(self.beta2, "beta2"))
        if not isinstance(self.family, (LinearFamily, LogisticFamily)):
            object.__setattr__(self, "family", as_family(self.family))


@dataclass(frozen=True)
class StudyParams:
    """All generative parameters for one study.

    ``outcome`` is None for a validation study, which observes no outcome.
    Confounders are drawn with independent components, W_j ~ N(mean_j,
    sd_j^2); no confounder covariance is modeled.
    """

    dims: Dims
    exposure: ExposureModel
    error: ErrorModel
    confounder_mean: np.ndarray
    confounder_sd: np.ndarray
    outcome: OutcomeParams | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "confounder_mean", _own_vector(self.confounder_mean, "confounder_mean")
        )
        object.__setattr__(
            self, "confounder_sd", _own_vector(self.confounder_sd, "confounder_sd")
        )

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form with keys matching the field names; matrices
        become row-major lists of lists."""
        doc: dict[str, Any] = {
            "dims": {"p": self.dims.p, "q": self.dims.q},
            "exposure": {
                "a0": self.exposure.a0.tolist(),
                "A2": self.exposure.A2.tolist(),
                "Sigma_x": self.exposure.Sigma_x.tolist(),
                "shape": self.exposure.shape.value,
            },
            "error": {
                "c0": self.error.c0.tolist(),
                "C1": self.error.C1.tolist(),
                "C2": self.error.C2.tolist(),
                "Sigma": self.error.Sigma.tolist(),
                "Sigma_b": self.error.Sigma_b.tolist(),
            },
            "outcome": None,
            "confounder_mean": self.confounder_mean.tolist(),
            "confounder_sd": self.confounder_sd.tolist(),
        }
        if self.outcome is not None:
            fam: dict[str, Any] = {"name": self.outcome.family.name}
            if isinstance(self.outcome.family, LinearFamily):
                fam["residual_sd"] = self.outcome.family.residual_sd
            doc["outcome"] = {
                "beta0": self.outcome.beta0,
                "beta1": self.outcome.beta1.tolist(),
                "beta2": self.outcome.beta2.tolist(),
                "family": fam,
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "StudyParams":
        fam_doc = None if doc.get("outcome") is None else doc["outcome"]["family"]
        outcome = None
        if doc.get("outcome") is not None:
            if fam_doc["name"] == "linear":
                family: Family = LinearFamily(residual_sd=fam_doc.get("residual_sd", 1.0))
            elif fam_doc["name"] == "logistic":
                family = LogisticFamily()
            else:
                raise ValueError(f"unknown family name {fam_doc['name']!r}")
            outcome = OutcomeParams(
                beta0=doc["outcome"]["beta0"],
                beta1=doc["outcome"]["beta1"],
                beta2=doc["outcome"]["beta2"],
                family=family,
            )
        return cls(
            dims=Dims(p=doc["dims"]["p"], q=doc["dims"]["q"]),
            exposure=ExposureModel(
                a0=doc["exposure"]["a0"],
                A2=doc["exposure"]["A2"],
                Sigma_x=doc["exposure"]["Sigma_x"],
                shape=ExposureShape(doc["exposure"]["shape"]),
            ),
            error=ErrorModel(
                c0=doc["error"]["c0"],
                C1=doc["error"]["C1"],
                C2=doc["error"]["C2"],
                Sigma=doc["error"]["Sigma"],
                Sigma_b=doc["error"]["Sigma_b"],
            ),
            confounder_mean=doc["confounder_mean"],
            confounder_sd=doc["confounder_sd"],
            outcome=outcome,
        )

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "StudyParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Dataset:
    """Columnar study records.

    ``z`` and ``w`` are (n, p) and (n, q); a main study carries the
    outcome ``y`` (length n), a validation study the reference measurement
    ``x`` (n, p).  Construction coerces arrays and nothing more; use
    :func:`validate_dataset` to enforce the role and finiteness rules.
    """

    z: np.ndarray
    w: np.ndarray
    role: Role
    y: np.ndarray | None = None
    x: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _own_columns(self.z, "z"))
        object.__setattr__(self, "w", _own_columns(self.w, "w"))
        if not isinstance(self.role, Role):
            object.__setattr__(self, "role", Role(self.role))
        if self.y is not None:
            y = np.array(self.y, dtype=float)
            if y.ndim == 2 and y.shape[1] == 1:
                y = y[:, 0]
            if y.ndim != 1:
                raise DimensionMismatchError(f"y must be a vector, got shape {y.shape}")
            y.setflags(write=False)
            object.__setattr__(self, "y", y)
        if self.x is not None:
            object.__setattr__(self, "x", _own_columns(self.x, "x"))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def q(self) -> int:
        return self.w.shape[1]


def validate_params(params: StudyParams) -> StudyParams:
    """Check every structural invariant of ``params`` and return it.

    Raises DimensionMismatchError, NotPositiveDefiniteError,
    SingularC1Error, GammaRequiresScalarError, or NonFiniteValueError.
    Idempotent: validating an already-validated value is a no-op.
    """
    p, q = params.dims.p, params.dims.q
    ex, er = params.exposure, params.error

    _check_shape(ex.a0, (p,), "a0")
    _check_shape(ex.A2, (q, p), "A2")
    _check_shape(ex.Sigma_x, (p, p), "Sigma_x")
    _check_shape(er.c0, (p,), "c0")
    _check_shape(er.C1, (p, p), "C1")
    _check_shape(er.C2, (q, p), "C2")
    _check_shape(er.Sigma, (p, p), "Sigma")
    _check_shape(er.Sigma_b, (p, p), "Sigma_b")
    _check_shape(params.confounder_mean, (q,), "confounder_mean")
    _check_shape(params.confounder_sd, (q,), "confounder_sd")

    for name in ("a0", "A2", "Sigma_x"):
        _check_finite(getattr(ex, name), name)
    for name in ("c0", "C1", "C2", "Sigma", "Sigma_b"):
        _check_finite(getattr(er, name), name)
    _check_finite(params.confounder_mean, "confounder_mean")
    _check_finite(params.confounder_sd, "confounder_sd")

    _check_symmetric_definite(ex.Sigma_x, "Sigma_x")
    _check_symmetric_definite(er.Sigma, "Sigma")
    _check_symmetric_definite(er.Sigma_b, "Sigma_b", semi=True)

    singular_values = np.linalg.svd(er.C1, compute_uv=False)
    if singular_values[-1] <= _SINGULAR_RTOL * singular_values[0]:
        raise SingularC1Error("C1 is singular or numerically rank-deficient")

    if ex.shape is ExposureShape.CENTERED_GAMMA and p != 1:
        raise GammaRequiresScalarError(
            "the centered-gamma exposure shape is defined for p = 1 only"
        )

    if (params.confounder_sd <= 0).any():
        raise NotPositiveDefiniteError("confounder_sd entries must be > 0")

    if params.outcome is not None:
        out = params.outcome
        _check_shape(out.beta1, (p,), "beta1")
        _check_shape(out.beta2, (q,), "beta2")
        _check_finite(out.beta1, "beta1")
        _check_finite(out.beta2, "beta2")
        if not np.isfinite(out.beta0):
            raise NonFiniteValueError("beta0 is not finite")
        if isinstance(out.family, LinearFamily) and not out.family.residual_sd > 0:
            raise NotPositiveDefiniteError("residual_sd must be > 0")

    return params


def validate_dataset(data: Dataset) -> Dataset:
    """Check the role, length, and finiteness rules of ``data`` and
    return it.

    Raises EmptyDatasetError, MissingColumnError, RoleColumnConflictError,
    DimensionMismatchError, or NonFiniteValueError.
    """
    if data.n == 0:
        raise EmptyDatasetError("dataset has no rows")

    if data.role is Role.MAIN:
        if data.y is None:
            raise MissingColumnError("a main-study dataset requires y")
        if data.x is not None:
            raise RoleColumnConflictError("a main-study dataset must not carry x")
    else:
        if data.x is None:
            raise MissingColumnError("a validation-study dataset requires x")
        if data.y is not None:
            raise RoleColumnConflictError("a validation-study dataset must not carry y")

    n = data.n
    if data.w.shape[0] != n:
        raise DimensionMismatchError("z and w have different numbers of rows")
    if data.y is not None and data.y.shape[0] != n:
        raise DimensionMismatchError("y length does not match z")
    if data.x is not None:
        if data.x.shape[0] != n:
            raise DimensionMismatchError("x rows do not match z")
        if data.x.shape[1] != data.p:
            raise DimensionMismatchError(
                f"x has {data.x.shape[1]} columns but z has {data.p}"
            )

    _check_finite(data.z, "z")
    _check_finite(data.w, "w")
    if data.y is not None:
        _check_finite(data.y, "y")
    if data.x is not None:
        _check_finite(data.x, "x")

    return data
