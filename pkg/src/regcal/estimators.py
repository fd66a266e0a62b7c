"""Naive and corrected exposure-effect estimation with validation data.

The pipeline: fit the outcome model on the main study surrogate (the naive
estimate), fit the measurement model X ~ (1, Z, W) on the validation study,
then rescale the naive exposure block by the inverse of the fitted
calibration matrix.  A transport diagnostic compares Var(Z | W) across the
two studies, which is the observable indicator of whether the measurement
model learned in one study applies to the other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import (
    DimensionMismatchError,
    FamilyMismatchError,
    NotConvergedError,
    RegcalError,
    SingularGamma1Error,
    TooManyFailuresError,
    WrongRoleError,
)
from .glm import FitResult, conditional_variance, fit_logistic, fit_ols
from .params import (
    Dataset,
    Family,
    LinearFamily,
    LogisticFamily,
    Role,
    as_family,
    validate_dataset,
)

__all__ = [
    "MemFit",
    "RcWarning",
    "RcEstimate",
    "TransportFlag",
    "TransportReport",
    "StudyCharacteristics",
    "EvsRow",
    "AnalysisReport",
    "fit_mem",
    "fit_naive",
    "rc_correct",
    "transport_diagnostic",
    "analyze",
]

# Condition-number thresholds for the fitted calibration matrix.
_GAMMA1_WARN_COND = 1e6
_GAMMA1_FAIL_COND = 1e12

# The corrected logistic coefficient is reliable only under small
# measurement error; warn when beta1' Var(x|Z,W) beta1 reaches this bound.
_LARGE_ERROR_BOUND = 0.5


@dataclass(frozen=True)
class MemFit:
    """Fitted measurement model X ~ (1, Z, W) from a validation study.

    ``Gamma1[i, j]`` is the coefficient of Z_i in the regression for X_j,
    so ``Gamma1`` multiplies the true exposure effect on the left in the
    attenuation relation (naive exposure block -> Gamma1 @ beta1).
    ``Gamma1_covariance`` is the covariance of the column-stacked entries
    of Gamma1.  ``residual_variance`` estimates Var(X | Z, W), which
    includes the reference-measurement error variance on top of
    Var(x | Z, W).
    """

    gamma0: np.ndarray
    Gamma1: np.ndarray
    Gamma2: np.ndarray
    Gamma1_covariance: np.ndarray
    residual_variance: np.ndarray
    n_evs: int


class RcWarning(enum.Enum):
    """Non-fatal flags attached to a corrected estimate."""

    LARGE_MEASUREMENT_ERROR = "large_measurement_error"
    ILL_CONDITIONED_GAMMA1 = "ill_conditioned_gamma1"


@dataclass(frozen=True)
class RcEstimate:
    """Corrected exposure coefficient with its uncertainty.

    ``ci_rc`` has one (low, high) row per exposure coordinate.  For p > 1
    the standard errors come from a nonparametric bootstrap and are NaN
    when the raw datasets were not supplied to :func:`rc_correct`.
    """

    beta1_naive: np.ndarray
    beta1_rc: np.ndarray
    se_naive: np.ndarray
    se_rc: np.ndarray
    ci_level: float
    ci_rc: np.ndarray
    gamma1_condition_number: float
    warnings: tuple[RcWarning, ...]


class TransportFlag(enum.Enum):
    CONSISTENT = "consistent"
    SUSPECT = "suspect"


@dataclass(frozen=True)
class TransportReport:
    """Comparison of Var(Z | W) between a validation study and a main
    study.

    ``ratio`` is validation over main: the scalar variance ratio for
    p = 1, the largest generalized eigenvalue for p > 1.  The flag is
    Suspect when the ratio deviates from 1 by more than the threshold.
    """

    var_z_given_w_main: np.ndarray
    var_z_given_w_evs: np.ndarray
    ratio: float
    ratio_threshold: float
    flag: TransportFlag


def fit_mem(evs: Dataset) -> MemFit:
    """Fit the measurement model on a validation study.

    Least squares of the reference measurement X on (intercept, Z, W);
    the coefficient blocks become (gamma0, Gamma1, Gamma2).
    """
    validate_dataset(evs)
    if evs.role is not Role.EVS:
        raise WrongRoleError("fit_mem requires a validation-study dataset")
    n, p = evs.x.shape
    q = evs.q
    design = np.column_stack([np.ones(n), evs.z, evs.w])
    result = fit_ols(design, evs.x)
    coef = result.coefficients
    k = 1 + p + q
    # vec index of Gamma1[i, j] inside the column-stacked coefficient
    # matrix: column j contributes block j*k, row 1+i within it.
    idx = np.array([j * k + 1 + i for j in range(p) for i in range(p)])
    gamma1_cov = result.coef_covariance[np.ix_(idx, idx)]
    return MemFit(
        gamma0=coef[0],
        Gamma1=coef[1 : 1 + p],
        Gamma2=coef[1 + p :],
        Gamma1_covariance=gamma1_cov,
        residual_variance=np.atleast_2d(np.asarray(result.residual_variance, dtype=float)),
        n_evs=n,
    )


def fit_naive(main: Dataset, family: Family | str) -> FitResult:
    """Fit the outcome model on the main study using the surrogate.

    GLM of Y on (intercept, Z, W) for the given family.  The returned
    result is tagged with the family name so the correction step can
    apply family-specific checks.
    """
    validate_dataset(main)
    if main.role is not Role.MAIN:
        raise WrongRoleError("fit_naive requires a main-study dataset")
    fam = as_family(family)
    design = np.column_stack([np.ones(main.n), main.z, main.w])
    if isinstance(fam, LogisticFamily):
        if not np.isin(np.unique(main.y), (0.0, 1.0)).all():
            raise FamilyMismatchError("logistic family requires a 0/1 outcome")
        result = fit_logistic(design, main.y)
        return replace(result, family="logistic")
    result = fit_ols(design, main.y)
    return replace(result, family="linear")


def _resample(data: Dataset, rng: np.random.Generator) -> Dataset:
    idx = rng.integers(0, data.n, data.n)
    return Dataset(
        z=data.z[idx],
        w=data.w[idx],
        role=data.role,
        y=None if data.y is None else data.y[idx],
        x=None if data.x is None else data.x[idx],
    )


def rc_correct(
    naive: FitResult,
    mem: MemFit,
    ci_level: float = 0.95,
    *,
    main: Dataset | None = None,
    evs: Dataset | None = None,
    family: Family | str | None = None,
    n_boot: int = 500,
    rng: np.random.Generator | int | None = None,
) -> RcEstimate:
    """Rescale the naive exposure block by the inverse calibration matrix.

    The corrected estimate solves Gamma1 @ beta1_rc = beta1_naive, the
    matrix form of dividing the naive coefficient by the attenuation
    factor.

    Standard errors: for p = 1 a delta method treating the two studies as
    independent, Var(b_rc) = Var(b*)/g^2 + b*^2 Var(g)/g^4.  For p > 1
    supply ``main`` and ``evs`` and a nonparametric bootstrap (``n_boot``
    draws, each study resampled independently) gives the standard errors
    and percentile intervals; without the datasets those fields are NaN.

    Warnings rather than errors: ``ill_conditioned_gamma1`` above
    condition number 1e6, and ``large_measurement_error`` when the family
    is logistic and beta1_rc' Var(X|Z,W) beta1_rc >= 0.5, the regime where
    the plug-in logistic correction is only approximate.
    """
    if not naive.converged:
        raise NotConvergedError("naive fit did not converge")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must be inside (0, 1)")
    p = mem.Gamma1.shape[0]
    beta1_naive = np.asarray(naive.coefficients[1 : 1 + p], dtype=float)

    cond = float(np.linalg.cond(mem.Gamma1))
    if not np.isfinite(cond) or cond > _GAMMA1_FAIL_COND:
        raise SingularGamma1Error(
            f"calibration matrix condition number {cond:.3g} exceeds 1e12"
        )
    warnings: list[RcWarning] = []
    if cond > _GAMMA1_WARN_COND:
        warnings.append(RcWarning.ILL_CONDITIONED_GAMMA1)

    beta1_rc = np.linalg.solve(mem.Gamma1, beta1_naive)
    se_naive = np.sqrt(np.diag(naive.coef_covariance))[1 : 1 + p]

    fam_name = naive.family if family is None else as_family(family).name
    if fam_name == "logistic":
        quad = float(beta1_rc @ mem.residual_variance @ beta1_rc)
        if quad >= _LARGE_ERROR_BOUND:
            warnings.append(RcWarning.LARGE_MEASUREMENT_ERROR)

    if p == 1:
        g = mem.Gamma1[0, 0]
        var_g = mem.Gamma1_covariance[0, 0]
        b_star = beta1_naive[0]
        var_rc = se_naive[0] ** 2 / g**2 + b_star**2 * var_g / g**4
        se_rc = np.array([np.sqrt(var_rc)])
        z = stats.norm.ppf(0.5 + ci_level / 2.0)
        ci_rc = np.array([[beta1_rc[0] - z * se_rc[0], beta1_rc[0] + z * se_rc[0]]])
    elif main is not None and evs is not None:
        generator = np.random.default_rng(rng)
        draws = []
        for _ in range(n_boot):
            try:
                naive_b = fit_naive(_resample(main, generator), fam_name or "linear")
                mem_b = fit_mem(_resample(evs, generator))
                draws.append(
                    np.linalg.solve(mem_b.Gamma1, naive_b.coefficients[1 : 1 + p])
                )
            except (RegcalError, np.linalg.LinAlgError):
                continue
        if len(draws) < max(10, n_boot // 10):
            raise TooManyFailuresError(
                f"only {len(draws)} of {n_boot} bootstrap replications succeeded"
            )
        boot = np.array(draws)
        se_rc = boot.std(axis=0, ddof=1)
        lo = (1.0 - ci_level) / 2.0
        ci_rc = np.quantile(boot, [lo, 1.0 - lo], axis=0).T
    else:
        se_rc = np.full(p, np.nan)
        ci_rc = np.full((p, 2), np.nan)

    return RcEstimate(
        beta1_naive=beta1_naive,
        beta1_rc=beta1_rc,
        se_naive=se_naive,
        se_rc=se_rc,
        ci_level=ci_level,
        ci_rc=ci_rc,
        gamma1_condition_number=cond,
        warnings=tuple(warnings),
    )


def transport_diagnostic(
    main: Dataset, evs: Dataset, ratio_threshold: float = 0.2
) -> TransportReport:
    """Compare Var(Z | W) between the two studies.

    Equal conditional variance of the surrogate given confounders is the
    observable signature of a transportable measurement model.  The ratio
    reported is validation over main; for p > 1 it is the largest
    generalized eigenvalue of the two conditional covariance matrices.
    """
    validate_dataset(main)
    validate_dataset(evs)
    if main.p != evs.p or main.q != evs.q:
        raise DimensionMismatchError("studies disagree on exposure or confounder dimension")
    if ratio_threshold <= 0:
        raise ValueError("ratio_threshold must be positive")
    v_main = conditional_variance(main.z, main.w)
    v_evs = conditional_variance(evs.z, evs.w)
    if main.p == 1:
        ratio = float(v_evs[0, 0] / v_main[0, 0])
    else:
        ratio = float(scipy.linalg.eigh(v_evs, v_main, eigvals_only=True).max())
    flag = TransportFlag.SUSPECT if abs(ratio - 1.0) > ratio_threshold else TransportFlag.CONSISTENT
    return TransportReport(
        var_z_given_w_main=v_main,
        var_z_given_w_evs=v_evs,
        ratio=ratio,
        ratio_threshold=ratio_threshold,
        flag=flag,
    )


@dataclass(frozen=True)
class StudyCharacteristics:
    """Summary row for one study: sample size, surrogate mean and
    conditional variance, and (for validation studies) the same for the
    reference measurement."""

    label: str
    n: int
    mean_z: np.ndarray
    var_z_given_w: np.ndarray
    mean_x: np.ndarray | None
    var_x_given_w: np.ndarray | None


@dataclass(frozen=True)
class EvsRow:
    """One validation study's analysis outcome.

    Either ``rc`` and ``transport`` are populated, or ``error`` holds the
    failure message for this source.  ``relative_bias_pct`` is the percent
    difference of this estimate from the reference estimate (see
    AnalysisReport.reference_label); None for the reference row itself and
    whenever p > 1.
    """

    label: str
    rc: RcEstimate | None
    transport: TransportReport | None
    relative_bias_pct: float | None
    error: str | None


@dataclass(frozen=True)
class AnalysisReport:
    """Full output of :func:`analyze`.

    ``characteristics`` has the main study first, then one row per
    validation study that could be summarized.  ``evs_rows`` has one
    entry per requested validation source, failures included inline.

    Relative bias convention: the first successfully corrected estimate
    is treated as the reference value, and the other rows (including the
    naive row) are reported relative to it.  This mirrors the common
    practice of trusting the estimate from the most transportable
    validation source; it is a reporting convention, not an oracle.
    """

    characteristics: tuple[StudyCharacteristics, ...]
    evs_rows: tuple[EvsRow, ...]
    naive_beta1: np.ndarray
    naive_se: np.ndarray
    naive_ci: np.ndarray
    naive_relative_bias_pct: float | None
    ci_level: float
    reference_label: str | None


def analyze(
    main: Dataset,
    evs_list: Sequence[Dataset],
    family: Family | str,
    ci_level: float = 0.95,
    ratio_threshold: float = 0.2,
    labels: Sequence[str] | None = None,
    n_boot: int = 500,
    seed: int | None = None,
) -> AnalysisReport:
    """Run the full correction workflow against one or more validation
    studies.

    One naive fit is shared; each validation study contributes a
    corrected estimate and a transport diagnostic.  A failure in one
    validation source is reported in its row without aborting the others.
    """
    evs_list = list(evs_list)
    if not evs_list:
        raise ValueError("at least one validation study is required")
    if labels is None:
        labels = [f"evs{i + 1}" for i in range(len(evs_list))]
    elif len(labels) != len(evs_list):
        raise ValueError("labels must match evs_list in length")

    validate_dataset(main)
    naive = fit_naive(main, family)
    p = main.p
    beta1_naive = np.asarray(naive.coefficients[1 : 1 + p], dtype=float)
    se_naive = np.sqrt(np.diag(naive.coef_covariance))[1 : 1 + p]
    z = stats.norm.ppf(0.5 + ci_level / 2.0)
    naive_ci = np.column_stack([beta1_naive - z * se_naive, beta1_naive + z * se_naive])

    characteristics = [
        StudyCharacteristics(
            label="main",
            n=main.n,
            mean_z=main.z.mean(axis=0),
            var_z_given_w=conditional_variance(main.z, main.w),
            mean_x=None,
            var_x_given_w=None,
        )
    ]

    rng = np.random.default_rng(seed)
    rows: list[EvsRow] = []
    for label, evs in zip(labels, evs_list):
        try:
            validate_dataset(evs)
            if evs.p != p or evs.q != main.q:
                raise DimensionMismatchError(
                    f"{label} disagrees with the main study on p or q"
                )
            mem = fit_mem(evs)
            rc = rc_correct(
                naive,
                mem,
                ci_level,
                main=main,
                evs=evs,
                n_boot=n_boot,
                rng=rng,
            )
            transport = transport_diagnostic(main, evs, ratio_threshold)
            characteristics.append(
                StudyCharacteristics(
                    label=label,
                    n=evs.n,
                    mean_z=evs.z.mean(axis=0),
                    var_z_given_w=transport.var_z_given_w_evs,
                    mean_x=evs.x.mean(axis=0),
                    var_x_given_w=conditional_variance(evs.x, evs.w),
                )
            )
            rows.append(EvsRow(label=label, rc=rc, transport=transport,
                               relative_bias_pct=None, error=None))
        except (RegcalError, np.linalg.LinAlgError) as exc:
            rows.append(
                EvsRow(
                    label=label,
                    rc=None,
                    transport=None,
                    relative_bias_pct=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )

    reference_label = None
    naive_bias = None
    if p == 1:
        reference = next((r for r in rows if r.rc is not None), None)
        if reference is not None:
            reference_label = reference.label
            ref_value = reference.rc.beta1_rc[0]
            if ref_value != 0.0:
                naive_bias = float((beta1_naive[0] - ref_value) / ref_value * 100.0)
                rows = [
                    replace(
                        row,
                        relative_bias_pct=(
                            None
                            if row.rc is None or row.label == reference_label
                            else float(
                                (row.rc.beta1_rc[0] - ref_value) / ref_value * 100.0
                            )
                        ),
                    )
                    for row in rows
                ]

    return AnalysisReport(
        characteristics=tuple(characteristics),
        evs_rows=tuple(rows),
        naive_beta1=beta1_naive,
        naive_se=se_naive,
        naive_ci=naive_ci,
        naive_relative_bias_pct=naive_bias,
        ci_level=ci_level,
        reference_label=reference_label,
    )
