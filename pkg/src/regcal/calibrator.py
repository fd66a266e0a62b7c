"""Estimator-style facade over the correction workflow.

RegressionCalibrator wraps :func:`regcal.estimators.analyze` in the
familiar configure-then-fit pattern: constructor arguments are stored
verbatim as hyperparameters (so get_params/set_params and clone work),
``fit`` runs the analysis, and fitted attributes carry trailing
underscores.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .estimators import AnalysisReport, analyze
from .params import Dataset

__all__ = ["RegressionCalibrator"]


class RegressionCalibrator(BaseEstimator):
    """Measurement-error correction using external validation studies.

    Parameters
    ----------
    family : str, default "linear"
        Outcome model family, "linear" or "logistic".
    ci_level : float, default 0.95
        Confidence level for reported intervals.
    ratio_threshold : float, default 0.2
        Tolerated deviation of the validation/main conditional-variance
        ratio from 1 before a validation source is flagged.
    n_boot : int, default 500
        Bootstrap replications for multi-exposure standard errors.
    random_state : int or None, default None
        Seed for the bootstrap resampling.

    Attributes
    ----------
    report_ : AnalysisReport
        Full analysis output.
    naive_beta1_ : ndarray
        Uncorrected exposure coefficient(s).
    beta1_rc_ : ndarray or None
        Corrected coefficient(s) from the first validation source that
        produced an estimate, None if every source failed.
    results_ : tuple of EvsRow
        Per-validation-source outcomes, failures included.
    """

    def __init__(
        self,
        family: str = "linear",
        ci_level: float = 0.95,
        ratio_threshold: float = 0.2,
        n_boot: int = 500,
        random_state: int | None = None,
    ) -> None:
        self.family = family
        self.ci_level = ci_level
        self.ratio_threshold = ratio_threshold
        self.n_boot = n_boot
        self.random_state = random_state

    def fit(
        self,
        main: Dataset,
        evs: Dataset | Sequence[Dataset],
        labels: Sequence[str] | None = None,
    ) -> "RegressionCalibrator":
        """Run the correction against one or more validation studies."""
        evs_list = [evs] if isinstance(evs, Dataset) else list(evs)
        report = analyze(
            main,
            evs_list,
            family=self.family,
            ci_level=self.ci_level,
            ratio_threshold=self.ratio_threshold,
            labels=labels,
            n_boot=self.n_boot,
            seed=self.random_state,
        )
        self.report_: AnalysisReport = report
        self.naive_beta1_ = report.naive_beta1
        self.results_ = report.evs_rows
        first = next((row.rc for row in report.evs_rows if row.rc is not None), None)
        self.beta1_rc_ = None if first is None else first.beta1_rc
        return self

    def summary(self) -> AnalysisReport:
        """Return the fitted analysis report."""
        if not hasattr(self, "report_"):
            raise NotFittedError(
                "this RegressionCalibrator instance is not fitted yet; "
                "call fit with a main study and validation data first"
            )
        return self.report_
