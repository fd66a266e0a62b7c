"""Measurement-error correction for regression coefficients using
external validation studies.

The package covers the full workflow: simulate studies whose surrogate
exposure carries both reference-measurement and surrogate error, fit the
naive outcome model and the measurement model, rescale the naive
coefficient by the fitted calibration matrix, diagnose whether the
measurement model transports between studies, and study the asymptotic
bias of both estimators in closed form.
"""

from .asymptotics import (
    BoundRegion,
    ConditionReport,
    OracleReport,
    ScalarSetting,
    TransformPair,
    bias_curve,
    bias_curve_csv,
    check_conditions,
    gamma1_closed_form,
    naive_relative_bias,
    optimal_transform,
    optimality_oracle,
    rc_bias_bound_region,
    rc_plim_factor,
    rc_relative_bias,
    transform_objective,
)
from .calibrator import RegressionCalibrator
from .errors import (
    CsvSchemaError,
    DegenerateTransformError,
    DimensionMismatchError,
    EmptyDatasetError,
    FamilyMismatchError,
    GammaRequiresScalarError,
    InsufficientRowsError,
    MissingColumnError,
    NonFiniteValueError,
    NotConvergedError,
    NotPositiveDefiniteError,
    NoVariationInResponseError,
    RankDeficientDesignError,
    RegcalError,
    RoleColumnConflictError,
    SeparationError,
    SingularC1Error,
    SingularGamma1Error,
    SingularInputError,
    TooManyFailuresError,
    WrongRoleError,
)
from .estimators import (
    AnalysisReport,
    EvsRow,
    MemFit,
    RcEstimate,
    RcWarning,
    StudyCharacteristics,
    TransportFlag,
    TransportReport,
    analyze,
    fit_mem,
    fit_naive,
    rc_correct,
    transport_diagnostic,
)
from .glm import FitResult, conditional_variance, fit_logistic, fit_ols
from .params import (
    Dataset,
    Dims,
    ErrorModel,
    ExposureModel,
    ExposureShape,
    Family,
    LinearFamily,
    LogisticFamily,
    OutcomeParams,
    Role,
    StudyParams,
    as_family,
    validate_dataset,
    validate_params,
)
from .simulation import (
    MethodRow,
    ScenarioConfig,
    SimulationSummary,
    builtin_case_params,
    generate_study,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # parameters and data
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
    # model fitting
    "FitResult",
    "fit_ols",
    "fit_logistic",
    "conditional_variance",
    # estimation workflow
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
    "RegressionCalibrator",
    # asymptotics
    "ScalarSetting",
    "ConditionReport",
    "BoundRegion",
    "TransformPair",
    "OracleReport",
    "gamma1_closed_form",
    "rc_plim_factor",
    "naive_relative_bias",
    "rc_relative_bias",
    "check_conditions",
    "rc_bias_bound_region",
    "bias_curve",
    "bias_curve_csv",
    "optimal_transform",
    "transform_objective",
    "optimality_oracle",
    # simulation
    "ScenarioConfig",
    "MethodRow",
    "SimulationSummary",
    "builtin_case_params",
    "generate_study",
    "run_scenario",
    # errors
    "RegcalError",
    "DimensionMismatchError",
    "NotPositiveDefiniteError",
    "SingularC1Error",
    "GammaRequiresScalarError",
    "MissingColumnError",
    "RoleColumnConflictError",
    "NonFiniteValueError",
    "EmptyDatasetError",
    "RankDeficientDesignError",
    "InsufficientRowsError",
    "SeparationError",
    "NoVariationInResponseError",
    "NotConvergedError",
    "WrongRoleError",
    "FamilyMismatchError",
    "SingularGamma1Error",
    "SingularInputError",
    "DegenerateTransformError",
    "TooManyFailuresError",
    "CsvSchemaError",
]
