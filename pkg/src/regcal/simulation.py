"""Synthetic data generation and the Monte Carlo scenario engine.

Generative model, in row form for a sample of size n:

    W   ~ Normal(confounder_mean, confounder_sd^2), one column per
          confounder, independent entries
    x   = a0 + W A2 + eps_x         true exposure, Var(eps_x | W) = Sigma_x
    X   = x + eps_b                 reference measurement (validation only)
    Z   = c0 + x C1 + W C2 + eps    surrogate, Var(eps | x, W) = Sigma
    Y   | x, W per OutcomeParams    main study only

The exposure disturbance is either normal or a centered gamma with the
same variance; the centered-gamma option exists to demonstrate that only
Var(x | W) matters for the correction, not the shape of the exposure law.

Scenario presets: case 1 uses an identical validation study; case 2 keeps
Var(x | W) equal but changes the exposure shape (centered gamma) and the
confounder loading; cases 3 and 4 inflate the validation Var(x | W) by
factors 1.2 and 1.5, violating transportability.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import (
    NoVariationInResponseError,
    NotConvergedError,
    RankDeficientDesignError,
    SeparationError,
    SingularGamma1Error,
    TooManyFailuresError,
)
from .estimators import fit_mem, fit_naive, rc_correct
from .params import (
    Dataset,
    Dims,
    ErrorModel,
    ExposureModel,
    ExposureShape,
    LinearFamily,
    LogisticFamily,
    OutcomeParams,
    Role,
    StudyParams,
    validate_params,
)

__all__ = [
    "ScenarioConfig",
    "MethodRow",
    "SimulationSummary",
    "builtin_case_params",
    "generate_study",
    "run_scenario",
]

_FAMILIES = {
    "continuous": "continuous",
    "linear": "continuous",
    "gaussian": "continuous",
    "binary": "binary",
    "logistic": "binary",
    "binomial": "binary",
}

# A replication is abandoned (not retried) when estimation fails for one
# of these numerical reasons; the scenario fails only if too many do.
_REP_FAILURES = (
    NotConvergedError,
    SeparationError,
    NoVariationInResponseError,
    SingularGamma1Error,
    RankDeficientDesignError,
)

_MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo scenario.

    ``family`` is "continuous" or "binary" (synonyms linear/logistic are
    accepted and canonicalized).  ``case`` selects a built-in
    parameterization (1..4); ``main_params``/``evs_params`` replace the
    built-in studies wholesale when given.
    """

    family: str
    case: int
    n_main: int = 10_000
    n_evs: int = 500
    reps: int = 1000
    master_seed: int = 0
    main_params: StudyParams | None = None
    evs_params: StudyParams | None = None

    def __post_init__(self) -> None:
        key = str(self.family).strip().lower()
        if key not in _FAMILIES:
            raise ValueError(f"unknown outcome family: {self.family!r}")
        object.__setattr__(self, "family", _FAMILIES[key])
        if isinstance(self.case, bool) or not isinstance(self.case, int):
            raise TypeError("case must be an integer")
        if self.case not in (1, 2, 3, 4):
            raise ValueError("case must be 1, 2, 3, or 4")
        for name in ("n_main", "n_evs", "reps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(f"{name} must be an integer")
            if value < 1:
                raise ValueError(f"{name} must be positive")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int):
            raise TypeError("master_seed must be an integer")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")


@dataclass(frozen=True)
class MethodRow:
    """Aggregate result for one estimation method.

    ``pe`` is the mean point estimate over completed replications,
    ``bias_pct`` the relative bias (pe - truth)/truth in percent,
    ``mc_se`` the Monte Carlo standard error of pe, and ``emp_sd`` the
    empirical standard deviation of the replication estimates.
    """

    method: str
    pe: float
    bias_pct: float
    mc_se: float
    emp_sd: float


def _json_number(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


@dataclass(frozen=True)
class SimulationSummary:
    """Scenario output: corrected row first, naive row second."""

    family: str
    case: int
    n_main: int
    n_evs: int
    reps: int
    master_seed: int
    true_beta1: float
    rows: tuple[MethodRow, ...]
    reps_completed: int
    reps_failed: int

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "family": self.family,
            "case": self.case,
            "n_main": self.n_main,
            "n_evs": self.n_evs,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "true_beta1": self.true_beta1,
            "reps_completed": self.reps_completed,
            "reps_failed": self.reps_failed,
            "rows": [
                {
                    "method": row.method,
                    "pe": _json_number(row.pe),
                    "bias_pct": _json_number(row.bias_pct),
                    "mc_se": _json_number(row.mc_se),
                    "emp_sd": _json_number(row.emp_sd),
                }
                for row in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv_text(self) -> str:
        lines = ["method,pe,bias_pct"]
        for row in self.rows:
            lines.append(f"{row.method},{float(row.pe)!r},{float(row.bias_pct)!r}")
        return "\n".join(lines) + "\n"


def builtin_case_params(family: str, case: int) -> tuple[StudyParams, StudyParams]:
    """Built-in study parameterizations for the four scenario cases.

    Shared values: the confounder is N(1, 1); the true exposure has
    intercept 0, confounder loading 0.1, and Var(x | W) = 1 in the main
    study; the surrogate has intercept 1, exposure loading 1, confounder
    loading 0.5; the reference-measurement error variance is 0.01.  The
    surrogate noise variance is 1.44 for the continuous outcome and 0.36
    for the binary outcome.  Outcome coefficients: -5, 1.0, 0.5.
    """
    key = str(family).strip().lower()
    if key not in _FAMILIES:
        raise ValueError(f"unknown outcome family: {family!r}")
    family = _FAMILIES[key]
    if case not in (1, 2, 3, 4):
        raise ValueError("case must be 1, 2, 3, or 4")

    dims = Dims(p=1, q=1)
    sigma2 = 1.44 if family == "continuous" else 0.36
    error = ErrorModel(
        c0=[1.0],
        C1=[[1.0]],
        C2=[[0.5]],
        Sigma=[[sigma2]],
        Sigma_b=[[0.01]],
    )
    outcome_family = LinearFamily(residual_sd=1.0) if family == "continuous" else LogisticFamily()
    outcome = OutcomeParams(beta0=-5.0, beta1=[1.0], beta2=[0.5], family=outcome_family)
    main_exposure = ExposureModel(
        a0=[0.0], A2=[[0.1]], Sigma_x=[[1.0]], shape=ExposureShape.NORMAL
    )
    main = StudyParams(
        dims=dims,
        exposure=main_exposure,
        error=error,
        confounder_mean=1.0,
        confounder_sd=1.0,
        outcome=outcome,
    )

    if case == 1:
        evs_exposure = main_exposure
    elif case == 2:
        evs_exposure = ExposureModel(
            a0=[0.0],
            A2=[[0.12]],
            Sigma_x=[[1.0]],
            shape=ExposureShape.CENTERED_GAMMA,
        )
    elif case == 3:
        evs_exposure = ExposureModel(
            a0=[0.0], A2=[[0.1]], Sigma_x=[[1.2]], shape=ExposureShape.NORMAL
        )
    else:
        evs_exposure = ExposureModel(
            a0=[0.0], A2=[[0.1]], Sigma_x=[[1.5]], shape=ExposureShape.NORMAL
        )

    evs = StudyParams(
        dims=dims,
        exposure=evs_exposure,
        error=error,
        confounder_mean=1.0,
        confounder_sd=1.0,
        outcome=None,
    )
    return main, evs


def _psd_factor(m: np.ndarray) -> np.ndarray:
    """Factor F with F F' = m for a positive-semidefinite matrix."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh((m + m.T) / 2.0)
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def generate_study(
    params: StudyParams, n: int, rng: np.random.Generator
) -> Dataset:
    """Draw one study of size n from the generative model.

    Main studies (outcome present) carry (Y, Z, W); validation studies
    carry (X, Z, W).  The true exposure is used internally and never
    emitted.  Draw order is fixed (W, exposure disturbance, reference
    error if applicable, surrogate noise, outcome) so that a given
    generator state always produces the same dataset.
    """
    validate_params(params)
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise TypeError("n must be an integer")
    if n < 0:
        raise ValueError("n must be nonnegative")
    n = int(n)
    p, q = params.dims.p, params.dims.q
    exposure, error = params.exposure, params.error

    w = params.confounder_mean + params.confounder_sd * rng.standard_normal((n, q))
    x_mean = exposure.a0 + w @ exposure.A2
    if exposure.shape is ExposureShape.CENTERED_GAMMA:
        shape = float(exposure.Sigma_x[0, 0])
        eps_x = rng.gamma(shape=shape, scale=1.0, size=(n, 1)) - shape
    else:
        eps_x = rng.standard_normal((n, p)) @ _psd_factor(exposure.Sigma_x).T
    x_true = x_mean + eps_x

    is_main = params.outcome is not None
    x_ref = None
    if not is_main:
        eps_b = rng.standard_normal((n, p)) @ _psd_factor(error.Sigma_b).T
        x_ref = x_true + eps_b

    eps_z = rng.standard_normal((n, p)) @ _psd_factor(error.Sigma).T
    z = error.c0 + x_true @ error.C1 + w @ error.C2 + eps_z

    if is_main:
        outcome = params.outcome
        eta = outcome.beta0 + x_true @ outcome.beta1 + w @ outcome.beta2
        if isinstance(outcome.family, LogisticFamily):
            y = (rng.random(n) < expit(eta)).astype(float)
        else:
            y = eta + outcome.family.residual_sd * rng.standard_normal(n)
        return Dataset(z=z, w=w, role=Role.MAIN, y=y)
    return Dataset(z=z, w=w, role=Role.EVS, x=x_ref)


def _replication(
    config: ScenarioConfig,
    main_params: StudyParams,
    evs_params: StudyParams,
    family: str,
) -> Callable[[int], tuple[float, float] | None]:
    def run(r: int) -> tuple[float, float] | None:
        rng = np.random.default_rng(
            np.random.SeedSequence(config.master_seed, spawn_key=(r,))
        )
        main = generate_study(main_params, config.n_main, rng)
        evs = generate_study(evs_params, config.n_evs, rng)
        try:
            naive = fit_naive(main, family)
            mem = fit_mem(evs)
            rc = rc_correct(naive, mem)
        except _REP_FAILURES:
            return None
        return float(rc.beta1_rc[0]), float(rc.beta1_naive[0])

    return run


def _method_row(method: str, values: np.ndarray, truth: float) -> MethodRow:
    pe = float(values.mean())
    emp_sd = float(values.std(ddof=1)) if values.size > 1 else math.nan
    mc_se = emp_sd / math.sqrt(values.size) if values.size > 1 else math.nan
    return MethodRow(
        method=method,
        pe=pe,
        bias_pct=(pe - truth) / truth * 100.0,
        mc_se=mc_se,
        emp_sd=emp_sd,
    )


def run_scenario(config: ScenarioConfig, threads: int = 1) -> SimulationSummary:
    """Run the Monte Carlo scenario and aggregate both estimators.

    Each replication draws a fresh main and validation study from an
    independent, replication-indexed substream of the master seed, so
    results are identical for any thread count.  Replications that fail
    numerically (non-convergence, separation, degenerate designs) are
    dropped and counted; more than 5 percent of them failing aborts the
    scenario.
    """
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ValueError("threads must be a positive integer")
    main_params, evs_params = builtin_case_params(config.family, config.case)
    if config.main_params is not None:
        main_params = config.main_params
    if config.evs_params is not None:
        evs_params = config.evs_params
    validate_params(main_params)
    validate_params(evs_params)
    if main_params.dims.p != 1 or evs_params.dims.p != 1:
        raise ValueError("scenario aggregation requires a scalar exposure")
    if main_params.outcome is None:
        raise ValueError("main study parameters must include an outcome model")
    family = "linear" if config.family == "continuous" else "logistic"
    truth = float(main_params.outcome.beta1[0])
    if truth == 0.0:
        raise ValueError("relative bias is undefined when true beta1 is zero")

    run = _replication(config, main_params, evs_params, family)
    if threads == 1:
        results = [run(r) for r in range(config.reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(config.reps)))

    completed = [r for r in results if r is not None]
    reps_failed = config.reps - len(completed)
    if reps_failed > _MAX_FAILURE_FRACTION * config.reps:
        raise TooManyFailuresError(
            f"{reps_failed} of {config.reps} replications failed"
        )
    values = np.array(completed, dtype=float)
    return SimulationSummary(
        family=config.family,
        case=config.case,
        n_main=config.n_main,
        n_evs=config.n_evs,
        reps=config.reps,
        master_seed=config.master_seed,
        true_beta1=truth,
        rows=(
            _method_row("RC", values[:, 0], truth),
            _method_row("Naive", values[:, 1], truth),
        ),
        reps_completed=len(completed),
        reps_failed=reps_failed,
    )
