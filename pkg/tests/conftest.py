"""Shared helpers for the regcal test suite."""

from __future__ import annotations

import numpy as np

import regcal


def make_pair(family, case, n_main, n_evs, seed):
    """Generate one main study and one validation study for a built-in case."""
    main_params, evs_params = regcal.builtin_case_params(family, case)
    rng = np.random.default_rng(seed)
    main = regcal.generate_study(main_params, n_main, rng)
    evs = regcal.generate_study(evs_params, n_evs, rng)
    return main, evs


def scalar_study_params(c1, sigma2, sigma_x2, *, sigma_b2=0.01, beta1=1.0):
    """Hand-built p=1, q=1 parameter pair with a scalar error model.

    The main study and the validation study share the surrogate model; the
    validation study reuses the same exposure law, so the pair is
    transportable by construction.
    """
    dims = regcal.Dims(p=1, q=1)
    error = regcal.ErrorModel(
        c0=[0.5],
        C1=[[float(c1)]],
        C2=[[0.4]],
        Sigma=[[float(sigma2)]],
        Sigma_b=[[float(sigma_b2)]],
    )
    exposure = regcal.ExposureModel(
        a0=[0.0], A2=[[0.1]], Sigma_x=[[float(sigma_x2)]]
    )
    outcome = regcal.OutcomeParams(
        beta0=-1.0, beta1=[float(beta1)], beta2=[0.5], family=regcal.LinearFamily()
    )
    main_params = regcal.StudyParams(
        dims=dims,
        exposure=exposure,
        error=error,
        confounder_mean=[1.0],
        confounder_sd=[1.0],
        outcome=outcome,
    )
    evs_params = regcal.StudyParams(
        dims=dims,
        exposure=exposure,
        error=error,
        confounder_mean=[1.0],
        confounder_sd=[1.0],
    )
    return main_params, evs_params


def bivariate_params(sigma_x_evs=None):
    """Hand-built p=2, q=1 parameter pair for exercising the matrix paths."""
    dims = regcal.Dims(p=2, q=1)
    error = regcal.ErrorModel(
        c0=[0.5, -0.2],
        C1=[[1.0, 0.2], [0.0, 0.9]],
        C2=[[0.4, 0.1]],
        Sigma=[[1.0, 0.3], [0.3, 1.5]],
        Sigma_b=[[0.01, 0.0], [0.0, 0.01]],
    )
    exposure_main = regcal.ExposureModel(
        a0=[0.0, 0.1], A2=[[0.1, 0.05]], Sigma_x=[[1.0, 0.2], [0.2, 0.8]]
    )
    if sigma_x_evs is None:
        sigma_x_evs = [[1.3, 0.1], [0.1, 1.1]]
    exposure_evs = regcal.ExposureModel(
        a0=[0.0, 0.1], A2=[[0.1, 0.05]], Sigma_x=sigma_x_evs
    )
    outcome = regcal.OutcomeParams(
        beta0=-1.0, beta1=[1.0, -0.5], beta2=[0.5], family=regcal.LinearFamily()
    )
    main_params = regcal.StudyParams(
        dims=dims,
        exposure=exposure_main,
        error=error,
        confounder_mean=[1.0],
        confounder_sd=[1.0],
        outcome=outcome,
    )
    evs_params = regcal.StudyParams(
        dims=dims,
        exposure=exposure_evs,
        error=error,
        confounder_mean=[1.0],
        confounder_sd=[1.0],
    )
    return main_params, evs_params
