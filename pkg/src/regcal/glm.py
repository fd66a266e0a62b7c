"""Fitting primitives: least squares, logistic regression, conditional
variance.

These are pure functions of their inputs with no shared state, so they can
be called concurrently.  They are deliberately minimal: no weights, no
regularization, no families beyond Gaussian and binomial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import (
    InsufficientRowsError,
    NoVariationInResponseError,
    NotConvergedError,
    RankDeficientDesignError,
    SeparationError,
)

__all__ = ["FitResult", "fit_ols", "fit_logistic", "conditional_variance"]

# Rank tolerance for the column-pivoted QR factorization, relative to the
# largest diagonal magnitude of R.
_RANK_RTOL = 1e-12

# Newton/IRLS controls for the logistic fit.
_IRLS_TOL = 1e-8
_IRLS_MAX_ITER = 50
# Separation rule: a standardized coefficient magnitude above this bound
# means the likelihood is drifting to the boundary.
_SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class FitResult:
    """Result of one regression fit.

    ``coefficients`` is ordered (intercept, exposure block, confounder
    block) for the fits produced by this package; shape (k,) for a single
    response or (k, m) for m response columns.  For a multi-response least
    squares fit, ``coef_covariance`` is the covariance of the column-
    stacked coefficient matrix, kron(residual covariance, (X'X)^-1).
    ``residual_variance`` is the unbiased residual (co)variance for least
    squares and None for logistic fits.  ``family`` tags which outcome
    family produced a naive fit ("linear" or "logistic"); it is None for
    raw design-matrix fits.
    """

    coefficients: np.ndarray
    coef_covariance: np.ndarray
    residual_variance: float | np.ndarray | None
    n_used: int
    converged: bool
    iterations: int
    family: str | None = None


def _as_design(design: np.ndarray) -> np.ndarray:
    arr = np.asarray(design, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"design must be 2-dimensional, got shape {arr.shape}")
    return arr


def _pivoted_qr(design: np.ndarray):
    """Economy QR with column pivoting plus a rank check."""
    q_mat, r_mat, perm = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    if diag.size == 0 or diag[0] == 0.0 or (diag <= _RANK_RTOL * diag[0]).any():
        raise RankDeficientDesignError("design matrix is rank deficient")
    return q_mat, r_mat, perm


def fit_ols(design: np.ndarray, response: np.ndarray) -> FitResult:
    """Ordinary least squares of one or more response columns on a design.

    Parameters
    ----------
    design : (n, k) array
        Full-column-rank design matrix, n > k.
    response : (n,) or (n, m) array
        One response vector or m response columns fit jointly.  The
        multi-response fit equals m independent single-response fits.

    Returns
    -------
    FitResult
        ``coefficients`` minimizes the residual sum of squares per column;
        ``residual_variance`` is the unbiased (n - k) residual variance
        (scalar) or covariance matrix (m, m); ``coef_covariance`` is the
        standard OLS coefficient covariance, for m > 1 in column-stacked
        kron form.
    """
    x = _as_design(design)
    y = np.asarray(response, dtype=float)
    single = y.ndim == 1
    y2 = y.reshape(-1, 1) if single else y
    if y2.ndim != 2 or y2.shape[0] != x.shape[0]:
        raise ValueError(
            f"response shape {y.shape} does not match design with {x.shape[0]} rows"
        )
    n, k = x.shape
    if n <= k:
        raise InsufficientRowsError(f"need more rows than coefficients: n={n}, k={k}")

    q_mat, r_mat, perm = _pivoted_qr(x)
    # one contiguous column at a time so a multi-response fit reproduces
    # independent single-response fits bit for bit
    columns = [np.ascontiguousarray(y2[:, j]) for j in range(y2.shape[1])]
    coef_perm = np.empty((k, len(columns)))
    for j, column in enumerate(columns):
        coef_perm[:, j] = scipy.linalg.solve_triangular(r_mat, q_mat.T @ column)
    coef = np.empty_like(coef_perm)
    coef[perm, :] = coef_perm
    resid_cols = [
        column - x @ np.ascontiguousarray(coef[:, j])
        for j, column in enumerate(columns)
    ]
    dof = n - k
    r_inv = scipy.linalg.solve_triangular(r_mat, np.eye(k))
    xtx_inv_perm = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(perm, perm)] = xtx_inv_perm

    if single:
        sigma2 = float(resid_cols[0] @ resid_cols[0]) / dof
        return FitResult(
            coefficients=coef[:, 0],
            coef_covariance=sigma2 * xtx_inv,
            residual_variance=sigma2,
            n_used=n,
            converged=True,
            iterations=0,
        )
    m = y2.shape[1]
    resid_cov = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            value = float(resid_cols[a] @ resid_cols[b]) / dof
            resid_cov[a, b] = value
            resid_cov[b, a] = value
    return FitResult(
        coefficients=coef,
        coef_covariance=np.kron(resid_cov, xtx_inv),
        residual_variance=resid_cov,
        n_used=n,
        converged=True,
        iterations=0,
    )


def fit_logistic(design: np.ndarray, response: np.ndarray) -> FitResult:
    """Maximum-likelihood logistic regression via Newton iterations.

    Parameters
    ----------
    design : (n, k) array
        Full-column-rank design matrix, n > k.
    response : (n,) array of 0.0 and 1.0
        Must contain both classes.

    Returns
    -------
    FitResult
        ``converged`` is True iff the max absolute score component fell
        below 1e-8; ``coef_covariance`` is the inverse observed
        information at the optimum; ``residual_variance`` is None.

    Raises
    ------
    SeparationError
        When coefficients drift past a standardized magnitude of 30 or
        the information matrix degenerates, both signs of separable
        classes.
    NotConvergedError
        After 50 iterations without meeting the score tolerance.
    """
    x = _as_design(design)
    y = np.asarray(response, dtype=float)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError(
            f"response shape {y.shape} does not match design with {x.shape[0]} rows"
        )
    values = np.unique(y)
    if not np.isin(values, (0.0, 1.0)).all():
        raise ValueError("logistic response must contain only 0 and 1")
    if values.size < 2:
        raise NoVariationInResponseError("response contains a single class")
    n, k = x.shape
    if n <= k:
        raise InsufficientRowsError(f"need more rows than coefficients: n={n}, k={k}")
    _pivoted_qr(x)

    col_scale = x.std(axis=0)
    col_scale[col_scale == 0.0] = 1.0

    beta = np.zeros(k)
    iterations = 0
    converged = False
    for _ in range(_IRLS_MAX_ITER + 1):
        mu = expit(x @ beta)
        score = x.T @ (y - mu)
        if np.abs(score).max() < _IRLS_TOL:
            converged = True
            break
        if iterations == _IRLS_MAX_ITER:
            break
        weights = mu * (1.0 - mu)
        info = x.T @ (x * weights[:, None])
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SeparationError(
                "information matrix is singular; classes appear separable"
            ) from exc
        beta = beta + step
        iterations += 1
        if (np.abs(beta) * col_scale > _SEPARATION_BOUND).any():
            raise SeparationError(
                "coefficients diverging; classes appear (quasi-)separable"
            )
    if not converged:
        raise NotConvergedError(
            f"logistic fit did not converge in {_IRLS_MAX_ITER} iterations"
        )

    mu = expit(x @ beta)
    weights = mu * (1.0 - mu)
    info = x.T @ (x * weights[:, None])
    coef_cov = scipy.linalg.inv(info)
    return FitResult(
        coefficients=beta,
        coef_covariance=coef_cov,
        residual_variance=None,
        n_used=n,
        converged=True,
        iterations=iterations,
    )


def conditional_variance(target: np.ndarray, conditioners: np.ndarray) -> np.ndarray:
    """Estimate Var(target | conditioners) by linear regression.

    Regresses each target column on (intercept, conditioners) and returns
    the unbiased residual covariance as a (p, p) matrix, the standard
    moment-based estimate of the conditional variance under a linear
    conditional mean.
    """
    t = np.asarray(target, dtype=float)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    c = np.asarray(conditioners, dtype=float)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    if t.shape[0] != c.shape[0]:
        raise ValueError("target and conditioners must have the same number of rows")
    design = np.column_stack([np.ones(c.shape[0]), c])
    result = fit_ols(design, t)
    return np.asarray(result.residual_variance, dtype=float)
