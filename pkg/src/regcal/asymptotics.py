"""Closed-form large-sample behavior of the naive and corrected estimators.

Everything here is analytic: probability limits, relative-bias formulas in
the scalar setting, the tabulated conditions under which the naive
estimator has smaller asymptotic bias than the corrected one, bound
regions for the corrected estimator's bias, bias curves for plotting, and
a brute-force grid oracle confirming the optimality of the closed-form
calibration transform.

Scalar notation used throughout the docstrings: c1 is the surrogate's
loading on the true exposure, sigma2 = Var(Z | x, W) is the surrogate
noise, sigma_m2 = Var(x | W) in the main study, sigma_v2 = Var(x | W) in
the validation study.  With D = c1^2/sigma2 + 1/sigma_m2:

    naive relative bias = (c1/sigma2 - c1^2/sigma2 - 1/sigma_m2) / D
    rc    relative bias = (1/sigma_v2 - 1/sigma_m2) / D

The corrected estimator is exactly unbiased in the limit when
sigma_v2 = sigma_m2 (transportability) while the naive one is not, except
on measure-zero parameter sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateTransformError,
    DimensionMismatchError,
    NonFiniteValueError,
    SingularInputError,
)

__all__ = [
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
]

_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class ScalarSetting:
    """One-dimensional parameter point for the bias formulas.

    c1 may be any real number, including zero (the naive estimator then
    has relative bias exactly -1, and correction is impossible in
    estimation because the calibration factor vanishes).
    """

    c1: float
    sigma2: float
    sigma_m2: float
    sigma_v2: float

    def __post_init__(self) -> None:
        for name in ("c1", "sigma2", "sigma_m2", "sigma_v2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{name} must be a real number")
            if not math.isfinite(value):
                raise NonFiniteValueError(f"{name} must be finite")
            object.__setattr__(self, name, float(value))
        for name in ("sigma2", "sigma_m2", "sigma_v2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def _square_matrix(name: str, value: np.ndarray | float) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be a square matrix")
    if not np.isfinite(m).all():
        raise NonFiniteValueError(f"{name} contains non-finite values")
    return m


def _check_same_shape(p: int, **named: np.ndarray) -> None:
    for name, m in named.items():
        if m.shape != (p, p):
            raise DimensionMismatchError(
                f"{name} has shape {m.shape}, expected ({p}, {p})"
            )


def _spd_inverse(name: str, m: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor((m + m.T) / 2.0)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInputError(f"{name} is not positive-definite") from exc
    return scipy.linalg.cho_solve(factor, np.eye(m.shape[0]))


def _check_invertible(name: str, m: np.ndarray) -> None:
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= _SINGULAR_RTOL * sv[0]:
        raise SingularInputError(f"{name} is singular or nearly singular")


def gamma1_closed_form(
    C1: np.ndarray | float,
    Sigma: np.ndarray | float,
    Sigma_x: np.ndarray | float,
) -> np.ndarray:
    """Population calibration matrix for a study with Var(x | W) = Sigma_x.

    Returns (Sigma^-1 C1') (C1 Sigma^-1 C1' + Sigma_x^-1)^-1, the matrix
    the measurement-model fit converges to.  In the scalar case this is
    the familiar attenuation factor
    (c1/sigma2) / (c1^2/sigma2 + 1/sigma_x2).
    """
    c1 = _square_matrix("C1", C1)
    sigma = _square_matrix("Sigma", Sigma)
    sigma_x = _square_matrix("Sigma_x", Sigma_x)
    p = c1.shape[0]
    _check_same_shape(p, Sigma=sigma, Sigma_x=sigma_x)
    _check_invertible("C1", c1)
    try:
        factor = scipy.linalg.cho_factor((sigma + sigma.T) / 2.0)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInputError("Sigma is not positive-definite") from exc
    left = scipy.linalg.cho_solve(factor, c1.T)
    inner = c1 @ left + _spd_inverse("Sigma_x", sigma_x)
    inner = (inner + inner.T) / 2.0
    try:
        return scipy.linalg.solve(inner.T, left.T, assume_a="pos").T
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularInputError("calibration system is singular") from exc


def rc_plim_factor(
    C1: np.ndarray | float,
    Sigma: np.ndarray | float,
    Sigma_m: np.ndarray | float,
    Sigma_v: np.ndarray | float,
) -> np.ndarray:
    """Factor M such that the corrected estimator converges to M beta1.

    M = (C1 Sigma^-1 C1' + Sigma_v^-1)(C1 Sigma^-1 C1' + Sigma_m^-1)^-1.
    Equal conditional exposure variances (Sigma_v = Sigma_m) give the
    identity: the corrected estimator is then asymptotically unbiased.
    """
    c1 = _square_matrix("C1", C1)
    sigma = _square_matrix("Sigma", Sigma)
    sigma_m = _square_matrix("Sigma_m", Sigma_m)
    sigma_v = _square_matrix("Sigma_v", Sigma_v)
    p = c1.shape[0]
    _check_same_shape(p, Sigma=sigma, Sigma_m=sigma_m, Sigma_v=sigma_v)
    _check_invertible("C1", c1)
    try:
        factor = scipy.linalg.cho_factor((sigma + sigma.T) / 2.0)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInputError("Sigma is not positive-definite") from exc
    core = c1 @ scipy.linalg.cho_solve(factor, c1.T)
    core = (core + core.T) / 2.0
    numerator = core + _spd_inverse("Sigma_v", sigma_v)
    denominator = core + _spd_inverse("Sigma_m", sigma_m)
    denominator = (denominator + denominator.T) / 2.0
    try:
        return scipy.linalg.solve(denominator.T, numerator.T, assume_a="pos").T
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularInputError("plim system is singular") from exc


def naive_relative_bias(s: ScalarSetting) -> float:
    """Asymptotic relative bias of the uncorrected surrogate coefficient.

    Independent of sigma_v2: the validation study plays no role in the
    naive fit.  Zero exactly when c1 - c1^2 = sigma2/sigma_m2, e.g. the
    point c1 = 0.5, sigma2 = sigma_m2/4.
    """
    d = s.c1**2 / s.sigma2 + 1.0 / s.sigma_m2
    return (s.c1 / s.sigma2 - s.c1**2 / s.sigma2 - 1.0 / s.sigma_m2) / d


def rc_relative_bias(s: ScalarSetting) -> float:
    """Asymptotic relative bias of the corrected coefficient.

    Strictly decreasing in sigma_v2 and zero exactly at
    sigma_v2 = sigma_m2.
    """
    d = s.c1**2 / s.sigma2 + 1.0 / s.sigma_m2
    return (1.0 / s.sigma_v2 - 1.0 / s.sigma_m2) / d


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the tabulated naive-versus-corrected comparison.

    ``conditions_met`` holds the indices (1..6) of the tabulated
    conditions satisfied at this parameter point; ``naive_wins`` is the
    direct verdict |naive bias| < |rc bias|.  ``boundary`` is set when
    the point lies within tolerance of a measure-zero locus where the
    verdict or a condition's strict inequality could flip, in which case
    naive_wins is reported as computed but should not be trusted.
    ``notes`` carries structural remarks (zero c1, empty ranges, and
    verdicts the six tabulated conditions do not account for).
    """

    naive_bias: float
    rc_bias: float
    conditions_met: frozenset[int]
    naive_wins: bool
    boundary: bool
    notes: tuple[str, ...]


def check_conditions(s: ScalarSetting, tol: float = 1e-9) -> ConditionReport:
    """Evaluate the six tabulated naive-wins conditions literally.

    The two equality conditions (1 and 2) are tested within ``tol``; the
    strict-inequality conditions are tested exactly.  The tabulated list
    is not a complete description of the naive-wins region: it omits the
    regime 0 < c1 < 1, c1 - c1^2 < sigma2/sigma_m2, with sigma_v2 above
    sigma2/(c1 - c1^2), where the naive estimator also has strictly
    smaller bias.  When the direct comparison says the naive estimator
    wins but no condition fires (off boundary), a note records it.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    c1, s2, m2, v2 = s.c1, s.sigma2, s.sigma_m2, s.sigma_v2
    naive_bias = naive_relative_bias(s)
    rc_bias = rc_relative_bias(s)
    naive_wins = abs(naive_bias) < abs(rc_bias)

    quarter = m2 / 4.0
    disc = 1.0 - 4.0 * s2 / m2
    have_roots = disc > 0.0
    if have_roots:
        root = math.sqrt(disc)
        r_lo = (1.0 - root) / 2.0
        r_hi = (1.0 + root) / 2.0
    den34 = 2.0 * s2 + (c1**2 - c1) * m2
    thr34 = s2 * m2 / den34 if den34 > 0.0 else math.inf
    den5 = c1 - c1**2
    thr5 = s2 / den5 if den5 > 0.0 else math.inf

    met: set[int] = set()
    if abs(c1 - 0.5) <= tol and abs(s2 - quarter) <= tol:
        met.add(1)
    if have_roots and s2 < quarter and min(abs(c1 - r_lo), abs(c1 - r_hi)) <= tol:
        met.add(2)
    if s2 > quarter and v2 < min(m2, thr34):
        met.add(3)
    if have_roots and (c1 < r_lo or c1 > r_hi) and s2 < quarter and v2 < min(m2, thr34):
        met.add(4)
    if have_roots and r_lo < c1 < r_hi and s2 < quarter and v2 < min(m2, thr5):
        met.add(5)
    if (
        have_roots
        and r_lo < c1 < r_hi
        and den5 * m2 / 2.0 < s2 < quarter
        and v2 > max(m2, thr34)
    ):
        met.add(6)

    loci = [
        abs(abs(naive_bias) - abs(rc_bias)),
        abs(s2 - quarter),
        abs(v2 - m2),
    ]
    if have_roots:
        loci.append(min(abs(c1 - r_lo), abs(c1 - r_hi)))
    if math.isfinite(thr34):
        loci.append(abs(v2 - thr34))
    if math.isfinite(thr5):
        loci.append(abs(v2 - thr5))
    if den5 > 0.0:
        loci.append(abs(s2 - den5 * m2 / 2.0))
    boundary = min(loci) <= tol

    notes: list[str] = []
    if abs(c1) <= tol:
        notes.append(
            "c1 is zero: the naive relative bias is -1 and the corrected "
            "estimator is undefined in estimation (calibration factor vanishes)"
        )
    if den5 * m2 / 2.0 >= quarter:
        notes.append("condition 6 admits no sigma2: its interval is empty here")
    if naive_wins and not met and not boundary:
        notes.append(
            "naive estimator wins outside the six tabulated conditions "
            "(large validation-variance regime with c1 - c1^2 < sigma2/sigma_m2)"
        )

    return ConditionReport(
        naive_bias=naive_bias,
        rc_bias=rc_bias,
        conditions_met=frozenset(met),
        naive_wins=naive_wins,
        boundary=boundary,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class BoundRegion:
    """Set of sigma_v2 values where |rc relative bias| <= r.

    The region is a single interval containing sigma_m2 (where the bias
    is exactly zero).  ``lower`` is always finite; ``upper`` is
    ``math.inf`` when r reaches the feasibility gate
    sigma2/(c1^2 sigma_m2 + sigma2), the supremum of |bias| on the
    large-sigma_v2 side.  ``intervals`` restates the region as (low,
    high) pairs for serialization.
    """

    r: float
    lower: float
    upper: float
    gate: float
    intervals: tuple[tuple[float, float], ...]
    notes: tuple[str, ...]

    def contains(self, sigma_v2: float) -> bool:
        return any(lo <= sigma_v2 <= hi for lo, hi in self.intervals)


def rc_bias_bound_region(
    c1: float, sigma2: float, sigma_m2: float, r: float
) -> BoundRegion:
    """Solve |rc relative bias| <= r for sigma_v2.

    The bias decreases strictly from +inf (sigma_v2 -> 0) through zero at
    sigma_m2 toward the negative limit -sigma2/(c1^2 sigma_m2 + sigma2),
    so the solution set is one interval: lower endpoint
    sigma2*sigma_m2/(sigma2 + r*A) with A = c1^2 sigma_m2 + sigma2
    (bias exactly +r there), and upper endpoint
    sigma2*sigma_m2/(sigma2 - r*A) (bias exactly -r) when r is below the
    gate sigma2/A, otherwise unbounded.  r = 0 collapses the region to
    the single point sigma_m2.
    """
    if sigma2 <= 0 or sigma_m2 <= 0:
        raise ValueError("sigma2 and sigma_m2 must be positive")
    if r < 0:
        raise ValueError("r must be nonnegative")
    a = c1**2 * sigma_m2 + sigma2
    gate = sigma2 / a
    lower = sigma2 * sigma_m2 / (sigma2 + r * a)
    notes: list[str] = []
    if r < gate:
        upper = sigma2 * sigma_m2 / (sigma2 - r * a)
    else:
        upper = math.inf
        notes.append(
            "r meets or exceeds the large-sigma_v2 bias supremum "
            "sigma2/(c1^2*sigma_m2 + sigma2); the region is unbounded above"
        )
    if r == 0.0:
        notes.append("r = 0: the region is the single point sigma_v2 = sigma_m2")
    return BoundRegion(
        r=float(r),
        lower=float(lower),
        upper=float(upper),
        gate=float(gate),
        intervals=((float(lower), float(upper)),),
        notes=tuple(notes),
    )


def bias_curve(
    c1: float,
    sigma2: float,
    sigma_m2: float,
    sigma_v2_grid: np.ndarray,
) -> np.ndarray:
    """Tabulate both relative biases along a grid of sigma_v2 values.

    Returns an array with rows (sigma_v2, naive_bias, rc_bias).  The
    naive column is constant; the rc column crosses zero at
    sigma_v2 = sigma_m2.
    """
    grid = np.asarray(sigma_v2_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("sigma_v2_grid must be non-empty")
    if not np.isfinite(grid).all():
        raise NonFiniteValueError("sigma_v2_grid contains non-finite values")
    if (grid <= 0).any():
        raise ValueError("sigma_v2_grid values must be positive")
    if sigma2 <= 0 or sigma_m2 <= 0:
        raise ValueError("sigma2 and sigma_m2 must be positive")
    d = c1**2 / sigma2 + 1.0 / sigma_m2
    naive = (c1 / sigma2 - c1**2 / sigma2 - 1.0 / sigma_m2) / d
    rc = (1.0 / grid - 1.0 / sigma_m2) / d
    return np.column_stack([grid, np.full_like(grid, naive), rc])


def bias_curve_csv(
    c1: float,
    sigma2: float,
    sigma_m2: float,
    sigma_v2_grid: np.ndarray,
) -> str:
    """CSV rendering of :func:`bias_curve` with a fixed header."""
    table = bias_curve(c1, sigma2, sigma_m2, sigma_v2_grid)
    lines = ["sigma_v2,naive_bias,rc_bias"]
    for row in table:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TransformPair:
    """A pair of linear transforms applied to the validation estimate
    (L1) and the main-study naive estimate (L2), with its scale k."""

    L1: np.ndarray
    L2: np.ndarray
    k: float


def optimal_transform(
    C1: np.ndarray | float,
    Sigma: np.ndarray | float,
    Sigma_v: np.ndarray | float,
    k: float = 1.0,
) -> TransformPair:
    """Variance-minimizing transform pair: L1 = k C1 Sigma^-1,
    L2 = k Sigma_v^-1.

    Any nonzero scale k gives the same combined estimator; the objective
    in :func:`transform_objective` is invariant to k.
    """
    if k == 0.0 or not math.isfinite(k):
        raise ValueError("k must be a finite nonzero scalar")
    c1 = _square_matrix("C1", C1)
    sigma = _square_matrix("Sigma", Sigma)
    sigma_v = _square_matrix("Sigma_v", Sigma_v)
    p = c1.shape[0]
    _check_same_shape(p, Sigma=sigma, Sigma_v=sigma_v)
    l1 = k * c1 @ _spd_inverse("Sigma", sigma)
    l2 = k * _spd_inverse("Sigma_v", sigma_v)
    return TransformPair(L1=l1, L2=l2, k=float(k))


def transform_objective(
    L1: np.ndarray | float,
    L2: np.ndarray | float,
    C1: np.ndarray | float,
    Sigma: np.ndarray | float,
    Sigma_v: np.ndarray | float,
    alpha: np.ndarray | float,
) -> float:
    """Error variance of the combined estimator along direction alpha.

    Computes alpha' T^-1 (L2 Sigma_v L2' + L1 Sigma L1') T^-T alpha with
    T = L1 C1' + L2.  Raises DegenerateTransformError when T is singular,
    which happens on the ray where the two transforms cancel.
    """
    l1 = _square_matrix("L1", L1)
    l2 = _square_matrix("L2", L2)
    c1 = _square_matrix("C1", C1)
    sigma = _square_matrix("Sigma", Sigma)
    sigma_v = _square_matrix("Sigma_v", Sigma_v)
    p = c1.shape[0]
    _check_same_shape(p, L1=l1, L2=l2, Sigma=sigma, Sigma_v=sigma_v)
    a = np.atleast_1d(np.asarray(alpha, dtype=float)).ravel()
    if a.shape != (p,):
        raise DimensionMismatchError(f"alpha must have length {p}")
    t = l1 @ c1.T + l2
    sv = np.linalg.svd(t, compute_uv=False)
    scale = np.abs(l1 @ c1.T).sum() + np.abs(l2).sum()
    if sv[0] == 0.0 or sv[-1] <= _SINGULAR_RTOL * max(sv[0], scale):
        raise DegenerateTransformError("L1 C1' + L2 is singular")
    u = scipy.linalg.solve(t.T, a)
    v = l2 @ sigma_v @ l2.T + l1 @ sigma @ l1.T
    return float(u @ v @ u)


@dataclass(frozen=True)
class OracleReport:
    """Grid-search confirmation that the closed-form transform minimizes
    the error-variance objective.

    ``resolution`` is the grid step in the scaled coordinates (each axis
    spans [-span, span] times the magnitude of the closed-form value).
    ``skipped`` counts grid points where the transform pair was
    degenerate.  ``attained`` is the verdict: the closed form does not
    exceed the best grid value beyond numerical tolerance.
    """

    closed: TransformPair
    objective_closed: float
    grid_minimum: float
    argmin_l1: float
    argmin_l2: float
    grid_points: int
    span: float
    resolution: float
    skipped: int
    scale_invariance_max_rel_err: float
    attained: bool


def optimality_oracle(
    C1: float,
    Sigma: float,
    Sigma_v: float,
    alpha: float = 1.0,
    grid_points: int = 601,
    span: float = 3.0,
) -> OracleReport:
    """Brute-force check of the optimal transform in the scalar case.

    Evaluates the objective over a grid of (L1, L2) pairs, each axis
    scaled by the closed-form solution's magnitude, and verifies that the
    closed form attains the grid minimum and that scaling both transforms
    by a common k leaves the objective unchanged.  Ties on the grid are
    resolved by the first minimum in row-major order.
    """
    for name, value in (("C1", C1), ("Sigma", Sigma), ("Sigma_v", Sigma_v), ("alpha", alpha)):
        arr = np.asarray(value, dtype=float)
        if arr.size != 1:
            raise ValueError(f"{name} must be scalar for the grid oracle")
        if not np.isfinite(arr).all():
            raise NonFiniteValueError(f"{name} must be finite")
    c1 = float(np.asarray(C1, dtype=float).ravel()[0])
    sigma = float(np.asarray(Sigma, dtype=float).ravel()[0])
    sigma_v = float(np.asarray(Sigma_v, dtype=float).ravel()[0])
    a = float(np.asarray(alpha, dtype=float).ravel()[0])
    if sigma <= 0 or sigma_v <= 0:
        raise ValueError("Sigma and Sigma_v must be positive")
    if a == 0.0:
        raise ValueError("alpha must be nonzero")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    if span <= 0:
        raise ValueError("span must be positive")

    closed = optimal_transform(c1, sigma, sigma_v)
    l1_star = float(closed.L1[0, 0])
    l2_star = float(closed.L2[0, 0])
    objective_closed = transform_objective(l1_star, l2_star, c1, sigma, sigma_v, a)

    scale1 = abs(l1_star) if l1_star != 0.0 else 1.0
    scale2 = abs(l2_star) if l2_star != 0.0 else 1.0
    axis = np.linspace(-span, span, grid_points)
    ax1 = axis * scale1
    ax2 = axis * scale2

    t = np.add.outer(ax1 * c1, ax2)
    t_scale = np.add.outer(np.abs(ax1 * c1), np.abs(ax2))
    degenerate = np.abs(t) <= _SINGULAR_RTOL * np.maximum(t_scale, 1e-300)
    variance = np.add.outer(ax1**2 * sigma, ax2**2 * sigma_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        objective = a**2 * variance / t**2
    objective = np.where(degenerate, np.inf, objective)

    flat_index = int(np.argmin(objective))
    i, j = np.unravel_index(flat_index, objective.shape)
    grid_minimum = float(objective[i, j])
    skipped = int(degenerate.sum())

    rel_errs = []
    for k in (0.25, 2.0, 3.7):
        scaled = transform_objective(k * l1_star, k * l2_star, c1, sigma, sigma_v, a)
        rel_errs.append(abs(scaled - objective_closed) / abs(objective_closed))
    scale_err = max(rel_errs)

    attained = objective_closed <= grid_minimum * (1.0 + 1e-9) + 1e-15

    return OracleReport(
        closed=closed,
        objective_closed=objective_closed,
        grid_minimum=grid_minimum,
        argmin_l1=float(ax1[i]),
        argmin_l2=float(ax2[j]),
        grid_points=grid_points,
        span=span,
        resolution=2.0 * span / (grid_points - 1),
        skipped=skipped,
        scale_invariance_max_rel_err=float(scale_err),
        attained=attained,
    )
