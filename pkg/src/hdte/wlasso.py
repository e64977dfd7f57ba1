"""Weighted elastic net of treatment on centered outcomes.

The solver minimizes

    (1/n) sum_i w_i (t_i - (y_i - ybar)' beta - (x_i - xbar)' alpha)^2
        + 2 * lam * (l1_ratio * ||beta||_1 + (1 - l1_ratio) * ||beta||_2^2)

where ``w`` are inverse-propensity-squared weights, outcome and covariate
columns are centered at their unweighted means, the regression carries no
intercept, and ``alpha`` (the covariate block) is unpenalized. Covariates are
concentrated out exactly up front: the response and every outcome column are
replaced by their residuals from a weighted regression on the centered
covariates, which leaves the ``beta`` subproblem unchanged and makes ``alpha``
recoverable in closed form. The ``beta`` subproblem is then solved by cyclic
coordinate descent on precomputed weighted moment matrices, with an active-set
sweep strategy and a final stationarity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset, center_columns
from .errors import DataError, NumericalError

__all__ = [
    "RegressionWeights",
    "EnetConfig",
    "EnetFit",
    "EnetPath",
    "propensity_weights",
    "soft_threshold",
    "fit_weighted_enet",
    "lambda_max",
    "regularization_path",
    "subset_weighted_rss",
]

# Columns whose weighted second moment falls below this relative floor carry
# no information about the response and are pinned at beta_j = 0.
_DEGENERATE_REL = 1e-14


@dataclass(frozen=True)
class RegressionWeights:
    """Per-unit weights ``1 / pi_hat**2`` (treated) and ``1 / (1 - pi_hat)**2``
    (control), with ``pi_hat`` the empirical treated fraction."""

    w: np.ndarray
    pi_hat: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DataError("weights must be a 1-d vector of positive finite values")
        if not 0.0 < self.pi_hat < 1.0:
            raise DataError(f"pi_hat must be in (0, 1), got {self.pi_hat}")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class EnetConfig:
    """Solver settings. ``lam`` is the penalty level, ``l1_ratio`` the lasso
    share of the penalty (1.0 is the pure lasso), ``tol`` the max coefficient
    change per sweep at which iteration stops, ``standardize`` whether columns
    are scaled to unit weighted second moment before fitting (coefficients are
    reported on the original scale either way)."""

    lam: float = 0.0
    l1_ratio: float = 1.0
    tol: float = 1e-7
    max_iter: int = 10_000
    standardize: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise DataError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 < self.l1_ratio <= 1.0:
            raise DataError(f"l1_ratio must be in (0, 1], got {self.l1_ratio}")
        if self.tol <= 0:
            raise DataError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class EnetFit:
    """One solved penalized regression.

    ``beta`` is the coefficient vector on the outcome columns, ``alpha_cov``
    the unpenalized covariate coefficients (length 0 without covariates),
    ``active_set`` the indices of nonzero ``beta`` entries in ascending order,
    and ``weighted_rss`` the mean weighted squared residual of the full model.
    """

    beta: np.ndarray
    alpha_cov: np.ndarray
    active_set: tuple[int, ...]
    weighted_rss: float
    lam: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class EnetPath:
    """Fits along a descending penalty grid; ``lambdas[0] == lambda_max``."""

    lambdas: np.ndarray
    fits: tuple[EnetFit, ...]
    lambda_max: float


def propensity_weights(treatments) -> RegressionWeights:
    """Inverse-propensity-squared weights from a binary treatment vector."""
    t = np.asarray(treatments, dtype=np.float64)
    n_t = t.sum()
    n = t.shape[0]
    if n_t == 0 or n_t == n:
        raise DataError("weights need both arms present (all-treated or all-control sample)")
    pi_hat = n_t / n
    w = np.where(t == 1.0, 1.0 / pi_hat**2, 1.0 / (1.0 - pi_hat) ** 2)
    return RegressionWeights(w, float(pi_hat))


def soft_threshold(x, threshold):
    """Shrink ``x`` toward zero by ``threshold``, clipping at zero."""
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


@dataclass(frozen=True)
class _Problem:
    """Weighted moment matrices of the covariate-concentrated problem."""

    gram: np.ndarray          # (p, p): (1/n) Yr' W Yr, in fitting scale
    ty: np.ndarray            # (p,): (1/n) Yr' W tr, in fitting scale
    tt: float                 # (1/n) tr' W tr
    scale: np.ndarray         # (p,) column scales applied (ones if standardize off)
    penalized: np.ndarray     # (p,) bool mask, False for degenerate columns
    proj_t: np.ndarray | None   # (m,) weighted projection of t on centered covariates
    proj_y: np.ndarray | None   # (m, p) weighted projection of outcomes on same
    yc: np.ndarray            # centered outcomes (original scale)
    xc: np.ndarray | None     # centered covariates
    t: np.ndarray             # raw response (0/1 treatments as float)
    w: np.ndarray             # regression weights


def _check_weights(ds: TrialDataset, weights: RegressionWeights) -> None:
    if weights.w.shape[0] != ds.n:
        raise DataError(
            f"weights length {weights.w.shape[0]} does not match n={ds.n}"
        )
    expected = propensity_weights(ds.treatments)
    if not np.allclose(weights.w, expected.w, rtol=1e-10, atol=0.0):
        raise DataError("weights are inconsistent with the dataset's treatment vector")


def _prepare(ds: TrialDataset, weights: RegressionWeights, standardize: bool) -> _Problem:
    _check_weights(ds, weights)
    n = ds.n
    t = ds.treatments.astype(np.float64)
    w = weights.w
    yc, _ = center_columns(ds.outcomes)
    if ds.m > 0:
        xc, _ = center_columns(ds.covariates)
        sqrt_w = np.sqrt(w)
        design = xc * sqrt_w[:, None]
        proj_t, _, rank, _ = np.linalg.lstsq(design, sqrt_w * t, rcond=None)
        if rank < ds.m:
            raise NumericalError(
                f"singular weighted covariate block (rank {rank} < m={ds.m})"
            )
        proj_y = np.linalg.lstsq(design, sqrt_w[:, None] * yc, rcond=None)[0]
        tr = t - xc @ proj_t
        yr = yc - xc @ proj_y
    else:
        xc = None
        proj_t = proj_y = None
        tr = t
        yr = yc
    wy = yr * w[:, None]
    gram = wy.T @ yr / n
    gram = (gram + gram.T) / 2.0
    ty = wy.T @ tr / n
    tt = float(w @ tr**2 / n)
    diag = gram.diagonal()
    penalized = diag > _DEGENERATE_REL * max(1.0, float(diag.max(initial=0.0)))
    scale = np.ones(ds.p)
    if standardize and penalized.any():
        scale = np.where(penalized, np.sqrt(np.maximum(diag, 0.0)), 1.0)
        gram = gram / np.outer(scale, scale)
        ty = ty / scale
    return _Problem(gram, ty, tt, scale, penalized, proj_t, proj_y, yc, xc, t, w)


def _kkt_violation(beta, q, ty, lam1, ridge, penalized) -> float:
    """Largest stationarity violation in gradient units.

    The smooth-part gradient is ``2 * (q - ty)`` with ``q = gram @ beta``.
    """
    grad = 2.0 * (q - ty)
    worst = 0.0
    active = (beta != 0.0) & penalized
    if active.any():
        resid = grad[active] + 2.0 * lam1 * np.sign(beta[active]) + 2.0 * ridge * beta[active]
        worst = float(np.max(np.abs(resid)))
    inactive = (beta == 0.0) & penalized
    if inactive.any():
        slack = np.abs(grad[inactive]) - 2.0 * lam1
        worst = max(worst, float(np.max(slack, initial=0.0)))
    return worst


def _cd_solve(problem: _Problem, config: EnetConfig, lam: float, beta0=None,
              objective_trace=None) -> tuple[np.ndarray, int, bool]:
    """Cyclic coordinate descent on the concentrated problem.

    Returns ``(beta, sweeps, converged)`` with ``beta`` in fitting scale.
    Sweeps alternate between the full coordinate set and the current nonzero
    set; convergence requires a full sweep with max coefficient change below
    ``tol`` plus a stationarity check within ``10 * tol`` of the problem scale.
    """
    gram = problem.gram
    ty = problem.ty
    p = ty.shape[0]
    lam1 = lam * config.l1_ratio
    ridge = 2.0 * lam * (1.0 - config.l1_ratio)
    diag = gram.diagonal().copy()
    denom = diag + ridge
    full_set = np.flatnonzero(problem.penalized)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)
    beta[~problem.penalized] = 0.0
    q = gram @ beta if beta.any() else np.zeros(p)
    kkt_tol = 10.0 * config.tol * max(
        1.0,
        float(np.max(np.abs(ty), initial=0.0)),
        float(diag.max(initial=0.0)),
    )

    def record_objective():
        if objective_trace is not None:
            penalty = 2.0 * lam * (
                config.l1_ratio * np.abs(beta).sum()
                + (1.0 - config.l1_ratio) * (beta @ beta)
            )
            objective_trace.append(problem.tt - 2.0 * beta @ ty + beta @ q + penalty)

    sweeps = 0
    converged = False
    on_full_set = True
    while sweeps < config.max_iter:
        work = full_set if on_full_set else np.flatnonzero(beta)
        delta = 0.0
        for j in work:
            b_old = beta[j]
            z = ty[j] - q[j] + diag[j] * b_old
            b_new = soft_threshold(z, lam1) / denom[j]
            if b_new != b_old:
                q += gram[j] * (b_new - b_old)
                beta[j] = b_new
                step = abs(b_new - b_old)
                if step > delta:
                    delta = step
        sweeps += 1
        record_objective()
        if delta < config.tol:
            if on_full_set:
                if _kkt_violation(beta, q, ty, lam1, ridge, problem.penalized) <= kkt_tol:
                    converged = True
                    break
            else:
                on_full_set = True
        else:
            on_full_set = False
    if not np.all(np.isfinite(beta)):
        raise NumericalError("coordinate descent produced non-finite coefficients")
    return beta, sweeps, converged


def _assemble_fit(problem: _Problem, beta_scaled: np.ndarray, lam: float,
                  sweeps: int, converged: bool) -> EnetFit:
    beta = beta_scaled / problem.scale
    if problem.xc is not None:
        alpha = problem.proj_t - problem.proj_y @ beta
        residual = problem.t - problem.yc @ beta - problem.xc @ alpha
    else:
        alpha = np.zeros(0)
        residual = problem.t - problem.yc @ beta
    rss = float(problem.w @ residual**2 / problem.t.shape[0])
    active = tuple(int(j) for j in np.flatnonzero(beta))
    beta = beta.copy()
    beta.setflags(write=False)
    alpha = np.array(alpha)
    alpha.setflags(write=False)
    return EnetFit(beta, alpha, active, rss, float(lam), sweeps, converged)


def fit_weighted_enet(ds: TrialDataset, weights: RegressionWeights,
                      config: EnetConfig) -> EnetFit:
    """Solve the weighted penalized regression at ``config.lam``.

    At ``lam = 0`` this is the weighted least-squares fit of the treatment
    indicator on centered outcomes (and covariates). Zero-variance outcome
    columns are excluded from the fit with their coefficient pinned at zero.
    """
    problem = _prepare(ds, weights, config.standardize)
    beta_scaled, sweeps, converged = _cd_solve(problem, config, config.lam)
    return _assemble_fit(problem, beta_scaled, config.lam, sweeps, converged)


def _lambda_max_from(problem: _Problem, l1_ratio: float) -> float:
    if not problem.penalized.any():
        return 0.0
    return float(np.max(np.abs(problem.ty[problem.penalized]))) / l1_ratio


def lambda_max(ds: TrialDataset, weights: RegressionWeights,
               l1_ratio: float = 1.0, standardize: bool = False) -> float:
    """Smallest penalty at which the fitted ``beta`` is identically zero.

    Derived from the stationarity condition at zero: the largest absolute
    weighted cross moment between the (covariate-concentrated) centered
    outcome columns and the response, divided by ``l1_ratio``. The response
    enters uncentered, matching the intercept-free regression.
    """
    if not 0.0 < l1_ratio <= 1.0:
        raise DataError(f"l1_ratio must be in (0, 1], got {l1_ratio}")
    problem = _prepare(ds, weights, standardize)
    return _lambda_max_from(problem, l1_ratio)


def _default_min_ratio(n: int, p: int) -> float:
    return 0.01 if p > n else 1e-4


def _path_grid(ds: TrialDataset, weights: RegressionWeights, config: EnetConfig,
               n_lambdas: int, lambda_min_ratio: float | None):
    """Shared setup for path walks: concentrated problem plus penalty grid."""
    if n_lambdas < 2:
        raise DataError(f"n_lambdas must be >= 2, got {n_lambdas}")
    if lambda_min_ratio is None:
        lambda_min_ratio = _default_min_ratio(ds.n, ds.p)
    if not 0.0 < lambda_min_ratio < 1.0:
        raise DataError(f"lambda_min_ratio must be in (0, 1), got {lambda_min_ratio}")
    problem = _prepare(ds, weights, config.standardize)
    lam_top = _lambda_max_from(problem, config.l1_ratio)
    if lam_top <= 0.0:
        raise NumericalError(
            "lambda_max is zero (response is weighted-orthogonal to every "
            "outcome column); the penalty grid is undefined"
        )
    grid = np.geomspace(lam_top, lam_top * lambda_min_ratio, n_lambdas)
    return problem, grid, lam_top


def _walk_path(problem: _Problem, grid: np.ndarray, config: EnetConfig):
    """Yield warm-started fits down the grid. The top-of-grid solution is
    identically zero by construction of ``lambda_max`` and is emitted without
    iterating."""
    beta = np.zeros(problem.ty.shape[0])
    for k, lam in enumerate(grid):
        if k == 0:
            yield _assemble_fit(problem, beta, lam, 0, True)
            continue
        beta, sweeps, converged = _cd_solve(problem, config, lam, beta0=beta)
        yield _assemble_fit(problem, beta, lam, sweeps, converged)


def regularization_path(ds: TrialDataset, weights: RegressionWeights,
                        n_lambdas: int = 100, lambda_min_ratio: float | None = None,
                        config: EnetConfig = EnetConfig()) -> EnetPath:
    """Fits along a log-spaced descending penalty grid with warm starts.

    The grid runs from ``lambda_max`` down to ``lambda_min_ratio *
    lambda_max`` (default ratio 0.01 when p > n, else 1e-4). ``config.lam``
    is ignored; every grid point gets its own fit.
    """
    problem, grid, lam_top = _path_grid(ds, weights, config, n_lambdas, lambda_min_ratio)
    fits = tuple(_walk_path(problem, grid, config))
    lambdas = grid.copy()
    lambdas.setflags(write=False)
    return EnetPath(lambdas, fits, lam_top)


def subset_weighted_rss(ds: TrialDataset, weights: RegressionWeights, subset) -> float:
    """Mean weighted squared residual of the unpenalized regression of the
    treatment indicator on the centered outcome columns in ``subset``.

    The empty subset returns ``(1/n) * sum_i w_i * t_i**2`` (no regressors, no
    intercept). Covariates are not part of this regression.
    """
    _check_weights(ds, weights)
    idx = np.asarray(subset, dtype=np.intp)
    if idx.size != np.unique(idx).size:
        raise DataError("subset contains duplicate indices")
    if idx.size and (idx.min() < 0 or idx.max() >= ds.p):
        raise DataError(f"subset indices out of range for p={ds.p}")
    if idx.size > min(ds.n - 2, ds.p):
        raise DataError(
            f"subset size {idx.size} exceeds min(n - 2, p) = {min(ds.n - 2, ds.p)}"
        )
    t = ds.treatments.astype(np.float64)
    w = weights.w
    n = ds.n
    if idx.size == 0:
        return float(w @ t**2 / n)
    yc, _ = center_columns(ds.outcomes[:, idx])
    gram = (yc * w[:, None]).T @ yc / n
    eigvals = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
        raise NumericalError(
            f"singular restricted design for subset {tuple(int(j) for j in idx)} "
            f"(eigenvalue ratio {eigvals[0] / max(eigvals[-1], 1e-300):.2e})"
        )
    rhs = yc.T @ (w * t) / n
    beta = np.linalg.solve(gram, rhs)
    residual = t - yc @ beta
    return float(w @ residual**2 / n)
