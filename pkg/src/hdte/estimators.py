"""Difference-in-means and covariate-adjusted treatment effect estimation.

All estimators return an :class:`EffectEstimate` holding the effect vector
``tau_hat`` and a covariance matrix ``sigma_hat`` normalized so that
``sigma_hat / n`` estimates ``Var(tau_hat)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset, center_columns
from .errors import DataError, NumericalError

__all__ = [
    "EffectEstimate",
    "AdjustedOutcomes",
    "diff_in_means",
    "cuped_adjust",
    "lin_adjust",
    "adjusted_estimate",
]

_METHODS = ("dim", "cuped", "lin")


@dataclass(frozen=True)
class EffectEstimate:
    """Estimated effects on a set of outcome columns.

    ``tau_hat`` is ``(s,)``, ``sigma_hat`` is the ``(s, s)`` covariance scaled
    by ``n`` (i.e. ``sqrt(sigma_hat[j, j] / n)`` is the standard error of
    ``tau_hat[j]``), and ``index_set`` records which outcome columns of the
    source dataset the entries refer to.
    """

    tau_hat: np.ndarray
    sigma_hat: np.ndarray
    n_t: int
    n_c: int
    n: int
    method: str
    index_set: tuple[int, ...]

    def __post_init__(self):
        tau = np.asarray(self.tau_hat, dtype=np.float64)
        sigma = np.asarray(self.sigma_hat, dtype=np.float64)
        s = tau.shape[0]
        if sigma.shape != (s, s):
            raise DataError(
                f"sigma_hat shape {sigma.shape} does not match tau_hat length {s}"
            )
        if s and not np.allclose(sigma, sigma.T, atol=1e-10, rtol=0.0):
            raise NumericalError("sigma_hat is not symmetric")
        if np.any(np.diag(sigma) < 0):
            raise NumericalError("sigma_hat has a negative diagonal entry")
        if self.method not in _METHODS:
            raise DataError(f"unknown estimation method {self.method!r}")
        if self.n_t + self.n_c != self.n:
            raise DataError("arm sizes do not add up to n")
        object.__setattr__(self, "tau_hat", tau)
        object.__setattr__(self, "sigma_hat", sigma)
        object.__setattr__(self, "index_set", tuple(int(j) for j in self.index_set))


@dataclass(frozen=True)
class AdjustedOutcomes:
    """Covariate-adjusted outcome matrix plus the regression coefficients used.

    ``theta`` is ``(m, p)`` for the pooled adjustment and a pair of ``(m, p)``
    arrays ``(treated, control)`` for the per-arm one.
    """

    y_tilde: np.ndarray
    theta: np.ndarray | tuple[np.ndarray, np.ndarray]
    method: str


def _check_arms(ds: TrialDataset) -> tuple[np.ndarray, int, int]:
    t_mask = ds.treatments == 1
    n_t = int(t_mask.sum())
    n_c = ds.n - n_t
    if n_t < 2 or n_c < 2:
        raise DataError(
            f"each arm needs at least 2 units, got n_t={n_t}, n_c={n_c}"
        )
    return t_mask, n_t, n_c


def diff_in_means(ds: TrialDataset, subset=None) -> EffectEstimate:
    """Difference of arm means and its covariance.

    ``tau_hat`` is the treated-arm mean minus the control-arm mean per outcome
    column. ``sigma_hat`` sums the within-arm scatter matrices, each divided
    by its own arm size and rescaled by ``n / n_arm``.
    """
    t_mask, n_t, n_c = _check_arms(ds)
    if subset is not None:
        idx = np.asarray(subset, dtype=np.intp)
        y = ds.outcomes[:, idx]
        index_set = tuple(int(j) for j in idx)
    else:
        y = ds.outcomes
        index_set = tuple(range(ds.p))
    n = ds.n
    y_t = y[t_mask]
    y_c = y[~t_mask]
    mean_t = y_t.mean(axis=0)
    mean_c = y_c.mean(axis=0)
    tau = mean_t - mean_c
    dev_t = y_t - mean_t
    dev_c = y_c - mean_c
    sigma = (n / n_t) * (dev_t.T @ dev_t) / n_t + (n / n_c) * (dev_c.T @ dev_c) / n_c
    sigma = (sigma + sigma.T) / 2.0
    return EffectEstimate(tau, sigma, n_t, n_c, n, "dim", index_set)


def _centered_slopes(x: np.ndarray, y: np.ndarray, what: str) -> np.ndarray:
    """OLS slopes of each column of y on x, both centered, via least squares.

    Uses a rank-revealing solve rather than forming (X'X)^{-1}; a
    rank-deficient design raises.
    """
    xc, _ = center_columns(x)
    yc, _ = center_columns(y)
    coef, _, rank, _ = np.linalg.lstsq(xc, yc, rcond=None)
    if rank < x.shape[1]:
        raise NumericalError(
            f"singular covariate design in {what} (rank {rank} < m={x.shape[1]})"
        )
    return coef


def cuped_adjust(ds: TrialDataset) -> AdjustedOutcomes:
    """Pooled covariate adjustment: regress each outcome on the covariates
    over the full sample and subtract the fitted covariate contribution.

    The pooled regression does not condition on treatment; slopes come from
    centered data so no explicit intercept is carried.
    """
    if ds.covariates is None:
        raise DataError("dataset has no covariates to adjust on")
    if ds.m >= ds.n:
        raise DataError(f"adjustment needs m < n, got m={ds.m}, n={ds.n}")
    theta = _centered_slopes(ds.covariates, ds.outcomes, "pooled adjustment")
    y_tilde = ds.outcomes - ds.covariates @ theta
    return AdjustedOutcomes(y_tilde, theta, "cuped")


def lin_adjust(ds: TrialDataset) -> AdjustedOutcomes:
    """Per-arm covariate adjustment with cross-weighted slopes.

    Fits the outcome-on-covariate regression separately within each arm and
    subtracts ``(n_c / n) * theta_treated + (n_t / n) * theta_control`` applied
    to the covariates.
    """
    if ds.covariates is None:
        raise DataError("dataset has no covariates to adjust on")
    t_mask, n_t, n_c = _check_arms(ds)
    if ds.m >= min(n_t, n_c):
        raise DataError(
            f"per-arm adjustment needs m < min(n_t, n_c), got m={ds.m}, "
            f"n_t={n_t}, n_c={n_c}"
        )
    theta_t = _centered_slopes(ds.covariates[t_mask], ds.outcomes[t_mask], "treated arm")
    theta_c = _centered_slopes(ds.covariates[~t_mask], ds.outcomes[~t_mask], "control arm")
    combined = (n_c / ds.n) * theta_t + (n_t / ds.n) * theta_c
    y_tilde = ds.outcomes - ds.covariates @ combined
    return AdjustedOutcomes(y_tilde, (theta_t, theta_c), "lin")


def adjusted_estimate(ds: TrialDataset, method: str, subset=None) -> EffectEstimate:
    """Covariate-adjusted estimate: adjust outcomes, then difference of means.

    ``method`` is ``"cuped"`` (pooled slopes), ``"lin"`` (per-arm slopes), or
    ``"dim"`` (no adjustment). Column restriction happens before adjustment;
    because slopes are fit per outcome column, restricting first or last gives
    the same numbers.
    """
    if method == "dim":
        return diff_in_means(ds, subset)
    if method not in ("cuped", "lin"):
        raise DataError(f"unknown estimation method {method!r}")
    work = ds if subset is None else ds.restrict_outcomes(subset)
    adjusted = cuped_adjust(work) if method == "cuped" else lin_adjust(work)
    base = diff_in_means(work.replace_outcomes(adjusted.y_tilde))
    index_set = base.index_set
    if subset is not None:
        idx = np.asarray(subset, dtype=np.intp)
        index_set = tuple(int(j) for j in idx)
    return EffectEstimate(
        base.tau_hat, base.sigma_hat, base.n_t, base.n_c, base.n, method, index_set
    )
