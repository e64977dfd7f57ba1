"""Split-sample inference: selection on one half, testing on the other,
and quantile aggregation over repeated random splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import TrialDataset, aggregate_columns, random_split
from .errors import DataError, HdteError, NumericalError
from .estimators import EffectEstimate, adjusted_estimate, diff_in_means
from .selection import (
    SelectionResult,
    baseline_select,
    select_resolution_level,
    sparse_select,
)
from .wlasso import EnetConfig

__all__ = [
    "PValueReport",
    "MultiSplitReport",
    "SelectionSpec",
    "z_pvalues",
    "hotelling_statistic",
    "hotelling_pvalue",
    "single_split_pipeline",
    "aggregate_pvalues",
    "multi_split",
    "split_seeds",
]


@dataclass(frozen=True)
class SelectionSpec:
    """How the selection half of a split pipeline picks its subset.

    ``method`` is ``"baseline"`` (ranked studentized effects), ``"lasso"``,
    or ``"enet"``; penalized methods take exactly one of ``size`` / ``lam``.
    ``levels`` (optional) switches on multi-resolution mode: a list of column
    groupings, coarsest first, among which the best-fitting level is chosen
    before testing (see :func:`hdte.selection.select_resolution_level`).
    """

    method: str = "lasso"
    size: int | None = None
    lam: float | None = None
    levels: tuple | None = None
    config: EnetConfig = field(default_factory=EnetConfig)

    def __post_init__(self):
        if self.method not in ("baseline", "lasso", "enet"):
            raise DataError(f"unknown selection method {self.method!r}")
        if self.method == "baseline":
            if self.size is None:
                raise DataError("baseline selection needs size=")
            if self.levels is not None:
                raise DataError("multi-resolution mode needs a penalized method")
        cfg = self.config
        if self.method == "lasso" and cfg.l1_ratio != 1.0:
            cfg = EnetConfig(cfg.lam, 1.0, cfg.tol, cfg.max_iter, cfg.standardize)
        elif self.method == "enet" and cfg.l1_ratio == 1.0:
            cfg = EnetConfig(cfg.lam, 0.5, cfg.tol, cfg.max_iter, cfg.standardize)
        object.__setattr__(self, "config", cfg)
        if self.levels is not None:
            frozen = tuple(tuple(tuple(int(j) for j in g) for g in lvl) for lvl in self.levels)
            object.__setattr__(self, "levels", frozen)


@dataclass(frozen=True)
class PValueReport:
    """Per-dimension and group p-values for one tested subset.

    ``per_dim`` maps outcome column index to its multiplicity-corrected
    p-value; ``correction_factor`` is the multiplicity used (the subset
    size). ``estimate`` is the second-half effect estimate the p-values came
    from (``None`` when the subset is empty).
    """

    per_dim: dict[int, float]
    group: float
    estimate: EffectEstimate | None
    subset: tuple[int, ...]
    correction_factor: int


@dataclass(frozen=True)
class MultiSplitReport:
    """Aggregated p-values over ``B`` random splits.

    ``per_dim_aggregated[j]`` covers outcome column ``j``; in
    multi-resolution mode the vector is indexed by (level, window) slots,
    levels concatenated in order. ``per_split_subsets`` records each split's
    selected subset in those same indices.
    """

    per_dim_aggregated: np.ndarray
    group_aggregated: float
    gamma: float
    B: int
    per_split_subsets: tuple[tuple[int, ...], ...]


def z_pvalues(est: EffectEstimate, correction: int, two_sided: bool = False) -> np.ndarray:
    """Per-dimension normal-tail p-values ``min(1, correction * tail)``.

    The z-score is ``sqrt(n) * |tau_j| / sqrt(sigma_jj)``. The default tail
    is the single upper tail at ``|z|``; ``two_sided=True`` doubles it, which
    is the calibrated choice under a two-sided alternative.
    """
    if correction < 1:
        raise DataError(f"correction must be >= 1, got {correction}")
    diag = np.diag(est.sigma_hat)
    if np.any(diag <= 0):
        raise NumericalError("zero variance entry; z-score undefined")
    z = np.sqrt(est.n) * np.abs(est.tau_hat) / np.sqrt(diag)
    tail = stats.norm.sf(z)
    if two_sided:
        tail = 2.0 * tail
    return np.minimum(1.0, correction * tail)


def hotelling_statistic(est: EffectEstimate) -> float:
    """Quadratic-form statistic ``n * tau' sigma^{-1} tau``."""
    s = len(est.index_set)
    if s == 0:
        return 0.0
    eigvals = np.linalg.eigvalsh(est.sigma_hat)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
        cond = eigvals[-1] / max(eigvals[0], 1e-300)
        raise NumericalError(
            f"singular covariance for subset {est.index_set} "
            f"(condition estimate {cond:.2e}); cannot form the group statistic"
        )
    return float(est.n * est.tau_hat @ np.linalg.solve(est.sigma_hat, est.tau_hat))


def hotelling_pvalue(est: EffectEstimate) -> float:
    """Group-level p-value from the chi-squared reference with ``|subset|``
    degrees of freedom. An empty subset returns 1."""
    s = len(est.index_set)
    if s == 0:
        return 1.0
    return float(stats.chi2.sf(hotelling_statistic(est), df=s))


def _estimate(ds: TrialDataset, method: str, subset) -> EffectEstimate:
    if method == "dim":
        return diff_in_means(ds, subset)
    return adjusted_estimate(ds, method, subset)


def _select_for_split(ds: TrialDataset, method: str, sel: SelectionSpec
                      ) -> tuple[SelectionResult, int | None]:
    """Run the configured selection on the first half. Returns the selection
    and, in multi-resolution mode, the chosen level index."""
    if sel.levels is not None:
        level, result = select_resolution_level(
            ds, sel.levels, size=sel.size, lam=sel.lam, config=sel.config
        )
        return result, level
    if sel.method == "baseline":
        ranking_method = method if ds.covariates is not None else "dim"
        return baseline_select(_estimate(ds, ranking_method, None), sel.size), None
    result = sparse_select(ds, size=sel.size, lam=sel.lam, config=sel.config)
    return result, None


def _split_report(split, method: str, sel: SelectionSpec,
                  two_sided: bool) -> tuple[PValueReport, int | None]:
    if method not in ("dim", "cuped", "lin"):
        raise DataError(f"unknown estimation method {method!r}")
    result, level = _select_for_split(split.first, method, sel)
    subset = result.selected
    if not subset:
        return PValueReport({}, 1.0, None, (), 0), level
    second = split.second
    if level is not None:
        second = aggregate_columns(second, sel.levels[level])
    est = _estimate(second, method, subset)
    pvals = z_pvalues(est, correction=len(subset), two_sided=two_sided)
    per_dim = {int(j): float(p) for j, p in zip(subset, pvals)}
    return PValueReport(per_dim, hotelling_pvalue(est), est, subset, len(subset)), level


def single_split_pipeline(split, method: str, sel: SelectionSpec,
                          two_sided: bool = False) -> PValueReport:
    """Select on ``split.first``, then test the selected subset on
    ``split.second``.

    ``method`` names the second-half estimator (``"dim"``, ``"cuped"``,
    ``"lin"``). Per-dimension p-values carry a multiplicity correction equal
    to the subset size; the group p-value comes from the quadratic-form
    statistic. An empty selection yields a report with group p-value 1 and no
    per-dimension entries.
    """
    return _split_report(split, method, sel, two_sided)[0]


def aggregate_pvalues(p_matrix, gamma: float) -> np.ndarray:
    """Rescaled empirical-quantile aggregation across splits.

    For each column of the ``(B, k)`` matrix, divide by ``gamma``, take the
    ``ceil(gamma * B)``-th order statistic (1-based), and cap at 1. With
    ``B = 1`` this is ``min(1, p / gamma)``.
    """
    pm = np.asarray(p_matrix, dtype=np.float64)
    if pm.ndim != 2:
        raise DataError(f"p_matrix must be 2-d (B, k), got shape {pm.shape}")
    if not 0.0 < gamma < 1.0:
        raise DataError(f"gamma must be in (0, 1), got {gamma}")
    if pm.size and (np.any(pm < 0) or np.any(pm > 1) or not np.all(np.isfinite(pm))):
        raise DataError("p-values must lie in [0, 1]")
    b = pm.shape[0]
    if b < 1:
        raise DataError("p_matrix needs at least one row")
    # Guard the ceil against float fuzz like 0.05 * 20 landing just above 1.
    order = max(1, math.ceil(gamma * b - 1e-9))
    scaled = np.sort(pm / gamma, axis=0)
    return np.minimum(1.0, scaled[order - 1])


def split_seeds(seed: int, count: int) -> np.ndarray:
    """Child seeds for repeated splits, deterministic in ``(seed, count)``."""
    return np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)


def _slot_layout(sel: SelectionSpec, p: int) -> tuple[int, tuple[int, ...]]:
    """Total per-dimension slots and per-level offsets for aggregation."""
    if sel.levels is None:
        return p, (0,)
    sizes = [len(lvl) for lvl in sel.levels]
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    return int(sum(sizes)), offsets


def multi_split(ds: TrialDataset, B: int = 50, gamma: float = 0.05,
                method: str = "dim", sel: SelectionSpec = SelectionSpec(size=1),
                seed: int = 0, fraction: float = 0.5,
                two_sided: bool = False) -> MultiSplitReport:
    """Run the split pipeline over ``B`` random splits and aggregate.

    Per split, unselected dimensions get p-value 1. Aggregation uses the
    capped rescaled ``gamma``-quantile per dimension and for the group
    p-value. Split seeds derive deterministically from ``seed``, so reruns
    reproduce the report exactly. Any split failure aborts with the split
    index in the error message.
    """
    if B < 1:
        raise DataError(f"B must be >= 1, got {B}")
    n_slots, offsets = _slot_layout(sel, ds.p)
    seeds = split_seeds(seed, B)
    per_dim = np.ones((B, n_slots))
    group = np.ones((B, 1))
    subsets = []
    for b in range(B):
        try:
            split = random_split(ds, fraction, int(seeds[b]))
            report, level = _split_report(split, method, sel, two_sided)
        except HdteError as exc:
            raise NumericalError(f"split {b} failed: {exc}") from exc
        if sel.levels is not None and report.subset:
            slots = tuple(offsets[level] + j for j in report.subset)
        else:
            slots = report.subset
        for slot, j in zip(slots, report.subset):
            per_dim[b, slot] = report.per_dim[j]
        group[b, 0] = report.group
        subsets.append(slots)
    agg = aggregate_pvalues(per_dim, gamma)
    agg.setflags(write=False)
    group_agg = float(aggregate_pvalues(group, gamma)[0])
    return MultiSplitReport(agg, group_agg, gamma, B, tuple(subsets))
