"""Outcome subset selection: ranked effects, penalized paths, thresholding,
and the population-level target the sparse selector estimates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import TrialDataset, aggregate_columns
from .errors import DataError, NumericalError
from .estimators import EffectEstimate
from .wlasso import (
    EnetConfig,
    EnetFit,
    _path_grid,
    _walk_path,
    fit_weighted_enet,
    propensity_weights,
    subset_weighted_rss,
)

__all__ = [
    "SelectionResult",
    "PopulationTarget",
    "baseline_select",
    "sparse_select",
    "path_selections",
    "hard_threshold_select",
    "population_beta_star",
    "select_resolution_level",
]


@dataclass(frozen=True)
class SelectionResult:
    """A selected outcome subset with its diagnostics.

    ``selected`` lists column indices in selection-priority order (rank order
    for the baseline, path-entry order for penalized selection). ``scores``
    aligns with ``selected``: studentized effect sizes for the baseline,
    absolute coefficients otherwise. ``weighted_rss`` is the restricted
    weighted regression residual when the selector has access to the data,
    else ``None``.
    """

    selected: tuple[int, ...]
    method: str
    tuning: float
    scores: tuple[float, ...]
    weighted_rss: float | None = None

    def __post_init__(self):
        if self.method not in ("baseline", "lasso", "enet"):
            raise DataError(f"unknown selection method {self.method!r}")
        if len(self.scores) != len(self.selected):
            raise DataError("scores and selected must have equal length")
        if len(set(self.selected)) != len(self.selected):
            raise DataError("selected contains duplicate indices")
        object.__setattr__(self, "selected", tuple(int(j) for j in self.selected))
        object.__setattr__(self, "scores", tuple(float(v) for v in self.scores))


@dataclass(frozen=True)
class PopulationTarget:
    """Population coefficient vector of the weighted regression of treatment
    on centered outcomes, with its support."""

    beta_star: np.ndarray
    support: tuple[int, ...]
    s_star: int
    tau: np.ndarray
    sigma_z: np.ndarray


def baseline_select(est: EffectEstimate, size: int) -> SelectionResult:
    """Top ``size`` outcome columns by studentized effect ``|tau_j| / sqrt(sigma_jj)``.

    Ties are broken toward the lower column index. Indices in the result
    refer to the source dataset's columns via ``est.index_set``.
    """
    k = len(est.index_set)
    if not 1 <= size <= k:
        raise DataError(f"size must be in [1, {k}], got {size}")
    diag = np.diag(est.sigma_hat)
    if np.any(diag <= 0):
        zero = est.index_set[int(np.argmin(diag))]
        raise NumericalError(
            f"outcome column {zero} has zero estimated variance; "
            "studentized ranking is undefined"
        )
    scores = np.abs(est.tau_hat) / np.sqrt(diag)
    order = np.lexsort((np.asarray(est.index_set), -scores))[:size]
    return SelectionResult(
        tuple(est.index_set[i] for i in order),
        "baseline",
        float(size),
        tuple(scores[order]),
    )


def _method_label(config: EnetConfig) -> str:
    return "lasso" if config.l1_ratio == 1.0 else "enet"


def path_selections(ds: TrialDataset, sizes, config: EnetConfig = EnetConfig(),
                    n_lambdas: int = 100,
                    lambda_min_ratio: float | None = None) -> dict[int, SelectionResult]:
    """Size-``s`` selections for every ``s`` in ``sizes`` from one path walk.

    Walking the penalty grid from large to small, each requested size is
    resolved at the first grid point whose active set reaches it, truncated
    to ``s`` in path-entry order (the order in which columns first became
    active; same-point entries break ties by ascending index). Selections for
    nested sizes are therefore prefixes of one another.
    """
    wanted = sorted(set(int(s) for s in sizes))
    if not wanted:
        raise DataError("sizes must be nonempty")
    if wanted[0] < 1 or wanted[-1] > ds.p:
        raise DataError(f"sizes must be within [1, p={ds.p}], got {wanted}")
    weights = propensity_weights(ds.treatments)
    problem, grid, _ = _path_grid(ds, weights, config, n_lambdas, lambda_min_ratio)
    label = _method_label(config)
    entry_rank: dict[int, int] = {}
    results: dict[int, SelectionResult] = {}
    pending = list(wanted)
    largest_seen = 0
    for fit in _walk_path(problem, grid, config):
        for j in fit.active_set:
            if j not in entry_rank:
                entry_rank[j] = len(entry_rank)
        largest_seen = max(largest_seen, len(fit.active_set))
        while pending and len(fit.active_set) >= pending[0]:
            s = pending.pop(0)
            ranked = sorted(fit.active_set, key=entry_rank.__getitem__)[:s]
            abs_beta = np.abs(fit.beta)
            results[s] = SelectionResult(
                tuple(ranked),
                label,
                fit.lam,
                tuple(float(abs_beta[j]) for j in ranked),
                subset_weighted_rss(ds, weights, ranked),
            )
        if not pending:
            break
    if pending:
        raise DataError(
            f"penalty path reached its smallest value with at most "
            f"{largest_seen} active columns; cannot select {pending[0]}"
        )
    return results


def sparse_select(ds: TrialDataset, *, size: int | None = None,
                  lam: float | None = None, config: EnetConfig = EnetConfig(),
                  n_lambdas: int = 100,
                  lambda_min_ratio: float | None = None) -> SelectionResult:
    """Penalized selection of an outcome subset.

    Exactly one of ``size`` and ``lam`` must be given. With ``size`` the
    penalty path is walked until the active set first reaches that size and
    truncated in path-entry order; with ``lam`` the active set of the single
    fit at that penalty is returned, ordered by descending ``|beta|``.
    """
    if (size is None) == (lam is None):
        raise DataError("pass exactly one of size= or lam=")
    weights = propensity_weights(ds.treatments)
    if size is not None:
        return path_selections(ds, [size], config, n_lambdas, lambda_min_ratio)[size]
    fit = fit_weighted_enet(ds, weights, replace(config, lam=lam))
    abs_beta = np.abs(fit.beta)
    active = np.asarray(fit.active_set, dtype=np.intp)
    order = np.lexsort((active, -abs_beta[active])) if active.size else np.zeros(0, np.intp)
    chosen = tuple(int(active[i]) for i in order)
    return SelectionResult(
        chosen,
        _method_label(config),
        float(lam),
        tuple(float(abs_beta[j]) for j in chosen),
        subset_weighted_rss(ds, weights, chosen),
    )


def hard_threshold_select(fit: EnetFit, threshold: float) -> SelectionResult:
    """Keep coefficients with ``|beta_j| > threshold``, largest first.

    Ties break toward the lower index. The result is labeled ``"lasso"``
    since thresholding post-processes a penalized fit.
    """
    if threshold <= 0:
        raise DataError(f"threshold must be positive, got {threshold}")
    abs_beta = np.abs(fit.beta)
    keep = np.flatnonzero(abs_beta > threshold)
    order = np.lexsort((keep, -abs_beta[keep])) if keep.size else np.zeros(0, np.intp)
    chosen = tuple(int(keep[i]) for i in order)
    return SelectionResult(
        chosen,
        "lasso",
        float(threshold),
        tuple(float(abs_beta[j]) for j in chosen),
    )


def population_beta_star(tau, sigma_z, pi: float,
                         support_tol: float = 1e-10) -> PopulationTarget:
    """Population coefficient vector of the weighted treatment-on-outcomes
    regression, in closed form.

    With ``r = (1 - pi) / pi`` and ``c = r + 1/r - 1`` the vector solves
    ``(sigma_z + c * tau tau') beta = r * tau``. It is proportional to
    ``sigma_z^{-1} tau`` (rank-one update identity), which is asserted here
    as an internal consistency check. Support is read off with a relative
    tolerance ``support_tol`` times the largest coefficient magnitude.
    """
    tau = np.asarray(tau, dtype=np.float64)
    sigma_z = np.asarray(sigma_z, dtype=np.float64)
    if tau.ndim != 1:
        raise DataError(f"tau must be 1-d, got shape {tau.shape}")
    p = tau.shape[0]
    if sigma_z.shape != (p, p):
        raise DataError(f"sigma_z shape {sigma_z.shape} does not match p={p}")
    if not np.allclose(sigma_z, sigma_z.T, atol=1e-8, rtol=1e-8):
        raise DataError("sigma_z is not symmetric")
    if not 0.0 < pi < 1.0:
        raise DataError(f"pi must be in (0, 1), got {pi}")
    try:
        np.linalg.cholesky(sigma_z)
    except np.linalg.LinAlgError:
        raise NumericalError("sigma_z is not positive definite") from None
    ratio = (1.0 - pi) / pi
    c = ratio + 1.0 / ratio - 1.0
    beta = ratio * np.linalg.solve(sigma_z + c * np.outer(tau, tau), tau)
    direction = np.linalg.solve(sigma_z, tau)
    norm_b = np.linalg.norm(beta)
    norm_d = np.linalg.norm(direction)
    if norm_b > 0 and norm_d > 0:
        cosine = float(beta @ direction / (norm_b * norm_d))
        if cosine < 1.0 - 1e-8:
            raise NumericalError(
                f"direction identity violated (cosine {cosine:.12f}); "
                "sigma_z is likely too ill-conditioned"
            )
    peak = float(np.abs(beta).max(initial=0.0))
    support = tuple(
        int(j) for j in np.flatnonzero(np.abs(beta) > support_tol * peak)
    ) if peak > 0 else ()
    beta = beta.copy()
    beta.setflags(write=False)
    return PopulationTarget(beta, support, len(support), tau, sigma_z)


def select_resolution_level(ds: TrialDataset, levels, *, size: int | None = None,
                            lam: float | None = None,
                            config: EnetConfig = EnetConfig(),
                            n_lambdas: int = 100,
                            lambda_min_ratio: float | None = None
                            ) -> tuple[int, SelectionResult]:
    """Pick the column grouping whose selected subset fits the treatment best.

    Each entry of ``levels`` is a grouping of the base outcome columns (see
    :func:`hdte.data.aggregate_columns`); selection runs per level and the
    level with the smallest restricted weighted residual wins. Ties go to the
    earliest listed level, so pass groupings coarsest first.
    """
    levels = list(levels)
    if not levels:
        raise DataError("levels must contain at least one grouping")
    best: tuple[int, SelectionResult] | None = None
    for li, grouping in enumerate(levels):
        level_ds = aggregate_columns(ds, grouping)
        sel = sparse_select(
            level_ds, size=size, lam=lam, config=config,
            n_lambdas=n_lambdas, lambda_min_ratio=lambda_min_ratio,
        )
        if best is None or sel.weighted_rss < best[1].weighted_rss:
            best = (li, sel)
    return best
