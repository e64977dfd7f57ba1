"""Synthetic and semi-synthetic experiment drivers.

Three data sources: a linear outcome model with covariate-modulated effects,
an independent-outcomes model (pure shift on a few columns), and a day-long
glucose trace generator for time-in-range experiments. On top of those sit
replicated recovery, power, and semi-synthetic power experiments, all seeded
and reproducible, with optional process-level parallelism over replicates.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .data import TrialDataset, aggregate_columns
from .errors import DataError, HdteError
from .estimators import adjusted_estimate
from .inference import SelectionSpec, hotelling_pvalue, multi_split, z_pvalues
from .selection import baseline_select, path_selections
from .wlasso import EnetConfig

__all__ = [
    "LinearModelConfig",
    "LinearModel",
    "LinearModelGenerator",
    "IndependentOutcomesGenerator",
    "TraceExperimentConfig",
    "ExperimentMetrics",
    "gen_linear_model",
    "gen_independent_outcomes",
    "gen_glucose_traces",
    "apply_window_effect",
    "compute_tir",
    "window_level_groupings",
    "run_recovery_experiment",
    "run_power_experiment",
    "run_semisynth_experiment",
    "write_metrics_csv",
]


# ---------------------------------------------------------------------------
# linear outcome model


@dataclass(frozen=True)
class LinearModelConfig:
    """Settings for the linear outcome generator.

    Outcomes follow ``Y_ij = x_i' b_j + t_i * (alpha + x_i' d_j) * 1{j < s_tau}
    + eps_ij`` with standard normal covariates and noise, Bernoulli(``pi``)
    treatment, ``b_j`` entries uniform on [-1, 1] and ``d_j`` entries uniform
    on [0, 1]. ``observe_covariates`` limits how many covariate columns the
    returned dataset exposes (generation always uses all ``m``).
    """

    n: int
    p: int
    m: int
    s_tau: int
    alpha: float
    pi: float
    seed: int
    observe_covariates: int | None = None

    def __post_init__(self):
        if self.n < 4:
            raise DataError(f"n must be >= 4, got {self.n}")
        if self.p < 1 or self.m < 0:
            raise DataError(f"need p >= 1 and m >= 0, got p={self.p}, m={self.m}")
        if not 0 <= self.s_tau <= self.p:
            raise DataError(f"s_tau must be in [0, p={self.p}], got {self.s_tau}")
        if not 0.0 < self.pi < 1.0:
            raise DataError(f"pi must be in (0, 1), got {self.pi}")
        if self.observe_covariates is not None and not 0 <= self.observe_covariates <= self.m:
            raise DataError(
                f"observe_covariates must be in [0, m={self.m}], "
                f"got {self.observe_covariates}"
            )


@dataclass(frozen=True)
class LinearModel:
    """Drawn coefficients of one linear-model instance."""

    config: LinearModelConfig
    beta: np.ndarray   # (p, m)
    delta: np.ndarray  # (p, m)

    def sample(self, rng: np.random.Generator, n: int | None = None
               ) -> tuple[TrialDataset, np.ndarray]:
        """Draw one dataset from this model. Draw order: covariates,
        treatments, noise."""
        cfg = self.config
        n = cfg.n if n is None else n
        x = rng.standard_normal((n, cfg.m))
        t = (rng.random(n) < cfg.pi).astype(np.int64)
        eps = rng.standard_normal((n, cfg.p))
        y = x @ self.beta.T if cfg.m else np.zeros((n, cfg.p))
        if cfg.s_tau:
            lift = np.full((n, cfg.s_tau), cfg.alpha)
            if cfg.m:
                lift = lift + x @ self.delta[: cfg.s_tau].T
            y[:, : cfg.s_tau] += t[:, None] * lift
        y += eps
        observe = cfg.m if cfg.observe_covariates is None else cfg.observe_covariates
        covariates = x[:, :observe] if observe else None
        return TrialDataset(t, y, covariates), np.arange(cfg.s_tau)


def draw_linear_model(config: LinearModelConfig, rng: np.random.Generator) -> LinearModel:
    """Draw model coefficients. Draw order: slope matrix, then effect slopes."""
    beta = rng.uniform(-1.0, 1.0, (config.p, config.m))
    delta = rng.uniform(0.0, 1.0, (config.p, config.m))
    return LinearModel(config, beta, delta)


@dataclass(frozen=True)
class LinearModelGenerator:
    """Replicate factory: fresh coefficients and data per replicate seed."""

    config: LinearModelConfig

    def replicate(self, seed) -> tuple[TrialDataset, np.ndarray]:
        rng = np.random.default_rng(seed)
        return draw_linear_model(self.config, rng).sample(rng)

    def replicate_pair(self, seed, n_second: int
                       ) -> tuple[TrialDataset, TrialDataset, np.ndarray]:
        """Two datasets sharing one coefficient draw (selection set, then an
        independent evaluation set from the same model)."""
        rng = np.random.default_rng(seed)
        model = draw_linear_model(self.config, rng)
        ds1, s_true = model.sample(rng)
        ds2, _ = model.sample(rng, n_second)
        return ds1, ds2, s_true


def gen_linear_model(config: LinearModelConfig) -> tuple[TrialDataset, np.ndarray]:
    """One seeded dataset plus the affected column indices."""
    return LinearModelGenerator(config).replicate(config.seed)


@dataclass(frozen=True)
class IndependentOutcomesGenerator:
    """Mean-shift model: ``Y_ij = alpha * t_i * 1{j < s_star} + eps_ij`` with
    independent standard normal noise and no covariates."""

    n: int
    d: int
    s_star: int
    alpha: float
    pi: float

    def __post_init__(self):
        if not 0 <= self.s_star <= self.d:
            raise DataError(f"s_star must be in [0, d={self.d}], got {self.s_star}")
        if not 0.0 < self.pi < 1.0:
            raise DataError(f"pi must be in (0, 1), got {self.pi}")

    def replicate(self, seed) -> tuple[TrialDataset, np.ndarray]:
        rng = np.random.default_rng(seed)
        t = (rng.random(self.n) < self.pi).astype(np.int64)
        y = rng.standard_normal((self.n, self.d))
        y[:, : self.s_star] += self.alpha * t[:, None]
        return TrialDataset(t, y), np.arange(self.s_star)

    def replicate_pair(self, seed, n_second: int
                       ) -> tuple[TrialDataset, TrialDataset, np.ndarray]:
        rng = np.random.default_rng(seed)
        t1 = (rng.random(self.n) < self.pi).astype(np.int64)
        y1 = rng.standard_normal((self.n, self.d))
        y1[:, : self.s_star] += self.alpha * t1[:, None]
        t2 = (rng.random(n_second) < self.pi).astype(np.int64)
        y2 = rng.standard_normal((n_second, self.d))
        y2[:, : self.s_star] += self.alpha * t2[:, None]
        return TrialDataset(t1, y1), TrialDataset(t2, y2), np.arange(self.s_star)


def gen_independent_outcomes(n: int, d: int, s_star: int, alpha: float,
                             pi: float, seed: int) -> tuple[TrialDataset, np.ndarray]:
    """One seeded mean-shift dataset plus the affected column indices."""
    return IndependentOutcomesGenerator(n, d, s_star, alpha, pi).replicate(seed)


# ---------------------------------------------------------------------------
# glucose traces and time-in-range

# Trace shape constants: baseline spread across units, a week-specific level
# shift, three meal excursions, and smooth autocorrelated noise partially
# shared between the two weeks. Chosen so week-over-week time-in-range
# correlation lands near 0.6.
_BASE_MEAN = 135.0
_BASE_SD = 20.0
_WEEK_LEVEL_SD = 13.0
_MEAL_MINUTES = (450.0, 750.0, 1110.0)      # 07:30, 12:30, 18:30
_MEAL_SD_MINUTES = (40.0, 50.0, 45.0)
_MEAL_AMP_MEAN = 55.0
_MEAL_AMP_SD = 18.0
_MEAL_WEEK_JITTER = 8.0
_NOISE_PHI = 0.9
_NOISE_SD = 16.0
_NOISE_SHARED_FRAC = 0.5
_TRACE_CLIP = (40.0, 400.0)
_AR_BURN_IN = 60


@dataclass(frozen=True)
class TraceExperimentConfig:
    """Settings for the semi-synthetic time-in-range experiment.

    Traces cover one day on a regular grid (288 points = 5 minutes apart),
    two weeks per unit: week 1 supplies covariates, week 2 outcomes. The
    treatment subtracts ``effect_magnitude`` from week-2 glucose inside a
    random grid-aligned interval of ``effect_duration_minutes``.
    """

    n: int
    effect_magnitude: float
    seed: int
    points_per_day: int = 288
    effect_duration_minutes: int = 120
    glucose_range: tuple[float, float] = (70.0, 180.0)
    level_window_minutes: tuple[int, ...] = (240, 120, 60)

    def __post_init__(self):
        if self.n < 4:
            raise DataError(f"n must be >= 4, got {self.n}")
        if self.points_per_day < 1 or 1440 % self.points_per_day != 0:
            raise DataError(
                f"points_per_day must divide the day evenly, got {self.points_per_day}"
            )
        step = 1440 // self.points_per_day
        if self.effect_duration_minutes <= 0 or self.effect_duration_minutes % step != 0:
            raise DataError(
                f"effect duration must be a positive multiple of the "
                f"{step}-minute grid, got {self.effect_duration_minutes}"
            )
        if not self.level_window_minutes:
            raise DataError("need at least one window level")
        finest = min(self.level_window_minutes)
        for w in self.level_window_minutes:
            if w <= 0 or 1440 % w != 0 or w % step != 0 or w % finest != 0:
                raise DataError(
                    f"window of {w} minutes must divide the day, align to the "
                    f"{step}-minute grid, and be a multiple of the finest level"
                )
        lo, hi = self.glucose_range
        if not lo < hi:
            raise DataError(f"glucose_range must be increasing, got {self.glucose_range}")


def _ar_noise(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Smooth noise with unit marginal variance along the last axis."""
    length = shape[-1] + _AR_BURN_IN
    white = rng.standard_normal(shape[:-1] + (length,)) * np.sqrt(1.0 - _NOISE_PHI**2)
    smooth = lfilter([1.0], [1.0, -_NOISE_PHI], white, axis=-1)
    return smooth[..., _AR_BURN_IN:]


def _glucose_traces(rng: np.random.Generator, n: int, points: int) -> np.ndarray:
    minutes = np.arange(points) * (1440.0 / points)
    base = rng.normal(_BASE_MEAN, _BASE_SD, (n, 1, 1))
    base = base + rng.normal(0.0, _WEEK_LEVEL_SD, (n, 1, 2))
    amp_unit = np.maximum(rng.normal(_MEAL_AMP_MEAN, _MEAL_AMP_SD, (n, 3)), 0.0)
    amp = np.maximum(
        amp_unit[:, :, None] + rng.normal(0.0, _MEAL_WEEK_JITTER, (n, 3, 2)), 0.0
    )
    shapes = np.stack([
        np.exp(-0.5 * ((minutes - mid) / sd) ** 2)
        for mid, sd in zip(_MEAL_MINUTES, _MEAL_SD_MINUTES)
    ])  # (3, points)
    bumps = np.einsum("nkw,kp->npw", amp, shapes)
    shared = _ar_noise(rng, (n, points))
    weekly = _ar_noise(rng, (n, 2, points)).transpose(0, 2, 1)
    noise = _NOISE_SD * (
        np.sqrt(_NOISE_SHARED_FRAC) * shared[:, :, None]
        + np.sqrt(1.0 - _NOISE_SHARED_FRAC) * weekly
    )
    traces = base + bumps + noise
    return np.clip(traces, *_TRACE_CLIP)


def gen_glucose_traces(config: TraceExperimentConfig) -> np.ndarray:
    """Two weeks of day-averaged glucose traces, shape ``(n, points, 2)``.

    Week-over-week structure (baseline level, meal amplitudes, and half the
    noise variance are shared within a unit) gives day-level time-in-range a
    correlation of roughly 0.6 between the weeks. Values are clipped to the
    physiological range [40, 400].
    """
    rng = np.random.default_rng(config.seed)
    return _glucose_traces(rng, config.n, config.points_per_day)


def apply_window_effect(traces: np.ndarray, interval: tuple[int, int],
                        magnitude: float, treatments) -> np.ndarray:
    """Subtract ``magnitude`` from treated units' week-2 glucose inside
    ``interval`` (minutes, half-open, grid-aligned). Returns a new array."""
    traces = np.asarray(traces, dtype=np.float64)
    if traces.ndim != 3 or traces.shape[2] != 2:
        raise DataError(f"traces must be (n, points, 2), got shape {traces.shape}")
    points = traces.shape[1]
    step = 1440 // points
    start, end = interval
    if not 0 <= start < end <= 1440:
        raise DataError(f"interval must satisfy 0 <= start < end <= 1440, got {interval}")
    if start % step or end % step:
        raise DataError(f"interval {interval} is not aligned to the {step}-minute grid")
    t = np.asarray(treatments)
    if t.shape != (traces.shape[0],):
        raise DataError(
            f"treatments shape {t.shape} does not match {traces.shape[0]} traces"
        )
    out = traces.copy()
    out[t == 1, start // step : end // step, 1] -= magnitude
    return out


def compute_tir(trace, window_minutes: int, glucose_range=(70.0, 180.0)) -> np.ndarray:
    """Fraction of readings inside ``glucose_range`` (inclusive) per window.

    ``trace`` has day points along its last axis; the result replaces that
    axis with one entry per ``window_minutes`` window.
    """
    arr = np.asarray(trace, dtype=np.float64)
    points = arr.shape[-1]
    if window_minutes <= 0 or 1440 % window_minutes != 0:
        raise DataError(f"window of {window_minutes} minutes must divide the day")
    n_windows = 1440 // window_minutes
    if points % n_windows != 0:
        raise DataError(
            f"{points} points per day cannot split into {n_windows} equal windows"
        )
    lo, hi = glucose_range
    in_range = ((arr >= lo) & (arr <= hi)).astype(np.float64)
    return in_range.reshape(arr.shape[:-1] + (n_windows, points // n_windows)).mean(axis=-1)


def window_level_groupings(level_window_minutes) -> list[tuple[tuple[int, ...], ...]]:
    """Column groupings of the finest-window layout, one per level.

    The base columns are the windows of the finest (smallest) duration; a
    coarser level's window averages its consecutive base windows. Levels are
    returned in the order given (list coarsest first for downstream
    tie-breaking)."""
    durations = tuple(level_window_minutes)
    if not durations:
        raise DataError("need at least one window level")
    finest = min(durations)
    n_base = 1440 // finest
    levels = []
    for d in durations:
        if d % finest != 0 or 1440 % d != 0:
            raise DataError(
                f"window of {d} minutes must divide the day and be a multiple "
                f"of the finest level ({finest} minutes)"
            )
        factor = d // finest
        levels.append(tuple(
            tuple(range(k * factor, (k + 1) * factor)) for k in range(1440 // d)
        ))
    return levels


# ---------------------------------------------------------------------------
# replicated experiments


@dataclass(frozen=True)
class ExperimentMetrics:
    """Aggregated results of one method over replicates. Failed replicates
    are excluded from the averages and counted in ``failures``."""

    method: str
    replicates: int
    failures: int = 0
    recovery_rate_by_size: dict[int, float] | None = None
    power_by_size: dict[int, float] | None = None
    power: float | None = None


def _method_key(method, position: int) -> str:
    if isinstance(method, str):
        return method
    return getattr(method, "__name__", f"custom{position}")


def _select_all_sizes(ds: TrialDataset, method, sizes, estimator: str,
                      lasso_config: EnetConfig, enet_config: EnetConfig,
                      n_lambdas: int, lambda_min_ratio: float | None
                      ) -> dict[int, tuple[int, ...]]:
    """Selections per size for one method on one dataset."""
    if callable(method):
        return {s: tuple(int(j) for j in method(ds, s)) for s in sizes}
    if method in ("baseline", "baseline_dim"):
        ranking = estimator if (method == "baseline" and ds.covariates is not None) else "dim"
        ranked = baseline_select(adjusted_estimate(ds, ranking), max(sizes))
        return {s: ranked.selected[:s] for s in sizes}
    if method in ("lasso", "enet"):
        config = lasso_config if method == "lasso" else enet_config
        picks = path_selections(ds, sizes, config, n_lambdas, lambda_min_ratio)
        return {s: picks[s].selected for s in sizes}
    raise DataError(f"unknown method {method!r}")


def _recovery_replicate(args):
    (generator, methods, sizes, estimator, lasso_config, enet_config,
     n_lambdas, lambda_min_ratio, child) = args
    ds, s_true = generator.replicate(child)
    truth = set(int(j) for j in s_true)
    out = {}
    for pos, method in enumerate(methods):
        key = _method_key(method, pos)
        try:
            picks = _select_all_sizes(
                ds, method, sizes, estimator, lasso_config, enet_config,
                n_lambdas, lambda_min_ratio,
            )
            out[key] = {s: len(truth & set(sel)) / s for s, sel in picks.items()}
        except HdteError:
            out[key] = None
    return out


def _power_replicate(args):
    (generator, methods, sizes, estimator, test_estimator, alpha_level,
     n_second, lasso_config, enet_config, n_lambdas, lambda_min_ratio, child) = args
    ds1, ds2, _ = generator.replicate_pair(child, n_second)
    out = {}
    for pos, method in enumerate(methods):
        key = _method_key(method, pos)
        try:
            picks = _select_all_sizes(
                ds1, method, sizes, estimator, lasso_config, enet_config,
                n_lambdas, lambda_min_ratio,
            )
            rejections = {}
            for s, sel in picks.items():
                est = adjusted_estimate(ds2, test_estimator, sel)
                rejections[s] = float(hotelling_pvalue(est) <= alpha_level)
            out[key] = rejections
        except HdteError:
            out[key] = None
    return out


def _run_replicates(worker: Callable, args_list: list, n_jobs: int) -> list:
    if n_jobs <= 1:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        chunk = max(1, len(args_list) // (4 * n_jobs))
        return list(pool.map(worker, args_list, chunksize=chunk))


def _aggregate_by_size(raw: list, methods, replicates: int) -> dict[str, dict]:
    collected = {}
    for pos, method in enumerate(methods):
        key = _method_key(method, pos)
        rows = [r[key] for r in raw if r[key] is not None]
        failures = replicates - len(rows)
        by_size = None
        if rows:
            sizes = rows[0].keys()
            by_size = {s: float(np.mean([r[s] for r in rows])) for s in sizes}
        collected[key] = (by_size, failures)
    return collected


def run_recovery_experiment(generator, methods, sizes, replicates: int, seed: int, *,
                            estimator: str = "cuped",
                            lasso_config: EnetConfig = EnetConfig(),
                            enet_config: EnetConfig = EnetConfig(l1_ratio=0.5),
                            n_lambdas: int = 100,
                            lambda_min_ratio: float | None = None,
                            n_jobs: int = 1) -> dict[str, ExperimentMetrics]:
    """Mean recovery rate ``|selected ∩ true| / s`` per method and size.

    ``methods`` mixes the built-ins (``"baseline"``, ``"baseline_dim"``,
    ``"lasso"``, ``"enet"``) with custom callables ``(dataset, size) ->
    indices``. ``estimator`` sets the covariate adjustment used by the
    baseline ranking when covariates are present. Replicate seeds derive from
    ``seed``; a failed replicate is skipped and counted, not fatal.
    """
    children = np.random.SeedSequence(seed).spawn(replicates)
    sizes = sorted(set(int(s) for s in sizes))
    args = [
        (generator, tuple(methods), tuple(sizes), estimator, lasso_config,
         enet_config, n_lambdas, lambda_min_ratio, child)
        for child in children
    ]
    raw = _run_replicates(_recovery_replicate, args, n_jobs)
    out = {}
    for key, (by_size, failures) in _aggregate_by_size(raw, methods, replicates).items():
        out[key] = ExperimentMetrics(
            key, replicates, failures, recovery_rate_by_size=by_size
        )
    return out


def run_power_experiment(generator, methods, sizes, replicates: int, seed: int, *,
                         second_sample_size: int = 500,
                         estimator: str = "cuped",
                         test_estimator: str = "lin",
                         alpha_level: float = 0.05,
                         lasso_config: EnetConfig = EnetConfig(),
                         enet_config: EnetConfig = EnetConfig(l1_ratio=0.5),
                         n_lambdas: int = 100,
                         lambda_min_ratio: float | None = None,
                         n_jobs: int = 1) -> dict[str, ExperimentMetrics]:
    """Rejection frequency of the group test at ``alpha_level`` per method
    and size.

    Each replicate draws a selection dataset and an independent evaluation
    dataset of ``second_sample_size`` rows from the same coefficient draw;
    selection happens on the first, the quadratic-form test on the second
    restricted to the selected columns (``test_estimator`` adjustment).
    """
    children = np.random.SeedSequence(seed).spawn(replicates)
    sizes = sorted(set(int(s) for s in sizes))
    args = [
        (generator, tuple(methods), tuple(sizes), estimator, test_estimator,
         alpha_level, second_sample_size, lasso_config, enet_config,
         n_lambdas, lambda_min_ratio, child)
        for child in children
    ]
    raw = _run_replicates(_power_replicate, args, n_jobs)
    out = {}
    for key, (by_size, failures) in _aggregate_by_size(raw, methods, replicates).items():
        out[key] = ExperimentMetrics(key, replicates, failures, power_by_size=by_size)
    return out


def _semisynth_replicate(args):
    (config, B, gamma, select_size, estimator, alpha_level, child) = args
    rng = np.random.default_rng(child)
    traces = _glucose_traces(rng, config.n, config.points_per_day)
    t = (rng.random(config.n) < 0.5).astype(np.int64)
    step = 1440 // config.points_per_day
    latest_start = 1440 - config.effect_duration_minutes
    start = int(rng.integers(0, latest_start // step + 1)) * step
    interval = (start, start + config.effect_duration_minutes)
    traces = apply_window_effect(traces, interval, config.effect_magnitude, t)
    finest = min(config.level_window_minutes)
    outcomes = compute_tir(traces[:, :, 1], finest, config.glucose_range)
    covariates = compute_tir(traces[:, :, 0], finest, config.glucose_range)
    ds = TrialDataset(t, outcomes, covariates)
    groupings = window_level_groupings(config.level_window_minutes)
    multi_split_seed = int(rng.integers(2**31))
    out = {}
    for duration in config.level_window_minutes:
        if duration == finest and len(config.level_window_minutes) > 1:
            continue  # the finest level is the proposed method's territory
        grouping = groupings[config.level_window_minutes.index(duration)]
        level_ds = aggregate_columns(ds, grouping)
        try:
            est = adjusted_estimate(level_ds, estimator)
            p_min = float(z_pvalues(est, correction=level_ds.p, two_sided=True).min())
            out[f"fixed_{duration}min"] = float(p_min <= alpha_level)
        except HdteError:
            out[f"fixed_{duration}min"] = None
    try:
        report = multi_split(
            ds, B=B, gamma=gamma, method=estimator,
            sel=SelectionSpec(method="lasso", size=select_size, levels=groupings),
            seed=multi_split_seed,
        )
        out["proposed"] = float(report.group_aggregated <= alpha_level)
    except HdteError:
        out["proposed"] = None
    return out


def run_semisynth_experiment(config: TraceExperimentConfig, replicates: int,
                             seed: int, *, B: int = 20, gamma: float = 0.05,
                             select_size: int = 1, estimator: str = "lin",
                             alpha_level: float = 0.05,
                             n_jobs: int = 1) -> dict[str, ExperimentMetrics]:
    """Rejection frequency of fixed-window testing versus the
    multi-resolution split pipeline on glucose traces.

    Per replicate: generate traces, randomize treatment (Bernoulli 1/2),
    plant the effect in a random grid-aligned interval, build time-in-range
    outcome and covariate matrices at the finest level, then run (a)
    fixed-window multiplicity-corrected per-window tests at every coarser
    level on the full sample and (b) the multi-resolution multi-split
    pipeline. Week 1 supplies covariates for adjustment throughout.
    """
    children = np.random.SeedSequence(seed).spawn(replicates)
    args = [
        (config, B, gamma, select_size, estimator, alpha_level, child)
        for child in children
    ]
    raw = _run_replicates(_semisynth_replicate, args, n_jobs)
    names = list(raw[0].keys()) if raw else []
    out = {}
    for name in names:
        values = [r[name] for r in raw if r[name] is not None]
        failures = replicates - len(values)
        power = float(np.mean(values)) if values else None
        out[name] = ExperimentMetrics(name, replicates, failures, power=power)
    return out


def write_metrics_csv(results: dict[str, ExperimentMetrics], path) -> None:
    """Long-format CSV: one row per method, size, and metric."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "size", "metric", "value", "replicates", "failures"])
        for key, metrics in results.items():
            for field_name, label in (
                ("recovery_rate_by_size", "recovery_rate"),
                ("power_by_size", "power"),
            ):
                by_size = getattr(metrics, field_name)
                if by_size is None:
                    continue
                for s in sorted(by_size):
                    writer.writerow([
                        key, s, label, repr(float(by_size[s])),
                        metrics.replicates, metrics.failures,
                    ])
            if metrics.power is not None:
                writer.writerow([
                    key, "", "power", repr(float(metrics.power)),
                    metrics.replicates, metrics.failures,
                ])
