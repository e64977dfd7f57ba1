import numpy as np
import pytest

from hdte.errors import DataError
from hdte.simharness import (
    ExperimentMetrics,
    IndependentOutcomesGenerator,
    LinearModelConfig,
    LinearModelGenerator,
    TraceExperimentConfig,
    apply_window_effect,
    compute_tir,
    draw_linear_model,
    gen_glucose_traces,
    gen_independent_outcomes,
    gen_linear_model,
    run_power_experiment,
    run_recovery_experiment,
    run_semisynth_experiment,
    window_level_groupings,
    write_metrics_csv,
)


def pick_first(ds, size):
    return tuple(range(size))


def always_fails(ds, size):
    raise DataError("nope")


def test_linear_model_shapes_and_determinism():
    cfg = LinearModelConfig(n=50, p=7, m=3, s_tau=2, alpha=1.0, pi=0.5, seed=11)
    ds, s_true = gen_linear_model(cfg)
    assert ds.n == 50 and ds.p == 7 and ds.m == 3
    np.testing.assert_array_equal(s_true, [0, 1])
    assert set(np.unique(ds.treatments)) <= {0, 1}
    ds2, _ = gen_linear_model(cfg)
    np.testing.assert_array_equal(ds.outcomes, ds2.outcomes)
    np.testing.assert_array_equal(ds.covariates, ds2.covariates)


def test_linear_model_effect_magnitude():
    """With m = 0 the treated-minus-control gap on affected columns is alpha."""
    cfg = LinearModelConfig(n=4000, p=3, m=0, s_tau=2, alpha=4.0, pi=0.5, seed=0)
    ds, _ = gen_linear_model(cfg)
    t = ds.treatments.astype(bool)
    gaps = ds.outcomes[t].mean(axis=0) - ds.outcomes[~t].mean(axis=0)
    assert gaps[0] == pytest.approx(4.0, abs=0.2)
    assert gaps[1] == pytest.approx(4.0, abs=0.2)
    assert gaps[2] == pytest.approx(0.0, abs=0.2)
    assert ds.treatments.mean() == pytest.approx(0.5, abs=0.05)


def test_linear_model_observe_covariates_truncates():
    cfg = LinearModelConfig(n=40, p=4, m=6, s_tau=1, alpha=1.0, pi=0.5, seed=3,
                            observe_covariates=2)
    full = LinearModelConfig(n=40, p=4, m=6, s_tau=1, alpha=1.0, pi=0.5, seed=3)
    ds, _ = gen_linear_model(cfg)
    ds_full, _ = gen_linear_model(full)
    assert ds.m == 2
    np.testing.assert_array_equal(ds.covariates, ds_full.covariates[:, :2])
    np.testing.assert_array_equal(ds.outcomes, ds_full.outcomes)


def test_replicate_pair_shares_the_coefficient_draw():
    cfg = LinearModelConfig(n=30, p=5, m=2, s_tau=2, alpha=1.0, pi=0.5, seed=0)
    gen = LinearModelGenerator(cfg)
    ds1, ds2, s_true = gen.replicate_pair(7, n_second=20)
    single, _ = gen.replicate(7)
    np.testing.assert_array_equal(ds1.outcomes, single.outcomes)
    # reconstruct the rng stream to pin the second sample to the same model
    rng = np.random.default_rng(7)
    model = draw_linear_model(cfg, rng)
    model.sample(rng)
    expect2, _ = model.sample(rng, 20)
    np.testing.assert_array_equal(ds2.outcomes, expect2.outcomes)
    assert ds2.n == 20


def test_linear_model_config_validation():
    with pytest.raises(DataError, match="n must be"):
        LinearModelConfig(n=3, p=2, m=0, s_tau=1, alpha=1.0, pi=0.5, seed=0)
    with pytest.raises(DataError, match="s_tau"):
        LinearModelConfig(n=10, p=2, m=0, s_tau=3, alpha=1.0, pi=0.5, seed=0)
    with pytest.raises(DataError, match="pi"):
        LinearModelConfig(n=10, p=2, m=0, s_tau=1, alpha=1.0, pi=1.0, seed=0)
    with pytest.raises(DataError, match="observe_covariates"):
        LinearModelConfig(n=10, p=2, m=2, s_tau=1, alpha=1.0, pi=0.5, seed=0,
                          observe_covariates=5)


def test_independent_outcomes_generator():
    ds, s_true = gen_independent_outcomes(n=3000, d=5, s_star=2, alpha=0.8,
                                          pi=0.5, seed=4)
    np.testing.assert_array_equal(s_true, [0, 1])
    assert ds.covariates is None
    t = ds.treatments.astype(bool)
    gap = ds.outcomes[t, 0].mean() - ds.outcomes[~t, 0].mean()
    assert gap == pytest.approx(0.8, abs=0.15)
    with pytest.raises(DataError, match="s_star"):
        IndependentOutcomesGenerator(n=20, d=3, s_star=4, alpha=1.0, pi=0.5)


def test_glucose_traces_shape_and_range():
    config = TraceExperimentConfig(n=40, effect_magnitude=10.0, seed=8)
    traces = gen_glucose_traces(config)
    assert traces.shape == (40, 288, 2)
    assert traces.min() >= 40.0 and traces.max() <= 400.0
    np.testing.assert_array_equal(traces, gen_glucose_traces(config))


def test_glucose_week_over_week_structure():
    """Day-level time-in-range should correlate across the two weeks without
    being a copy."""
    config = TraceExperimentConfig(n=600, effect_magnitude=0.0, seed=5)
    traces = gen_glucose_traces(config)
    tir1 = compute_tir(traces[:, :, 0], 1440)[:, 0]
    tir2 = compute_tir(traces[:, :, 1], 1440)[:, 0]
    corr = np.corrcoef(tir1, tir2)[0, 1]
    assert 0.45 < corr < 0.75
    assert 0.70 < tir1.mean() < 0.90


def test_compute_tir_hand_example():
    trace = np.array([80.0, 200.0, 150.0, 100.0])  # 4 points, 360 min apart
    tir = compute_tir(trace, 720)
    np.testing.assert_allclose(tir, [0.5, 1.0])
    # range bounds are inclusive on both sides
    edges = np.array([70.0, 180.0, 69.9, 180.1])
    np.testing.assert_allclose(compute_tir(edges, 1440), [0.5])
    with pytest.raises(DataError, match="divide the day"):
        compute_tir(trace, 700)
    with pytest.raises(DataError, match="equal windows"):
        compute_tir(np.zeros(6), 360)


def test_apply_window_effect_placement():
    traces = np.full((2, 288, 2), 150.0)
    t = np.array([1, 0])
    out = apply_window_effect(traces, (720, 840), 30.0, t)
    assert traces[0, 144, 1] == 150.0  # input untouched
    week2 = out[0, :, 1]
    np.testing.assert_allclose(week2[144:168], 120.0)
    assert week2[143] == 150.0 and week2[168] == 150.0
    np.testing.assert_allclose(out[0, :, 0], 150.0)   # week 1 untouched
    np.testing.assert_allclose(out[1], 150.0)         # control untouched


def test_apply_window_effect_validation():
    traces = np.full((2, 288, 2), 150.0)
    t = np.array([1, 0])
    with pytest.raises(DataError, match="aligned"):
        apply_window_effect(traces, (721, 840), 10.0, t)
    with pytest.raises(DataError, match="start < end"):
        apply_window_effect(traces, (840, 720), 10.0, t)
    with pytest.raises(DataError, match="does not match"):
        apply_window_effect(traces, (720, 840), 10.0, np.array([1, 0, 1]))
    with pytest.raises(DataError, match="must be"):
        apply_window_effect(np.zeros((2, 288)), (720, 840), 10.0, t)


def test_window_level_groupings():
    levels = window_level_groupings((240, 120, 60))
    assert [len(level) for level in levels] == [6, 12, 24]
    assert levels[0][0] == (0, 1, 2, 3)
    assert levels[1][1] == (2, 3)
    assert levels[2][5] == (5,)
    for level in levels:
        flat = [j for group in level for j in group]
        assert sorted(flat) == list(range(24))
    with pytest.raises(DataError, match="multiple"):
        window_level_groupings((240, 90))


def test_trace_config_validation():
    with pytest.raises(DataError, match="grid"):
        TraceExperimentConfig(n=20, effect_magnitude=1.0, seed=0,
                              effect_duration_minutes=7)
    with pytest.raises(DataError, match="divide the day"):
        TraceExperimentConfig(n=20, effect_magnitude=1.0, seed=0,
                              points_per_day=100)
    with pytest.raises(DataError, match="increasing"):
        TraceExperimentConfig(n=20, effect_magnitude=1.0, seed=0,
                              glucose_range=(180.0, 70.0))
    with pytest.raises(DataError, match="window"):
        TraceExperimentConfig(n=20, effect_magnitude=1.0, seed=0,
                              level_window_minutes=(240, 90))


def test_recovery_experiment_smoke():
    gen = IndependentOutcomesGenerator(n=150, d=8, s_star=2, alpha=1.2, pi=0.5)
    results = run_recovery_experiment(
        gen, ("baseline_dim", "lasso", pick_first), (1, 2), replicates=8, seed=1
    )
    assert set(results) == {"baseline_dim", "lasso", "pick_first"}
    for metrics in results.values():
        assert metrics.failures == 0
        for rate in metrics.recovery_rate_by_size.values():
            assert 0.0 <= rate <= 1.0
    # pick_first returns exactly the planted columns
    assert results["pick_first"].recovery_rate_by_size == {1: 1.0, 2: 1.0}
    assert results["lasso"].recovery_rate_by_size[2] >= 0.75
    again = run_recovery_experiment(
        gen, ("baseline_dim", "lasso", pick_first), (1, 2), replicates=8, seed=1
    )
    assert again["lasso"].recovery_rate_by_size == results["lasso"].recovery_rate_by_size


def test_recovery_experiment_counts_failures():
    gen = IndependentOutcomesGenerator(n=60, d=4, s_star=1, alpha=1.0, pi=0.5)
    results = run_recovery_experiment(gen, (always_fails,), (1,), replicates=5, seed=2)
    metrics = results["always_fails"]
    assert metrics.failures == 5
    assert metrics.recovery_rate_by_size is None


def test_recovery_experiment_parallel_matches_serial():
    gen = IndependentOutcomesGenerator(n=100, d=6, s_star=2, alpha=1.0, pi=0.5)
    serial = run_recovery_experiment(gen, ("lasso",), (1, 2), replicates=6, seed=9)
    parallel = run_recovery_experiment(gen, ("lasso",), (1, 2), replicates=6,
                                       seed=9, n_jobs=2)
    assert serial["lasso"].recovery_rate_by_size == parallel["lasso"].recovery_rate_by_size


def test_power_experiment_smoke():
    strong = IndependentOutcomesGenerator(n=200, d=6, s_star=1, alpha=1.0, pi=0.5)
    null = IndependentOutcomesGenerator(n=200, d=6, s_star=0, alpha=0.0, pi=0.5)
    res_strong = run_power_experiment(
        strong, ("lasso",), (1,), replicates=10, seed=3,
        second_sample_size=200, test_estimator="dim",
    )
    res_null = run_power_experiment(
        null, ("lasso",), (1,), replicates=10, seed=3,
        second_sample_size=200, test_estimator="dim",
    )
    assert res_strong["lasso"].power_by_size[1] >= 0.8
    assert res_null["lasso"].power_by_size[1] <= 0.3
    assert res_strong["lasso"].recovery_rate_by_size is None


def test_semisynth_experiment_smoke():
    config = TraceExperimentConfig(n=80, effect_magnitude=25.0, seed=0)
    results = run_semisynth_experiment(
        config, replicates=3, seed=13, B=4, gamma=0.25, estimator="dim"
    )
    assert set(results) == {"fixed_240min", "fixed_120min", "proposed"}
    for metrics in results.values():
        assert metrics.replicates == 3
        if metrics.power is not None:
            assert 0.0 <= metrics.power <= 1.0
    again = run_semisynth_experiment(
        config, replicates=3, seed=13, B=4, gamma=0.25, estimator="dim"
    )
    assert again["proposed"].power == results["proposed"].power


def test_write_metrics_csv(tmp_path):
    results = {
        "lasso": ExperimentMetrics("lasso", 4, 1,
                                   recovery_rate_by_size={1: 0.5, 2: 0.75}),
        "proposed": ExperimentMetrics("proposed", 4, 0, power=0.25),
    }
    path = tmp_path / "metrics.csv"
    write_metrics_csv(results, path)
    lines = path.read_text().splitlines()
    assert lines == [
        "method,size,metric,value,replicates,failures",
        "lasso,1,recovery_rate,0.5,4,1",
        "lasso,2,recovery_rate,0.75,4,1",
        "proposed,,power,0.25,4,0",
    ]
