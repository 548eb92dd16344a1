"""Survival estimation, tail fits, and the multiprocess ensemble driver."""

import numpy as np
import pytest

from hklab.engine import StoppingTimeSample
from hklab.ensemble import (
    MIN_FIT_POINTS,
    SurvivalCurve,
    auto_tail_window,
    censored_mean,
    censored_mean_growth,
    events_from_samples,
    fit_tail,
    hit_fraction,
    run_ensemble,
    summarize,
    survival_from_events,
    survival_from_samples,
    survival_grid,
)
from hklab.model import InitialCondition, ModelConfig
from hklab.noise import NoiseSpec


def _sample(run_index, t_hit, horizon):
    hit = t_hit is not None
    return StoppingTimeSample(
        run_index=run_index,
        hit=hit,
        t_hit=t_hit,
        horizon=horizon,
        d_v_at_end=0.1 if hit else 2.0,
        base_seed=0,
    )


def _curve(times, values):
    times = np.asarray(times, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    return SurvivalCurve(
        times=times,
        values=values,
        n_at_risk=(values * 1000).astype(np.int64),
        runs=1000,
        horizon=int(times[-1]),
        censored=0,
    )


def test_survival_grid_shape():
    g = survival_grid(100)
    assert g[0] == 0 and g[-1] == 100
    assert np.all(np.diff(g) > 0)
    # Geometric spacing: ratios of consecutive interior points stay near 1.2.
    assert {1, 2, 3, 4, 5, 6} <= set(g.tolist())
    assert 96 in g  # ceil(1.2^25)
    big = survival_grid(10**6)
    assert big.size < 100


def test_survival_estimator_counts():
    horizon = 100
    samples = [
        _sample(0, 3, horizon),
        _sample(1, 3, horizon),
        _sample(2, 50, horizon),
        _sample(3, None, horizon),
    ]
    curve = survival_from_samples(samples)
    assert curve.values[curve.times == 0][0] == 1.0
    # S(3) counts runs with min(T, horizon) >= 3: all four.
    assert curve.values[curve.times == 3][0] == 1.0
    assert curve.values[curve.times == 4][0] == 0.5
    assert curve.values[curve.times == 47][0] == 0.5
    assert curve.values[curve.times == 56][0] == 0.25
    assert curve.values[curve.times == 100][0] == 0.25
    assert curve.censored == 1
    assert np.all(np.diff(curve.values) <= 0)
    np.testing.assert_array_equal(curve.n_at_risk, (curve.values * 4).astype(np.int64))


def test_events_reclassify_at_smaller_horizon():
    samples = [_sample(0, 5, 100), _sample(1, 80, 100), _sample(2, None, 100)]
    t_end, hit = events_from_samples(samples, 50)
    np.testing.assert_array_equal(t_end, [5, 50, 50])
    np.testing.assert_array_equal(hit, [True, False, False])
    with pytest.raises(ValueError, match="exceeds sampled horizon"):
        events_from_samples(samples, 200)


def test_censored_mean_and_hit_fraction():
    assert censored_mean([2, 4, 6]) == 4.0
    assert hit_fraction([True, False, True, False]) == 0.5


def test_geometric_tail_prefers_semilog():
    times = survival_grid(200)[1:]
    curve = _curve(times, 0.9**times)
    fit = fit_tail(curve, (1, 200))
    assert fit.semilog_slope == pytest.approx(np.log(0.9), rel=1e-9)
    assert fit.semilog_r2 == pytest.approx(1.0)
    assert fit.semilog_r2 > fit.loglog_r2
    assert fit.hint == "geometric-like"


def test_power_tail_prefers_loglog():
    times = survival_grid(10**6)[1:]
    curve = _curve(times, times.astype(float) ** -0.5)
    fit = fit_tail(curve, (1, 10**6))
    assert fit.loglog_slope == pytest.approx(-0.5, rel=1e-9)
    assert fit.loglog_r2 == pytest.approx(1.0)
    assert fit.loglog_r2 > fit.semilog_r2
    assert fit.hint == "heavy-tail"


def test_degenerate_tail():
    times = survival_grid(200)[1:]
    curve = _curve(times, np.full(times.size, 0.4))
    fit = fit_tail(curve, (1, 200))
    assert fit.degenerate and fit.hint == "degenerate"


def test_fit_requires_enough_points():
    times = survival_grid(8)[1:]
    curve = _curve(times, 0.9**times)
    with pytest.raises(ValueError, match=f">= {MIN_FIT_POINTS}"):
        fit_tail(curve, (1, 8))


def test_auto_window_median_crossing():
    times = survival_grid(10**5)[1:]
    values = 0.999**times
    curve = _curve(times, values)
    lo, hi = auto_tail_window(curve)
    # Median crossing of 0.999^t is near t = 693.
    assert values[times < lo].min() > 0.5 >= values[times >= lo].max()
    assert hi == times[-1]
    fit = fit_tail(curve, (lo, hi))
    assert fit.hint == "geometric-like"


def test_auto_window_none_when_sparse():
    curve = _curve([1, 2, 3], [1.0, 0.5, 0.25])
    assert auto_tail_window(curve) is None


def _tiny_cfg():
    return ModelConfig(
        n=4,
        d=1,
        epsilon=0.5,
        space_mode="bounded",
        noise=NoiseSpec("uniform_ball", 0.25),
        initial=InitialCondition("uniform_box", seed=3),
    )


def test_ensemble_worker_count_invariance():
    cfg = _tiny_cfg()
    horizon = 3000
    one = run_ensemble(cfg, 12, horizon, base_seed=5, workers=1, extra_after_hit=20)
    four = run_ensemble(cfg, 12, horizon, base_seed=5, workers=4, extra_after_hit=20)
    assert [(s.run_index, s.t_hit, s.d_v_at_end) for s in one.samples] == [
        (s.run_index, s.t_hit, s.d_v_at_end) for s in four.samples
    ]
    np.testing.assert_array_equal(one.absorb_ok, four.absorb_ok)
    assert one.summary.hit_fraction == four.summary.hit_fraction
    assert one.summary.censored_mean == four.summary.censored_mean


def test_ensemble_summary_fields():
    cfg = _tiny_cfg()
    res = run_ensemble(cfg, 10, 5000, base_seed=5)
    s = res.summary
    assert s.runs == 10 and s.horizon == 5000 and s.base_seed == 5
    assert 0.0 <= s.hit_fraction <= 1.0
    assert 0.0 < s.censored_mean <= 5000
    assert s.survival.values[0] == 1.0
    assert not s.incomplete
    assert res.absorb_ok is None


def test_ensemble_rejects_zero_runs():
    with pytest.raises(ValueError, match="at least one run"):
        run_ensemble(_tiny_cfg(), 0, 10, 0)


def test_growth_points_match_fresh_short_run():
    # Statistics at a smaller horizon must be recovered exactly from the
    # long pass, because each run extends rather than resamples.
    cfg = _tiny_cfg()
    long = run_ensemble(cfg, 15, 600, base_seed=9)
    short = run_ensemble(cfg, 15, 150, base_seed=9)
    points = censored_mean_growth(long.samples, [150, 600])
    assert points[0].horizon == 150
    assert points[0].censored_mean == short.summary.censored_mean
    assert points[0].hit_fraction == short.summary.hit_fraction
    assert points[1].censored_mean >= points[0].censored_mean
    assert points[1].hit_fraction >= points[0].hit_fraction


def test_summarize_incomplete_flag():
    samples = [_sample(0, 3, 100), _sample(1, None, 100)]
    s = summarize(samples, 100, base_seed=0, incomplete=True)
    assert s.incomplete
    assert s.hit_fraction == 0.5


def test_survival_from_events_validates():
    with pytest.raises(ValueError, match="at least one run"):
        survival_from_events(np.empty(0, dtype=np.int64), np.empty(0, dtype=bool), 10)
