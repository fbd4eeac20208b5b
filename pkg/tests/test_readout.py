import math

import numpy as np
import pytest

from volterra_filters import InvalidArgument, InvalidModel, WhiteNoise, continuous_linear_filter, error_bounds, r_optimal_rule
from volterra_filters.readout import (
    ReadoutModel,
    best_threshold,
    default_threshold_grid,
    evaluate_readout,
    fredholm_residual,
    fredholm_rule,
    lrt_posterior,
    lrt_statistic,
    lrt_threshold,
    monte_carlo_pe,
    readout_bounds,
    readout_hypothesis_moments,
    r_optimal_statistic,
    simulate_path,
    simulate_records,
    solve_fredholm_filter,
    telegraph_mean_cov,
    tune_threshold,
    wilson_interval,
)


def coarse(snr=100.0, dt=0.01, **kw):
    return ReadoutModel.from_snr(snr, dt_over_T1=dt, **kw)


def test_model_properties():
    m = ReadoutModel.from_snr(1000)
    assert m.snr == pytest.approx(1000)
    assert m.snr_db == pytest.approx(30)
    assert m.n_steps == 5000
    assert m.grid[-1] == pytest.approx(5 - 1e-3)
    assert m.noise_var == pytest.approx(1000)
    with pytest.raises(InvalidModel):
        ReadoutModel(1.0, 1.0, 0.0, 5.0, 0.01)
    with pytest.raises(InvalidModel):
        ReadoutModel(1.0, 1.0, 1.0, 5.0, 0.01, 0.7, 0.7)


def test_telegraph_values():
    mean, cov = telegraph_mean_cov(coarse(), np.array([0.0, 1.0, 2.0]))
    assert mean[1] == pytest.approx(math.exp(-1))
    assert cov[1, 1] == pytest.approx(0.23254, abs=1e-5)
    assert cov[0, 0] == 0.0
    assert cov[1, 2] == pytest.approx(math.exp(-2) - math.exp(-3))
    np.testing.assert_allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov)[0] >= -1e-14


def test_paths_match_telegraph_moments():
    m = coarse(dt=0.25)
    rng = np.random.default_rng(0)
    n = 100_000
    paths = np.array([simulate_path(m, rng) for _ in range(n)])
    assert set(np.unique(paths)) <= {0.0, 1.0}
    assert np.all(np.diff(paths, axis=1) <= 0)
    assert np.all(paths[:, 0] == 1)
    mean, cov = telegraph_mean_cov(m)
    se = np.sqrt(mean * (1 - mean) / n) + 1e-12
    assert np.all(np.abs(paths.mean(axis=0) - mean) <= 5 * se)
    emp = np.cov(paths.T, bias=True)
    assert np.abs(emp - cov).max() < 5 * 0.5 / np.sqrt(n)


def test_record_moments():
    m = coarse(snr=25.0, dt=0.05)
    n = 4000
    y1 = simulate_records(m, 1, range(n), seed=3)
    y0 = simulate_records(m, 0, range(n), seed=3)
    mean, _ = telegraph_mean_cov(m)
    sd = math.sqrt(m.noise_var + m.S**2 * 0.25)
    assert np.all(np.abs(y1.mean(axis=0) - m.S * mean) < 5 * sd / math.sqrt(n))
    assert abs(y0.var() - m.noise_var) < 5 * m.noise_var * math.sqrt(2 / y0.size)


def test_fredholm_high_noise_limit():
    m = ReadoutModel.from_snr(1e-4, dt_over_T1=0.01)
    h = solve_fredholm_filter(m)
    mean, _ = telegraph_mean_cov(m)
    np.testing.assert_allclose(h, m.S / (2 * m.Pi) * mean, rtol=1e-4)


@pytest.mark.parametrize("snr", [1, 10, 200, 1000])
def test_fredholm_residual(snr):
    m = coarse(snr=snr, dt=0.005)
    assert fredholm_residual(m, solve_fredholm_filter(m)) <= 1e-8


def test_filter_shape_against_snr():
    times = []
    for snr in (1, 10, 50, 200):
        m = coarse(snr=snr, dt=0.005)
        h = 2 * m.Pi * solve_fredholm_filter(m) / m.S
        assert h[0] > 0
        assert np.all(np.diff(h) < 0)
        times.append(h.sum() * m.dt / h[0])
    assert np.all(np.diff(times) < 0)
    assert times[0] < 1.0  # shorter than the prior mean decay


def test_fredholm_matches_generic_continuous_filter():
    m = coarse(snr=50.0, dt=0.01)
    T1, S, Pi, pi1 = m.T1, m.S, m.Pi, m.pi1

    def cov(t, s):
        return np.exp(-np.maximum(t, s) / T1) - np.exp(-(t + s) / T1)

    def mixture(t, s):
        return pi1 * S**2 * cov(t, s)

    def cross(t, s):
        return 0.5 * S * np.exp(-s / T1) + 0.0 * t

    h1, _ = continuous_linear_filter(lambda t, s: 1.0 + 0 * t, cross, mixture + WhiteNoise(Pi), m.grid, x_grid=[0.0])
    h = solve_fredholm_filter(m)
    np.testing.assert_allclose(h1[0], h, rtol=1e-6)


def test_fredholm_rule_matches_generic_rule():
    m = coarse(snr=80.0, dt=0.025, pi0=0.3)
    hm = readout_hypothesis_moments(m)
    generic, R_tilde = r_optimal_rule(hm)
    rule = fredholm_rule(m)
    np.testing.assert_allclose(rule.H, generic.H, rtol=1e-8)
    assert rule.h0 == pytest.approx(generic.h0, rel=1e-8)
    Q, R = readout_bounds(m)
    Qg, Rg = error_bounds(generic, hm)
    assert R == pytest.approx(R_tilde, rel=1e-8)
    assert (Q, R) == pytest.approx((Qg, Rg), rel=1e-8)
    y = simulate_records(m, 1, range(5), seed=1)
    np.testing.assert_allclose(r_optimal_statistic(solve_fredholm_filter(m), m, y), rule.statistic(y), atol=1e-10)


def test_statistic_centering():
    m = coarse()
    h = solve_fredholm_filter(m)
    mean, _ = telegraph_mean_cov(m)
    assert r_optimal_statistic(h, m, 0.5 * m.S * mean) == pytest.approx(0.0, abs=1e-12)
    assert r_optimal_statistic(np.zeros(m.n_steps), m, mean) == 0.0
    with pytest.raises(InvalidArgument):
        r_optimal_statistic(h, m, mean[:-1])


def test_statistic_means_are_symmetric():
    m = coarse(snr=20.0, dt=0.02)
    h = solve_fredholm_filter(m)
    n = 4000
    l0 = r_optimal_statistic(h, m, simulate_records(m, 0, range(n), 5))
    l1 = r_optimal_statistic(h, m, simulate_records(m, 1, range(n), 5))
    se = math.sqrt((l0.var() + l1.var()) / n)
    assert abs(l0.mean() + l1.mean()) < 5 * se
    assert l1.mean() > 0 > l0.mean()


def test_lrt_trivial_cases():
    m = coarse(snr=0.0)
    y = simulate_records(m, 0, range(3), 0)
    np.testing.assert_array_equal(lrt_statistic(m, y), 0.0)
    m = coarse()
    y = simulate_records(m, 1, range(3), 0)
    assert np.all(lrt_posterior(m, y)[:, 0] == 1.0)
    assert lrt_threshold(m) == 0.0
    assert lrt_threshold(coarse(pi0=0.25)) == pytest.approx(-math.log(3))
    with pytest.raises(InvalidArgument):
        lrt_statistic(m, y[:, :-1])
    with pytest.raises(InvalidArgument):
        lrt_statistic(m, y, method="exact")


def test_lrt_single_record_shape():
    m = coarse()
    y = simulate_records(m, 1, [0], 0)
    assert np.ndim(lrt_statistic(m, y[0])) == 0
    assert lrt_statistic(m, y[0]) == pytest.approx(lrt_statistic(m, y)[0])


def test_lrt_ito_close_to_normalizer_at_fine_grid():
    m = ReadoutModel.from_snr(10.0, dt_over_T1=1e-3)
    y = np.vstack([simulate_records(m, h, range(50), 2) for h in (0, 1)])
    a, b = lrt_statistic(m, y), lrt_statistic(m, y, method="normalizer")
    assert np.abs(a - b).max() < 0.02 * max(1.0, np.abs(b).max())


def test_lrt_no_overflow_at_high_snr():
    m = ReadoutModel.from_snr(1e4, dt_over_T1=1e-3)
    y = np.vstack([simulate_records(m, h, range(5), 2) for h in (0, 1)])
    lam = lrt_statistic(m, y)
    assert np.all(np.isfinite(lam))
    assert np.all(lam[:5] < 0) and np.all(lam[5:] > 0)


def test_lrt_is_log_likelihood_ratio():
    # E_0[exp(lambda)] = 1 for a likelihood ratio; check on the normaliser form
    m = coarse(snr=4.0, dt=0.05)
    y0 = simulate_records(m, 0, range(20_000), 9)
    w = np.exp(lrt_statistic(m, y0, method="normalizer"))
    assert abs(w.mean() - 1) < 5 * w.std() / math.sqrt(len(w))


def test_perfect_separation():
    m = ReadoutModel(1.0, 1.0, 1e-8, 5.0, 0.01)
    h = solve_fredholm_filter(m)
    norm = lambda y: lrt_statistic(m, y, method="normalizer")  # noqa: E731
    assert monte_carlo_pe(norm, 0.0, m, 1000, 0).pe_hat == 0.0
    assert monte_carlo_pe(lambda y: r_optimal_statistic(h, m, y), 0.0, m, 1000, 0).pe_hat == 0.0


def test_ito_sum_lags_one_step():
    # a decay right after the first sample is seen one step late by the
    # left-endpoint sum, so the two gains cancel
    m = ReadoutModel(1.0, 1.0, 1e-8, 1.0, 0.01)
    y = np.zeros(m.n_steps)
    y[0] = 1.0
    assert lrt_statistic(m, y) == pytest.approx(0.0, abs=1e-6 * m.dt / m.Pi)
    assert lrt_statistic(m, y, method="normalizer") > 1e5


def test_monte_carlo_determinism_and_batching():
    m = coarse(snr=30.0)
    h = solve_fredholm_filter(m)
    stat = lambda y: r_optimal_statistic(h, m, y)  # noqa: E731
    a = monte_carlo_pe(stat, 0.0, m, 2000, 11)
    b = monte_carlo_pe(stat, 0.0, m, 2000, 11, batch_size=77)
    c = monte_carlo_pe(stat, 0.0, m, 2000, 12)
    assert a == b
    assert a != c
    assert a.trials == 2000 and a.n_per_hypothesis == 1000
    assert a.ci_low <= a.pe_hat <= a.ci_high
    with pytest.raises(InvalidArgument):
        monte_carlo_pe(stat, 0.0, m, 999, 0)


def test_wilson_interval():
    lo, hi = wilson_interval(0.0, 1000)
    assert lo == pytest.approx(0.0, abs=1e-15) and 0 < hi < 0.005
    lo, hi = wilson_interval(0.5, 10_000)
    assert (lo, hi) == pytest.approx((0.5 - 0.0098, 0.5 + 0.0098), abs=1e-4)


def test_best_threshold_symmetric_shift():
    rng = np.random.default_rng(0)
    l0, l1 = rng.normal(-1, 1, 100_000), rng.normal(1, 1, 100_000)
    thr = best_threshold(l0, l1, default_threshold_grid(1.0), 0.5, 0.5)
    assert abs(thr) < 0.05
    # unequal priors move the threshold by ln(pi0/pi1)/2 for unit shift
    thr = best_threshold(l0, l1, np.linspace(-1, 1, 401), 0.8, 0.2)
    assert thr == pytest.approx(math.log(4) / 2, abs=0.05)


def test_tune_with_single_point_grid():
    m = coarse(snr=30.0)
    h = solve_fredholm_filter(m)
    stat = lambda y: r_optimal_statistic(h, m, y)  # noqa: E731
    thr, res = tune_threshold(stat, m, 2000, [0.0], 4)
    assert thr == 0.0
    assert res == monte_carlo_pe(stat, 0.0, m, 2000, 4)
    with pytest.raises(InvalidArgument):
        tune_threshold(stat, m, 2000, [], 4)


def test_threshold_grid():
    g = default_threshold_grid(2.0)
    assert len(g) == 121
    assert g[60] == 0.0
    np.testing.assert_allclose(g, -g[::-1])
    assert g[-1] == pytest.approx(20.0) and g[61] == pytest.approx(2e-3)


@pytest.mark.parametrize("snr", [10.0, 100.0])
def test_lrt_not_worse_and_bounds_hold(snr):
    m = ReadoutModel.from_snr(snr, dt_over_T1=0.005)
    ev = evaluate_readout(m, 4000, seed=1, tune=True)
    se = math.hypot(ev.lrt.std_error, ev.ropt.std_error)
    assert ev.lrt.pe_hat <= ev.ropt.pe_hat + 3 * se
    assert ev.ropt.pe_hat <= ev.Q + 3 * ev.ropt.std_error
    assert ev.Q <= ev.R_tilde
    assert ev.tuned is not None and ev.tuned.trials == 4000
