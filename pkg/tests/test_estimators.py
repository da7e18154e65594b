"""Test the count-ratio estimators and the Gaussian fits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats
from scipy.integrate import quad

from pdc_g2.errors import DegenerateEstimate, EmptyRecord, FitDiverged, NoHeralds, WindowTooWide
from pdc_g2.estimators.counts import (
    accumulate,
    bootstrap_stderr,
    default_tau_grid,
    default_window,
    g2_curve,
    g2_from_counts,
    g2_integrated,
    heralded_curves,
    heralded_g2_from_counts,
    k_from_click_probabilities,
    k_from_click_rates,
)
from pdc_g2.estimators.fit import fit_gaussian, fit_report, intensity_histogram, jackknife_c
from pdc_g2.figures import fig5_frames
from pdc_g2.model.gaussian import build_biphoton
from pdc_g2.model.params import PPKTP_TAU_O, ppktp, pump_duration_for_t
from pdc_g2.model.schmidt import schmidt_spectrum
from pdc_g2.sim.detection import (
    D1,
    D2,
    D3,
    DetectionRecord,
    ExperimentConfig,
    click_probabilities,
    generating_function,
    pair_number_distribution,
    run_experiment,
    thin_record,
)

TRUTH = {"repetition_rate": 10.0, "n_pulses": 4, "jitter_sigma": 0.0}


@pytest.fixture
def tiny_record():
    """
    Four pulses, 100 ns apart: a same-bin coincidence in pulse 0, a lone D1
    in pulse 1, a heralded D2 in pulse 2 and a heralded pair 10 ns apart in
    pulse 3.
    """
    pulse = np.array([0, 0, 1, 2, 2, 3, 3, 3])
    det = np.array([D1, D2, D1, D2, D3, D1, D2, D3], dtype=np.int8)
    t = np.array([0.2, 0.3, 105.2, 200.4, np.nan, 300.7, 310.7, np.nan])
    return DetectionRecord(pulse, det, t, truth=dict(TRUTH))


def test_defaults():
    assert default_window(100.0) == 0.5
    grid = default_tau_grid(100.0, 0.5)
    assert grid[0] == -25.0 and grid[-1] == 25.0 and len(grid) == 101


def test_hand_counted_g2(tiny_record):
    acc = accumulate(tiny_record, 1.0, [0.0, 10.0])
    np.testing.assert_array_equal(acc.n12.sum(axis=1), [1, 1])
    np.testing.assert_array_equal(acc.n12h.sum(axis=1), [0, 1])
    assert acc.n_heralds == 2
    curve = g2_curve(acc)
    np.testing.assert_allclose(curve.value, [1.0, 2.0])
    sh, dh = heralded_curves(acc)
    np.testing.assert_allclose(sh.value, [0.0, 4.0])
    np.testing.assert_allclose(dh.value, [0.0, 2.0])


def test_whole_pulse_tallies(tiny_record):
    acc = accumulate(tiny_record, 1.0, [0.0])
    assert (acc.pulses_d1, acc.pulses_d2, acc.pulses_d1d2) == (3, 3, 2)
    assert (acc.pulses_d1d3, acc.pulses_d2d3, acc.pulses_d1d2d3) == (1, 2, 1)


def test_integrated_below_one_is_degenerate(tiny_record):
    with pytest.raises(DegenerateEstimate) as e:
        g2_integrated(tiny_record)
    assert e.value.value == pytest.approx(8.0 / 9.0)


def test_merge_over_disjoint_pulses(tiny_record):
    whole = accumulate(tiny_record, 1.0, [0.0, 10.0])
    merged = accumulate(tiny_record, 1.0, [0.0, 10.0], (0, 2)).merge(
        accumulate(tiny_record, 1.0, [0.0, 10.0], (2, 4)))
    assert merged.n_pulses == whole.n_pulses
    for name in ("n1", "n1h", "n2", "n2h", "n12", "n12h"):
        np.testing.assert_array_equal(getattr(merged, name), getattr(whole, name))
    assert merged.pulses_d1d2d3 == whole.pulses_d1d2d3


def test_merge_rejects_other_window(tiny_record):
    with pytest.raises(ValueError):
        accumulate(tiny_record, 1.0, [0.0]).merge(accumulate(tiny_record, 2.0, [0.0]))


@pytest.mark.parametrize("window,grid", [(200.0, [0.0]), (0.0, [0.0]), (1.0, [0.0, 151.0])])
def test_window_checks(tiny_record, window, grid):
    with pytest.raises(WindowTooWide):
        accumulate(tiny_record, window, grid)


def test_cross_period_delay(tiny_record):
    # D2 of pulse 3 shifted by one period lands in pulse 2, which has no D1
    acc = accumulate(tiny_record, 1.0, [100.0])
    assert acc.n12.sum() == 0


def test_no_heralds(tiny_record):
    keep = tiny_record.detector != D3
    rec = DetectionRecord(tiny_record.pulse_index[keep], tiny_record.detector[keep],
                          tiny_record.time_ns[keep], truth=dict(TRUTH))
    with pytest.raises(NoHeralds):
        heralded_g2_from_counts(rec, 1.0, [0.0])


def test_delay_without_overlap_is_nan(tiny_record):
    curve = g2_curve(accumulate(tiny_record, 1.0, [0.0, 40.0]))
    assert curve.value[0] == 1.0
    assert np.isnan(curve.value[1]) and np.isnan(curve.stderr[1])


def test_empty_and_bare_records(tiny_record):
    empty = DetectionRecord(np.empty(0, np.int64), np.empty(0, np.int8), np.empty(0), truth=dict(TRUTH))
    with pytest.raises(EmptyRecord):
        g2_from_counts(empty)
    with pytest.raises(EmptyRecord):
        fit_report(empty)
    bare = DetectionRecord(tiny_record.pulse_index, tiny_record.detector, tiny_record.time_ns)
    with pytest.raises(EmptyRecord):
        accumulate(bare, 1.0, [0.0])


@pytest.mark.parametrize("t_o", [1.0 + 1e-6, 0.5, 0.2])
@pytest.mark.parametrize("mu", [0.05, 0.2])
def test_k_from_exact_click_probabilities(t_o, mu):
    s = schmidt_spectrum(ppktp(pump_duration_for_t(t_o, PPKTP_TAU_O)), tail=1e-15)
    half, zero = generating_function(s, mu, 0.5), generating_function(s, mu, 0.0)
    mu_est, k_est = k_from_click_probabilities(half, half, zero)
    assert mu_est == pytest.approx(mu, rel=1e-6)
    assert k_est == pytest.approx(s.k_number, rel=1e-4)


def test_k_from_click_probabilities_rejects():
    with pytest.raises(DegenerateEstimate):
        k_from_click_probabilities(1.0, 0.9, 0.8)
    # independent detectors: no curvature
    with pytest.raises(DegenerateEstimate):
        k_from_click_probabilities(0.9, 0.9, 0.81)


@pytest.mark.parametrize("mu", [0.01, 0.05, 0.3])
def test_k_from_single_mode_click_probabilities(mu):
    # one thermal mode: E[s^m] = 1 / (1 + mu (1 - s))
    half = 1.0 / (1.0 + 0.5 * mu)
    mu_est, k_est = k_from_click_probabilities(half, half, 1.0 / (1.0 + mu))
    assert mu_est == pytest.approx(mu, rel=1e-9)
    assert k_est == pytest.approx(1.0, abs=1e-6)


@settings(deadline=None, max_examples=50)
@given(floats(min_value=0.01, max_value=0.3), floats(min_value=1.0, max_value=20.0))
def test_k_from_geometric_spectrum(mu, k):
    r = (k - 1.0) / (k + 1.0)
    lam = (2.0 / (k + 1.0)) * r ** np.arange(4000)
    half = np.prod(1.0 / (1.0 + 0.5 * mu * lam))
    zero = np.prod(1.0 / (1.0 + mu * lam))
    mu_est, k_est = k_from_click_probabilities(half, half, zero)
    assert mu_est == pytest.approx(mu, rel=1e-6)
    assert k_est == pytest.approx(k, rel=1e-4)


def test_jackknife_needs_fittable_blocks(tiny_record):
    assert math.isnan(jackknife_c(tiny_record, 1.0, [0.0]))


@pytest.mark.parametrize("with_baseline", [False, True])
def test_fit_gaussian_recovers_width(with_baseline):
    x = np.linspace(-10, 10, 81)
    base = 0.5 if with_baseline else 0.0
    y = 3.0 * np.exp(-x ** 2 / (2 * 1.7 ** 2)) + base
    fit = fit_gaussian(x, y, with_baseline=with_baseline)
    assert fit.sigma == pytest.approx(1.7, rel=1e-4)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-4)
    assert fit.baseline == pytest.approx(base, abs=1e-4)


def test_fit_gaussian_rejects_flat_and_short():
    with pytest.raises(FitDiverged):
        fit_gaussian(np.linspace(-1, 1, 10), np.zeros(10))
    with pytest.raises(FitDiverged):
        fit_gaussian([0.0, 1.0], [1.0, 0.5])


def test_intensity_histogram_covers_one_period(tiny_record):
    centers, counts = intensity_histogram(tiny_record, 1.0)
    assert len(centers) == 100 and counts.sum() == 6
    assert centers[0] == pytest.approx(-49.5)


@pytest.fixture(scope="module")
def record_30ps():
    cfg = ExperimentConfig(biphoton=build_biphoton(ppktp(30.0)), mean_pairs=0.1,
                           n_pulses=10_000_000, seed=2024)
    return run_experiment(cfg)


def _binned_bunching(window, delta_tau):
    """Bunching term exp(-u^2 / delta_tau^2) averaged over the triangular same-bin kernel."""
    num, _ = quad(lambda u: (1.0 - abs(u) / window) * math.exp(-u * u / delta_tau ** 2), -window, window)
    return num / window


@pytest.mark.slow
def test_g2_peak_at_zero_delay(record_30ps):
    window = 2.0
    curve = g2_from_counts(record_30ps, window, np.array([-24.0, -22.0, -2.0, 0.0, 2.0, 22.0, 24.0]))
    b = build_biphoton(ppktp(30.0))
    # M = 1000 turns ps into ns one to one
    expected = 1.0 + _binned_bunching(window, b.delta_tau_o)
    assert expected == pytest.approx(2.0, abs=0.03)
    assert abs(curve.value[3] - expected) < 5 * curve.stderr[3]
    for i in (0, 1, 5, 6):
        assert abs(curve.value[i] - 1.0) < 5 * curve.stderr[i]


@pytest.mark.slow
def test_integrated_matches_exact_clicks(record_30ps):
    b = build_biphoton(ppktp(30.0))
    exact = click_probabilities(schmidt_spectrum(b.params, tail=1e-12), 0.1)
    g2_int, k_int = g2_integrated(record_30ps)
    n = record_30ps.n_pulses
    # relative error of g2_int is dominated by the coincidence count
    sigma = exact["g2_int"] / math.sqrt(n * exact["d1d2"])
    assert abs(g2_int - exact["g2_int"]) < 5 * sigma
    assert abs(k_int - 1.0 / (exact["g2_int"] - 1.0)) < 5 * sigma / (exact["g2_int"] - 1.0) ** 2


@pytest.mark.slow
def test_fit_report_recovers_coherence(record_30ps, tmp_path):
    report = fit_report(record_30ps)
    b = build_biphoton(ppktp(30.0))
    assert report.delta_t_m == pytest.approx(1000.0 * b.delta_t_o * 1e-3, rel=0.03)
    assert 0.0 < report.c_est_stderr < 0.05 * b.coherence_c
    assert abs(report.c_est - b.coherence_c) < max(0.05 * b.coherence_c, 4 * report.c_est_stderr)
    report.to_json(tmp_path / "estimate.json")
    report.write_csv(tmp_path)
    assert (tmp_path / "g2.csv").exists() and (tmp_path / "intensity.csv").exists()


@pytest.mark.slow
def test_thinning_keeps_coherence(record_30ps):
    full = fit_report(record_30ps)
    thin = fit_report(thin_record(record_30ps, 0.5, seed=3))
    # the full record contains the thinned one: the difference has about 0.87 of the thinned error
    assert abs(thin.c_est - full.c_est) < 3 * thin.c_est_stderr
    assert thin.c_est_stderr > full.c_est_stderr


@pytest.mark.slow
@pytest.mark.parametrize("k", [1.0, 2.0, 5.0])
def test_k_from_click_rates_counts_modes(k):
    t_o = k - math.sqrt(k * k - 1.0) if k > 1 else 1.0 / 1.017
    b = build_biphoton(ppktp(pump_duration_for_t(t_o, PPKTP_TAU_O)))
    mu, n = 0.3, 4_000_000
    rec = run_experiment(ExperimentConfig(biphoton=b, mean_pairs=mu, n_pulses=n, seed=int(10 * k)))
    mu_est, k_est = k_from_click_rates(rec)
    # sigma of the curvature mu^2/K is about 4 sqrt(q12 / n), q12 the two-detector pulse fraction
    q12 = accumulate(rec, 1.0, [0.0]).pulses_d1d2 / n
    sigma_k = b.k_number ** 2 * 4.0 * math.sqrt(q12 / n) / mu ** 2
    assert k_est == pytest.approx(b.k_number, rel=0.1)
    assert abs(k_est - b.k_number) < 5 * sigma_k
    assert mu_est == pytest.approx(mu, rel=0.02)


@pytest.mark.slow
def test_heralded_curves_follow_click_model():
    b = build_biphoton(ppktp(30.0))
    cfg = ExperimentConfig(biphoton=b, mean_pairs=0.2, n_pulses=4_000_000, seed=99)
    rec = run_experiment(cfg)
    plateau_tau = [-30.0, -25.0, -20.0, -15.0, 15.0, 20.0, 25.0, 30.0]
    grid = np.array([-100.0, 0.0, 100.0] + plateau_tau)
    df = fig5_frames(rec, 1.0, grid)["heralded"]
    peak, cross, plateau = df.iloc[1], df.iloc[[0, 2]], df.iloc[3:]

    p_any = 1.0 - pair_number_distribution(schmidt_spectrum(b.params, tail=1e-12), 0.2)[0]
    np.testing.assert_allclose(plateau["g2_dh_exact"], p_any, rtol=1e-3)
    np.testing.assert_allclose(plateau["g2_dh_analytic"], 1.1 * 0.2 / 1.44, rtol=1e-3)

    assert abs(peak["g2_dh_mc"] - peak["g2_dh_exact"]) < 5 * peak["g2_dh_stderr"]
    assert abs(peak["g2_sh_mc"] - peak["g2_sh_exact"]) < 5 * peak["g2_sh_stderr"]
    assert peak["g2_dh_mc"] > plateau["g2_dh_mc"].max()
    for _, row in cross.iterrows():
        assert abs(row["g2_dh_mc"] - 1.0) < 5 * row["g2_dh_stderr"]
        assert abs(row["g2_sh_mc"] - 1.0) < 5 * row["g2_sh_stderr"]

    level = plateau["g2_dh_mc"].mean()
    level_err = math.sqrt((plateau["g2_dh_stderr"] ** 2).sum()) / len(plateau)
    assert abs(level - p_any) < 5 * level_err
    # the closed form at P_b = mu sits below the latching plateau P(m >= 1)
    assert level - plateau["g2_dh_analytic"].iloc[0] > 5 * level_err


@pytest.mark.slow
def test_bootstrap_errors_have_curve_shape(record_30ps):
    grid = np.array([-20.0, 0.0, 20.0])
    errs = bootstrap_stderr(record_30ps, 1.0, grid, replicas=20, blocks=16)
    assert errs["g2"].shape == (3,)
    assert np.all(errs["g2"] > 0)
