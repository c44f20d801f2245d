"""Nonlinear least-squares kit: LM core, decay fits, peak fits."""

from __future__ import annotations

import numpy as np
import pytest

from donorsim.fitkit import (
    FitResult,
    RankDeficiencyError,
    fit_peaks,
    fit_stretched_exp,
    levenberg_marquardt,
    numeric_jacobian,
    peak_model,
    stretched_exp_model,
)


# --- LM core -----------------------------------------------------------------

def test_lm_solves_linear_problem_immediately():
    a = np.array([[2.0, 1.0], [1.0, 3.0], [0.5, -1.0], [4.0, 0.2]])
    b = np.array([1.0, 2.0, 0.3, -1.0])
    exact, *_ = np.linalg.lstsq(a, b, rcond=None)
    p, rss, converged, _, trace = levenberg_marquardt(lambda p: a @ p - b, [0.0, 0.0])
    assert converged
    assert np.allclose(p, exact, atol=1e-8)
    assert trace == sorted(trace, reverse=True)


def test_lm_rss_trace_is_monotone_on_rosenbrock():
    def residual(p):
        return np.array([10.0 * (p[1] - p[0] ** 2), 1.0 - p[0]])

    p, rss, converged, _, trace = levenberg_marquardt(residual, [-1.2, 1.0])
    assert np.all(np.diff(trace) <= 0.0)
    assert np.allclose(p, [1.0, 1.0], atol=1e-6)
    assert rss < 1e-12


def test_lm_rejects_nonfinite_start():
    with pytest.raises(ValueError):
        levenberg_marquardt(lambda p: np.array([np.inf]), [1.0])


def test_numeric_jacobian_matches_analytic():
    def residual(p):
        return np.array([p[0] ** 2 * p[1], np.sin(p[0]) + 3.0 * p[1]])

    p = np.array([0.7, 1.3])
    jac = numeric_jacobian(residual, p)
    expected = np.array([
        [2 * p[0] * p[1], p[0] ** 2],
        [np.cos(p[0]), 3.0],
    ])
    assert np.allclose(jac, expected, atol=1e-5)


# --- stretched-exponential fits -------------------------------------------------

def decay_data(amplitude=0.97, t2=8.0, n=1.6, noise=0.0, seed=0, points=40):
    taus = np.linspace(0.1, 12.0, points)
    y = stretched_exp_model(taus, amplitude, t2, n)
    if noise:
        y = y + np.random.default_rng(seed).normal(0.0, noise, size=taus.size)
    return taus, y


def test_stretched_fit_noiseless_is_exact():
    taus, y = decay_data()
    fit = fit_stretched_exp(taus, y)
    assert fit.converged
    assert fit.names == ("amplitude", "t2_s", "n")
    assert fit["amplitude"] == pytest.approx(0.97, rel=1e-7)
    assert fit["t2_s"] == pytest.approx(8.0, rel=1e-7)
    assert fit["n"] == pytest.approx(1.6, rel=1e-7)
    assert fit.rss < 1e-14


def test_stretched_fit_recovers_under_noise_within_errorbars():
    taus, y = decay_data(noise=0.01, seed=42, points=120)
    fit = fit_stretched_exp(taus, y)
    assert fit.converged
    for name, truth in (("amplitude", 0.97), ("t2_s", 8.0), ("n", 1.6)):
        err = fit.error(name)
        assert np.isfinite(err) and err > 0
        assert abs(fit[name] - truth) < 5 * err


def test_stretched_fit_fix_n():
    taus, y = decay_data(n=2.0)
    fit = fit_stretched_exp(taus, y, fix_n=2.0)
    assert fit.names == ("amplitude", "t2_s")
    assert fit["t2_s"] == pytest.approx(8.0, rel=1e-8)
    with pytest.raises(ValueError):
        fit_stretched_exp(taus, y, fix_n=-1.0)


def test_stretched_fit_accepts_explicit_initial():
    taus, y = decay_data()
    fit = fit_stretched_exp(taus, y, initial=[0.5, 20.0, 1.0])
    assert fit["t2_s"] == pytest.approx(8.0, rel=1e-6)
    with pytest.raises(ValueError):
        fit_stretched_exp(taus, y, initial=[0.5, 20.0])  # needs 3 when n is free


def test_stretched_fit_input_validation():
    with pytest.raises(RankDeficiencyError):
        fit_stretched_exp([1.0, 2.0, 3.0], [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        fit_stretched_exp([1.0, 2.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_stretched_exp([1.0, 2.0, 3.0], [1.0, np.nan, 0.2])


def test_fit_result_lookup():
    taus, y = decay_data()
    fit = fit_stretched_exp(taus, y)
    assert isinstance(fit, FitResult)
    assert fit["t2_s"] == fit.params[1]
    with pytest.raises(ValueError):
        fit["no_such_name"]


# --- peak fits -------------------------------------------------------------------

def two_peak_data(shape="lorentzian", noise=0.0, seed=1):
    x = np.linspace(-100.0, 100.0, 401)
    truth = np.array([-55.9, 4.0, 1.0, 55.9, 4.0, 0.8, 0.05])
    y = peak_model(x, truth, 2, shape)
    if noise:
        y = y + np.random.default_rng(seed).normal(0.0, noise, size=x.size)
    return x, y, truth


def test_peak_model_shape_conventions():
    x = np.array([-3.0, 0.0, 3.0])
    lor = peak_model(x, np.array([0.0, 3.0, 2.0, 0.0]), 1, "lorentzian")
    assert lor[1] == pytest.approx(2.0)          # amplitude at center
    assert lor[0] == pytest.approx(1.0)          # width is the HWHM
    gau = peak_model(x, np.array([0.0, 3.0, 2.0, 0.0]), 1, "gaussian")
    assert gau[0] == pytest.approx(2.0 * np.exp(-0.5))  # width is sigma


@pytest.mark.parametrize("shape", ["lorentzian", "gaussian"])
def test_fit_peaks_noiseless_recovery(shape):
    x, y, truth = two_peak_data(shape)
    fit = fit_peaks(x, y, 2, shape=shape,
                    initial=[(-50.0, 3.0, 0.7), (50.0, 3.0, 0.7)])
    assert fit.converged
    assert np.allclose(fit.params, truth, rtol=1e-6, atol=1e-8)
    assert fit.names[0:3] == ("center_1", "width_1", "amp_1")
    assert fit.names[-1] == "baseline"


def test_fit_peaks_reports_sorted_by_center():
    x, y, truth = two_peak_data()
    fit = fit_peaks(x, y, 2, initial=[(60.0, 4.0, 0.7), (-60.0, 4.0, 0.7)])
    assert fit["center_1"] < fit["center_2"]
    assert fit["center_1"] == pytest.approx(-55.9, abs=1e-6)
    assert fit["amp_2"] == pytest.approx(0.8, rel=1e-6)


def test_fit_peaks_extrema_start_rescues_bad_guesses():
    x, y, truth = two_peak_data()
    fit = fit_peaks(x, y, 2, initial=[(-5.0, 4.0, 0.1), (5.0, 4.0, 0.1)])
    assert "extrema-start" in fit.diagnostics
    assert fit["center_1"] == pytest.approx(-55.9, abs=1e-4)
    assert fit["center_2"] == pytest.approx(55.9, abs=1e-4)


def test_fit_peaks_good_guesses_leave_no_diagnostic():
    x, y, _ = two_peak_data()
    fit = fit_peaks(x, y, 2, initial=[(-56.0, 4.0, 1.0), (56.0, 4.0, 0.8)])
    assert "extrema-start" not in fit.diagnostics
    assert "overlapping-peaks" not in fit.diagnostics


def test_fit_peaks_overlap_diagnostic():
    x = np.linspace(-20.0, 20.0, 201)
    params = np.array([-1.0, 4.0, 1.0, 1.0, 4.0, 1.0, 0.0])
    y = peak_model(x, params, 2, "lorentzian")
    fit = fit_peaks(x, y, 2, initial=[(-1.5, 4.0, 1.0), (1.5, 4.0, 1.0)])
    assert "overlapping-peaks" in fit.diagnostics


def test_fit_peaks_noisy_soldiers_on():
    x, y, truth = two_peak_data(noise=0.02, seed=9)
    fit = fit_peaks(x, y, 2, initial=[(-50.0, 3.0, 0.7), (50.0, 3.0, 0.7)])
    assert fit.converged
    assert abs(fit["center_1"] - (-55.9)) < 0.5
    assert abs(fit["center_2"] - 55.9) < 0.5


def test_fit_peaks_validation():
    x, y, _ = two_peak_data()
    with pytest.raises(ValueError):
        fit_peaks(x, y, 2, shape="voigt", initial=[(-50, 3, 1), (50, 3, 1)])
    with pytest.raises(ValueError):
        fit_peaks(x, y, 0, initial=[])
    with pytest.raises(ValueError):
        fit_peaks(x, y, 2, initial=[(-50, 3, 1)])
    with pytest.raises(ValueError):
        fit_peaks(x, y, 2, initial=[(-50, -3, 1), (50, 3, 1)])
    with pytest.raises(RankDeficiencyError):
        fit_peaks(x[:5], y[:5], 2, initial=[(-50, 3, 1), (50, 3, 1)])
    with pytest.raises(RankDeficiencyError):
        fit_peaks(x, np.zeros_like(y), 1, initial=[(0, 3, 1)])


def test_fit_peaks_fixed_baseline_option():
    x, y, truth = two_peak_data()
    fit = fit_peaks(x, y, 2, initial=[(-50.0, 3.0, 0.7), (50.0, 3.0, 0.7)],
                    baseline=0.05)
    assert fit["baseline"] == pytest.approx(0.05, abs=1e-6)
