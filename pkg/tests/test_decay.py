import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import wave
from oracles import simple_integral_scaled
from hypdecay.classify import DecayFactor, DecayPrediction
from hypdecay.decay import (
    DataProfile,
    DecayFit,
    DegenerateFitError,
    NormSeries,
    UnderResolvedWarning,
    default_times,
    fit_decay,
    grid_for,
    l2_exact,
    l2_operator_norm,
    linf_upper,
    norm_series,
    power_weight_integral,
    verify_prediction,
    write_series_csv,
)
from hypdecay.symbolcore import FrequencyGrid

INF = math.inf


def _series(t, v, meaning="Linf_upper"):
    return NormSeries(np.asarray(t, float), np.asarray(v, float), meaning)


# -- data profiles -----------------------------------------------------------------------


def test_annulus_vanishes_outside():
    a = DataProfile.annulus(1.0, 2.0, smoothing=0.1)
    r = np.array([0.0, 0.5, 0.999, 1.05, 1.5, 1.95, 2.0, 3.0])
    v = a(r)
    assert np.all(v[[0, 1, 2, 6, 7]] == 0)
    assert v[4] == 1.0 and 0 < v[3] < 1 and 0 < v[5] < 1
    assert a.support_radius == 2.0


def test_profile_validation():
    with pytest.raises(ValueError):
        DataProfile("cube")
    with pytest.raises(ValueError):
        DataProfile.gaussian(width=0.0)
    with pytest.raises(ValueError):
        DataProfile.annulus(2.0, 1.0)
    with pytest.raises(ValueError):
        DataProfile.annulus(1.0, 1.1, smoothing=0.1)
    with pytest.raises(ValueError):
        DataProfile.from_table([(1.0, 1.0)])


def test_table_and_ball_profiles():
    tab = DataProfile.from_table([(2.0, 0.0), (1.0, 1.0), (1.5, 1.0)])
    np.testing.assert_allclose(tab(np.array([0.5, 1.25, 1.75, 2.5])), [0.0, 1.0, 0.5, 0.0])
    ball = DataProfile.ball(1.0)
    np.testing.assert_array_equal(ball(np.array([[0.8, 0.8], [0.5, 0.5]])), [0.0, 1.0])


def test_gaussian_l2_norm():
    # f_hat = exp(-xi^2/2): ||f||_2 = (2 pi)^(-1/2) (pi)^(1/4)
    g = DataProfile.gaussian()
    assert g.l2_norm(grid_for(g, 1)) == pytest.approx(math.pi ** 0.25 / math.sqrt(2 * math.pi), rel=1e-10)


# -- norms ---------------------------------------------------------------------------------


def test_t0_identities(dissipative):
    g = DataProfile.gaussian()
    grid = grid_for(g, 1)
    # u(0) = f_0: L^2 is ||f||, the sup bound is (2 pi)^-1 int f_hat = (2 pi)^-1/2
    assert l2_exact(dissipative, g, grid=grid) == pytest.approx(g.l2_norm(grid), rel=1e-12)
    assert linf_upper(dissipative, g, grid=grid) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-10)
    assert l2_operator_norm(dissipative, g, grid=grid) == pytest.approx(1.0)
    # d_t u(0) = f_1 = 0 for data in slot 0, and u(0) = 0 for data in slot 1
    assert linf_upper(dissipative, g, deriv=(1, ()), grid=grid) == pytest.approx(0.0, abs=1e-14)
    assert l2_exact(dissipative, DataProfile.gaussian(slot=1), grid=grid) == pytest.approx(0.0, abs=1e-14)


def test_damping_never_increases_l2(dissipative):
    g = DataProfile.gaussian()
    grid = grid_for(g, 1, 1025)
    s = norm_series(dissipative, g, grid, np.linspace(0, 40, 41), "L2_exact")
    assert np.all(s.values <= s.values[0] * (1 + 1e-12))


@pytest.mark.parametrize("meaning", ["Linf_upper", "L2_exact"])
def test_quadrature_converges_on_doubling(dissipative, meaning):
    g = DataProfile.gaussian()
    times = [1.0, 10.0, 100.0]
    coarse = norm_series(dissipative, g, grid_for(g, 1, 1025), times, meaning).values
    fine = norm_series(dissipative, g, grid_for(g, 1, 2049), times, meaning).values
    assert np.abs(coarse / fine - 1).max() < 5e-3


def test_quadrature_converges_2d():
    sym = wave(2, delta=1.0)
    g = DataProfile.gaussian()
    coarse = norm_series(sym, g, grid_for(g, 2, 101), [1.0, 20.0]).values
    fine = norm_series(sym, g, grid_for(g, 2, 201), [1.0, 20.0]).values
    assert np.abs(coarse / fine - 1).max() < 5e-3


def test_l2_bounded_by_operator_norm(dissipative):
    # ||u(t)||_2 <= ||E(t)||_{L^2 -> L^2} ||f||_2
    g = DataProfile.gaussian()
    grid = grid_for(g, 1, 1025)
    for t in (0.0, 5.0, 50.0):
        assert l2_exact(dissipative, g, grid=grid, t=t) <= l2_operator_norm(dissipative, g, grid=grid, t=t) * \
            g.l2_norm(grid) * (1 + 1e-9)


def test_under_resolution_warning(dissipative):
    g = DataProfile.gaussian()
    with pytest.warns(UnderResolvedWarning):
        norm_series(dissipative, g, FrequencyGrid(1, 1.0, 201), [1.0])


def test_norm_series_validation(dissipative):
    g = DataProfile.gaussian()
    grid = grid_for(g, 1, 101)
    with pytest.raises(ValueError):
        norm_series(dissipative, g, grid, [-1.0])
    with pytest.raises(ValueError):
        norm_series(dissipative, g, grid, [1.0], "grid_sample")
    with pytest.raises(ValueError):
        norm_series(dissipative, g, grid, [1.0], "L1")
    with pytest.raises(ValueError):
        norm_series(dissipative, DataProfile.gaussian(slot=2), grid, [1.0])
    with pytest.raises(ValueError):
        norm_series(dissipative, g, grid, [1.0], alpha=(1, 0))
    with pytest.raises(ValueError):
        NormSeries(np.array([2.0, 1.0]), np.array([1.0, 1.0]), "L2_exact")


def test_default_times():
    t = default_times(200, 25)
    assert t[0] == pytest.approx(100) and t[-1] == pytest.approx(200) and len(t) == 25


# -- fits ---------------------------------------------------------------------------------


def test_fit_power():
    t = default_times()
    fit = fit_decay(_series(t, 3.0 * (1 + t) ** -1.5))
    assert fit.model == "power" and fit.exponent == pytest.approx(-1.5, abs=1e-10)


def test_fit_exponential():
    t = np.linspace(1, 30, 30)
    fit = fit_decay(_series(t, 2.0 * np.exp(-0.3 * t)))
    assert fit.model == "exponential" and fit.rate == pytest.approx(0.3, rel=1e-10)


def test_fit_power_times_exponential():
    t = np.linspace(1, 40, 40)
    fit = fit_decay(_series(t, (1 + t) ** -1.0 * np.exp(-0.5 * t)))
    assert fit.model == "power_times_exp"
    assert fit.exponent == pytest.approx(-1.0, rel=0.02) and fit.rate == pytest.approx(0.5, rel=0.02)


def test_fit_window_and_errors():
    t = np.linspace(1, 100, 50)
    fit = fit_decay(_series(t, (1 + t) ** -0.5), window=(10, 60))
    assert 10 <= fit.window[0] and fit.window[1] <= 60
    with pytest.raises(DegenerateFitError):
        fit_decay(_series(t, np.ones_like(t)))
    with pytest.raises(ValueError):
        fit_decay(_series(t[:5], t[:5]))
    with pytest.raises(ValueError):
        fit_decay(_series(t, np.sin(t)))


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, -0.1), c=st.floats(1e-3, 1e3))
def test_fit_power_recovers_any_exponent(a, c):
    t = default_times(100, 16)
    assert fit_decay(_series(t, c * (1 + t) ** a)).exponent == pytest.approx(a, abs=1e-8)


# -- verification ----------------------------------------------------------------------------


def _pred(a=0.0, b=-0.5, rate=0.0):
    return DecayPrediction((DecayFactor(a, b, rate, "meets_axis"),))


def _fit(model, exponent=0.0, rate=0.0):
    return DecayFit(model, exponent, rate, 0.0, 0.0, (100.0, 200.0), 1e-6)


def test_verify_power_flags():
    pred = _pred()
    assert verify_prediction(pred, _fit("power", -0.45), 1, INF).flag == "match"
    v = verify_prediction(pred, _fit("power", -1.2), 1, INF)
    assert v.passed and v.flag == "better_than_predicted"
    v = verify_prediction(pred, _fit("power", -0.1), 1, INF)
    assert not v.passed and v.flag == "slower_than_predicted"
    # at (2, 2) the prediction is bounded: exponent 0
    assert verify_prediction(pred, _fit("power", -0.05), 2, 2).flag == "match"


def test_verify_exponential_under_power():
    pred = _pred()
    assert verify_prediction(pred, _fit("exponential", rate=0.3), 1, INF, meaning="Linf_upper").passed
    v = verify_prediction(pred, _fit("exponential", rate=0.3), 2, 2, meaning="L2_exact")
    assert not v.passed and v.flag == "incompatible_model"


def test_verify_exponential_prediction():
    pred = _pred(b=0.0, rate=0.5)
    assert verify_prediction(pred, _fit("exponential", rate=0.45), 1, INF).passed
    assert not verify_prediction(pred, _fit("exponential", rate=0.2), 1, INF).passed
    assert not verify_prediction(pred, _fit("power", -3.0), 1, INF).passed


def test_verify_small_rate_treated_as_power():
    pred = _pred()
    v = verify_prediction(pred, _fit("power_times_exp", -0.5, rate=1e-5), 1, INF)
    assert v.passed and v.flag == "match"


def test_end_to_end_dissipative_decay(dissipative):
    # sup bound of the heat-like part: <t>^{-1/2}
    g = DataProfile.gaussian()
    s = norm_series(dissipative, g, grid_for(g, 1), default_times(), "Linf_upper")
    fit = fit_decay(s)
    assert fit.model == "power" and fit.exponent == pytest.approx(-0.5, abs=0.05)
    # L^2 at (2, 2): the data is not bounded below at xi = 0, the L^2 norm decays like t^{-1/4}
    s2 = norm_series(dissipative, g, grid_for(g, 1), default_times(), "L2_exact")
    assert fit_decay(s2).exponent == pytest.approx(-0.25, abs=0.05)


# -- scaled integral ---------------------------------------------------------------------------


@pytest.mark.parametrize("rho, varsigma", [(0.0, 2.0), (1.0, 2.0), (0.0, 1.0), (2.0, 4.0)])
def test_scaled_integral_bounded(rho, varsigma):
    a = (rho + 1) / varsigma
    ts = np.geomspace(1, 1e4, 9)
    scaled = [power_weight_integral(rho, varsigma, 1.0, 1.0, t) * (1 + t * t) ** (a / 2) for t in ts]
    want = [simple_integral_scaled(rho, varsigma, 1.0, 1.0, t) for t in ts]
    np.testing.assert_allclose(scaled, want, rtol=1e-8)
    assert max(scaled) <= 2 * math.gamma(a) / varsigma + 1.0


def test_scaled_integral_t0():
    assert power_weight_integral(2.0, 2.0, 1.0, 3.0, 0.0) == pytest.approx(9.0)


# -- output --------------------------------------------------------------------------------------


def test_series_csv_columns(tmp_path, dissipative):
    g = DataProfile.gaussian()
    s = norm_series(dissipative, g, grid_for(g, 1, 257), [1.0, 2.0, 3.0], alpha=(1,))
    path = write_series_csv(s, tmp_path / "s.csv", 1.0, INF)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "value", "meaning", "r", "alpha", "p", "q"]
    assert rows[1][2:] == ["Linf_upper", "0", "1", "1.0", "inf"]
    assert float(rows[2][1]) == s.values[1]
