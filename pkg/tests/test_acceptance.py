"""Acceptance criteria 1-10, one test each.

Every test records what it measured (``record_property``); the terminal
summary prints one PASS/FAIL line per criterion with those values.  Criteria
are asserted exactly as stated: where the numbers do not come out, the test
fails rather than widening a tolerance.  Supplementary tests at the end
explain the failures.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import product_symbol, random_stable_symbol, wave
from oracles import simple_integral_scaled
from hypdecay.classify import (
    classify_symbol,
    contact_order_fit,
    origin_order_check,
    stability_scan,
    wave_case_from_classification,
)
from hypdecay.cli import NOT_VERIFIABLE, run
from hypdecay.decay import (
    DataProfile,
    default_times,
    fit_decay,
    grid_for,
    norm_series,
    power_weight_integral,
    verify_prediction,
)
from hypdecay.models import grad_symbol, grad_system, matsumura_multiplier
from hypdecay.multiplier import (
    NEAR_MULTIPLICITY,
    initial_derivatives,
    multiplicity_bound_check,
    propagator_at,
    propagator_batch,
    vandermonde_at,
)
from hypdecay.roots import (
    MultiplicityCluster,
    discriminant_at,
    discriminant_scale,
    roots_at,
    track_branches,
)
from hypdecay.symbolcore import FrequencyGrid, horner, tau_poly_at, tau_poly_batch

INF = math.inf
WINDOW = default_times(200.0, 25)  # t in [100, 200]


def _sup_exponent(sym, data, r=0, alpha=(), meaning="Linf_upper"):
    series = norm_series(sym, data, grid_for(data, sym.n), WINDOW, meaning, r, alpha)
    return fit_decay(series)


def test_criterion_01_dissipative_sup_rate(record_property):
    start = time.perf_counter()
    fit = _sup_exponent(wave(1, delta=1.0), DataProfile.gaussian(slot=1))
    elapsed = time.perf_counter() - start
    record_property("measured", f"exponent {fit.exponent:.4f} ({fit.model}), {elapsed:.2f} s")
    assert fit.model == "power"
    assert abs(fit.exponent + 0.5) <= 0.10
    assert elapsed < 10.0


def test_criterion_02_derivative_gains(record_property):
    start = time.perf_counter()
    sym, data = wave(1, delta=1.0), DataProfile.gaussian(slot=1)
    dt = _sup_exponent(sym, data, r=1)
    dx = _sup_exponent(sym, data, alpha=(1,))
    elapsed = time.perf_counter() - start
    record_property("measured", f"d_t {dt.exponent:.4f}, d_x {dx.exponent:.4f}, {elapsed:.2f} s")
    assert dt.model == "power" and abs(dt.exponent + 1.5) <= 0.15
    assert dx.model == "power" and abs(dx.exponent + 1.0) <= 0.10
    assert elapsed < 20.0


def test_criterion_03_l2_gradient_rate(record_property):
    fit = _sup_exponent(wave(1, delta=1.0), DataProfile.gaussian(slot=1), alpha=(1,), meaning="L2_exact")
    op = _sup_exponent(wave(1, delta=1.0), DataProfile.gaussian(slot=1), alpha=(1,), meaning="L2_operator")
    record_property("measured", f"l2_exact exponent {fit.exponent:.4f} (operator norm {op.exponent:.4f})")
    assert abs(fit.exponent + 0.5) <= 0.10


def test_criterion_04_matsumura_oracle(record_property):
    sym = wave(1, delta=1.0)
    radii = np.linspace(0.0, 2.0, 81)  # contains the double-root shell 1/2
    times = np.linspace(0.0, 50.0, 51)
    assert 0.5 in radii
    worst = 0.0
    for r in radii:
        for t in times:
            E = propagator_at(sym, [r], t).E
            for got, want in zip(E, matsumura_multiplier(r, t)):
                want = float(want)
                err = abs(got - want) / abs(want) if want != 0 else abs(got)
                worst = max(worst, err)
    record_property("measured", f"max relative error {worst:.2e}")
    assert worst <= 1e-8


def test_criterion_05_multiplicity_bound(record_property):
    t = np.linspace(0.0, 50.0, 101)
    shell = np.linspace(0.45, 0.55, 41)[:, None]
    res = multiplicity_bound_check(wave(1, delta=1.0), MultiplicityCluster(shell, 2, 1.0, 0.0, 0.0), t,
                                   components=1)
    triple = product_symbol(1, [[0.0]] * 3, [1.0] * 3)  # (tau - i)^3
    nodes = np.array([[0.0], [0.3], [1.0]])
    res3 = multiplicity_bound_check(triple, MultiplicityCluster(nodes, 3, 0.0, 0.0, 0.0), t)
    res1 = multiplicity_bound_check(triple, MultiplicityCluster(nodes, 1, 0.0, 0.0, 0.0), t)
    record_property("measured", f"shell C={res.C_fit:.3g}; triple L-1={res3.L - 1} C={res3.C_fit:.3g}, "
                                f"L=1 growth slope {res1.growth_slope:.2f}")
    assert res.passed and math.isfinite(res.C_fit)
    assert res3.passed and res3.L - 1 == 2 and math.isfinite(res3.C_fit)
    assert not res1.passed  # the (1+t)^2 factor is needed


LABELS = {(0, 0): "wave", (0, 1): "klein_gordon", (1, 0): "dissipative", (-0.5, 0): "no_decay",
          (1, 1): "exponential", (1, -1): "negative_mass_conditional"}


def test_criterion_06_golden_classification(record_property):
    mismatches = []
    for n in (1, 2):
        for (delta, mu), label in LABELS.items():
            cls = classify_symbol(wave(n, delta=delta, mu=mu))
            got = wave_case_from_classification(cls)
            if got != label:
                mismatches.append(f"n={n} ({delta},{mu}): {got}")
            rows = {f.row for f in cls.prediction.factors}
            if label == "wave" and "on_axis:rank_n-1" not in rows:
                mismatches.append(f"n={n} wave rows {sorted(rows)}")
            if label == "klein_gordon" and "on_axis:det_hess" not in rows:
                mismatches.append(f"n={n} Klein-Gordon rows {sorted(rows)}")
    record_property("measured", "12/12 labels and rows match" if not mismatches else "; ".join(mismatches))
    assert not mismatches


def test_criterion_07_grad_systems(record_property):
    g11 = grad_symbol(grad_system(1, 1))
    assert g11.allclose(wave(1, delta=1.0), atol=1e-12)
    grid = FrequencyGrid(1, 20.0, 2049)
    found = []
    for N in (2, 3, 4):
        sym = grad_symbol(grad_system(1, N))
        field = track_branches(sym, grid)
        v = stability_scan(field)
        assert v.min_im >= -1e-8
        assert v.origin_only and np.all(np.abs(v.zero_points) <= 2 * grid.spacing)
        assert v.shell_min_im > 0 and v.verdict == "strongly_stable"
        cls = classify_symbol(sym, grid, field=field)
        meets = [b.location for b in cls.behaviors if b.location.kind == "meets_axis"]
        assert len(meets) == 1 and abs(meets[0].s_raw - 2.0) <= 0.2
        assert origin_order_check(sym)[:2] == (True, 2)
        for p, q in [(1, INF), (2, 2), (4 / 3, 4)]:
            assert cls.prediction.exponent(p, q) == pytest.approx(-0.5 * (1 / p - (0 if q == INF else 1 / q)))
        found.append(f"N={N}: s={meets[0].s_raw:.3f}, shell min {v.shell_min_im:.3g}")
    record_property("measured", "; ".join(found))


def test_criterion_08_negative_mass(record_property):
    start = time.perf_counter()
    sym = wave(1, delta=1.0, mu=-1.0)
    grid = FrequencyGrid(1, 10.0, 2049)
    field = track_branches(sym, grid)
    cls = classify_symbol(sym, grid, field=field)
    # grid fit on the sphere |xi| = 1, kept clear of the root collision at |xi| = sqrt(5)/2
    branch = field.branches[np.argmin(field.branches.imag.min(axis=1))]
    region = grid.radii >= 1.0
    fit_s = contact_order_fit(branch, [[1.0], [-1.0]], grid, region=region,
                              max_distance=0.5 * (math.sqrt(5) / 2 - 1))
    data = DataProfile.annulus(1.05, 3.0, smoothing=0.1, slot=1)
    fit = _sup_exponent(sym, data)
    elapsed = time.perf_counter() - start
    power = fit.candidates["power"].exponent
    record_property("measured", f"s={fit_s.s_raw:.3f}; sup fit {fit.model} exponent {fit.exponent:.3f} "
                                f"rate {fit.rate:.3f} (pure power {power:.1f}); predicted "
                                f"{cls.prediction.exponent(1, INF):.2f}; {elapsed:.2f} s")
    assert abs(fit_s.s_raw - 1.0) <= 0.2
    assert cls.prediction.exponent(1, INF) == pytest.approx(-1.0)
    assert fit.model == "power" and abs(fit.exponent + 1.0) <= 0.15
    assert elapsed < 30.0


def test_criterion_09_invariant_suites(record_property, rng):
    worst = {"residual": 0.0, "sum": 0.0, "product": 0.0, "initial": 0.0, "paths": 0.0, "scaled_integral": 0.0}
    for _ in range(20):
        n = int(rng.integers(1, 3))
        sym = random_stable_symbol(rng, n=n)
        nodes = rng.normal(size=(16, n)) * 2
        coeffs = tau_poly_batch(sym, nodes)
        for c in coeffs:
            z = roots_at(c).roots
            scale = max(1.0, np.abs(z).max()) ** sym.m
            worst["residual"] = max(worst["residual"], np.abs(horner(c, z)).max() / scale)
            worst["sum"] = max(worst["sum"], abs(z.sum() + c[1]) / (1 + abs(c[1])))
            worst["product"] = max(worst["product"], abs(np.prod(z) - (-1) ** sym.m * c[-1]) / (1 + abs(c[-1])))
    for _ in range(50):
        n = int(rng.integers(1, 3))
        sym = random_stable_symbol(rng, n=n)
        D = initial_derivatives(sym, rng.normal(size=n) * 2)
        worst["initial"] = max(worst["initial"], np.abs(D - np.eye(sym.m)).max())
    t = np.linspace(0, 8, 17)
    checked = 0
    while checked < 30:
        n = int(rng.integers(1, 3))
        sym = random_stable_symbol(rng, n=n)
        xi = rng.normal(size=n)
        if abs(discriminant_at(sym, xi)) / discriminant_scale(sym.m, np.linalg.norm(xi)) <= 1e3 * NEAR_MULTIPLICITY:
            continue
        checked += 1
        ref = propagator_batch(sym, xi[None], t)[:, 0, :]
        fast = vandermonde_at(sym, xi).evaluate(t)
        worst["paths"] = max(worst["paths"], (np.abs(fast - ref) / (1 + np.abs(ref))).max())
    for rho in (0.0, 1.0, 2.0):
        for varsigma in (1.0, 2.0, 4.0):
            a = (rho + 1) / varsigma
            for tt in np.geomspace(1, 1e4, 9):
                got = power_weight_integral(rho, varsigma, 1.0, 1.0, tt) * (1 + tt * tt) ** (a / 2)
                want = simple_integral_scaled(rho, varsigma, 1.0, 1.0, tt)
                worst["scaled_integral"] = max(worst["scaled_integral"], abs(got / want - 1))
                assert got <= 2 * math.gamma(a) / varsigma + 1.0  # bounded uniformly in t
    record_property("measured", ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert worst["residual"] <= 1e-9 and worst["sum"] <= 1e-8 and worst["product"] <= 1e-8
    assert worst["initial"] <= 1e-8 and worst["paths"] <= 1e-8 and worst["scaled_integral"] <= 1e-8


def test_criterion_10_on_axis_not_applicable(record_property, tmp_path):
    seen = []
    for name, (delta, mu), expected in [("wave", (0, 0), 0.0), ("klein_gordon", (0, 1), -0.5)]:
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps({"generator": {"name": "wave", "n": 1, "params": {"c": 1, "delta": delta, "mu": mu}},
                                   "data": {"kind": "gaussian", "slot": 1}}))
        out = tmp_path / name
        assert run(["verify", "--config", str(cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        at = {(r["p"], r["q"]): r["exponent"] for r in rep["classification"]["prediction"]["at"]}
        assert at[(1.0, "inf")] == pytest.approx(expected)
        rows = rep["verification"]["rows"]
        assert rows and all(r["status"] == "not_applicable" and r["reason"] == NOT_VERIFIABLE for r in rows)
        seen.append(f"{name}: predicted {at[(1.0, 'inf')]:g}, {len(rows)} rows not_applicable")
    record_property("measured", "; ".join(seen))


# -- supplementary: why criteria 3 and 8 do not come out ------------------------------------------


def test_l2_gradient_operator_rate():
    # the L^2 -> L^2 operator norm of d_x E_1 decays like t^-1/2; a fixed gaussian datum
    # (bounded below at xi = 0) gives the faster data-dependent rate t^-(1/4 + 1/2)
    sym, data = wave(1, delta=1.0), DataProfile.gaussian(slot=1)
    op = _sup_exponent(sym, data, alpha=(1,), meaning="L2_operator")
    exact = _sup_exponent(sym, data, alpha=(1,), meaning="L2_exact")
    assert op.exponent == pytest.approx(-0.5, abs=0.05)
    assert exact.exponent == pytest.approx(-0.75, abs=0.05)


def test_negative_mass_data_touching_the_sphere():
    # f_hat supported on [1, 2] reaches the zero set |xi| = 1 where Im tau ~ |xi| - 1:
    # the sup bound decays like t^-1, as predicted
    sym = wave(1, delta=1.0, mu=-1.0)
    data = DataProfile.from_table([(1.0, 1.0), (2.0, 1.0)], slot=1)
    fit = fit_decay(norm_series(sym, data, FrequencyGrid(1, 2.0, 2049), WINDOW, "Linf_upper"))
    assert fit.exponent == pytest.approx(-1.0, abs=0.15)
    assert abs(fit.rate) * WINDOW[-1] < 0.5


def test_negative_mass_annulus_within_bound():
    # data kept 0.05 away from the sphere sees Im tau >= c > 0: exponential decay, which
    # the power-law bound covers (passes as better than predicted)
    sym = wave(1, delta=1.0, mu=-1.0)
    cls = classify_symbol(sym, FrequencyGrid(1, 10.0, 2049))
    fit = _sup_exponent(sym, DataProfile.annulus(1.05, 3.0, smoothing=0.1, slot=1))
    assert fit.rate > 0.05
    ver = verify_prediction(cls.prediction, fit, 1, INF, meaning="Linf_upper")
    assert ver.passed and ver.flag == "better_than_predicted"
