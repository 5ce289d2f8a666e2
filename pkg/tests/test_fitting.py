import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvc13.fitting import (
    FitError,
    FitResult,
    damped_cosine,
    dominant_frequency,
    fit_damped_cosine,
    fit_lorentzians,
    lorentzian_dips,
    polarization_from_fit,
    reference_frequency_for_temperature,
    spin_temperature,
)

X = np.linspace(2.99e9, 3.03e9, 401)


def _close(a, b, rel=1e-6):
    return abs(a - b) <= rel * max(abs(b), 1e-30)


@st.composite
def dip_sets(draw, n):
    # centres at least three widths apart, inside the window
    widths = [draw(st.floats(0.5e6, 3e6 if n == 2 else 1.5e6)) for _ in range(n)]
    gaps = [draw(st.floats(3.0, 6.0 if n == 2 else 5.0)) * max(widths) for _ in range(n - 1)]
    start = draw(st.floats(2.995e9, 3.025e9 - sum(gaps)))
    centers = np.cumsum([start] + gaps)
    amps = [draw(st.floats(0.02, 0.3)) for _ in range(n)]
    base = draw(st.floats(0.5, 1.5))
    return base, list(centers), widths, amps


@settings(max_examples=50)
@given(dip_sets(2))
def test_two_dip_round_trip(case):
    base, c, w, a = case
    fit = fit_lorentzians(X, lorentzian_dips(X, base, c, w, a), 2)
    assert fit.converged
    assert _close(fit["base"], base)
    for i in range(2):
        assert _close(fit[f"c{i + 1}"], c[i], 1e-9)
        assert _close(fit[f"w{i + 1}"], w[i])
        assert _close(fit[f"A{i + 1}"], a[i])


@settings(max_examples=50)
@given(dip_sets(4))
def test_four_dip_round_trip(case):
    base, c, w, a = case
    init = {"base": base * 1.01, "centers": [x + 0.2 * wi for x, wi in zip(c, w)],
            "widths": [1.2 * wi for wi in w], "amplitudes": [0.8 * ai for ai in a]}
    fit = fit_lorentzians(X, lorentzian_dips(X, base, c, w, a), 4, init=init)
    assert fit.converged
    for i in range(4):
        assert _close(fit[f"c{i + 1}"], c[i], 1e-9)
        assert _close(fit[f"w{i + 1}"], w[i])
        assert _close(fit[f"A{i + 1}"], a[i])


def test_four_dips_with_noise_recover_splitting():
    rng = np.random.default_rng(11)
    c = [3.000e9, 3.0143e9, 3.004e9, 3.0183e9]
    y = lorentzian_dips(X, 1.0, sorted(c), [2e6] * 4, [0.1, 0.08, 0.1, 0.08])
    y = y + rng.normal(0, 0.01 * 0.1, X.size)
    fit = fit_lorentzians(X, y, 4)
    got = fit.centers()
    assert (got[2] - got[0]) == pytest.approx(14.3e6, abs=1e6)
    assert (got[3] - got[1]) == pytest.approx(14.3e6, abs=1e6)


def test_lorentzian_input_checks():
    with pytest.raises(ValueError):
        fit_lorentzians(X, np.ones_like(X), 3)
    with pytest.raises(ValueError):
        fit_lorentzians(X[:9], np.ones(9), 2)


def test_flat_data_is_degenerate():
    fit = fit_lorentzians(X, np.ones_like(X), 2)
    assert (not fit.converged) or max(abs(a) for a in fit.amplitudes()) < 1e-6 or \
        any(fit.std_errors[f"A{i}"] > 1.0 for i in (1, 2))


T = np.linspace(0, 4e-6, 201)


@settings(max_examples=50)
@given(st.floats(1.0, 12.0), st.floats(0.3, 3.0), st.floats(0.05, 1.0), st.floats(0, 2 * math.pi),
       st.floats(-1.0, 1.0), st.sampled_from(["exponential", "gaussian"]))
def test_damped_cosine_round_trip(cycles, tau_spans, amp, phi, y0, env):
    span = T[-1]
    nu, tau = cycles / span, tau_spans * span
    fit = fit_damped_cosine(T, damped_cosine(T, nu, tau, amp, phi, y0, env), env)
    assert fit.converged
    assert _close(fit["nu"], nu)
    assert _close(fit["T"], tau)
    assert _close(fit["A"], amp)
    assert abs((fit["phi"] - phi + math.pi) % (2 * math.pi) - math.pi) < 1e-6
    assert abs(fit["y0"] - y0) < 1e-6 * max(1.0, abs(y0))


def test_paper_value_round_trips():
    fit = fit_damped_cosine(T, damped_cosine(T, 0.8e6, 1.5e-6, 0.5, 0.0, 0.5), "exponential")
    assert _close(fit["nu"], 0.8e6) and _close(fit["T"], 1.5e-6)
    t = np.linspace(0, 60e-6, 601)
    fit = fit_damped_cosine(t, damped_cosine(t, 170e3, 26e-6, 0.3, 0.0, 0.6, "gaussian"), "gaussian")
    assert _close(fit["nu"], 170e3) and _close(fit["T"], 26e-6)


@pytest.mark.parametrize("env,t_rel", [("exponential", 0.15), ("gaussian", 0.15)])
def test_noise_robustness(env, t_rel):
    rng = np.random.default_rng(2024)
    span = T[-1]
    good = 0
    for _ in range(200):
        nu = rng.uniform(2, 10) / span
        tau = rng.uniform(0.5, 2) * span
        amp = 0.5
        y = damped_cosine(T, nu, tau, amp, rng.uniform(0, 2 * math.pi), 0.5, env)
        y = y + rng.normal(0, 0.02 * amp, T.size)
        fit = fit_damped_cosine(T, y, env)
        if abs(fit["nu"] / nu - 1) <= 0.02 and abs(fit["T"] / tau - 1) <= t_rel:
            good += 1
    assert good >= 190


def test_undamped_cosine_flags_unbounded_decay():
    fit = fit_damped_cosine(T, np.cos(2 * math.pi * 2e6 * T), "exponential")
    assert fit.diagnostics["T_unbounded"]
    assert fit["T"] >= 10 * T[-1]


def test_nyquist_violation():
    with pytest.raises(FitError):
        fit_damped_cosine(T, np.cos(2 * math.pi * 2e6 * T), init={"nu": 60e6, "T": 1e-6, "A": 1, "phi": 0, "y0": 0})
    with pytest.raises(ValueError):
        fit_damped_cosine(T[:5], T[:5])
    with pytest.raises(ValueError):
        fit_damped_cosine(T, T, "lorentzian")


def test_dominant_frequency_prefers_lower_on_tie():
    assert dominant_frequency(T, np.cos(2 * math.pi * 3e6 * T)) == pytest.approx(3e6, rel=0.02)
    assert dominant_frequency(T, np.zeros_like(T)) == 0.0


def _two_dip(a_down, a_up):
    return FitResult("lorentzian2", {"base": 1, "c1": 1, "w1": 1, "A1": a_down, "c2": 2, "w2": 1, "A2": a_up},
                     {}, 0.0, True, 1, {"n_points": 100})


@pytest.mark.parametrize("down,up,p", [(0.1, 0.1, 0.0), (0.115, 0.085, 0.15), (0.2, 0.0, 1.0), (0.0, 0.2, -1.0)])
def test_polarization_arithmetic(down, up, p):
    assert polarization_from_fit(_two_dip(down, up)) == pytest.approx(p, abs=1e-12)


def test_polarization_errors():
    with pytest.raises(FitError):
        polarization_from_fit(_two_dip(0.0, 0.0))
    bad = _two_dip(0.1, 0.1)
    bad.model = "lorentzian4"
    with pytest.raises(FitError):
        polarization_from_fit(bad)


def test_spin_temperature_values():
    assert spin_temperature(0.15, 14.3e6) == pytest.approx(2.27e-3, rel=0.01)
    assert reference_frequency_for_temperature(0.15, 0.110) == pytest.approx(6.93e8, rel=0.01)
    assert spin_temperature(0.15, reference_frequency_for_temperature(0.15, 0.110)) == pytest.approx(0.110)
    assert spin_temperature(1 - 1e-12, 14.3e6) < 1e-4
    assert spin_temperature(0.0, 14.3e6) == math.inf
    with pytest.raises(ValueError):
        spin_temperature(1.0, 14.3e6)
    with pytest.raises(ValueError):
        spin_temperature(0.1, 0.0)


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.01), st.floats(1e6, 1e10), st.floats(1.01, 3))
def test_spin_temperature_monotone(p, dp, f, k):
    assert spin_temperature(p + dp, f) < spin_temperature(p, f)
    assert spin_temperature(p, f * k) > spin_temperature(p, f)
