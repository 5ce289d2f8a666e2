import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from nvc13.engine import (
    DephasingSpec,
    Dynamics,
    FarDetunedWarning,
    MwPulse,
    OpticalInit,
    PulseSequence,
    Readout,
    SequenceError,
    SpinState,
    Wait,
    electron_reduced,
    free_evolution,
    mw_pulse,
    nuclear_reduced,
    optical_init,
    readout,
    run_sequence,
)
from nvc13.hamiltonian import SX, bare_block, electron_op
from nvc13.params import HyperfineTensor, MagneticField, SystemParams
from nvc13.presets import preset

PAPER = preset("paper-nv")


def _lab_oracle(d: Dynamics, el: MwPulse, psi0, t0, drive="rotating"):
    """Integrate the lab-frame Schroedinger equation in the H0 interaction picture.

    ``rotating`` uses only the co-rotating drive term between the dressed
    manifolds (the model the engine claims to solve exactly); ``linear`` uses
    the physical field sqrt(2) rabi cos(wt + phase) Sx.
    """
    e, v = np.linalg.eigh(d.h0)
    w = 2 * math.pi * el.frequency
    if drive == "rotating":
        x = v.conj().T @ (d.proj[el.branch] @ bare_block(el.branch) @ bare_block(0).conj().T @ d.proj[0]) @ v

        def vt(t):
            g = 0.5 * el.rabi * np.exp(-1j * (w * t + el.phase)) * x
            return g + g.conj().T
    else:
        sx = v.conj().T @ electron_op(SX) @ v

        def vt(t):
            return math.sqrt(2) * el.rabi * math.cos(w * t + el.phase) * sx

    def rhs(t, y):
        ph = np.exp(2j * math.pi * e * t)
        return -2j * math.pi * ((ph[:, None] * vt(t) * ph.conj()[None, :]) @ y)

    y0 = np.exp(2j * math.pi * e * t0) * (v.conj().T @ psi0)
    t1 = t0 + el.duration
    sol = solve_ivp(rhs, (t0, t1), y0.astype(complex), method="DOP853", rtol=1e-10, atol=1e-12)
    psi = v @ (np.exp(-2j * math.pi * e * t1) * sol.y[:, -1])
    return np.outer(psi, psi.conj())


@pytest.mark.parametrize("detune,phase,t0,nuc", [
    (0.0, 0.0, 0.0, (1, 0)),
    (0.3e6, 0.7, 37e-9, (0.6, 0.8)),
    (-1.1e6, 2.0, 1.234e-6, (0.6, 0.8j)),
    (14.3e6, -1.0, 5e-9, (1, 1)),
])
@pytest.mark.parametrize("branch", [1, -1])
def test_finite_pulse_matches_lab_frame_oracle(detune, phase, t0, nuc, branch):
    d = Dynamics(PAPER)
    lo, _ = d.transition_frequencies(branch)
    el = MwPulse(lo + detune, 2e6, 250e-9, phase=phase, branch=branch)
    psi0 = d.frames[0] @ (np.array(nuc, dtype=complex) / np.linalg.norm(nuc))
    out = d.pulse(SpinState.pure(psi0).rho[None], el, t0)[0]
    assert np.abs(out - _lab_oracle(d, el, psi0, t0)).max() < 1e-8


def test_finite_pulse_close_to_physical_linear_drive():
    d = Dynamics(PAPER)
    lo, _ = d.transition_frequencies(1)
    el = MwPulse(lo + 0.3e6, 2e6, 250e-9, phase=0.7)
    psi0 = d.frames[0] @ np.array([0.6, 0.8])
    out = d.pulse(SpinState.pure(psi0).rho[None], el, 37e-9)[0]
    ref = _lab_oracle(d, el, psi0, 37e-9, drive="linear")
    assert np.abs(out - ref).max() < 2e-2
    for ms in (0, 1):
        assert abs(np.trace(d.proj[ms] @ (out - ref))) < 2e-3


def test_free_evolution_matches_expm():
    rng = np.random.default_rng(5)
    psi = rng.normal(size=6) + 1j * rng.normal(size=6)
    s = SpinState.pure(psi)
    t = 0.731e-6
    u = expm(-2j * math.pi * Dynamics(PAPER).h0 * t)
    out = free_evolution(s, t, PAPER)
    assert np.allclose(out.rho, u @ s.rho @ u.conj().T, atol=1e-10)
    with pytest.raises(ValueError):
        free_evolution(s, -1.0, PAPER)


def test_rabi_oscillation_without_mixing():
    p = SystemParams(field=MagneticField(0, 0, 7e-3), hyperfine=HyperfineTensor.from_array(np.diag([0, 0, 14.3e6])))
    d = Dynamics(p)
    lo, _ = d.transition_frequencies(1)
    rho0 = SpinState.product(d.eig, 0, [0, 1])  # lower +1 line conserves |down>
    for t in np.linspace(0, 500e-9, 11):
        rho = d.pulse(d.batch(rho0), MwPulse(lo, 2e6, t), 0.0)
        assert d.population(rho, 0) == pytest.approx(math.cos(math.pi * 2e6 * t) ** 2, abs=2e-3)


def test_ideal_selective_pi_pulse():
    d = Dynamics(preset("paper-nv-perpendicular"))
    lo, hi = d.transition_frequencies(1)
    idx = d.eig.indices(1)
    for f, k in ((lo, idx[0]), (hi, idx[1])):
        nvec = d.frames[1].conj().T @ d.eig.states[:, k]
        rho = d.batch(SpinState.product(d.eig, 0, nvec))
        out = d.pulse(rho, MwPulse(f, 2e6, 250e-9, ideal=True), 0.0)
        assert d.population(out, 1) == pytest.approx(1.0, abs=1e-12)
        other = d.batch(SpinState.product(d.eig, 0, np.array([-nvec[1].conj(), nvec[0].conj()])))
        assert d.population(d.pulse(other, MwPulse(f, 2e6, 250e-9, ideal=True), 0.0), 0) == pytest.approx(1.0, abs=1e-12)


def test_ideal_nonselective_pulse_is_electron_rotation():
    d = Dynamics(PAPER)
    lo, hi = d.transition_frequencies(1)
    el = MwPulse(0.5 * (lo + hi), 2e6, 125e-9, ideal=True, selective=False)
    rho = d.pulse(d.batch(SpinState.product(d.eig, 0, [0.6, 0.8])), el, 0.0)
    assert d.population(rho, 0) == pytest.approx(0.5, abs=1e-12)
    two = d.pulse(rho, el, 0.0)
    assert d.population(two, 1) == pytest.approx(1.0, abs=1e-12)


def test_optical_init():
    d = Dynamics(PAPER)
    s = SpinState.product(d.eig, 1, [0.6, 0.8])
    out = optical_init(s, PAPER)
    out.check()
    assert readout(out, PAPER) == pytest.approx(1.0, abs=1e-12)
    n = nuclear_reduced(out.rho, d.frames)
    assert np.allclose(n, np.outer([0.6, 0.8], [0.6, 0.8]), atol=1e-12)
    mixed = optical_init(SpinState.maximally_mixed(), PAPER)
    assert np.allclose(nuclear_reduced(mixed.rho, d.frames), np.eye(2) / 2, atol=1e-12)


def test_readout_contrast():
    s = SpinState.product(Dynamics(PAPER).eig, 1, [1, 0])
    assert readout(s, PAPER) == pytest.approx(0.0, abs=1e-12)
    assert readout(s, PAPER, contrast=0.3) == pytest.approx(0.7)


def test_far_detuned_warning():
    with pytest.warns(FarDetunedWarning):
        mw_pulse(SpinState.maximally_mixed(), MwPulse(10e9, 1e6, 1e-7), PAPER)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mw_pulse(SpinState.maximally_mixed(), MwPulse(3.07e9, 1e6, 1e-7), PAPER)


@pytest.mark.parametrize("elements,index", [
    ((Wait(-1.0), Readout()), 0),
    ((OpticalInit(), MwPulse(3e9, -1, 1e-7), Readout()), 1),
    ((OpticalInit(), MwPulse(3e9, 1, 1e-7, branch=2), Readout()), 1),
    ((OpticalInit(), Readout(), Wait(1e-6)), 1),
    ((OpticalInit(), Wait(1e-6)), 1),
    ((OpticalInit(), "laser", Readout()), 1),
    ((OpticalInit(), Readout(contrast=2.0)), 1),
])
def test_sequence_validation_names_element(elements, index):
    with pytest.raises(SequenceError, match=f"element {index}"):
        run_sequence(PulseSequence(elements), SpinState.maximally_mixed(), PAPER)


def test_state_checks():
    with pytest.raises(ValueError):
        SpinState(np.eye(3))
    with pytest.raises(AssertionError):
        SpinState(np.eye(6)).check()
    bad = np.diag([1.5, -0.5, 0, 0, 0, 0])
    with pytest.raises(AssertionError):
        SpinState(bad).check()
    assert SpinState.maximally_mixed().purity == pytest.approx(1 / 6)


def test_seeded_ensemble_is_reproducible():
    deph = DephasingSpec(electron_sigma=0.3e6, nuclear_sigma=20e3, samples=16, seed=7)
    seq = PulseSequence((OpticalInit(), MwPulse(3.07e9, 2e6, 125e-9), Wait(2e-6), MwPulse(3.07e9, 2e6, 125e-9), Readout()))
    a = run_sequence(seq, SpinState.maximally_mixed(), PAPER, deph)
    b = run_sequence(seq, SpinState.maximally_mixed(), PAPER, deph)
    c = run_sequence(seq, SpinState.maximally_mixed(), PAPER, deph.with_seed(8))
    assert a == b
    assert a != c


def test_dephasing_spec_validation():
    for kw in ({"electron_sigma": -1}, {"samples": 0}, {"lineshape": "voigt"}):
        with pytest.raises(ValueError):
            DephasingSpec(**kw)
    assert DephasingSpec.width_for_exponential(1.5e-6) == pytest.approx(1 / (2 * math.pi * 1.5e-6))


def test_gaussian_electron_dephasing_envelope():
    # resonant Ramsey with two pi/2 pulses: P(0') = (1 - exp(-(t/T2*)^2)) / 2
    p = SystemParams(field=MagneticField(0, 0, 7e-3))
    t2 = 1e-6
    d = Dynamics(p, DephasingSpec(electron_sigma=DephasingSpec.sigma_for_t2_star(t2), samples=2000, seed=3))
    f = 0.5 * sum(d.transition_frequencies(1))
    half = MwPulse(f, 50e6, 5e-9, ideal=True, selective=False)
    for t in (0.0, 0.5e-6, 1e-6, 1.5e-6):
        _, pop = d.run(PulseSequence((OpticalInit(), half, Wait(t), half, Readout())), SpinState.maximally_mixed())
        assert pop == pytest.approx(0.5 * (1 - math.exp(-(t / t2) ** 2)), abs=1e-3)


op_strategy = st.one_of(
    st.just(("init",)),
    st.tuples(st.just("wait"), st.floats(0, 5e-6)),
    st.tuples(st.just("pulse"), st.floats(-20e6, 20e6), st.floats(0, 10e6), st.floats(0, 600e-9),
              st.floats(-math.pi, math.pi), st.booleans(), st.booleans(), st.sampled_from([1, -1])),
)


@settings(max_examples=500)
@given(st.lists(op_strategy, max_size=6), st.sampled_from(["paper-nv", "paper-nv-polarize", "paper-nv-aligned"]),
       st.integers(0, 2**31 - 1))
def test_channels_preserve_density_matrix(ops, name, seed):
    p = preset(name)
    deph = DephasingSpec(electron_sigma=0.2e6, nuclear_sigma=10e3, samples=3, seed=seed)
    d = Dynamics(p, deph)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(6, 2)) @ (rng.normal(size=2) + 1j * rng.normal(size=2))
    rho = d.batch(SpinState(0.5 * SpinState.pure(psi).rho + 0.5 * np.eye(6) / 6))
    t = 0.0
    for op in ops:
        if op[0] == "init":
            rho = d.optical_init(rho)
        elif op[0] == "wait":
            rho = d.wait(rho, op[1])
            t += op[1]
        else:
            _, det, rabi, dur, ph, ideal, sel, branch = op
            lo, _ = d.transition_frequencies(branch)
            rho = d.pulse(rho, MwPulse(lo + det, rabi, dur, ph, ideal, sel, branch), t)
            t += 0 if ideal else dur
        for r in rho:
            SpinState(r).check(tol=1e-10, pos_tol=1e-9)
    mean = d.mean_state(rho)
    mean.check()
    e = electron_reduced(mean.rho, d.frames, manifolds=(1, 0, -1))
    assert np.trace(e).real == pytest.approx(1.0, abs=1e-9)
