import math

import numpy as np
import pytest

from nvc13.engine import DephasingSpec
from nvc13.experiments import (
    PulseSpec,
    branch_window,
    fit_echo,
    fit_storage,
    odmr_splitting,
    polarize,
    pulsed_odmr,
    spin_echo,
    state_transfer,
    storage,
    storage_closed_form,
    transfer_details,
)
from nvc13.hamiltonian import DegenerateError, nuclear_doublet_splitting, quantization_axes, system_eigen
from nvc13.params import HyperfineTensor, MagneticField, SystemParams
from nvc13.presets import preset, preset_tensor


def _random_geometries(seed, n, random_tensor=False):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        f = MagneticField.polar(rng.uniform(2e-3, 10e-3), math.acos(rng.uniform(-1, 1)), rng.uniform(0, 2 * math.pi))
        t = HyperfineTensor.from_array(rng.uniform(-20e6, 20e6, (3, 3))) if random_tensor else preset_tensor()
        p = SystemParams(field=f, hyperfine=t)
        e = system_eigen(p)
        try:
            quantization_axes(e)
            if nuclear_doublet_splitting(e, 0) < 20e3:
                continue
        except DegenerateError:
            continue
        out.append(p)
    return out


def test_pulse_spec():
    assert PulseSpec().pi_duration == pytest.approx(250e-9)
    with pytest.raises(ValueError):
        PulseSpec(rabi=0)
    with pytest.raises(ValueError):
        PulseSpec(branch=0)


def test_odmr_splitting_on_axis_matches_hyperfine():
    t = HyperfineTensor.from_array(np.diag([0, 0, 14.3e6]))
    p = SystemParams(field=MagneticField(0, 0, 7e-3), hyperfine=t)
    r = pulsed_odmr(p, branch_window(p))
    split, fit = odmr_splitting(r)
    assert fit.converged
    # Lorentzians on sinc^2 lines: agreement within the 95% interval of the fit
    sigma = math.hypot(fit.std_errors["c1"], fit.std_errors["c2"])
    assert abs(split - nuclear_doublet_splitting(system_eigen(p), 1)) <= 1.96 * sigma
    assert r.signal.min() < 0.6 and r.signal.max() <= 1.0


def test_odmr_rejects_far_frequencies():
    with pytest.raises(ValueError):
        pulsed_odmr(preset("paper-nv"), [5e9])


def test_odmr_other_branch():
    p = preset("paper-nv")
    r = pulsed_odmr(p, branch_window(p, branch=-1), PulseSpec(branch=-1))
    split, _ = odmr_splitting(r)
    assert split == pytest.approx(nuclear_doublet_splitting(system_eigen(p), -1), rel=0.1)


def test_echo_frequency_tracks_0prime_splitting():
    for p in _random_geometries(6, 10):
        e = system_eigen(p)
        nu0, nu1 = nuclear_doublet_splitting(e, 0), nuclear_doublet_splitting(e, 1)
        if p.field.perp / p.field.magnitude < 0.3:
            continue
        # eight modulation periods, sampled four times per +1' hyperfine period
        taus = np.linspace(0, 8 / nu0, int(math.ceil(32 * nu1 / nu0)))
        nu, fit = fit_echo(spin_echo(p, taus))
        assert fit.converged
        assert nu == pytest.approx(nu0, rel=0.02)


def test_echo_is_deterministic_and_seeded():
    p = preset("paper-nv")
    taus = np.linspace(0, 2e-6, 21)
    d = DephasingSpec(electron_sigma=1e5, samples=8, lineshape="lorentzian", static=False)
    a = spin_echo(p, taus, d, seed=3).signal
    assert np.array_equal(a, spin_echo(p, taus, d, seed=3).signal)
    assert not np.array_equal(a, spin_echo(p, taus, d, seed=4).signal)
    with pytest.raises(ValueError):
        spin_echo(p, taus[::-1])


def test_polarization_bounded_by_geometry():
    for p in _random_geometries(4, 25) + _random_geometries(5, 25, random_tensor=True):
        r = polarize(p, 1, PulseSpec(ideal=True), fit_readout=False)
        assert abs(r.p) <= r.p_max_geometric + 1e-9


def test_ideal_single_step_saturates_bound():
    for p in _random_geometries(8, 5):
        r = polarize(p, 1, PulseSpec(ideal=True), fit_readout=False)
        assert r.p == pytest.approx(r.p_max_geometric, abs=1e-9)


def test_polarization_grows_with_steps():
    for name in ("paper-nv", "paper-nv-polarize"):
        ps = [polarize(preset(name), n, PulseSpec(ideal=True), fit_readout=False).p for n in range(1, 7)]
        assert all(b >= a - 1e-12 for a, b in zip(ps, ps[1:]))
        assert ps[-1] <= 1.0


def test_perpendicular_axes_polarize_fully():
    r = polarize(preset("paper-nv-perpendicular"), 1, PulseSpec(ideal=True), fit_readout=False)
    assert r.p_max_geometric == pytest.approx(1.0, abs=1e-9)
    assert r.p >= 0.99


def test_polarize_rejects_zero_steps():
    with pytest.raises(ValueError):
        polarize(preset("paper-nv"), 0)


def test_storage_matches_closed_form_on_random_configs():
    for p in _random_geometries(9, 20, random_tensor=True):
        e = system_eigen(p)
        ax = quantization_axes(e)
        nu0 = nuclear_doublet_splitting(e, 0)
        taus = np.linspace(0, 3 / nu0, 31)
        r = storage(p, taus, PulseSpec(ideal=True))
        assert np.abs(r.signal - storage_closed_form(ax.a, ax.b, nu0, taus)).max() < 1e-9


def test_storage_finite_pulses_keep_frequency():
    p = preset("paper-nv-storage")
    nu0 = nuclear_doublet_splitting(system_eigen(p), 0)
    r = storage(p, np.linspace(0, 60e-6, 241))
    assert r.signal[0] > 0.95
    fit = fit_storage(r)
    assert fit["nu"] == pytest.approx(nu0, rel=0.005)


def test_storage_fit_recovers_dephasing():
    p = preset("paper-nv-storage")
    d = DephasingSpec(nuclear_sigma=DephasingSpec.sigma_for_t2_star(26e-6), samples=64, seed=1)
    fit = fit_storage(storage(p, np.linspace(0, 60e-6, 241), PulseSpec(ideal=True), d))
    assert fit["nu"] == pytest.approx(170e3, rel=0.01)
    assert fit["T"] == pytest.approx(26e-6, rel=0.05)


def test_transfer_fidelity_and_phase():
    p = preset("paper-nv-perpendicular")
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        r = transfer_details(p, v)
        assert r.fidelity >= 0.99
        assert np.trace(r.electron_state).real == pytest.approx(1.0, abs=1e-9)
    assert state_transfer(p, [1, 0]) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        state_transfer(p, [1, 1])


def test_transfer_degrades_away_from_perpendicular():
    # eigenstates map exactly; superpositions lose coherence when a != b
    p = preset("paper-nv")
    assert state_transfer(p, [1, 0]) == pytest.approx(1.0, abs=1e-9)
    assert state_transfer(p, [0.6, 0.8]) < 0.99
