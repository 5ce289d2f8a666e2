"""Least-squares line-shape fits: Lorentzian dips and damped cosines.

Models
------
``lorentzian2`` / ``lorentzian4``
    y = base - sum_i A_i (w_i/2)^2 / ((x - c_i)^2 + (w_i/2)^2)
    parameter order: base, c_1, w_1, A_1, c_2, w_2, A_2, ... (dips sorted by centre)
``expcos`` / ``gausscos``
    y = y0 + A cos(2 pi nu t + phi) env(t), env = exp(-t/T) or exp(-(t/T)^2)
    parameter order: nu, T, A, phi, y0

Both use scipy's Levenberg-Marquardt driver with analytic Jacobians on
internally rescaled coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import detrend, find_peaks, peak_widths

from .params import BOLTZMANN, PLANCK

MAX_ITER = 200
XTOL = 1e-10
FTOL = 1e-12
GTOL = 1e-14


class FitError(RuntimeError):
    """Fit could not be set up or its result cannot be interpreted."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class FitResult:
    model: str
    parameters: dict[str, float]
    std_errors: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def centers(self) -> list[float]:
        return [self.parameters[f"c{i}"] for i in range(1, self._n_dips() + 1)]

    def amplitudes(self) -> list[float]:
        return [self.parameters[f"A{i}"] for i in range(1, self._n_dips() + 1)]

    def _n_dips(self) -> int:
        return sum(1 for k in self.parameters if k.startswith("c"))


def _std_errors(jac: np.ndarray, resid: np.ndarray, n_par: int) -> np.ndarray:
    dof = max(1, resid.size - n_par)
    s2 = float(resid @ resid) / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full(n_par, np.inf)
    return np.sqrt(np.abs(np.diag(cov)))


def _solve(fun, jac, p0):
    res = least_squares(fun, p0, jac=jac, method="lm", xtol=XTOL, ftol=FTOL, gtol=GTOL,
                        max_nfev=MAX_ITER * (len(p0) + 1))
    ok = bool(res.success) and res.status > 0 and np.all(np.isfinite(res.x))
    return res, ok


# --- Lorentzian dips ----------------------------------------------------------

def lorentzian_dips(x, base, centers, widths, amplitudes):
    x = np.asarray(x, dtype=float)
    y = np.full_like(x, base, dtype=float)
    for c, w, a in zip(centers, widths, amplitudes):
        hw2 = (0.5 * w) ** 2
        y -= a * hw2 / ((x - c) ** 2 + hw2)
    return y


def _lor_model(p, x, n):
    y = np.full_like(x, p[0])
    for i in range(n):
        c, w, a = p[1 + 3 * i: 4 + 3 * i]
        hw2 = 0.25 * w * w
        y -= a * hw2 / ((x - c) ** 2 + hw2)
    return y


def _lor_jac(p, x, n):
    j = np.empty((x.size, 1 + 3 * n))
    j[:, 0] = 1.0
    for i in range(n):
        c, w, a = p[1 + 3 * i: 4 + 3 * i]
        hw2 = 0.25 * w * w
        d = x - c
        den = d * d + hw2
        j[:, 1 + 3 * i] = -a * hw2 * 2.0 * d / den**2
        j[:, 2 + 3 * i] = -a * (0.5 * w * d * d) / den**2
        j[:, 3 + 3 * i] = -hw2 / den
    return j


def _init_dips(x, y, n):
    base = float(np.percentile(y, 90))
    depth = base - y
    dx = float(np.median(np.diff(x)))
    peaks, props = find_peaks(depth, prominence=0.0)
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(depth))])
        props = {"prominences": np.array([depth[peaks[0]]])}
    order = np.argsort(-props["prominences"], kind="stable")[:n]
    chosen = np.sort(peaks[order])
    with warnings.catch_warnings():
        # flat stretches give zero-width peaks; the floor below handles them
        warnings.simplefilter("ignore", RuntimeWarning)
        widths = peak_widths(depth, chosen, rel_height=0.5)[0] * dx
    span = float(x[-1] - x[0])
    guesses = []
    for k, pk in enumerate(chosen):
        guesses.append((float(x[pk]), max(float(widths[k]), 2 * dx), max(float(depth[pk]), 1e-12)))
    # pad missing dips evenly across the span
    while len(guesses) < n:
        guesses.append((float(x[0] + span * (len(guesses) + 0.5) / n), span / (4 * n), 1e-3))
    guesses.sort()
    return base, guesses


def fit_lorentzians(x, y, n_dips: int, init: dict | None = None) -> FitResult:
    """Fit ``n_dips`` (2 or 4) Lorentzian dips below a flat baseline.

    ``init`` may give ``base`` and lists ``centers``, ``widths``, ``amplitudes``;
    otherwise the deepest local minima seed the fit.
    """
    if n_dips not in (2, 4):
        raise ValueError("n_dips must be 2 or 4")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 5 * n_dips:
        raise ValueError(f"need equal-length x, y with at least {5 * n_dips} points")
    order = np.argsort(x)
    x, y = x[order], y[order]

    x0, xs = float(x.mean()), float(x[-1] - x[0]) or 1.0
    u = (x - x0) / xs
    if init is None:
        base, g = _init_dips(x, y, n_dips)
    else:
        base = init["base"]
        g = list(zip(init["centers"], init["widths"], init["amplitudes"]))
    p0 = [base]
    for c, w, a in g:
        p0 += [(c - x0) / xs, w / xs, a]
    p0 = np.array(p0, dtype=float)

    res, ok = _solve(lambda p: _lor_model(p, u, n_dips) - y, lambda p: _lor_jac(p, u, n_dips), p0)
    p = res.x.copy()
    err = _std_errors(res.jac, res.fun, p.size)

    dips = []
    for i in range(n_dips):
        c, w, a = p[1 + 3 * i: 4 + 3 * i]
        ec, ew, ea = err[1 + 3 * i: 4 + 3 * i]
        dips.append((c * xs + x0, abs(w) * xs, a, ec * xs, ew * xs, ea))
    dips.sort()
    params = {"base": float(p[0])}
    errs = {"base": float(err[0])}
    for i, (c, w, a, ec, ew, ea) in enumerate(dips, start=1):
        params |= {f"c{i}": float(c), f"w{i}": float(w), f"A{i}": float(a)}
        errs |= {f"c{i}": float(ec), f"w{i}": float(ew), f"A{i}": float(ea)}
    rnorm = float(np.linalg.norm(res.fun))
    converged = ok and math.isfinite(rnorm) and all(math.isfinite(v) for v in errs.values())
    return FitResult(
        model=f"lorentzian{n_dips}",
        parameters=params,
        std_errors=errs,
        residual_norm=rnorm,
        converged=converged,
        iterations=int(res.nfev),
        diagnostics={"status": int(res.status), "message": res.message, "n_points": int(x.size)},
    )


# --- damped cosine --------------------------------------------------------------

def damped_cosine(t, nu, T, A, phi, y0, envelope: str = "exponential"):
    t = np.asarray(t, dtype=float)
    env = np.exp(-t / T) if envelope == "exponential" else np.exp(-((t / T) ** 2))
    return y0 + A * np.cos(2 * math.pi * nu * t + phi) * env


def _cos_model(p, t, gauss):
    nu, k, a, phi, y0 = p
    env = np.exp(-((k * t) ** 2)) if gauss else np.exp(-k * t)
    return y0 + a * np.cos(2 * math.pi * nu * t + phi) * env


def _cos_jac(p, t, gauss):
    nu, k, a, phi, y0 = p
    env = np.exp(-((k * t) ** 2)) if gauss else np.exp(-k * t)
    arg = 2 * math.pi * nu * t + phi
    c, s = np.cos(arg), np.sin(arg)
    denv = -2 * k * t * t * env if gauss else -t * env
    return np.column_stack([
        -a * s * env * 2 * math.pi * t,
        a * c * denv,
        c * env,
        -a * s * env,
        np.ones_like(t),
    ])


def dominant_frequency(t, y, max_frequency: float | None = None) -> float:
    """Peak of the zero-padded spectrum of linearly de-trended data, ties to lower frequency.

    ``max_frequency`` restricts the search to the band below it.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    dt = float(np.median(np.diff(t)))
    z = detrend(y, type="linear")
    nfft = 1 << int(math.ceil(math.log2(max(16, 8 * t.size))))
    spec = np.abs(np.fft.rfft(z, n=nfft))
    freqs = np.fft.rfftfreq(nfft, d=dt)
    spec[0] = 0.0
    if max_frequency is not None:
        spec[freqs > max_frequency] = 0.0
    top = spec.max()
    if top == 0.0:
        return 0.0
    k = int(np.flatnonzero(spec >= top * (1 - 1e-9))[0])
    return float(freqs[k])


def fit_damped_cosine(t, y, envelope: str = "exponential", init: dict | None = None,
                      max_frequency: float | None = None) -> FitResult:
    """Fit y0 + A cos(2 pi nu t + phi) env(t; T).

    Without ``init`` the frequency is seeded from the dominant spectral peak,
    searched below ``max_frequency`` when given.

    Returns parameters nu, T, A (>= 0), phi (wrapped to [0, 2 pi)), y0. A decay
    time of ten spans or more is not determined by the data; it is still
    returned but ``diagnostics['T_unbounded']`` is set.
    """
    if envelope not in ("exponential", "gaussian"):
        raise ValueError("envelope must be 'exponential' or 'gaussian'")
    gauss = envelope == "gaussian"
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.size < 8:
        raise ValueError("need at least 8 samples")
    order = np.argsort(t)
    t, y = t[order], y[order]
    span = float(t[-1] - t[0])
    dt = float(np.median(np.diff(t)))
    nyquist = 1.0 / (2.0 * dt)

    if init is not None:
        nu0 = float(init["nu"])
    else:
        nu0 = dominant_frequency(t, y, max_frequency)
    if nu0 > nyquist:
        raise FitError(f"initial frequency {nu0:.6g} Hz exceeds the Nyquist limit {nyquist:.6g} Hz",
                       {"nyquist": nyquist, "nu_init": nu0})

    # work in units of the span so all parameters are O(1)
    ts = t / span

    def seed(nus, phis):
        y0 = float(y.mean())
        amp = float(np.ptp(y)) / 2 or 1e-12
        best = None
        for phi in phis:
            for k in (0.5, 2.0):
                trial = np.array([nus, k, amp, phi, y0])
                r = float(np.sum((_cos_model(trial, ts, gauss) - y) ** 2))
                if best is None or r < best[0]:
                    best = (r, trial)
        return best[1]

    if init is not None:
        starts = [np.array([init["nu"] * span, span / init["T"], init["A"], init["phi"], init["y0"]], float)]
    else:
        starts = [seed(nu0 * span, np.linspace(0, 2 * math.pi, 8, endpoint=False))]
        # barely one cycle across the window: a bare decay is just as plausible
        if nu0 * span < 2.0:
            starts.append(seed(0.0, (0.0, math.pi)))

    fits = [_solve(lambda p: _cos_model(p, ts, gauss) - y, lambda p: _cos_jac(p, ts, gauss), p0) for p0 in starts]
    res, ok = min(fits, key=lambda f: (not f[1], float(np.sum(f[0].fun ** 2))))
    p = res.x.copy()
    err = _std_errors(res.jac, res.fun, p.size)
    nu_s, k, a, phi, y0 = p
    if a < 0:
        a, phi = -a, phi + math.pi
    if nu_s < 0:
        nu_s, phi = -nu_s, -phi
    phi = phi % (2 * math.pi)
    k = abs(k)
    nu = nu_s / span
    T = span / k if k > 0 else math.inf
    sT = err[1] * span / k**2 if k > 0 else math.inf
    params = {"nu": float(nu), "T": float(T), "A": float(a), "phi": float(phi), "y0": float(y0)}
    errs = {"nu": float(err[0] / span), "T": float(sT), "A": float(err[2]), "phi": float(err[3]),
            "y0": float(err[4])}
    rnorm = float(np.linalg.norm(res.fun))
    converged = ok and math.isfinite(rnorm) and math.isfinite(errs["nu"])
    return FitResult(
        model="gausscos" if gauss else "expcos",
        parameters=params,
        std_errors=errs,
        residual_norm=rnorm,
        converged=converged,
        iterations=int(res.nfev),
        diagnostics={"status": int(res.status), "message": res.message, "nu_init": nu0,
                     "T_unbounded": bool(T >= 10 * span), "n_points": int(t.size)},
    )


# --- derived quantities -----------------------------------------------------------

def polarization_from_fit(fit: FitResult) -> float:
    """(p_down - p_up)/(p_down + p_up) from a two-dip fit.

    The lower-frequency dip is assigned to the |down>-conserving transition.
    """
    if fit.model != "lorentzian2":
        raise FitError(f"polarization needs a two-dip fit, got {fit.model}")
    p_down, p_up = fit["A1"], fit["A2"]
    n = fit.diagnostics.get("n_points", 1)
    floor = max(1e-12, 3.0 * fit.residual_norm / math.sqrt(n))
    total = p_down + p_up
    if total < floor:
        raise FitError(f"dip amplitude sum {total:.3g} is below the noise floor {floor:.3g}")
    if p_down < 0 or p_up < 0:
        # one dip absent: clip at the noise floor rather than report |p| > 1
        p_down, p_up = max(p_down, 0.0), max(p_up, 0.0)
    return (p_down - p_up) / (p_down + p_up)


def spin_temperature(p: float, reference_frequency: float) -> float:
    """Two-level Boltzmann temperature (K) of polarization p at a transition frequency (Hz)."""
    p = abs(p)
    if p >= 1.0:
        raise ValueError("|p| must be < 1")
    if p == 0.0:
        return math.inf
    if reference_frequency <= 0:
        raise ValueError("reference frequency must be > 0")
    return PLANCK * reference_frequency / (BOLTZMANN * math.log((1 + p) / (1 - p)))


def reference_frequency_for_temperature(p: float, temperature: float) -> float:
    """Inverse of :func:`spin_temperature`: the frequency at which p corresponds to T."""
    p = abs(p)
    return temperature * BOLTZMANN * math.log((1 + p) / (1 - p)) / PLANCK
