"""Transition waves in media that vary in time only.

With g(mu) = e^{-mu} + e^{mu} - 2 and a constant dispersal d the designed
instantaneous speed is c(t; mu) = (d g(mu) + f(t, 0)) / mu, and with
C(t) = integral_0^t c the envelopes are

    phi(t, j)  = exp(-mu (j - C(t)))
    phi1(t, j) = exp(A(t) - mu~ (j - C(t))),

where A is built so that A' + B >= delta with
B(t) = -d g(mu~) + mu~ c(t; mu) - f(t, 0). Between phi - d1 phi1 and
phi + d1 phi1 the wave is obtained by pullback from earlier and earlier
starting times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ._optim import golden_section
from .coeffs import CoefficientField, window_average_extremes
from .errors import (
    AdmissibilityError,
    ConstructionError,
    ConvergenceError,
    EnvelopeError,
    ParameterError,
)
from .lattice import (
    Boundary,
    EntireSolution,
    LatticeState,
    SimOptions,
    compute_entire_solution,
    default_options,
    integrate,
    step_count,
)
from .metrics import FrontTrace, envelope_violation, front_location

ENVELOPE_TOL = 1e-8


def g(mu):
    """e^{-mu} + e^{mu} - 2."""
    return np.exp(-mu) + np.exp(mu) - 2.0


@dataclass(frozen=True)
class FBarStats:
    f_bar_inf: float
    f_bar_sup: float
    f_bar_inf_plus: float
    f_bar_sup_plus: float
    horizon: float
    window_policy: str


def _require_time_only(field: CoefficientField) -> None:
    if not field.spatially_homogeneous:
        raise ParameterError("the construction needs coefficients that do not depend on the site")


def dispersal_constant(field: CoefficientField) -> float:
    if field.d_min != field.d_max:
        raise ParameterError("the construction needs a constant dispersal rate")
    return float(field.d_min)


def sample_f0(field: CoefficientField, t0: float, t1: float, dt: float):
    n = step_count(t1 - t0, dt)
    times = t0 + (t1 - t0) / n * np.arange(n + 1)
    zero = np.zeros(1, dtype=int)
    vals = np.array([float(field.f(t, zero, np.zeros(1))[0]) for t in times])
    return times, vals


def window_stats(values: np.ndarray, dt: float, horizon: float) -> tuple[float, float]:
    """(inf, sup) of window averages with length >= horizon / 4."""
    if not np.all(np.isfinite(values)):
        raise ParameterError("non-finite samples")
    return window_average_extremes(values, dt, horizon / 4.0)


def estimate_fbar(field: CoefficientField, horizon: float = 200.0, dt: float = 0.01) -> FBarStats:
    """Window-average extremes of f(t, 0) on [-horizon, horizon] and on [0, horizon]."""
    _require_time_only(field)
    if horizon < 50:
        raise ParameterError("horizon must be at least 50 time units")
    times, vals = sample_f0(field, -horizon, horizon, dt)
    h = (times[1] - times[0])
    lo, hi = window_stats(vals, h, horizon)
    half = vals[times >= -1e-12]
    lo_p, hi_p = window_average_extremes(half, h, horizon / 4.0)
    return FBarStats(lo, hi, lo_p, hi_p, horizon, f"windows of length >= {horizon / 4:g}")


def _fbar(stats) -> float:
    return stats.f_bar_inf if isinstance(stats, FBarStats) else float(stats)


def speed_function(mu, fbar: float, d: float = 1.0):
    return (d * g(mu) + fbar) / mu


def c0_tilde(stats, d: float = 1.0, scan=(1e-3, 10.0), n_scan: int = 2001) -> tuple[float, float]:
    """inf over mu > 0 of (d g(mu) + f_bar_inf) / mu and its unique minimiser."""
    fbar = _fbar(stats)
    if fbar <= 0:
        raise AdmissibilityError(f"averaged growth {fbar:.6g} is not positive")
    mus = np.linspace(*scan, n_scan)
    vals = speed_function(mus, fbar, d)
    signs = np.sign(np.diff(vals))
    changes = int(np.count_nonzero(np.diff(signs[signs != 0]) != 0))
    if changes != 1:
        raise AdmissibilityError("speed function is not unimodal on the scan")
    k = int(np.argmin(vals))
    a, b = mus[max(k - 1, 0)], mus[min(k + 1, n_scan - 1)]
    mu_star, c0 = golden_section(lambda m: float(speed_function(m, fbar, d)), a, b, tol=1e-10)
    return float(c0), float(mu_star)


def speed_roots(gamma: float, stats, d: float = 1.0) -> tuple[float, float]:
    """The two positive solutions of gamma = (d g(mu) + f_bar_inf) / mu."""
    fbar = _fbar(stats)
    c0, mu_star = c0_tilde(fbar, d)
    if gamma <= c0:
        raise ParameterError(f"gamma={gamma:.6g} must exceed the critical value {c0:.10g}")

    def h(m):
        return float(speed_function(m, fbar, d)) - gamma

    lo = mu_star
    while h(lo) < 0:
        lo *= 0.5
    hi = mu_star
    while h(hi) < 0:
        hi *= 2.0
    small = brentq(h, lo, mu_star, xtol=1e-14, rtol=1e-14)
    large = brentq(h, mu_star, hi, xtol=1e-14, rtol=1e-14)
    return float(small), float(large)


def c_of_t(field: CoefficientField, mu: float, t, d: float | None = None):
    """Instantaneous speed c(t; mu) at one or many times."""
    d = dispersal_constant(field) if d is None else d
    zero = np.zeros(1, dtype=int)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    f0 = np.array([float(field.f(s, zero, np.zeros(1))[0]) for s in ts])
    out = (d * g(mu) + f0) / mu
    return out if np.ndim(t) else float(out[0])


# --------------------------------------------------------------------------
# auxiliary exponent


@dataclass
class AExponent:
    times: np.ndarray
    A: np.ndarray
    B: np.ndarray
    delta: float
    margin: float
    sup_A: float

    def __call__(self, t):
        return np.interp(t, self.times, self.A)


def reflect(times: np.ndarray, B: np.ndarray, delta: float, horizon: float | None = None) -> AExponent:
    """A(t) = max(0, sup_{s <= t} integral_s^t (delta - B)) on the sample grid.

    A is zero at the first sample; Y = integral (delta - B) by trapezoid and
    A = Y - running min Y.
    """
    times = np.asarray(times, dtype=float)
    B = np.asarray(B, dtype=float)
    dt = np.diff(times)
    Y = np.concatenate([[0.0], np.cumsum(0.5 * dt * ((delta - B[1:]) + (delta - B[:-1])))])
    A = Y - np.minimum.accumulate(Y)
    horizon = (times[-1] - times[0]) if horizon is None else horizon
    sup_A = float(A.max())
    if not math.isfinite(sup_A) or sup_A > 10 * horizon * delta:
        raise ConstructionError(f"A grows to {sup_A:.3g}; choose a smaller delta")
    margin = float((np.diff(A) / dt + B[:-1]).min())
    if margin < delta / 2:
        raise ConstructionError(f"sampled margin {margin:.3g} below delta/2; choose a smaller delta")
    return AExponent(times, A, B, float(delta), margin, sup_A)


def B_of_t(field: CoefficientField, mu: float, mu_tilde: float, times, d: float | None = None):
    d = dispersal_constant(field) if d is None else d
    c = c_of_t(field, mu, times, d)
    zero = np.zeros(1, dtype=int)
    f0 = np.array([float(field.f(s, zero, np.zeros(1))[0]) for s in np.atleast_1d(times)])
    return -d * g(mu_tilde) + c * mu_tilde - f0


def build_A(field: CoefficientField, mu: float, mu_tilde: float, delta: float | None = None, *,
            t_range: tuple[float, float] = (-200.0, 200.0), dt: float = 0.01,
            stats_horizon: float = 200.0) -> AExponent:
    """Running-reflection exponent for B(t) over ``t_range``.

    The averaged lower bound of B is estimated over [-stats_horizon,
    stats_horizon]; delta defaults to a quarter of it.
    """
    if not mu < mu_tilde < 2 * mu:
        raise ParameterError("need mu < mu~ < 2 mu")
    ts, _ = sample_f0(field, -stats_horizon, stats_horizon, dt)
    b_inf, _ = window_stats(B_of_t(field, mu, mu_tilde, ts), ts[1] - ts[0], stats_horizon)
    if b_inf <= 0:
        raise ConstructionError(f"averaged B is not positive ({b_inf:.3g}); mu~ inadmissible")
    if delta is None:
        delta = b_inf / 4
    if not 0 < delta < b_inf / 2:
        raise ConstructionError(f"delta={delta:.3g} must lie in (0, {b_inf / 2:.3g})")
    times, _ = sample_f0(field, t_range[0], t_range[1], dt)
    return reflect(times, B_of_t(field, mu, mu_tilde, times), delta, t_range[1] - t_range[0])


# --------------------------------------------------------------------------
# transition wave


@dataclass
class TimeHetOptions:
    stats_horizon: float = 200.0
    gamma_offset: float = 0.5
    n_max: int = 80
    tol: float = 1e-6
    t_out: float = 50.0
    out_every: float = 0.5
    x_lo: float = -40.0
    x_hi: float = 80.0
    pad: int = 40
    dt: float = 0.01
    check_every: int = 10


@dataclass
class Diagnostic:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class TimeHetWave:
    field: CoefficientField
    stats: FBarStats
    c0: float
    mu_star: float
    gamma: float
    mu: float
    mu_tilde: float
    d: float
    delta: float
    A: AExponent
    c_times: np.ndarray
    c_samples: np.ndarray
    c_integral: np.ndarray
    times: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    d1_star: float
    retried: bool
    history: list[float]
    uplus: EntireSolution
    front: FrontTrace
    diagnostics: list[Diagnostic]
    options: TimeHetOptions
    c_antiderivative: object = None
    c_shift: float = 0.0

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.diagnostics)

    def diagnostic(self, name: str) -> Diagnostic:
        for d in self.diagnostics:
            if d.name == name:
                return d
        raise KeyError(name)

    def C(self, t):
        return self.c_antiderivative(t) - self.c_shift

    def phi(self, t, j):
        return np.exp(-self.mu * (np.asarray(j) - self.C(t)))

    def phi1(self, t, j):
        return np.exp(self.A(t) - self.mu_tilde * (np.asarray(j) - self.C(t)))

    def uplus_fn(self, t, j):
        return np.full(np.shape(j), float(self.uplus.value(t, 0)))

    def window(self, t, j):
        x = np.asarray(j) - self.C(t)
        return (x >= self.options.x_lo) & (x <= self.options.x_hi)

    def samples(self, d1: float | None = None):
        from .metrics import WaveSamples

        return WaveSamples(self.times, self.sites, self.values, self.front, self.phi, self.phi1,
                           1.0, self.d1_star if d1 is None else d1, self.field, self.uplus_fn,
                           self.options.dt, window=self.window)

    def boundary(self) -> Boundary:
        def left(t, k):
            return float(self.uplus.value(t, 0))

        def right(t, k):
            return float(self.phi(t, k))

        return Boundary.clamp(left, right, "wave-envelope")


def _pullback(field, opts, sites, phi, phi1, d1, uplus, C):
    """Members started at -n from trapped data; returns output samples for all members."""
    n_max = opts.n_max
    left_site = int(sites[0])

    def initial(t):
        p, q = phi(t, sites), phi1(t, sites)
        lo = p - d1 * q
        pos = np.maximum(lo, 0.0)
        k = int(np.argmax(pos))
        u = pos.copy()
        u[:k] = float(uplus.value(t, 0))
        u = np.minimum(u, p + d1 * q)
        if np.any(u < lo - ENVELOPE_TOL * np.abs(p + d1 * q)):
            raise ConstructionError("the u+ plateau does not dominate the lower envelope")
        return u

    def left(t, k):
        return float(uplus.value(t, 0))

    def right(t, k):
        return float(phi(t, np.array([k]))[0])

    bnd = Boundary.clamp(left, right, "wave-envelope")
    u = np.zeros((n_max, sites.size))
    active = np.zeros(n_max, dtype=bool)
    check = SimOptions(dt=opts.dt, output_stride=opts.check_every)

    def window(t, j):
        x = j - C(t)
        return (x >= opts.x_lo) & (x <= opts.x_hi)

    def guard(t, w):
        rows = w[active]
        for r in rows:
            worst, wit, ok = envelope_violation([t], sites, r[None], phi, phi1, 1.0, d1,
                                                ENVELOPE_TOL, window)
            if not ok:
                raise EnvelopeError(f"envelope ordering lost by {worst:.3g}", wit)

    for n in range(n_max, 0, -1):
        u[n - 1] = initial(-float(n))
        active[n - 1] = True
        state = integrate(LatticeState(left_site, u, -float(n), bnd), field, -float(n) + 1, check, guard)
        u = state.values
    samples = []

    def record(t, w):
        guard(t, w)
        samples.append(w.copy())

    stride = max(1, int(round(opts.out_every / opts.dt)))
    out = SimOptions(dt=opts.dt, output_stride=stride)
    integrate(LatticeState(left_site, u, 0.0, bnd), field, opts.t_out, out, record)
    return np.array(samples)


def build_transition_wave(field: CoefficientField, gamma: float | None = None,
                          options: TimeHetOptions | None = None) -> TimeHetWave:
    """Pullback construction of the transition wave with mean speed gamma."""
    opts = options or TimeHetOptions()
    _require_time_only(field)
    d = dispersal_constant(field)
    base = default_options(field, opts.dt)
    stats = estimate_fbar(field, opts.stats_horizon, base.dt)
    c0, mu_star = c0_tilde(stats, d)
    gamma = c0 + opts.gamma_offset if gamma is None else float(gamma)
    mu, _ = speed_roots(gamma, stats, d)
    mu_tilde = 0.5 * (mu + min(2 * mu, mu_star))
    if mu_tilde <= mu:
        raise ParameterError("no room for the auxiliary tilt")
    t_lo = -float(opts.n_max) - 1.0
    t_hi = opts.t_out + 1.0
    A = build_A(field, mu, mu_tilde, t_range=(t_lo, t_hi), dt=base.dt,
                stats_horizon=opts.stats_horizon)
    c_times = A.times
    c_samples = c_of_t(field, mu, c_times, d)
    # spline antiderivative: fourth-order accurate, which the thin far-field
    # envelope gap needs
    anti = CubicSpline(c_times, c_samples).antiderivative()
    shift = float(anti(0.0))

    def C(t):
        return anti(t) - shift

    c_integral = C(c_times)

    def phi(t, j):
        return np.exp(-mu * (np.asarray(j) - C(t)))

    def phi1(t, j):
        return np.exp(A(t) - mu_tilde * (np.asarray(j) - C(t)))

    L = float(field.neg_fu_bound) if field.neg_fu_bound is not None else None
    if L is None:
        from .waves_periodic import neg_fu_bound

        L = neg_fu_bound(field, max(1.0, field.M0))
    d1 = 2.0 * max(1.0, L / A.delta)
    uplus = compute_entire_solution(field, horizon=(t_lo - 1.0, t_hi), tol=1e-10)
    k_lo = int(math.floor(C(-opts.n_max) + opts.x_lo)) - opts.pad
    k_hi = int(math.ceil(C(opts.t_out) + opts.x_hi)) + opts.pad
    sites = np.arange(k_lo, k_hi + 1)

    retried = False
    try:
        frames = _pullback(field, opts, sites, phi, phi1, d1, uplus, C)
    except EnvelopeError:
        retried = True
        d1 *= 4.0
        frames = _pullback(field, opts, sites, phi, phi1, d1, uplus, C)
    # frames: (nt, n_max, sites); member n-1 started at -n
    nt = frames.shape[0]
    times = opts.out_every * np.arange(nt)
    times[-1] = min(times[-1], opts.t_out)
    wmask = np.array([(sites - C(t) >= opts.x_lo) & (sites - C(t) <= opts.x_hi) for t in times])
    history = []
    chosen = None
    for n in range(1, opts.n_max):
        diff = np.abs(frames[:, n] - frames[:, n - 1])[wmask]
        history.append(float(diff.max()))
        if history[-1] < opts.tol:
            chosen = n
            break
    if chosen is None:
        raise ConvergenceError(f"pullback did not converge within {opts.n_max} starting times", history)
    values = frames[:, chosen]

    diags: list[Diagnostic] = []
    worst, wit, ok = envelope_violation(times, sites, values, phi, phi1, 1.0, d1, ENVELOPE_TOL,
                                        lambda t, j: (j - C(t) >= opts.x_lo) & (j - C(t) <= opts.x_hi))
    diags.append(Diagnostic("envelope ordering", worst, ENVELOPE_TOL, ok, f"witness {wit}"))
    up = np.array([np.full(sites.size, float(uplus.value(t, 0))) for t in times])
    front = front_location(times, sites, values, up, taus=(1.0, 5.0))
    track = float(np.abs(front.X - front.X[0] - C(times)).max())
    diags.append(Diagnostic("front tracking", track, 3.0, track <= 3.0))
    diags.append(Diagnostic("A margin", A.margin, A.delta / 2, A.margin >= A.delta / 2))
    ratio = []
    for k, t in enumerate(times):
        x = sites - C(t)
        sel = (phi1(t, sites) / phi(t, sites) < 1e-3) & (x <= opts.x_hi)
        if sel.any():
            ratio.append(float(np.abs(values[k][sel] / phi(t, sites[sel]) - 1.0).max()))
    decay = max(ratio) if ratio else math.inf
    diags.append(Diagnostic("decay ratio", decay, 0.05, decay < 0.05))
    diags.append(Diagnostic("convergence", history[-1], opts.tol, True,
                            f"{chosen + 1} starting times"))
    return TimeHetWave(field, stats, c0, mu_star, gamma, mu, mu_tilde, d, A.delta, A, c_times,
                       c_samples, c_integral, times, sites, values, d1, retried, history, uplus,
                       front, diags, opts, anti, shift)
