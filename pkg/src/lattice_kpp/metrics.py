"""Part metric, ratio norms, front tracking and the wave-stability hypothesis audit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .coeffs import CoefficientField
from .errors import DomainError, UndershootError, WindowExitError
from .lattice import Boundary, LatticeState, SimOptions, default_options, integrate


def _positive(name: str, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.size == 0 or not np.all(u > 0) or not np.all(np.isfinite(u)):
        raise DomainError(f"{name} must be strictly positive and finite")
    return u


def part_metric(u, v) -> float:
    """rho(u, v) = inf{ln a : a > 1, v/a <= u <= a v} = max_j |ln u_j - ln v_j|."""
    u = _positive("u", u)
    v = _positive("v", v)
    return float(np.abs(np.log(u) - np.log(v)).max())


def part_metric_scan(u, v, alphas: np.ndarray) -> float:
    """The defining infimum evaluated over a grid of alpha values (test oracle)."""
    u = _positive("u", u)
    v = _positive("v", v)
    ok = [a for a in alphas if np.all(v / a <= u) and np.all(u <= a * v)]
    return math.log(min(ok)) if ok else math.inf


def ratio_norm(u, U) -> float:
    U = np.asarray(U, dtype=float)
    if np.any(U == 0) or not np.all(np.isfinite(U)):
        raise DomainError("reference profile must be nonzero and finite")
    return float(np.abs(np.asarray(u, dtype=float) / U - 1.0).max())


# --------------------------------------------------------------------------
# front location


@dataclass
class FrontTrace:
    times: np.ndarray
    X: np.ndarray
    theta: float
    shift_bounds: dict[float, int] = dc_field(default_factory=dict)

    def slope(self) -> float:
        """Least-squares speed of X(t)."""
        return float(np.polyfit(self.times, self.X, 1)[0])


def bounded_shift(times: np.ndarray, X: np.ndarray, tau: float) -> int:
    """sup over sampled |t - s| <= tau of |X(t) - X(s)|."""
    worst = 0
    j0 = 0
    for i in range(times.size):
        while times[i] - times[j0] > tau + 1e-12:
            j0 += 1
        seg = X[j0:i + 1]
        worst = max(worst, int(seg.max() - seg.min()))
    return worst


def front_location(times, sites, values, uplus, theta: float = 0.5,
                   taus: Sequence[float] = (1.0, 5.0)) -> FrontTrace:
    """Largest site with u_j(t) >= theta u+_j(t) for every sampled time.

    ``uplus`` is an array shaped like ``values`` or a callable ``(t, sites)``.
    """
    times = np.asarray(times, dtype=float)
    sites = np.asarray(sites)
    values = np.asarray(values, dtype=float)
    X = np.empty(times.size, dtype=int)
    last = None
    for k, t in enumerate(times):
        ref = uplus(t, sites) if callable(uplus) else np.asarray(uplus)[k]
        above = np.flatnonzero(values[k] >= theta * ref)
        if above.size == 0 or above[-1] == sites.size - 1:
            raise WindowExitError(f"no threshold crossing inside the window at t={t:g}", last)
        X[k] = sites[above[-1]]
        last = float(t)
    trace = FrontTrace(times, X, theta)
    trace.shift_bounds = {float(tau): bounded_shift(times, X, tau) for tau in taus}
    return trace


# --------------------------------------------------------------------------
# part-metric monitor


@dataclass
class MonitorTrace:
    """rho(t) samples; for a batch of pairs ``rho`` has one column per pair.

    ``decrement`` is rho(t0) - rho(t0 + tau), NaN for pairs with rho(t0) < sigma.
    """

    times: np.ndarray
    rho: np.ndarray
    max_increase: float
    decrement: np.ndarray | float | None
    tau: float

    @property
    def non_increasing(self) -> bool:
        return self.max_increase <= 1e-8


def part_metric_monitor(field: CoefficientField, u0, v0, t0: float, t1: float, stride: int = 1,
                        *, offset: int = 0, boundary: Boundary | None = None,
                        opts: SimOptions | None = None, tau: float = 1.0,
                        sigma: float = 0.0) -> MonitorTrace:
    """Integrate u and v with identical steps and record rho(u(t), v(t)).

    ``u0`` and ``v0`` are single profiles or batches of shape ``(pairs, sites)``.
    """
    u0 = _positive("u0", u0)
    v0 = _positive("v0", v0)
    if u0.shape != v0.shape:
        raise ValueError("u0 and v0 must have the same shape")
    boundary = boundary or Boundary.periodic()
    base = opts or default_options(field)
    opts = SimOptions(dt=base.dt, output_stride=stride)
    times, rhos = [], []

    def obs(t, w):
        if np.any(w <= 0):
            raise DomainError("positivity lost along a trajectory", t)
        times.append(t)
        rhos.append(np.abs(np.log(w[0]) - np.log(w[1])).max(axis=-1))

    state = LatticeState(offset, np.stack([u0, v0]), t0, boundary)
    try:
        integrate(state, field, t1, opts, obs)
    except UndershootError as exc:
        raise DomainError("positivity lost along a trajectory", exc.time) from exc
    times = np.array(times)
    rho = np.array(rhos)
    inc = float(np.max(np.diff(rho, axis=0), initial=0.0))
    dec = None
    if times[-1] >= t0 + tau - 1e-12:
        k = int(np.argmin(np.abs(times - (t0 + tau))))
        dec = np.where(rho[0] >= sigma, rho[0] - rho[k], np.nan)
        if dec.ndim == 0:
            dec = None if np.isnan(dec) else float(dec)
    return MonitorTrace(times, rho, inc, dec, tau)


def ordering_defect(field: CoefficientField, lower, upper, t0: float, t1: float, *,
                    offset: int = 0, boundary: Boundary | None = None,
                    opts: SimOptions | None = None, stride: int = 1):
    """Largest max_j (u_j - v_j) per output step for solutions from ordered data u0 <= v0."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("initial data must be ordered")
    boundary = boundary or Boundary.periodic()
    base = opts or default_options(field)
    times, worst = [], []

    def obs(t, w):
        times.append(t)
        worst.append(float((w[0] - w[1]).max()))

    integrate(LatticeState(offset, np.stack([lower, upper]), t0, boundary), field, t1,
              SimOptions(dt=base.dt, output_stride=stride), obs)
    return np.array(times), np.array(worst)


# --------------------------------------------------------------------------
# stability of a wave


@dataclass
class StabilityTrace:
    times: np.ndarray
    ratio: np.ndarray

    def value_at(self, t: float) -> float:
        return float(self.ratio[int(np.argmin(np.abs(self.times - t)))])

    def max_increase_after(self, t_burn: float) -> float:
        r = self.ratio[self.times >= t_burn - 1e-12]
        return float(np.max(np.diff(r), initial=0.0))


def stability_trace(field: CoefficientField, offset: int, U0, u0, t0: float, t1: float,
                    boundary: Boundary, *, opts: SimOptions | None = None,
                    stride: int = 10) -> StabilityTrace:
    """Ratio norm sup_j |u_j(t) / U_j(t) - 1| along a joint integration of u and U."""
    base = opts or default_options(field)
    opts = SimOptions(dt=base.dt, output_stride=stride)
    times, ratios = [], []

    def obs(t, w):
        times.append(t)
        ratios.append(ratio_norm(w[1], w[0]))

    integrate(LatticeState(offset, np.stack([np.asarray(U0, float), np.asarray(u0, float)]), t0,
                           boundary), field, t1, opts, obs)
    return StabilityTrace(np.array(times), np.array(ratios))


def perturb_front(U0: np.ndarray, rng: np.random.Generator, low: float = 0.8, high: float = 1.25,
                  split: int | None = None) -> np.ndarray:
    """Multiplicative noise in [low, high] on the left part, right tail untouched."""
    U0 = np.asarray(U0, dtype=float)
    split = U0.size // 2 if split is None else split
    noise = np.ones_like(U0)
    noise[:split] = rng.uniform(low, high, split)
    return U0 * noise


# --------------------------------------------------------------------------
# hypothesis audit


@dataclass
class WaveSamples:
    """What the audit needs to know about a wave and its envelopes.

    ``phi`` and ``phi1`` are callables ``(t, sites) -> array``; ``field`` is used
    to evolve trapped initial data. ``window(t, sites)`` optionally masks the
    sites where the envelope bound is checked (padding sites excluded).
    """

    times: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    front: FrontTrace
    phi: Callable[[float, np.ndarray], np.ndarray]
    phi1: Callable[[float, np.ndarray], np.ndarray]
    d_star: float
    d1_star: float
    field: CoefficientField
    uplus: Callable[[float, np.ndarray], np.ndarray]
    dt: float = 0.01
    window: Callable[[float, np.ndarray], np.ndarray] | None = None


@dataclass
class Clause:
    name: str
    passed: bool
    detail: str
    witness: tuple | None = None


@dataclass
class HypothesisReport:
    clauses: list[Clause]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def clause(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self) -> list[tuple[str, str, str]]:
        return [(c.name, "pass" if c.passed else "fail", "" if c.witness is None else str(c.witness))
                for c in self.clauses]


def envelope_violation(times, sites, values, phi, phi1, d, d1, rel: float = 1e-9, window=None):
    """Largest relative breach of d phi - d1 phi1 <= U <= d phi + d1 phi1 and its witness."""
    worst, witness = 0.0, None
    for k, t in enumerate(times):
        p, q = phi(t, sites), phi1(t, sites)
        hi = d * p + d1 * q
        lo = d * p - d1 * q
        scale = np.abs(hi)
        breach = np.maximum(values[k] - hi, lo - values[k]) / np.maximum(scale, 1e-300)
        if window is not None:
            breach = np.where(window(t, sites), breach, -np.inf)
        j = int(np.argmax(breach))
        if breach[j] > worst:
            worst, witness = float(breach[j]), (float(t), int(sites[j]))
    return worst, witness, worst <= rel


def fit_log_rate(sites: np.ndarray, ratio: np.ndarray) -> float:
    """Slope of ln(ratio) against the site index."""
    return float(np.polyfit(sites.astype(float), np.log(ratio), 1)[0])


def audit_stability_hypotheses(wave: WaveSamples, *, n_trapped: int = 20, horizon: float = 2.0,
                               seed: int = 0, rel: float = 1e-9) -> HypothesisReport:
    """Check the five conditions under which a wave is stable and unique, on samples."""
    times, sites, U = wave.times, wave.sites, wave.values
    clauses = []

    # bounded shifts of the front
    bounds = wave.front.shift_bounds or {1.0: bounded_shift(wave.front.times, wave.front.X, 1.0)}
    finite = all(math.isfinite(v) and v <= sites.size for v in bounds.values())
    clauses.append(Clause("bounded front shifts", finite,
                          ", ".join(f"tau={k:g}: {v}" for k, v in bounds.items())))

    # divergence on the left, decay on the right
    ok22, witness = True, None
    edge = min(10, sites.size // 4)
    for t in times:
        for fn in (wave.phi, wave.phi1):
            v = fn(t, sites)
            left, right = v[:edge], v[-edge:]
            if not (np.all(np.diff(left) < 0) and np.all(np.diff(right) < 0)
                    and left[0] > 1.0 and right[-1] < 1e-6):
                ok22, witness = False, (float(t),)
                break
        if not ok22:
            break
    clauses.append(Clause("envelope limits", ok22,
                          "phi, phi1 increase leftward past 1 and decay rightward below 1e-6", witness))

    # exponential ratio decay at both ends, measured relative to the front
    rates_left, rates_right = [], []
    for t, X in zip(wave.front.times, wave.front.X):
        left = np.arange(X - 30, X - 10)
        right = np.arange(X + 10, X + 30)
        rates_left.append(fit_log_rate(left, wave.phi(t, left) / wave.phi1(t, left)))
        rates_right.append(-fit_log_rate(right, wave.phi1(t, right) / wave.phi(t, right)))
    rate = min(min(rates_left), min(rates_right))
    clauses.append(Clause("exponential ratio decay", rate > 0,
                          f"fitted rate {rate:.6g} (phi/phi1 toward -inf, phi1/phi toward +inf)"))

    # envelope bound
    worst, wit, ok = envelope_violation(times, sites, U, wave.phi, wave.phi1, wave.d_star,
                                        wave.d1_star, rel, wave.window)
    clauses.append(Clause("envelope bound", ok, f"max relative breach {worst:.3g}", wit))

    # trapped data stay trapped
    rng = np.random.default_rng(seed)
    t0 = float(times[0])
    p0, q0 = wave.phi(t0, sites), wave.phi1(t0, sites)
    lo0 = np.maximum(wave.d_star * p0 - wave.d1_star * q0, 0.0)
    hi0 = np.minimum(wave.d_star * p0 + wave.d1_star * q0, np.maximum(wave.uplus(t0, sites), lo0))
    data = lo0 + rng.uniform(0.0, 1.0, (n_trapped, sites.size)) * (hi0 - lo0)
    d, d1 = wave.d_star, wave.d1_star

    def ghost_right(t, s):
        return max(d * float(wave.phi(t, np.array([s]))[0]) - d1 * float(wave.phi1(t, np.array([s]))[0]), 0.0)

    bnd = Boundary.clamp(lambda t, s: float(np.asarray(wave.uplus(t, np.array([s])))[0]),
                         ghost_right, "trap")
    worst_trap, wit_trap = 0.0, None
    opts = SimOptions(dt=min(wave.dt, default_options(wave.field).dt), output_stride=10)

    def obs(t, w):
        nonlocal worst_trap, wit_trap
        p, q = wave.phi(t, sites), wave.phi1(t, sites)
        hi, lo = d * p + d1 * q, d * p - d1 * q
        breach = np.maximum(w - hi, lo - w) / np.maximum(np.abs(hi), 1e-300)
        if wave.window is not None:
            breach = np.where(wave.window(t, sites), breach, -np.inf)
        i = np.unravel_index(np.argmax(breach), breach.shape)
        if breach[i] > worst_trap:
            worst_trap, wit_trap = float(breach[i]), (float(t), int(sites[i[1]]))

    integrate(LatticeState(int(sites[0]), data, t0, bnd), wave.field, t0 + horizon, opts, obs)
    clauses.append(Clause("envelope invariance", worst_trap <= rel,
                          f"{n_trapped} trapped data, max relative breach {worst_trap:.3g}", wit_trap))
    return HypothesisReport(clauses)
