"""Periodic traveling waves from explicit sub/super-solutions and monotone iteration.

Moving-frame coordinate: x = j - c t. For a tilt mu with lambda(mu)/mu = c and
an auxiliary tilt mu' the envelopes are

    v_upper = d e^{-mu x} psi^mu(t, k) + d1 e^{-mu' x} psi^mu'(t, k)
    v_lower = d e^{-mu x} psi^mu(t, k) - d1 e^{-mu' x} psi^mu'(t, k)

with k the absolute site. The super-solution caps v_upper by u+, the
sub-solution floors v_lower by the plateau b psi^0 left of x = M.

Iteration. For a phase theta let Omega_n(theta) be the lattice solution at
time n T started at time 0 from the super-solution datum whose moving-frame
coordinate at site k is k + theta + c n T. Then

    Omega_n(theta) = E^T Omega_{n-1}(theta + c T),

where E^T is the one-period evolution; the profile at (x, z) of the
space-continuous system is Omega(theta)(k) with k = floor(x + z) and
theta = x - k. Members theta_i = i c T form one orbit, so each monotone
iterate is an exact lattice evolution and no interpolation in x or z is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coeffs import CoefficientField
from .errors import (
    ConvergenceError,
    GeometryError,
    InadmissibleTiltError,
    IterationIntegrityError,
    ParameterError,
    ResolutionError,
)
from .floquet import (
    FloquetResult,
    SpeedResult,
    find_mu_star,
    lambda_of_mu,
    mu_for_speed,
    select_mu_prime,
)
from .lattice import (
    EntireSolution,
    check_step,
    compute_entire_solution,
    default_options,
    lattice_defect,
    step_count,
    TimeGridFunction,
    UNDERSHOOT_TOL,
)

MONOTONE_SLACK = 1e-10
INTEGRITY_LIMIT = 1e-8


@dataclass(frozen=True)
class SubSuperParams:
    d: float
    d1: float
    b: float
    M: float
    N: float
    mu: float
    mu_prime: float
    c: float

    def __post_init__(self):
        if not 0 < self.d <= 2:
            raise ParameterError("leading amplitude d must lie in (0, 2]")
        if not 0 < self.mu < self.mu_prime:
            raise ParameterError("need 0 < mu < mu'")
        if self.d1 <= 0 or self.b <= 0:
            raise ParameterError("d1 and b must be positive")


def neg_fu_bound(field: CoefficientField, upper: float, n_u: int = 41) -> float:
    """Bound L of -f_u on [0, upper]: declared when available, else sampled."""
    if field.neg_fu_bound is not None:
        return float(field.neg_fu_bound)
    J = field.space_period
    us = np.linspace(0.0, upper, n_u)
    du = 1e-6 * max(1.0, upper)
    worst = 0.0
    for t in np.linspace(0.0, field.period, 17):
        for j in range(J):
            slope = (field.f(t, np.full(n_u, j), us + du) - field.f(t, np.full(n_u, j), us)) / du
            worst = max(worst, float(-slope.min()))
    return worst


def compute_d0(field: CoefficientField, mu: float, mu_prime: float, fl_mu: FloquetResult,
               fl_mup: FloquetResult, c: float, L: float | None = None, d: float = 1.0) -> float:
    """Smallest admissible ratio d1/d for which v_lower is a sub-solution."""
    if not 0 < mu < mu_prime:
        raise ParameterError("need 0 < mu < mu'")
    gap = mu_prime * c - fl_mup.lam
    if gap <= 0:
        raise InadmissibleTiltError(f"mu' c - lambda(mu') = {gap:.3g} must be positive")
    if L is None:
        L = neg_fu_bound(field, d * fl_mu.psi_max)
    pmax = fl_mu.psi_max
    qmin = fl_mup.psi_min
    return max(pmax / qmin, L * pmax ** 2 / (gap * qmin))


@dataclass
class Envelopes:
    """Evaluates the explicit sub/super-solutions in (t, x, k) form.

    ``x`` is the moving-frame coordinate and ``k`` the absolute site that
    selects psi and u+ values.
    """

    params: SubSuperParams
    fl_mu: FloquetResult
    fl_mup: FloquetResult
    fl0: FloquetResult
    uplus: EntireSolution

    def _parts(self, t, x, k):
        p = self.params
        with np.errstate(over="ignore"):
            a = p.d * np.exp(-p.mu * x) * self.fl_mu.value(t, k)
            b = p.d1 * np.exp(-p.mu_prime * x) * self.fl_mup.value(t, k)
        return a, b

    def v_upper(self, t, x, k):
        a, b = self._parts(t, x, k)
        return a + b

    def v_lower(self, t, x, k):
        a, b = self._parts(t, x, k)
        with np.errstate(invalid="ignore"):
            out = a - b
        return np.where(np.isnan(out), -np.inf, out)

    def u_upper(self, t, x, k):
        return np.minimum(self.v_upper(t, x, k), self.uplus.value(t, k))

    def u_lower(self, t, x, k):
        p = self.params
        vl = self.v_lower(t, x, k)
        plateau = p.b * self.fl0.value(t, k)
        return np.where(x <= p.M, np.maximum(plateau, vl), vl)

    def phi(self, t, j, c):
        x = j - c * t
        return np.exp(-self.params.mu * x) * self.fl_mu.value(t, j)

    def phi1(self, t, j, c):
        x = j - c * t
        return np.exp(-self.params.mu_prime * x) * self.fl_mup.value(t, j)


def find_plateau(field: CoefficientField, mu: float, mu_prime: float, d: float, d1: float,
                 fl_mu: FloquetResult, fl_mup: FloquetResult, fl0: FloquetResult,
                 b0: float = 0.1, min_b: float = 1e-8, L: float | None = None,
                 dx: float = 1.0 / 64.0):
    """Downward scan b = b0, b0/2, ... for a plateau below v_lower on some [N, M].

    Returns ``(b, N, M, scanned)``; raises GeometryError when no b works.
    """
    if fl0.lam <= 0:
        raise GeometryError("lambda(0) <= 0: the plateau is not a sub-solution", [])
    if L is None:
        L = neg_fu_bound(field, b0 * fl0.psi_max)
    # pointwise minimum over sampled (t, site) of the three profiles
    A = fl_mu.psi[:-1]
    B = fl_mup.psi[:-1]
    P = fl0.psi[:-1]
    xs = np.arange(0.0, 200.0, dx)
    scanned = []
    b = b0
    while b >= min_b:
        scanned.append(b)
        if b * L * fl0.psi_max <= fl0.lam:
            gap = np.empty_like(xs)
            for n, x in enumerate(xs):
                gap[n] = (d * math.exp(-mu * x) * A - d1 * math.exp(-mu_prime * x) * B - b * P).min()
            ok = gap >= 0
            if ok.any():
                idx = np.flatnonzero(ok)
                # longest run of admissible abscissas
                breaks = np.flatnonzero(np.diff(idx) > 1)
                starts = np.concatenate([[idx[0]], idx[breaks + 1]])
                ends = np.concatenate([idx[breaks], [idx[-1]]])
                r = int(np.argmax(ends - starts))
                N, M = xs[starts[r]], xs[ends[r]]
                if M - N >= 1.0:
                    return b, float(N), float(M), scanned
        b *= 0.5
    raise GeometryError("no plateau amplitude b satisfies the crossing inequality", scanned)


def build_sub_super(field: CoefficientField, params: SubSuperParams, i: int, env: Envelopes):
    """Sub- and super-solution of the i-shifted lattice as functions of (t, j)."""
    c = params.c

    def sub(t, j):
        j = np.asarray(j)
        return env.u_lower(t, j - c * t, j + i)

    def sup(t, j):
        j = np.asarray(j)
        return env.u_upper(t, j - c * t, j + i)

    return sub, sup


# --------------------------------------------------------------------------
# space-continuous extension


@dataclass(frozen=True)
class ContinuumField:
    """Piecewise-constant extension d(t, x) = d(t, floor(x)) on the grid x0 + n/m."""

    field: CoefficientField
    m: int

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def site(self, x) -> np.ndarray:
        # the small offset absorbs round-off for grid points that are integers
        return np.floor(np.asarray(x, dtype=float) + 1e-9).astype(int)

    def d(self, t, x):
        return self.field.d(t, self.site(x))

    def f(self, t, x, u):
        return self.field.f(t, self.site(x), u)

    def rhs(self, t: float, x: np.ndarray, u: np.ndarray, z: float, left: np.ndarray,
            right: np.ndarray) -> np.ndarray:
        """Right-hand side on grid points ``x``; ``left``/``right`` hold m ghost cells each."""
        m = self.m
        ext = np.concatenate([left, u, right])
        up = ext[2 * m:]
        um = ext[:-2 * m]
        s = x + z
        return (self.d(t, s + 1) * (up - u) + self.d(t, s - 1) * (um - u) + u * self.f(t, s, u))

    def integrate(self, x: np.ndarray, u0: np.ndarray, z: float, t0: float, t1: float, dt: float,
                  ghost: Callable[[float, np.ndarray], np.ndarray]) -> np.ndarray:
        """RK4 on the grid; ``ghost(t, xg)`` supplies values at the 2m ghost abscissas."""
        m = self.m
        xl = x[0] - self.h * np.arange(m, 0, -1)
        xr = x[-1] + self.h * np.arange(1, m + 1)
        n = step_count(t1 - t0, dt)
        h = (t1 - t0) / n
        u = np.array(u0, dtype=float)

        def F(t, v):
            return self.rhs(t, x, v, z, ghost(t, xl), ghost(t, xr))

        for s in range(n):
            t = t0 + s * h
            k1 = F(t, u)
            k2 = F(t + h / 2, u + h / 2 * k1)
            k3 = F(t + h / 2, u + h / 2 * k2)
            k4 = F(t + h, u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return u


def continuum_extend(field: CoefficientField, m: int = 8) -> ContinuumField:
    if m < 4:
        raise ResolutionError("continuum grid needs at least 4 cells per site")
    return ContinuumField(field, int(m))


# --------------------------------------------------------------------------
# monotone iteration over the orbit-aligned family


@dataclass
class WaveProfile:
    """Samples of Psi(x, t, z) for one side of the iteration.

    ``values[a, i, s]`` is Psi at time ``t_grid[a]``, member ``i`` and output
    site ``s``; the abscissas are ``x[a, i, s]`` and the shift ``z[a, i]``.
    """

    side: str
    theta: np.ndarray
    sites: np.ndarray
    site_mask: np.ndarray
    t_grid: np.ndarray
    x: np.ndarray
    z: np.ndarray
    values: np.ndarray
    members: np.ndarray
    iterates_delta: list[float]
    iterations: int
    monotone_violation: float
    pre_asymptotic_violation: float
    floor: float
    time_periodicity: float
    space_periodicity: float
    shifted_members: np.ndarray


@dataclass
class _PeriodTables:
    times: np.ndarray
    dp: np.ndarray
    dm: np.ndarray
    h: float


def _period_tables(field: CoefficientField, sites: np.ndarray, T: float, dt: float) -> _PeriodTables:
    n = step_count(T, dt)
    h = T / n
    times = np.arange(2 * n + 1) * (h / 2)
    dp = np.array([field.d(t, sites + 1) for t in times])
    dm = np.array([field.d(t, sites - 1) for t in times])
    return _PeriodTables(times, dp, dm, h)


def _evolve_period(field: CoefficientField, tab: _PeriodTables, sites: np.ndarray, u: np.ndarray,
                   ghosts: Callable[[int], tuple[np.ndarray, np.ndarray]],
                   record: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """One period of RK4 on a batch ``u[..., sites]``; ``ghosts(idx)`` uses half-step indices."""
    h = tab.h
    n = (tab.times.size - 1) // 2

    def F(idx, v):
        gl, gr = ghosts(idx)
        up = np.concatenate([v[..., 1:], gr[..., None]], axis=-1)
        um = np.concatenate([gl[..., None], v[..., :-1]], axis=-1)
        t = tab.times[idx]
        return tab.dp[idx] * (up - v) + tab.dm[idx] * (um - v) + v * field.f(t, sites, v)

    if record is not None:
        record(0, u)
    for s in range(n):
        i0 = 2 * s
        k1 = F(i0, u)
        k2 = F(i0 + 1, u + 0.5 * h * k1)
        k3 = F(i0 + 1, u + 0.5 * h * k2)
        k4 = F(i0 + 2, u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise IterationIntegrityError("non-finite value in the period map")
        neg = u < 0
        if neg.any():
            if u.min() < -UNDERSHOOT_TOL:
                raise IterationIntegrityError(f"undershoot {u.min():.3e} in the period map")
            u = np.where(neg, 0.0, u)
        if record is not None:
            record(s + 1, u)
    return u


@dataclass
class IterationSettings:
    x_lo: float = -40.0
    x_hi: float = 80.0
    pad: int = 40
    n_z: int | None = None
    n_max: int = 80
    tol: float = 1e-6
    dt: float = 0.01
    n_t: int = 9


def iterate_profile(field: CoefficientField, speed_c: float, params: SubSuperParams,
                    env: Envelopes, settings: IterationSettings | None = None,
                    sides: tuple[str, ...] = ("upper", "lower")) -> dict[str, WaveProfile]:
    """Monotone iteration for the requested sides, run as one batch.

    Every side carries two chains: phases theta_i = i c T and theta_i - J. The
    second chain is the space-shifted copy used for the z-periodicity defect.
    """
    s = settings or IterationSettings()
    T = field.period
    J = field.space_period
    c = float(speed_c)
    n_z = s.n_z or 8 * J
    opts = default_options(field, s.dt)
    check_step(field, opts.dt)
    cT = c * T
    theta_max = (n_z - 1) * cT + J
    k_lo = int(math.floor(s.x_lo - theta_max)) - s.pad
    k_hi = int(math.ceil(s.x_hi)) + s.pad
    sites = np.arange(k_lo, k_hi + 1)
    tab = _period_tables(field, sites, T, opts.dt)
    n_slots = s.n_max + n_z + 1
    base = cT * np.arange(n_slots)
    theta = np.stack([base, base - J])  # chains: (2, slots)
    S = len(sides)
    th = np.broadcast_to(theta, (S, 2, n_slots)).copy()
    kg_l, kg_r = k_lo - 1, k_hi + 1
    t_half = tab.times

    # ghost tables over one period at the two ghost sites
    def table(fn, k):
        return np.array([fn(t, k) for t in t_half])

    psi_l = [table(env.fl_mu.value, kg_l), table(env.fl_mup.value, kg_l), table(env.fl0.value, kg_l)]
    psi_r = [table(env.fl_mu.value, kg_r), table(env.fl_mup.value, kg_r), table(env.fl0.value, kg_r)]
    up_l, up_r = table(env.uplus.value, kg_l), table(env.uplus.value, kg_r)
    p = params

    def formula(side, idx, x, psis, uplus_val):
        pm, pmp, p0 = psis[0][idx], psis[1][idx], psis[2][idx]
        with np.errstate(over="ignore", invalid="ignore"):
            a = p.d * np.exp(-p.mu * x) * pm
            b = p.d1 * np.exp(-p.mu_prime * x) * pmp
            if side == "upper":
                return np.minimum(a + b, uplus_val[idx])
            vl = np.where(np.isfinite(a - b), a - b, -np.inf)
            return np.where(x <= p.M, np.maximum(p.b * p0, vl), vl)

    side_index = {name: n for n, name in enumerate(sides)}

    def make_ghosts(theta_now):
        def ghosts(idx):
            t = t_half[idx]
            xl = kg_l + theta_now - c * t
            xr = kg_r + theta_now - c * t
            gl = np.empty(theta_now.shape)
            gr = np.empty(theta_now.shape)
            for name, n in side_index.items():
                # the upper cap also serves as the left ghost of the lower side, which
                # keeps the lower datum a sub-solution and the two sides ordered
                gl[n] = formula("upper", idx, xl[n], psi_l, up_l)
                gr[n] = formula(name, idx, xr[n], psi_r, up_r)
            return gl, gr
        return ghosts

    # initial data
    U = np.empty(th.shape + (sites.size,))
    for name, n in side_index.items():
        x0 = sites[None, None, :] + th[n][..., None]
        U[n] = env.u_upper(0.0, x0, sites) if name == "upper" else env.u_lower(0.0, x0, sites)

    def out_mask(theta_vals):
        x = sites[None, :] + theta_vals[:, None]
        return (x >= s.x_lo - 1e-9) & (x <= s.x_hi + 1e-9)

    history = {name: [] for name in sides}
    worst_mono = {name: 0.0 for name in sides}
    pre_mono = {name: 0.0 for name in sides}
    floor = {name: math.inf for name in sides}
    converged = False
    n_done = 0
    for n in range(1, s.n_max + 1):
        old = U
        new = _evolve_period(field, tab, sites, old[:, :, 1:], make_ghosts(th[:, :, 1:]))
        th = th[:, :, :-1]
        # new[..., j, :] is Omega_n(theta_j); old[..., j, :] is Omega_{n-1}(theta_j)
        prev = old[:, :, :-1]
        for name, k in side_index.items():
            diff = new[k] - prev[k]
            viol = float(diff.max()) if name == "upper" else float(-diff.min())
            viol = max(viol, 0.0)
            if n == 1:
                pre_mono[name] = viol
            else:
                worst_mono[name] = max(worst_mono[name], viol)
            mask = out_mask(th[k, 0, :n_z])
            history[name].append(float(np.abs(diff[0, :n_z])[mask].max()))
            if name == "lower":
                xs = sites[None, :] + th[k, 0][:, None]
                sel = xs <= p.M
                if sel.any():
                    floor[name] = min(floor[name], float(new[k, 0][sel].min()))
        if "upper" in side_index and "lower" in side_index:
            gap = new[side_index["lower"]] - new[side_index["upper"]]
            if gap.max() > INTEGRITY_LIMIT:
                raise IterationIntegrityError(f"lower iterate exceeds upper by {gap.max():.3e} at n={n}")
        for name in sides:
            if worst_mono[name] > INTEGRITY_LIMIT:
                raise IterationIntegrityError(
                    f"{name} iterates lost monotonicity by {worst_mono[name]:.3e} at n={n}")
        U = new
        n_done = n
        if all(history[name][-1] < s.tol for name in sides):
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"monotone iteration did not reach tol={s.tol:g} in {s.n_max} periods",
                               history[sides[0]])

    # one more period on members 0..n_z: samples in t and the periodicity defects
    members = U[:, :, : n_z + 1]
    th_m = th[:, :, : n_z + 1]
    t_idx = np.unique(np.round(np.linspace(0, (t_half.size - 1) // 2, s.n_t)).astype(int))
    samples = {}

    def record(step, v):
        if step in t_idx:
            samples[int(step)] = v.copy()

    after = _evolve_period(field, tab, sites, members, make_ghosts(th_m), record)
    t_grid = np.array([t_half[2 * i] for i in sorted(samples)])
    vals = np.stack([samples[i] for i in sorted(samples)])  # (nt, S, 2, n_z+1, nsites)

    out = {}
    for name, k in side_index.items():
        # E^T Omega(theta_i) must reproduce Omega(theta_{i-1})
        mask_t = out_mask(th_m[k, 0, : n_z])
        tper = float(np.abs(after[k, 0, 1:] - members[k, 0, :-1])[mask_t].max())
        # chain with theta - J at site k + J equals chain theta at site k
        main = members[k, 0, :n_z]
        shifted = members[k, 1, :n_z]
        mask = out_mask(th_m[k, 0, :n_z])
        diffs = np.abs(shifted[:, J:] - main[:, :-J]) if J > 0 else np.zeros_like(main)
        sper = float(diffs[mask[:, :-J]].max())
        th0 = th_m[k, 0, :n_z]
        x = sites[None, None, :] + th0[None, :, None] - c * t_grid[:, None, None]
        z = np.mod(c * t_grid[:, None] - th0[None, :], J)
        out[name] = WaveProfile(
            side=name, theta=th0.copy(), sites=sites, site_mask=mask, t_grid=t_grid, x=x, z=z,
            values=vals[:, k, 0, :n_z], members=members[k, 0].copy(),
            iterates_delta=history[name], iterations=n_done,
            monotone_violation=worst_mono[name], pre_asymptotic_violation=pre_mono[name],
            floor=floor[name] if name == "lower" else math.nan,
            time_periodicity=tper, space_periodicity=sper, shifted_members=members[k, 1].copy(),
        )
    return out


# --------------------------------------------------------------------------
# assembly and diagnostics


@dataclass
class Diagnostic:
    name: str
    value: float
    threshold: float
    passed: bool
    gating: bool = True
    detail: str = ""


@dataclass
class PeriodicWave:
    """A periodic traveling wave U(t, j) with both iteration sides and diagnostics.

    ``times``/``sites``/``values`` sample U over a few periods starting from the
    upper profile at phase 0.
    """

    field: CoefficientField
    c: float
    speed: SpeedResult
    params: SubSuperParams
    env: Envelopes
    upper: WaveProfile
    lower: WaveProfile
    times: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    d1_star: float
    d1_tight: float
    front: object
    diagnostics: list[Diagnostic]
    settings: IterationSettings

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.diagnostics if d.gating)

    def diagnostic(self, name: str) -> Diagnostic:
        for d in self.diagnostics:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def gap(self) -> float:
        return self.diagnostic("upper-lower gap").value

    def phi(self, t, j):
        return self.params.d * self.env.phi(t, np.asarray(j), self.c)

    def phi1(self, t, j):
        return self.env.phi1(t, np.asarray(j), self.c)

    def uplus(self, t, j):
        return self.env.uplus.value(t, np.asarray(j))

    def samples(self, d1: float | None = None):
        """Inputs for the stability-hypothesis audit."""
        from .metrics import WaveSamples

        return WaveSamples(self.times, self.sites, self.values, self.front, self.phi, self.phi1,
                           self.params.d, self.d1_star if d1 is None else d1, self.field,
                           self.uplus, window=_output_window(self.c, self.settings))

    def ghost_boundary(self):
        """Clamp boundary using the upper envelope at both ghost sites."""
        from .lattice import Boundary

        env, c = self.env, self.c

        def ghost(t, k):
            return float(env.u_upper(t, np.array([k - c * t]), np.array([k]))[0])

        return Boundary.clamp(ghost, ghost, "wave-envelope")


def _output_window(c: float, s: IterationSettings):
    def window(t, j):
        x = np.asarray(j) - c * t
        return (x >= s.x_lo) & (x <= s.x_hi)
    return window


def _evolve_wave(field: CoefficientField, env: Envelopes, c: float, sites: np.ndarray,
                 U0: np.ndarray, t1: float, dt: float):
    from .lattice import Boundary, LatticeState, SimOptions, trajectory

    def ghost(t, k):
        return float(env.u_upper(t, np.array([k - c * t]), np.array([k]))[0])

    state = LatticeState(int(sites[0]), U0.copy(), 0.0, Boundary.clamp(ghost, ghost, "wave-envelope"))
    times, frames, _ = trajectory(state, field, t1, SimOptions(dt=dt))
    return times, frames


def assemble_wave(upper: WaveProfile, lower: WaveProfile, field: CoefficientField, *,
                  c: float, speed: SpeedResult, params: SubSuperParams, env: Envelopes,
                  settings: IterationSettings | None = None, n_periods: int = 5,
                  dt: float = 0.005) -> PeriodicWave:
    """Reconstruct U(t, j) from the upper profile and evaluate the wave diagnostics."""
    from .metrics import envelope_violation, front_location

    s = settings or IterationSettings()
    T = field.period
    p = params
    sites = upper.sites
    U0 = upper.members[0]
    times, values = _evolve_wave(field, env, c, sites, U0, n_periods * T, dt)
    diags: list[Diagnostic] = []

    def phi(t, j):
        return p.d * env.phi(t, j, c)

    def phi1(t, j):
        return env.phi1(t, j, c)

    window = _output_window(c, s)
    worst, wit, ok = envelope_violation(times, sites, values, phi, phi1, 1.0, p.d1, window=window)
    diags.append(Diagnostic("envelope bound", worst, 1e-9, ok, detail=f"witness {wit}"))
    tight = 0.0
    for k, t in enumerate(times):
        w = window(t, sites)
        tight = max(tight, float((np.abs(values[k] - phi(t, sites)) / phi1(t, sites))[w].max()))

    # decay toward the leading exponential on the right
    mem, th = upper.members[: upper.theta.size], upper.theta
    x = sites[None, :] + th[:, None]
    lead = p.d * np.exp(-p.mu * x) * env.fl_mu.value(0.0, sites)[None, :]
    corr = np.exp(-p.mu_prime * x) * env.fl_mup.value(0.0, sites)[None, :]
    sel = (corr / lead * p.d < 1e-3) & (x <= s.x_hi)
    decay = float(np.abs(mem[sel] / lead[sel] - 1.0).max()) if sel.any() else math.inf
    diags.append(Diagnostic("decay ratio", decay, 0.05, decay < 0.05))

    # approach to u+ on the left
    sel = (x >= s.x_lo) & (x <= s.x_lo + 5)
    up = env.uplus.value(0.0, sites)[None, :]
    left = float(np.abs(mem - up)[sel].max())
    diags.append(Diagnostic("left limit", left, 1e-4, left < 1e-4))

    # residual of U along the lattice equation over the first period
    n1 = step_count(T, dt) + 1
    ti, _, defect = lattice_defect(TimeGridFunction(times[:n1], sites, values[:n1]), field)
    res = float(np.abs(defect).max())
    diags.append(Diagnostic("ODE residual", res, 1e-6, res < 1e-6))

    m = upper.site_mask
    gap = float(np.abs(upper.members[: m.shape[0]] - lower.members[: m.shape[0]])[m].max())
    diags.append(Diagnostic("upper-lower gap", gap, 1e-4, gap < 1e-4))

    ptol = 10 * s.tol
    tper = max(upper.time_periodicity, lower.time_periodicity)
    sper = max(upper.space_periodicity, lower.space_periodicity)
    diags.append(Diagnostic("time periodicity", tper, ptol, tper < ptol))
    diags.append(Diagnostic("space periodicity", sper, ptol, sper < ptol))
    last = max(upper.iterates_delta[-1], lower.iterates_delta[-1])
    diags.append(Diagnostic("convergence", last, s.tol, last < s.tol,
                            detail=f"{upper.iterations} iterations"))
    mono = max(upper.monotone_violation, lower.monotone_violation)
    diags.append(Diagnostic("monotone iterates", mono, MONOTONE_SLACK, mono <= MONOTONE_SLACK))
    if field.spatially_homogeneous:
        rise = float(np.max(np.diff(values, axis=1), initial=0.0))
        diags.append(Diagnostic("monotone in j", rise, 1e-10, rise <= 1e-10, gating=False))

    stride = max(1, int(round(0.05 / dt)))
    ts, vs = times[::stride], values[::stride]
    front = front_location(ts, sites, vs, env.uplus.value, taus=(1.0, T))
    drift = float(np.abs(front.X - front.X[0] - c * (ts - ts[0])).max())
    bound = 2 + c * T
    diags.append(Diagnostic("speed recovery", drift, bound, drift <= bound))

    return PeriodicWave(field, c, speed, params, env, upper, lower, times, sites, values,
                        p.d1, tight, front, diags, s)


@dataclass
class WaveSetup:
    """Everything fixed before the iteration: speeds, tilts, eigenpairs, envelopes."""

    speed: SpeedResult
    c: float
    params: SubSuperParams
    env: Envelopes
    d0: float
    scanned_b: list[float]


def prepare_wave(field: CoefficientField, c: float | None = None, c_offset: float = 0.5,
                 d: float = 1.0, safety: float = 2.0, uplus_tol: float = 1e-10,
                 speed: SpeedResult | None = None) -> WaveSetup:
    speed = speed or find_mu_star(field)
    c = speed.c_star + c_offset if c is None else float(c)
    if c <= speed.c_star:
        raise ParameterError(f"speed {c} must exceed c* = {speed.c_star:.10g}")
    mu = mu_for_speed(field, speed, c)
    mup = select_mu_prime(field, speed, mu)
    fl_mu, fl_mup, fl0 = lambda_of_mu(field, mu), lambda_of_mu(field, mup), lambda_of_mu(field, 0.0)
    uplus = compute_entire_solution(field, tol=uplus_tol)
    d0 = compute_d0(field, mu, mup, fl_mu, fl_mup, c, d=d)
    d1 = safety * d0 * d
    b, N, M, scanned = find_plateau(field, mu, mup, d, d1, fl_mu, fl_mup, fl0)
    params = SubSuperParams(d, d1, b, M, N, mu, mup, c)
    return WaveSetup(speed, c, params, Envelopes(params, fl_mu, fl_mup, fl0, uplus), d0, scanned)


def build_periodic_wave(field: CoefficientField, c: float | None = None, c_offset: float = 0.5,
                        settings: IterationSettings | None = None,
                        setup: WaveSetup | None = None) -> PeriodicWave:
    """Full pipeline: speed, envelopes, both monotone iterations and assembly."""
    setup = setup or prepare_wave(field, c, c_offset)
    profiles = iterate_profile(field, setup.c, setup.params, setup.env, settings)
    return assemble_wave(profiles["upper"], profiles["lower"], field, c=setup.c, speed=setup.speed,
                         params=setup.params, env=setup.env, settings=settings)
