"""Fixed-step integration of the lattice equation on truncated windows.

    du_j/dt = d(t, j+1) (u_{j+1} - u_j) + d(t, j-1) (u_{j-1} - u_j) + u_j f(t, j, u_j)

States may carry a leading batch axis: ``values`` of shape ``(..., n)`` are
advanced with identical steps, which keeps comparison tests exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .coeffs import CoefficientField, Structure
from .errors import (
    BlowUpError,
    ConvergenceError,
    ParameterError,
    ResolutionError,
    StabilityError,
    UndershootError,
)

UNDERSHOOT_TOL = 1e-12

GhostFn = Callable[[float, int], "np.ndarray | float"]


@dataclass(frozen=True)
class Boundary:
    """Ghost-site policy for a finite window.

    ``kind`` is ``"periodic"`` (the window wraps onto itself) or ``"clamp"``;
    a clamp boundary supplies ghost values through ``left(t, site)`` and
    ``right(t, site)``.
    """

    kind: str
    left: GhostFn | None = None
    right: GhostFn | None = None
    label: str = ""

    @classmethod
    def periodic(cls) -> "Boundary":
        return cls("periodic", label="periodic")

    @classmethod
    def clamp_value(cls, value: float) -> "Boundary":
        v = float(value)
        return cls("clamp", lambda t, s: v, lambda t, s: v, label=f"clamp-both-to-value({v:g})")

    @classmethod
    def front(cls, uplus: "EntireSolution") -> "Boundary":
        return cls("clamp", lambda t, s: float(uplus.value(t, s)), lambda t, s: 0.0,
                   label="clamp-left-to-uplus-right-to-zero")

    @classmethod
    def clamp(cls, left: GhostFn, right: GhostFn, label: str = "clamp") -> "Boundary":
        return cls("clamp", left, right, label=label)


@dataclass
class LatticeState:
    offset: int
    values: np.ndarray
    time: float
    boundary: Boundary
    clamped: int = 0

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.shape[-1] < 3 and self.boundary.kind != "periodic":
            raise ParameterError("window length must be at least 3")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("state values must be finite")

    @property
    def sites(self) -> np.ndarray:
        return self.offset + np.arange(self.values.shape[-1])

    def copy(self) -> "LatticeState":
        return replace(self, values=self.values.copy())


@dataclass(frozen=True)
class SimOptions:
    dt: float = 0.01
    method: str = "rk4-fixed"
    output_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError("dt must be positive")
        if self.method != "rk4-fixed":
            raise ParameterError(f"unsupported method {self.method!r}")
        if self.output_stride < 1:
            raise ParameterError("output_stride must be >= 1")


def max_stable_dt(field: CoefficientField) -> float:
    """Step bound 0.25 / (2 d_max + L_f) under which RK4 preserves order."""
    return 0.25 / (2.0 * field.d_max + field.growth_lipschitz)


def default_options(field: CoefficientField, dt: float = 0.01, output_stride: int = 1) -> SimOptions:
    return SimOptions(dt=min(dt, max_stable_dt(field)), output_stride=output_stride)


def step_count(span: float, dt: float) -> int:
    """Number of equal steps of size <= dt covering ``span``."""
    return max(1, math.ceil(span / dt - 1e-9))


def _ghosts(boundary: Boundary, t: float, offset: int, u: np.ndarray):
    n = u.shape[-1]
    if boundary.kind == "periodic":
        return u[..., -1:], u[..., :1]
    batch = u.shape[:-1]
    gl = np.broadcast_to(np.asarray(boundary.left(t, offset - 1), dtype=float), batch)[..., None]
    gr = np.broadcast_to(np.asarray(boundary.right(t, offset + n), dtype=float), batch)[..., None]
    return gl, gr


def _rhs_values(field: CoefficientField, boundary: Boundary, t: float, offset: int,
                u: np.ndarray, sites: np.ndarray, right_sites: np.ndarray,
                left_sites: np.ndarray) -> np.ndarray:
    gl, gr = _ghosts(boundary, t, offset, u)
    if boundary.kind == "periodic":
        up = np.roll(u, -1, axis=-1)
        um = np.roll(u, 1, axis=-1)
    else:
        up = np.concatenate([u[..., 1:], gr], axis=-1)
        um = np.concatenate([gl, u[..., :-1]], axis=-1)
    dp = field.d(t, right_sites)
    dm = field.d(t, left_sites)
    return dp * (up - u) + dm * (um - u) + u * field.f(t, sites, u)


def rhs(state: LatticeState, field: CoefficientField) -> np.ndarray:
    """Right-hand side at every window site, ghosts supplied by the boundary policy."""
    sites = state.sites
    # coupling coefficients are labelled by the neighbour's true index; a periodic
    # window spanning whole space periods therefore agrees with the wrap-around
    return _rhs_values(field, state.boundary, state.time, state.offset, state.values, sites, sites + 1, sites - 1)


def rk4_step(F: Callable[[float, np.ndarray], np.ndarray], t: float, u: np.ndarray, h: float) -> np.ndarray:
    k1 = F(t, u)
    k2 = F(t + 0.5 * h, u + 0.5 * h * k1)
    k3 = F(t + 0.5 * h, u + 0.5 * h * k2)
    k4 = F(t + h, u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sanitize(u: np.ndarray, t: float) -> int:
    """Clamp tiny negative undershoot in place; raise on larger defects."""
    if not np.all(np.isfinite(u)):
        raise BlowUpError("non-finite value during integration", t)
    neg = u < 0.0
    if not neg.any():
        return 0
    if u.min() < -UNDERSHOOT_TOL:
        raise UndershootError(f"undershoot {u.min():.3e} below -{UNDERSHOOT_TOL:g}", t)
    count = int(neg.sum())
    u[neg] = 0.0
    return count


def check_step(field: CoefficientField, dt: float) -> None:
    bound = max_stable_dt(field)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:g} exceeds the order-preserving bound {bound:.6g}")


def integrate(
    state: LatticeState,
    field: CoefficientField,
    t1: float,
    opts: SimOptions | None = None,
    observer: Callable[[float, np.ndarray], None] | None = None,
) -> LatticeState:
    """Advance ``state`` to ``t1`` with fixed RK4 steps.

    The observer, when given, sees ``(t, values)`` at the start, every
    ``output_stride`` steps and at the end.
    """
    opts = opts or default_options(field)
    check_step(field, opts.dt)
    if t1 < state.time:
        raise ParameterError("t1 must not precede the state time")
    if np.any(state.values < 0):
        raise ParameterError("initial values must be nonnegative")
    u = state.values.copy()
    t0 = state.time
    sites = state.sites
    rs, ls = sites + 1, sites - 1
    clamped = state.clamped
    if observer is not None:
        observer(t0, u)
    if t1 == t0:
        return replace(state, values=u)
    n = step_count(t1 - t0, opts.dt)
    h = (t1 - t0) / n

    def F(t, v):
        return _rhs_values(field, state.boundary, t, state.offset, v, sites, rs, ls)

    for k in range(1, n + 1):
        t = t0 + (k - 1) * h
        u = rk4_step(F, t, u, h)
        clamped += sanitize(u, t0 + k * h)
        if observer is not None and (k % opts.output_stride == 0 or k == n):
            observer(t0 + k * h, u)
    return LatticeState(state.offset, u, t1, state.boundary, clamped)


def trajectory(state: LatticeState, field: CoefficientField, t1: float,
               opts: SimOptions | None = None) -> tuple[np.ndarray, np.ndarray, LatticeState]:
    """Integrate and return sampled times, values of shape ``(nt, ..., n)`` and the final state."""
    times, frames = [], []

    def obs(t, u):
        times.append(t)
        frames.append(u.copy())

    final = integrate(state, field, t1, opts, obs)
    return np.array(times), np.array(frames), final


# --------------------------------------------------------------------------
# sub/super residuals


@dataclass(frozen=True)
class TimeGridFunction:
    """Samples v(t_k, j) on a uniform time grid and a contiguous block of sites."""

    times: np.ndarray
    sites: np.ndarray
    values: np.ndarray

    @classmethod
    def from_callable(cls, fn: Callable[[float, np.ndarray], np.ndarray],
                      times: np.ndarray, sites: np.ndarray) -> "TimeGridFunction":
        times = np.asarray(times, dtype=float)
        sites = np.asarray(sites)
        return cls(times, sites, np.array([fn(float(t), sites) for t in times], dtype=float))


@dataclass
class ResidualReport:
    kind: str
    min_defect: float
    max_defect: float
    tol: float
    worst: tuple[float, int]

    @property
    def passed(self) -> bool:
        if self.kind == "super":
            return self.min_defect >= -self.tol
        return self.max_defect <= self.tol


def time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central difference along axis 0, defined on indices 2..n-3."""
    return (values[:-4] - 8.0 * values[1:-3] + 8.0 * values[3:-1] - values[4:]) / (12.0 * dt)


def lattice_defect(candidate: TimeGridFunction, field: CoefficientField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Defect v_t - [coupling + v f(t, j, v)] on interior times and sites."""
    t = candidate.times
    v = candidate.values
    dt = np.diff(t)
    if v.shape[0] < 5 or not np.allclose(dt, dt[0], rtol=1e-9):
        raise ResolutionError("need a uniform time grid with at least 5 samples")
    vt = time_derivative(v, float(dt[0]))
    ti = t[2:-2]
    sites = candidate.sites
    inner = sites[1:-1]
    out = np.empty((ti.size, inner.size))
    for k, tk in enumerate(ti):
        row = v[k + 2]
        coup = (field.d(tk, inner + 1) * (row[2:] - row[1:-1])
                + field.d(tk, inner - 1) * (row[:-2] - row[1:-1]))
        out[k] = vt[k, 1:-1] - coup - row[1:-1] * field.f(tk, inner, row[1:-1])
    return ti, inner, out


def check_sub_super(candidate: TimeGridFunction, field: CoefficientField, kind: str,
                    window: tuple[float, float] | None = None, max_dt: float = 0.01,
                    tol: float = 1e-8) -> ResidualReport:
    if kind not in ("sub", "super"):
        raise ParameterError("kind must be 'sub' or 'super'")
    times = np.asarray(candidate.times, dtype=float)
    if window is not None:
        keep = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
        candidate = TimeGridFunction(times[keep], candidate.sites, np.asarray(candidate.values)[keep])
        times = candidate.times
    if times.size >= 2 and np.diff(times).max() > max_dt * (1 + 1e-9):
        raise ResolutionError(f"candidate time step {np.diff(times).max():g} exceeds {max_dt:g}")
    ti, sites, defect = lattice_defect(candidate, field)
    if kind == "super":
        a, b = np.unravel_index(np.argmin(defect), defect.shape)
    else:
        a, b = np.unravel_index(np.argmax(defect), defect.shape)
    return ResidualReport(kind, float(defect.min()), float(defect.max()), tol,
                          (float(ti[a]), int(sites[b])))


# --------------------------------------------------------------------------
# entire solution


@dataclass
class EntireSolution:
    """Samples of the positive entire solution u+.

    For periodic fields ``times`` span one period and ``values`` has one column
    per site of a space period; for time-only fields the samples cover the
    requested horizon on a single site (the solution is constant in space).
    """

    times: np.ndarray
    values: np.ndarray
    history: list[float]
    period: float | None
    space_period: int
    iterations: int
    _spline: CubicSpline = dc_field(init=False, repr=False)

    def __post_init__(self):
        bc = "periodic" if self.period is not None else "not-a-knot"
        vals = self.values
        if self.period is not None:
            vals = vals.copy()
            vals[-1] = vals[0]
        self._spline = CubicSpline(self.times, vals, axis=0, bc_type=bc)

    @property
    def inf(self) -> float:
        return float(self.values.min())

    @property
    def sup(self) -> float:
        return float(self.values.max())

    def value(self, t, j) -> np.ndarray:
        """u+_j(t); ``t`` scalar, ``j`` integer or integer array."""
        t = float(t)
        if self.period is not None:
            t = t - math.floor(t / self.period) * self.period
        elif t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise ParameterError(f"time {t} outside the sampled horizon")
        row = self._spline(t)
        return row[np.mod(np.asarray(j), self.space_period)]

    def matrix(self, times: np.ndarray, sites: np.ndarray) -> np.ndarray:
        return np.array([self.value(t, sites) for t in times])


def compute_entire_solution(
    field: CoefficientField,
    horizon: float | tuple[float, float] | None = None,
    tol: float = 1e-6,
    *,
    M: float | None = None,
    n_max: int = 200,
    dt: float = 0.01,
) -> EntireSolution:
    """Pullback construction of u+ from the constant initial datum M >= M0.

    Periodic fields: iterate the one-period map from M until consecutive
    trajectories differ by less than ``tol`` over the whole period.
    Time-only fields: members started at ``t_a - n`` (n = 1, 2, ...) are
    compared on the output window ``horizon = (t_a, t_b)``.
    """
    M = field.M0 if M is None else float(M)
    if M < field.M0:
        raise ParameterError("pullback datum must be at least M0")
    J = field.space_period
    opts = default_options(field, dt)
    boundary = Boundary.periodic()
    if field.is_periodic:
        T = field.period
        state = LatticeState(0, np.full(J, M), 0.0, boundary)
        history: list[float] = []
        prev = None
        for n in range(1, n_max + 1):
            times, frames, final = trajectory(LatticeState(0, state.values, 0.0, boundary), field, T, opts)
            if prev is not None:
                history.append(float(np.abs(frames - prev).max()))
                if history[-1] < tol:
                    return EntireSolution(times, frames, history, T, J, n)
            prev = frames
            state = final
        raise ConvergenceError(f"pullback did not converge within {n_max} periods", history)

    if field.structure is not Structure.TIME_ONLY:
        raise ParameterError("unsupported field structure")
    if horizon is None:
        horizon = (0.0, 50.0)
    if isinstance(horizon, (int, float)):
        horizon = (0.0, float(horizon))
    ta, tb = map(float, horizon)
    h_step = 1.0
    start = ta - n_max * h_step
    per_unit = step_count(h_step, opts.dt)
    h = h_step / per_unit
    # all members share one time grid; member n is activated at ta - n
    u = np.full(n_max, M)
    active = np.zeros(n_max, dtype=bool)

    def F(t, v):
        return v * field.f(t, np.zeros(1, dtype=int), v)

    t = start
    total = n_max * per_unit
    for k in range(total):
        idx = n_max - 1 - k // per_unit
        if k % per_unit == 0:
            active[idx] = True
        u = np.where(active, rk4_step(F, t, u, h), M)
        sanitize(u, t + h)
        t = start + (k + 1) * h
    nb = step_count(tb - ta, opts.dt)
    hb = (tb - ta) / nb
    frames = [u.copy()]
    for k in range(nb):
        u = rk4_step(F, ta + k * hb, u, hb)
        sanitize(u, ta + (k + 1) * hb)
        frames.append(u.copy())
    frames = np.array(frames)  # (nt, n_max); column n-1 holds the member started at ta - n
    times = ta + hb * np.arange(nb + 1)
    history = [float(np.abs(frames[:, n] - frames[:, n - 1]).max()) for n in range(1, n_max)]
    for n, delta in enumerate(history, start=1):
        if delta < tol:
            return EntireSolution(times, frames[:, n:n + 1], history[:n], None, 1, n + 1)
    raise ConvergenceError(f"pullback did not converge within {n_max} unit steps", history)
