"""Coefficient fields d(t, j) and f(t, j, u) and the standing-hypothesis audit.

Evaluators are vectorised: ``t`` is a scalar time, ``j`` an integer array of
site indices and ``u`` an array broadcastable against ``j``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientGridError, MalformedFieldError, ParameterError

DispersalFn = Callable[[float, np.ndarray], np.ndarray]
GrowthFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class Structure(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    TIME_PERIODIC = "time-periodic"
    SPACE_PERIODIC = "space-periodic"
    TIME_SPACE_PERIODIC = "time-space-periodic"
    TIME_ONLY = "time-only-general"


@dataclass(frozen=True)
class CoefficientField:
    """Immutable pair of evaluators with declared structure and bounds.

    ``growth_lipschitz`` bounds |d(u f)/du| on [0, M0] and feeds the step-size
    bound; ``neg_fu_bound`` bounds -f_u on bounded density ranges.
    """

    d_eval: DispersalFn
    f_eval: GrowthFn
    structure: Structure
    M0: float
    d_min: float
    d_max: float
    T: float | None = None
    J: int | None = None
    growth_lipschitz: float = 1.0
    neg_fu_bound: float | None = None
    params: dict = field(default_factory=dict, compare=False)

    def d(self, t: float, j) -> np.ndarray:
        j = np.asarray(j)
        return np.broadcast_to(np.asarray(self.d_eval(t, j), dtype=float), j.shape)

    def f(self, t: float, j, u) -> np.ndarray:
        # f(t, j, u) = f(t, j, 0) for u <= 0 is enforced here, not trusted to the caller
        j = np.asarray(j)
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return np.asarray(self.f_eval(t, j, u), dtype=float)

    def f0(self, t: float, j) -> np.ndarray:
        j = np.asarray(j)
        return self.f(t, j, np.zeros(j.shape))

    @property
    def time_period(self) -> float | None:
        if self.structure in (Structure.TIME_PERIODIC, Structure.TIME_SPACE_PERIODIC):
            return self.T
        return None

    @property
    def space_period(self) -> int:
        if self.structure in (Structure.SPACE_PERIODIC, Structure.TIME_SPACE_PERIODIC):
            return int(self.J)
        return 1

    @property
    def is_periodic(self) -> bool:
        """True when the field is periodic in time (a constant counts, with period 1)."""
        return self.structure is not Structure.TIME_ONLY

    @property
    def period(self) -> float:
        return self.time_period or 1.0

    @property
    def spatially_homogeneous(self) -> bool:
        return self.structure in (Structure.HOMOGENEOUS, Structure.TIME_PERIODIC, Structure.TIME_ONLY)


@dataclass(frozen=True)
class LogisticFamily:
    """f(t, j, u) = r(t, j) - a(t, j) max(u, 0)."""

    r_eval: DispersalFn
    a_eval: DispersalFn

    def growth(self, t: float, j: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.r_eval(t, j) - self.a_eval(t, j) * np.maximum(u, 0.0)


def logistic_field(
    family: LogisticFamily,
    d_eval: DispersalFn,
    *,
    structure: Structure,
    r_bounds: tuple[float, float],
    a_bounds: tuple[float, float],
    d_bounds: tuple[float, float],
    T: float | None = None,
    J: int | None = None,
    params: dict | None = None,
) -> CoefficientField:
    r_lo, r_hi = r_bounds
    a_lo, a_hi = a_bounds
    if a_lo <= 0:
        raise ParameterError("crowding coefficient must be positive")
    if d_bounds[0] <= 0:
        raise ParameterError("dispersal rate must be positive")
    M0 = max(r_hi, 0.0) / a_lo
    if M0 <= 0:
        raise ParameterError("intrinsic rate never positive; saturation density undefined")
    # |d(u(r - a u))/du| = |r - 2 a u| on [0, M0]
    lip = max(abs(r_lo), abs(r_hi), abs(r_lo - 2.0 * a_hi * M0), abs(r_hi - 2.0 * a_hi * M0))
    return CoefficientField(
        d_eval=d_eval,
        f_eval=family.growth,
        structure=structure,
        M0=M0,
        d_min=d_bounds[0],
        d_max=d_bounds[1],
        T=T,
        J=J,
        growth_lipschitz=lip,
        neg_fu_bound=a_hi,
        params=dict(params or {}),
    )


# --------------------------------------------------------------------------
# builtin families


FAMILY_KINDS = ("homogeneous", "time-periodic", "time-space-periodic", "time-only")


def make_family(kind: str, params: dict | None = None) -> CoefficientField:
    """Build one of the builtin logistic families.

    Parameters (all optional, defaults in brackets):

    * ``homogeneous``: ``d`` [1], ``r`` [1], ``a`` [1].
    * ``time-periodic``: ``T`` [1], ``d`` [1], ``r0`` [1], ``r1`` [0.5], ``a`` [1];
      r(t) = r0 + r1 sin(2 pi t / T).
    * ``time-space-periodic``: ``T`` [1], ``J`` [2], ``d0`` [1], ``d1`` [0.25],
      ``r0`` [1], ``rt`` [0.5], ``rj`` [0.25], ``a`` [1];
      d = d0 + d1 cos(2 pi t/T) cos(2 pi j/J), r = r0 + rt sin(2 pi t/T) + rj cos(2 pi j/J).
    * ``time-only``: ``d`` [1], ``r0`` [1], ``amps`` [0.3, 0.3],
      ``freqs`` [1, sqrt 2], ``a`` [1]; r(t) = r0 + sum amps_k sin(freqs_k t).
    """
    p = dict(params or {})
    if kind == "homogeneous":
        return _homogeneous(p)
    if kind == "time-periodic":
        return _time_periodic(p)
    if kind == "time-space-periodic":
        return _time_space_periodic(p)
    if kind == "time-only":
        return _time_only(p)
    raise ParameterError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")


def _positive(p: dict, key: str, default: float) -> float:
    value = float(p.get(key, default))
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(f"parameter {key!r} must be positive and finite, got {value}")
    return value


def _finite(p: dict, key: str, default: float) -> float:
    value = float(p.get(key, default))
    if not math.isfinite(value):
        raise ParameterError(f"parameter {key!r} must be finite, got {value}")
    return value


def _homogeneous(p: dict) -> CoefficientField:
    d = _positive(p, "d", 1.0)
    r = _finite(p, "r", 1.0)
    a = _positive(p, "a", 1.0)
    fam = LogisticFamily(r_eval=lambda t, j: np.full(np.shape(j), r), a_eval=lambda t, j: a)
    return logistic_field(
        fam,
        lambda t, j: np.full(np.shape(j), d),
        structure=Structure.HOMOGENEOUS,
        r_bounds=(r, r),
        a_bounds=(a, a),
        d_bounds=(d, d),
        params={"kind": "homogeneous", "d": d, "r": r, "a": a},
    )


def _time_periodic(p: dict) -> CoefficientField:
    T = _positive(p, "T", 1.0)
    d = _positive(p, "d", 1.0)
    r0 = _finite(p, "r0", 1.0)
    r1 = _finite(p, "r1", 0.5)
    a = _positive(p, "a", 1.0)
    w = 2.0 * math.pi / T

    def r_eval(t, j):
        return np.full(np.shape(j), r0 + r1 * math.sin(w * t))

    fam = LogisticFamily(r_eval=r_eval, a_eval=lambda t, j: a)
    return logistic_field(
        fam,
        lambda t, j: np.full(np.shape(j), d),
        structure=Structure.TIME_PERIODIC,
        r_bounds=(r0 - abs(r1), r0 + abs(r1)),
        a_bounds=(a, a),
        d_bounds=(d, d),
        T=T,
        params={"kind": "time-periodic", "T": T, "d": d, "r0": r0, "r1": r1, "a": a},
    )


def _time_space_periodic(p: dict) -> CoefficientField:
    T = _positive(p, "T", 1.0)
    J = int(p.get("J", 2))
    if J < 1 or J != p.get("J", 2):
        raise ParameterError(f"space period J must be a positive integer, got {p.get('J')}")
    d0 = _positive(p, "d0", 1.0)
    d1 = _finite(p, "d1", 0.25)
    if abs(d1) >= d0:
        raise ParameterError("need |d1| < d0 so that the dispersal rate stays positive")
    r0 = _finite(p, "r0", 1.0)
    rt = _finite(p, "rt", 0.5)
    rj = _finite(p, "rj", 0.25)
    a = _positive(p, "a", 1.0)
    w = 2.0 * math.pi / T
    k = 2.0 * math.pi / J

    def space_wave(j):
        # cos(2 pi j / J) evaluated on j mod J keeps bit-exact J-periodicity
        return np.cos(k * np.mod(j, J))

    def d_eval(t, j):
        return d0 + d1 * math.cos(w * t) * space_wave(j)

    def r_eval(t, j):
        return r0 + rt * math.sin(w * t) + rj * space_wave(j)

    fam = LogisticFamily(r_eval=r_eval, a_eval=lambda t, j: a)
    return logistic_field(
        fam,
        d_eval,
        structure=Structure.TIME_SPACE_PERIODIC,
        r_bounds=(r0 - abs(rt) - abs(rj), r0 + abs(rt) + abs(rj)),
        a_bounds=(a, a),
        d_bounds=(d0 - abs(d1), d0 + abs(d1)),
        T=T,
        J=J,
        params={
            "kind": "time-space-periodic",
            "T": T, "J": J, "d0": d0, "d1": d1, "r0": r0, "rt": rt, "rj": rj, "a": a,
        },
    )


def _time_only(p: dict) -> CoefficientField:
    d = _positive(p, "d", 1.0)
    r0 = _finite(p, "r0", 1.0)
    amps = [float(x) for x in p.get("amps", [0.3, 0.3])]
    freqs = [float(x) for x in p.get("freqs", [1.0, math.sqrt(2.0)])]
    if len(amps) != len(freqs):
        raise ParameterError("amps and freqs must have the same length")
    if not all(math.isfinite(x) for x in amps + freqs):
        raise ParameterError("amps and freqs must be finite")
    a = _positive(p, "a", 1.0)
    spread = sum(abs(x) for x in amps)

    def r_eval(t, j):
        value = r0 + sum(A * math.sin(w * t) for A, w in zip(amps, freqs))
        return np.full(np.shape(j), value)

    fam = LogisticFamily(r_eval=r_eval, a_eval=lambda t, j: a)
    return logistic_field(
        fam,
        lambda t, j: np.full(np.shape(j), d),
        structure=Structure.TIME_ONLY,
        r_bounds=(r0 - spread, r0 + spread),
        a_bounds=(a, a),
        d_bounds=(d, d),
        params={"kind": "time-only", "d": d, "r0": r0, "amps": amps, "freqs": freqs, "a": a},
    )


# --------------------------------------------------------------------------
# window averages


def window_average_extremes(
    values: np.ndarray,
    dt: float,
    min_length: float,
    *,
    period: float | None = None,
    max_endpoints: int = 2001,
) -> tuple[float, float]:
    """Min and max of (1/(t-s)) * integral_s^t over windows with t - s >= min_length.

    ``values`` are samples on a uniform grid of spacing ``dt``; the integral
    uses the trapezoid rule. When ``period`` is given, only window lengths that
    are whole multiples of the period are used.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise InsufficientGridError("need at least two samples")
    F = np.concatenate([[0.0], np.cumsum(0.5 * dt * (values[1:] + values[:-1]))])
    span = (n - 1) * dt
    if min_length > span * (1 + 1e-12):
        raise InsufficientGridError("window length exceeds the sampled horizon")

    if period is not None:
        steps = period / dt
        per = int(round(steps))
        if per < 1 or abs(per - steps) > 1e-6 * max(1.0, steps):
            raise InsufficientGridError("sampling step must divide the period")
        k_min = max(1, math.ceil(min_length / period - 1e-9))
        lo, hi = math.inf, -math.inf
        for k in range(k_min, (n - 1) // per + 1):
            L = k * per
            avg = (F[L:] - F[: n - L]) / (L * dt)
            lo = min(lo, float(avg.min()))
            hi = max(hi, float(avg.max()))
        if not math.isfinite(lo):
            raise InsufficientGridError("horizon shorter than one period")
        return lo, hi

    stride = max(1, math.ceil((n - 1) / (max_endpoints - 1)))
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    t = idx * dt
    Fi = F[idx]
    length = t[None, :] - t[:, None]
    ok = length >= min_length * (1 - 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = (Fi[None, :] - Fi[:, None]) / length
    avg = avg[ok]
    if avg.size == 0:
        raise InsufficientGridError("no admissible window")
    return float(avg.min()), float(avg.max())


# --------------------------------------------------------------------------
# audit


@dataclass(frozen=True)
class SampleGrid:
    times: np.ndarray
    sites: np.ndarray
    densities: np.ndarray

    @classmethod
    def default(cls, field: CoefficientField, horizon: float | None = None, nt_per_unit: int = 100):
        T = field.time_period
        if horizon is None:
            horizon = max(10.0, 3.0 * T) if T else 40.0
        if T:
            per = max(8, int(round(nt_per_unit * T)))
            nt = int(round(horizon / T)) * per + 1
            times = np.linspace(0.0, round(horizon / T) * T, nt)
        else:
            nt = int(round(horizon * nt_per_unit)) + 1
            times = np.linspace(0.0, horizon, nt)
        J = field.space_period
        sites = np.arange(-2 * J, 2 * J + 1)
        densities = np.linspace(0.0, 2.0 * field.M0, 41)
        return cls(times=times, sites=sites, densities=densities)


@dataclass
class Clause:
    name: str
    passed: bool
    detail: str
    witness: tuple | None = None


@dataclass
class AuditReport:
    clauses: list[Clause]
    growth_average: float
    window_policy: str

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def clause(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


def audit_H0(field: CoefficientField, grid: SampleGrid | None = None) -> AuditReport:
    """Check each clause of the standing hypothesis on a finite sample grid."""
    grid = grid or SampleGrid.default(field)
    times = np.asarray(grid.times, dtype=float)
    sites = np.asarray(grid.sites)
    dens = np.asarray(grid.densities, dtype=float)
    if times.size < 2:
        raise InsufficientGridError("need at least two sample times")
    horizon = float(times[-1] - times[0])
    T = field.time_period
    if T is not None and horizon < T * (1 - 1e-12):
        raise InsufficientGridError(f"horizon {horizon} shorter than one period {T}")
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise InsufficientGridError("sample times must be uniformly spaced")
    dt = float(dt[0])

    jj, uu = np.meshgrid(sites, dens, indexing="ij")
    neg = -np.linspace(1e-3, 2.0 * field.M0, 5)
    jn, un = np.meshgrid(sites, neg, indexing="ij")
    above = dens[dens > field.M0]
    du = 1e-6 * max(1.0, field.M0)

    worst = {"d": (math.inf, None), "clamp": (0.0, None), "sat": (-math.inf, None),
             "mono": (-math.inf, None), "dbound": (0.0, None), "per": (0.0, None)}
    inf_f0 = np.empty(times.size)
    for k, t in enumerate(times):
        t = float(t)
        d = field.d(t, sites)
        fg = field.f(t, jj, uu)
        f0 = field.f0(t, sites)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(fg))):
            raise MalformedFieldError(f"non-finite evaluator output at t={t}")
        inf_f0[k] = f0.min()
        i = int(np.argmin(d))
        if d[i] < worst["d"][0]:
            worst["d"] = (float(d[i]), (t, int(sites[i])))
        out = np.maximum(field.d_min - d, d - field.d_max)
        i = int(np.argmax(out))
        if out[i] > worst["dbound"][0]:
            worst["dbound"] = (float(out[i]), (t, int(sites[i])))
        gap = np.abs(field.f(t, jn, un) - f0[:, None])
        if gap.max() > worst["clamp"][0]:
            a, b = np.unravel_index(np.argmax(gap), gap.shape)
            worst["clamp"] = (float(gap.max()), (t, int(sites[a]), float(neg[b])))
        if above.size:
            ja, ua = np.meshgrid(sites, above, indexing="ij")
            fa = field.f(t, ja, ua)
            if fa.max() > worst["sat"][0]:
                a, b = np.unravel_index(np.argmax(fa), fa.shape)
                worst["sat"] = (float(fa.max()), (t, int(sites[a]), float(above[b])))
        slope = (field.f(t, jj, uu + du) - fg) / du
        if slope.max() > worst["mono"][0]:
            a, b = np.unravel_index(np.argmax(slope), slope.shape)
            worst["mono"] = (float(slope.max()), (t, int(sites[a]), float(dens[b])))
        if field.structure is not Structure.TIME_ONLY and field.structure is not Structure.HOMOGENEOUS:
            J = field.space_period
            Tp = field.time_period
            shifts = [(0.0, J)] + ([(Tp, 0)] if Tp else [])
            for dtp, dj in shifts:
                e1 = np.abs(field.d(t + dtp, sites + dj) - d).max()
                e2 = np.abs(field.f(t + dtp, jj + dj, uu) - fg).max()
                e = max(e1, e2)
                if e > worst["per"][0]:
                    worst["per"] = (float(e), (t, dtp, dj))

    clauses = []
    dmin, wd = worst["d"]
    clauses.append(Clause("dispersal-positive", dmin >= field.d_min > 0,
                          f"min sampled d = {dmin:.6g}, declared d_min = {field.d_min:.6g}", wd))
    clauses.append(Clause("dispersal-bounds", worst["dbound"][0] <= 1e-12,
                          f"max excursion outside [d_min, d_max] = {worst['dbound'][0]:.3g}",
                          worst["dbound"][1]))
    clauses.append(Clause("clamping", worst["clamp"][0] == 0.0,
                          f"max |f(u<0) - f(0)| = {worst['clamp'][0]:.3g}", worst["clamp"][1]))
    sat_ok = worst["sat"][0] < 0.0 if above.size else False
    clauses.append(Clause("saturation", sat_ok,
                          f"max f for sampled u > M0 = {worst['sat'][0]:.6g}", worst["sat"][1]))
    clauses.append(Clause("monotone-decreasing", worst["mono"][0] < 0.0,
                          f"max finite-difference f_u = {worst['mono'][0]:.6g}", worst["mono"][1]))
    if field.structure not in (Structure.TIME_ONLY, Structure.HOMOGENEOUS):
        clauses.append(Clause("periodicity", worst["per"][0] <= 1e-12,
                              f"max periodicity defect = {worst['per'][0]:.3g}", worst["per"][1]))

    if T is not None:
        policy = f"window lengths are whole multiples of the period T={T:g}, at least horizon/4"
        lo, _ = window_average_extremes(inf_f0, dt, max(horizon / 4.0, T), period=T)
    else:
        policy = "all windows with length >= horizon/4 (finite-horizon surrogate of the liminf)"
        lo, _ = window_average_extremes(inf_f0, dt, horizon / 4.0)
    clauses.append(Clause("averaged-growth", lo > 0.0,
                          f"min window average of inf_j f(t,j,0) = {lo:.10g}", None))
    return AuditReport(clauses=clauses, growth_average=lo, window_policy=policy)
