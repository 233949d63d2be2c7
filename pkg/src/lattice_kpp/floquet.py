"""Principal Floquet exponent of the tilted linearisation and the critical speed.

For a tilt mu the linear system

    dv_j/dt = d(t,j-1) (e^mu v_{j-1} - v_j) + d(t,j+1) (e^-mu v_{j+1} - v_j) + f(t,j,0) v_j

is reduced to J unknowns through v_{j+J} = v_j. Its time-T solution operator
(the monodromy matrix) is positive; the logarithm of its Perron root over T is
lambda(mu), and the Perron vector generates the periodic profile psi^mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ._optim import golden_section
from .coeffs import CoefficientField
from .errors import BracketError, MarginError, ParameterError, SpectralError

MAX_STEP = 1e-3
STEP_SCALE = 0.01


def _require_periodic(field: CoefficientField) -> tuple[float, int]:
    if not field.is_periodic:
        raise ParameterError("tilted linearisation needs a time-periodic field")
    J = field.space_period
    if J < 1:
        raise ParameterError("space period must be positive")
    return field.period, J


class _Pieces:
    """Tilt-independent parts of the tilted matrix on a fixed time grid.

    A(t, mu) = e^mu P_minus(t) + e^-mu P_plus(t) + D(t).
    """

    def __init__(self, field: CoefficientField, times: np.ndarray):
        T, J = _require_periodic(field)
        j = np.arange(J)
        n = times.size
        self.Pm = np.zeros((n, J, J))
        self.Pp = np.zeros((n, J, J))
        self.D = np.zeros((n, J, J))
        for k, t in enumerate(times):
            dm = field.d(t, j - 1)
            dp = field.d(t, j + 1)
            # np.add.at accumulates when j-1 and j+1 coincide modulo J (J = 1, 2)
            np.add.at(self.Pm[k], (j, (j - 1) % J), dm)
            np.add.at(self.Pp[k], (j, (j + 1) % J), dp)
            self.D[k][j, j] = -dm - dp + field.f0(t, j)

    def matrices(self, mus: np.ndarray) -> np.ndarray:
        em = np.exp(mus)[:, None, None, None]
        ep = np.exp(-mus)[:, None, None, None]
        return em * self.Pm[None] + ep * self.Pp[None] + self.D[None]


def tilted_matrix(field: CoefficientField, t: float, mu: float) -> np.ndarray:
    pieces = _Pieces(field, np.array([float(t)]))
    return pieces.matrices(np.array([float(mu)]))[0, 0]


def _norm_bound(field: CoefficientField, mu_max: float) -> float:
    f_bound = max(abs(field.f0(t, np.arange(field.space_period))).max()
                  for t in np.linspace(0.0, field.period, 9))
    return 2.0 * field.d_max * math.exp(abs(mu_max)) + 2.0 * field.d_max + f_bound


def step_grid(field: CoefficientField, mu_max: float) -> int:
    """Number of RK4 steps per period for tilts up to ``mu_max``."""
    h = min(MAX_STEP, STEP_SCALE / _norm_bound(field, mu_max))
    return max(8, math.ceil(field.period / h))


@lru_cache(maxsize=32)
def _pieces_cached(field: CoefficientField, n: int) -> _Pieces:
    T = field.period
    h = T / n
    times = np.arange(2 * n + 1) * (h / 2.0)
    return _Pieces(field, times)


def monodromy_batch(field: CoefficientField, mus, *, n_steps: int | None = None,
                    keep_path: bool = False):
    """Monodromy matrices for a batch of tilts, shape ``(len(mus), J, J)``.

    With ``keep_path`` the fundamental matrices at every step are returned too.
    """
    T, J = _require_periodic(field)
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    n = n_steps or step_grid(field, float(np.abs(mus).max()))
    h = T / n
    A = _pieces_cached(field, n).matrices(mus)  # (nmu, 2n+1, J, J)
    Phi = np.broadcast_to(np.eye(J), (mus.size, J, J)).copy()
    path = [Phi.copy()] if keep_path else None
    for k in range(n):
        A0, Ah, A1 = A[:, 2 * k], A[:, 2 * k + 1], A[:, 2 * k + 2]
        k1 = A0 @ Phi
        k2 = Ah @ (Phi + 0.5 * h * k1)
        k3 = Ah @ (Phi + 0.5 * h * k2)
        k4 = A1 @ (Phi + h * k3)
        Phi = Phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if keep_path:
            path.append(Phi.copy())
    if keep_path:
        return Phi, np.stack(path, axis=1), h
    return Phi


def monodromy(field: CoefficientField, mu: float) -> np.ndarray:
    """Time-T solution operator of the tilted system on J-periodic sequences."""
    return monodromy_batch(field, [mu])[0]


def power_iteration(M: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000):
    """Perron root and positive eigenvector (sup-norm 1) of nonnegative matrices.

    ``M`` may carry leading batch axes. Raises SpectralError on stagnation.
    """
    M = np.asarray(M, dtype=float)
    batch = M.shape[:-2]
    J = M.shape[-1]
    x = np.ones(batch + (J,))
    change = np.full(batch, np.inf)
    prev_change = change
    for it in range(max_iter):
        y = np.einsum("...ij,...j->...i", M, x)
        rho = y.max(axis=-1)
        if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
            raise SpectralError("matrix is not positive enough for power iteration")
        y = y / rho[..., None]
        prev_change, change = change, np.abs(y - x).max(axis=-1)
        x = y
        if np.all(change < tol):
            rho = np.einsum("...ij,...j->...i", M, x).max(axis=-1)
            return rho, x, it + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = float(np.nanmax(change / prev_change))
    raise SpectralError(f"power iteration stalled after {max_iter} steps", gap_estimate=1.0 - gap)


def lambda_batch(field: CoefficientField, mus) -> np.ndarray:
    rho, _, _ = power_iteration(monodromy_batch(field, mus))
    return np.log(rho) / field.period


def lambda_eig_batch(field: CoefficientField, mus, n_steps: int | None = None) -> np.ndarray:
    """Independent route: spectral radius from a dense eigenvalue solver."""
    M = monodromy_batch(field, mus, n_steps=n_steps)
    ev = np.linalg.eigvals(M)
    return np.log(np.abs(ev).max(axis=-1)) / field.period


# --------------------------------------------------------------------------


@dataclass
class FloquetResult:
    """lambda(mu) and samples psi(t_k, j) for t_k on [0, T], j in 0..J-1."""

    mu: float
    lam: float
    times: np.ndarray
    psi: np.ndarray
    residual: float
    spectral_radius: float
    iterations: int
    _spline: CubicSpline = dc_field(init=False, repr=False)

    def __post_init__(self):
        vals = self.psi.copy()
        vals[-1] = vals[0]
        self._spline = CubicSpline(self.times, vals, axis=0, bc_type="periodic")

    @property
    def period(self) -> float:
        return float(self.times[-1])

    @property
    def space_period(self) -> int:
        return self.psi.shape[1]

    @property
    def psi_max(self) -> float:
        return float(self.psi.max())

    @property
    def psi_min(self) -> float:
        return float(self.psi.min())

    def value(self, t, j) -> np.ndarray:
        """psi(t, j) for scalar t (any real) and integer ``j`` (any shape)."""
        t = float(t)
        T = self.period
        t = t - math.floor(t / T) * T
        return self._spline(t)[np.mod(np.asarray(j), self.space_period)]


def _residual(field: CoefficientField, mu: float, lam: float, times: np.ndarray,
              psi: np.ndarray, h: float) -> float:
    # psi_t = (A(t) - lambda) psi, checked with a periodic fourth-order difference
    core = psi[:-1]
    dpsi = (np.roll(core, 2, 0) - 8 * np.roll(core, 1, 0) + 8 * np.roll(core, -1, 0)
            - np.roll(core, -2, 0)) / (12.0 * h)
    n = core.shape[0]
    pieces = _pieces_cached(field, n)
    A = pieces.matrices(np.array([mu]))[0, 0:2 * n:2]
    rhs = np.einsum("kij,kj->ki", A, core) - lam * core
    return float(np.abs(dpsi - rhs).max() / np.abs(psi).max())


def lambda_of_mu(field: CoefficientField, mu: float) -> FloquetResult:
    T, J = _require_periodic(field)
    M, path, h = monodromy_batch(field, [mu], keep_path=True)
    rho, vec, its = power_iteration(M[0])
    lam = math.log(rho) / T
    n = path.shape[1] - 1
    times = h * np.arange(n + 1)
    psi = np.exp(-lam * times)[:, None] * np.einsum("kij,j->ki", path[0], vec)
    psi = psi / np.abs(psi[0]).max()
    if not np.all(psi > 0):
        raise SpectralError("Perron profile lost positivity")
    res = _residual(field, float(mu), lam, times, psi, h)
    return FloquetResult(float(mu), lam, times, psi, res, float(rho), its)


# --------------------------------------------------------------------------


@dataclass
class SpeedResult:
    mu_star: float
    c_star: float
    scan_mu: np.ndarray
    scan_ratio: np.ndarray
    grid_min: float
    grid_argmin: float
    ties: list[float]

    def ratio_curve(self) -> np.ndarray:
        return np.column_stack([self.scan_mu, self.scan_ratio])


def _coarse_scan(field, lo, hi, n=61):
    mus = np.linspace(lo, hi, n)
    return mus, lambda_batch(field, mus) / mus


def find_mu_star(field: CoefficientField, bracket: tuple[float, float] | None = None,
                 *, tol: float = 1e-8, n_grid: int = 10_000, max_expand: int = 8) -> SpeedResult:
    """Minimise lambda(mu)/mu over mu > 0.

    A coarse scan locates the minimum (expanding the bracket when it sits on
    an edge), golden-section refines it and a dense scan computed with a
    dense eigenvalue solver cross-checks the minimum value.
    """
    lo, hi = bracket if bracket is not None else (0.05, 3.0)
    if not 0 < lo < hi:
        raise ParameterError("bracket must satisfy 0 < mu_lo < mu_hi")
    scans_mu, scans_ratio = [], []
    for _ in range(max_expand + 1):
        mus, ratio = _coarse_scan(field, lo, hi)
        scans_mu.append(mus)
        scans_ratio.append(ratio)
        k = int(np.argmin(ratio))
        if k == 0:
            lo, hi = lo / 4.0, mus[1]
        elif k == mus.size - 1:
            lo, hi = mus[-2], hi * 2.0
        else:
            break
    else:
        raise BracketError("no interior minimum of lambda(mu)/mu found",
                           scan=(np.concatenate(scans_mu), np.concatenate(scans_ratio)))
    a, b = mus[k - 1], mus[k + 1]

    def g(m):
        return lambda_of_mu_value(field, m) / m

    mu_star, c_star = golden_section(g, a, b, tol=tol)

    fine = np.linspace(a, b, n_grid)
    n_steps = step_grid(field, b)
    vals = np.concatenate([lambda_eig_batch(field, chunk, n_steps) for chunk in np.array_split(fine, 10)]) / fine
    kmin = int(np.argmin(vals))
    grid_min = float(vals[kmin])
    if abs(grid_min - c_star) > 1e-6:
        raise BracketError(f"golden-section minimum {c_star:.12g} disagrees with grid scan {grid_min:.12g}",
                           scan=(fine, vals))
    ties = [float(m) for m in fine[vals <= grid_min + 1e-12]]
    if ties and ties[0] < mu_star - 1e-6 and g(ties[0]) <= c_star:
        # report the smallest minimiser when the curve is flat at the bottom
        mu_star = ties[0]
        c_star = g(mu_star)
    all_mu = np.concatenate(scans_mu)
    all_ratio = np.concatenate(scans_ratio)
    order = np.argsort(all_mu)
    return SpeedResult(float(mu_star), float(c_star), all_mu[order], all_ratio[order], grid_min,
                       float(fine[kmin]), ties)


def lambda_of_mu_value(field: CoefficientField, mu: float) -> float:
    return float(lambda_batch(field, [mu])[0])


def select_mu_prime(field: CoefficientField, speed: SpeedResult, mu: float,
                    margin: float = 1e-6, max_iter: int = 60) -> float:
    """Pick mu' in (mu, min(2 mu, mu*)) with lambda(mu)/mu > lambda(mu')/mu' > c*."""
    if not 0 < mu < speed.mu_star:
        raise ParameterError("need 0 < mu < mu*")
    g_mu = lambda_of_mu_value(field, mu) / mu
    lo, hi = mu, min(2.0 * mu, speed.mu_star)
    m = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gm = lambda_of_mu_value(field, m) / m
        above_floor = gm - speed.c_star >= margin
        below_ceiling = g_mu - gm >= margin
        if above_floor and below_ceiling:
            return float(m)
        if not above_floor and not below_ceiling:
            break
        if not above_floor:
            hi = m
        else:
            lo = m
        m = 0.5 * (lo + hi)
    raise MarginError(f"no admissible mu' for mu={mu:.6g}; choose a smaller mu (faster speed)")


def mu_for_speed(field: CoefficientField, speed: SpeedResult, c: float) -> float:
    """The tilt mu in (0, mu*) with lambda(mu)/mu = c, for c > c*."""
    if c <= speed.c_star:
        raise ParameterError(f"speed {c} must exceed c* = {speed.c_star:.10g}")

    def gap(m):
        return lambda_of_mu_value(field, m) / m - c

    lo = 0.5 * speed.mu_star
    while gap(lo) <= 0:
        lo *= 0.5
        if lo < 1e-8:
            raise BracketError("could not bracket mu for the requested speed")
    return float(brentq(gap, lo, speed.mu_star, xtol=1e-14, rtol=1e-14))
