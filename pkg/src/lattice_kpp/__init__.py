"""Generalized traveling waves of lattice Fisher-KPP equations in heterogeneous media."""

__version__ = "0.1.0"

from .coeffs import (
    AuditReport,
    CoefficientField,
    LogisticFamily,
    SampleGrid,
    Structure,
    audit_H0,
    make_family,
    window_average_extremes,
)
from .errors import LatticeKPPError
from .floquet import FloquetResult, SpeedResult, find_mu_star, lambda_of_mu, select_mu_prime
from .lattice import (
    Boundary,
    EntireSolution,
    LatticeState,
    SimOptions,
    check_sub_super,
    compute_entire_solution,
    integrate,
    trajectory,
)
from .metrics import (
    FrontTrace,
    HypothesisReport,
    MonitorTrace,
    audit_stability_hypotheses,
    front_location,
    part_metric,
    part_metric_monitor,
    ratio_norm,
)
from .waves_periodic import (
    PeriodicWave,
    SubSuperParams,
    WaveProfile,
    assemble_wave,
    build_periodic_wave,
    build_sub_super,
    compute_d0,
    continuum_extend,
    iterate_profile,
)
from .waves_timehet import (
    FBarStats,
    TimeHetWave,
    build_A,
    build_transition_wave,
    c0_tilde,
    estimate_fbar,
)

__all__ = [name for name in dir() if not name.startswith("_")]
