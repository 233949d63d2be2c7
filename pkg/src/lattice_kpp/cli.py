"""Command-line entry point: ``lattice-kpp <command> --config FILE --out DIR``.

Exit codes: 0 success, 1 operational error, 2 a diagnostic failed, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from .artifacts import RunManifest, Series, svg_line_chart, write_csv
from .coeffs import SampleGrid, audit_H0
from .config import Config, load_config
from .errors import LatticeKPPError

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTIC, EXIT_USAGE = 0, 1, 2, 64


@dataclass
class Outcome:
    passed: bool = True
    parameters: dict = dc_field(default_factory=dict)
    summary: str = ""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# commands


def cmd_audit(cfg: Config, out: Path) -> Outcome:
    fld = cfg.field()
    report = audit_H0(fld, SampleGrid.default(fld))
    write_csv(out / "audit.csv", ["clause", "passed", "detail", "witness"],
              [(c.name, c.passed, c.detail, "" if c.witness is None else str(c.witness))
               for c in report.clauses])
    return Outcome(report.passed, {"growth_average": report.growth_average,
                                   "window_policy": report.window_policy},
                   f"averaged growth {report.growth_average:.10g}")


def _initial(cfg: Config, fld, sites: np.ndarray) -> np.ndarray:
    kind = cfg.section("simulate")["initial"]
    if kind == "step":
        return np.where(sites <= 0, fld.M0, 0.0)
    if kind == "constant":
        return np.full(sites.size, fld.M0)
    if kind == "random":
        return np.random.default_rng(cfg.seed).uniform(0.0, fld.M0, sites.size)
    raise LatticeKPPError(f"unknown initial profile {kind!r}; expected step, constant or random")


def cmd_simulate(cfg: Config, out: Path) -> Outcome:
    from .lattice import Boundary, LatticeState, SimOptions, compute_entire_solution, trajectory

    fld = cfg.field()
    s = cfg.section("simulate")
    lo, hi = (int(v) for v in s["window"])
    sites = np.arange(lo, hi + 1)
    u0 = _initial(cfg, fld, sites)
    if s["boundary"] == "periodic":
        bnd = Boundary.periodic()
    elif s["boundary"] == "front":
        horizon = None if fld.is_periodic else (0.0, float(s["t1"]))
        bnd = Boundary.front(compute_entire_solution(fld, horizon))
    else:
        raise LatticeKPPError(f"unknown boundary {s['boundary']!r}; expected front or periodic")
    opts = SimOptions(dt=cfg.dt, output_stride=int(s["stride"]))
    times, frames, final = trajectory(LatticeState(lo, u0, 0.0, bnd), fld, float(s["t1"]), opts)
    write_csv(out / "trajectory.csv", ["t", "j", "u"],
              ((t, j, v) for t, row in zip(times, frames) for j, v in zip(sites, row)))
    svg_line_chart(out / "profiles.svg",
                   [Series("t=0", sites, frames[0]), Series(f"t={times[-1]:g}", sites, frames[-1])],
                   title="lattice profiles", xlabel="site j", ylabel="u")
    return Outcome(True, {"window": [lo, hi], "t1": s["t1"], "boundary": bnd.label,
                          "clamped_undershoots": final.clamped})


def cmd_entire(cfg: Config, out: Path) -> Outcome:
    from .lattice import compute_entire_solution

    fld = cfg.field()
    s = cfg.section("entire")
    horizon = None if fld.is_periodic else tuple(float(v) for v in s["horizon"])
    sol = compute_entire_solution(fld, horizon, tol=float(s["tol"]), n_max=int(s["n_max"]), dt=cfg.dt)
    write_csv(out / "entire.csv", ["t", "j", "u"],
              ((t, j, sol.values[k, j]) for k, t in enumerate(sol.times) for j in range(sol.values.shape[1])))
    write_csv(out / "pullback_history.csv", ["n", "delta"],
              ((n + 1, d) for n, d in enumerate(sol.history)))
    defect = float(np.abs(sol.values[-1] - sol.values[0]).max()) if sol.period else 0.0
    passed = sol.history[-1] < float(s["tol"]) if sol.history else True
    return Outcome(passed, {"iterations": sol.iterations, "period_defect": defect,
                            "inf": sol.inf, "sup": sol.sup})


def cmd_floquet(cfg: Config, out: Path) -> Outcome:
    from .floquet import lambda_eig_batch, lambda_of_mu

    fld = cfg.field()
    mus = [float(m) for m in cfg.section("floquet")["mus"]]
    results = [lambda_of_mu(fld, m) for m in mus]
    eig = lambda_eig_batch(fld, mus)
    write_csv(out / "floquet.csv", ["mu", "lambda", "lambda_eigvals", "spectral_radius", "residual",
                                    "iterations"],
              ((r.mu, r.lam, e, r.spectral_radius, r.residual, r.iterations) for r, e in zip(results, eig)))
    write_csv(out / "eigenfunctions.csv", ["mu", "t", "j", "psi"],
              ((r.mu, t, j, r.psi[k, j]) for r in results for k, t in enumerate(r.times)
               for j in range(r.psi.shape[1])))
    worst = max(abs(r.lam - e) for r, e in zip(results, eig))
    return Outcome(worst < 1e-6, {"mus": mus, "route_gap": worst})


def cmd_speed(cfg: Config, out: Path) -> Outcome:
    from .floquet import find_mu_star

    fld = cfg.field()
    s = cfg.section("speed")
    sp = find_mu_star(fld, tuple(float(v) for v in s["bracket"]), tol=float(s["tol"]), n_grid=int(s["n_grid"]))
    gap = abs(sp.c_star - sp.grid_min)
    write_csv(out / "speed.csv", ["mu_star", "c_star", "grid_min", "grid_argmin", "gap"],
              [(sp.mu_star, sp.c_star, sp.grid_min, sp.grid_argmin, gap)])
    write_csv(out / "scan.csv", ["mu", "lambda_over_mu"], zip(sp.scan_mu, sp.scan_ratio))
    svg_line_chart(out / "scan.svg", [Series("lambda(mu)/mu", sp.scan_mu, sp.scan_ratio)],
                   title="speed curve", xlabel="mu", ylabel="lambda/mu")
    return Outcome(gap < 1e-6, {"mu_star": sp.mu_star, "c_star": sp.c_star},
                   f"c* = {sp.c_star:.10g}")


def _periodic_wave(cfg: Config):
    from .waves_periodic import IterationSettings, build_periodic_wave

    s = cfg.section("wave_periodic")
    settings = IterationSettings(x_lo=float(s["x_lo"]), x_hi=float(s["x_hi"]), pad=int(s["pad"]),
                                 n_max=int(s["n_max"]), tol=float(s["tol"]), dt=cfg.dt)
    return build_periodic_wave(cfg.field(), c_offset=float(s["c_offset"]), settings=settings)


def _wave_params(w) -> dict:
    p = w.params
    return {"c": w.c, "c_star": w.speed.c_star, "mu": p.mu, "mu_prime": p.mu_prime, "d": p.d,
            "d1": p.d1, "b": p.b, "N": p.N, "M": p.M, "d1_tight": w.d1_tight,
            "iterations": w.upper.iterations}


def _write_diagnostics(path: Path, diags) -> None:
    write_csv(path, ["name", "value", "threshold", "passed", "gating", "detail"],
              ((d.name, d.value, d.threshold, d.passed, getattr(d, "gating", True), d.detail) for d in diags))


def cmd_wave_periodic(cfg: Config, out: Path) -> Outcome:
    w = _periodic_wave(cfg)
    rows = []
    for prof in (w.upper, w.lower):
        for a, t in enumerate(prof.t_grid):
            for i in range(prof.theta.size):
                m = prof.site_mask[i]
                for x, v in zip(prof.x[a, i][m], prof.values[a, i][m]):
                    rows.append((prof.side, x, t, prof.z[a, i], v))
    write_csv(out / "profile.csv", ["side", "x", "t", "z", "value"], rows)
    _write_diagnostics(out / "diagnostics.csv", w.diagnostics)
    write_csv(out / "wave.csv", ["t", "j", "U"],
              ((t, j, v) for t, row in zip(w.times[::20], w.values[::20]) for j, v in zip(w.sites, row)))
    x = w.sites.astype(float)
    phi, phi1 = w.phi(0.0, w.sites), w.phi1(0.0, w.sites)
    keep = (x >= w.settings.x_lo) & (x <= w.settings.x_hi)
    svg_line_chart(out / "overlay.svg", [
        Series("Psi+", x[keep], w.upper.members[0][keep]),
        Series("Psi-", x[keep], w.lower.members[0][keep]),
        Series("phi + d1 phi1", x[keep], (phi + w.d1_star * phi1)[keep], dashed=True),
        Series("phi - d1 phi1", x[keep], (phi - w.d1_star * phi1)[keep], dashed=True),
    ], title="periodic wave at t = 0", xlabel="x", ylabel="value", logy=True)
    return Outcome(w.passed, _wave_params(w), f"gap {w.gap:.3g}")


def cmd_wave_timehet(cfg: Config, out: Path) -> Outcome:
    from .waves_timehet import TimeHetOptions, build_transition_wave

    s = cfg.section("wave_timehet")
    opts = TimeHetOptions(stats_horizon=float(s["stats_horizon"]), gamma_offset=float(s["gamma_offset"]),
                          n_max=int(s["n_max"]), tol=float(s["tol"]), t_out=float(s["t_out"]),
                          out_every=float(s["out_every"]), dt=cfg.dt)
    w = build_transition_wave(cfg.field(), options=opts)
    write_csv(out / "wave.csv", ["t", "j", "U"],
              ((t, j, v) for t, row in zip(w.times, w.values) for j, v in zip(w.sites, row)))
    sel = w.c_times >= -1e-12
    write_csv(out / "speed_trace.csv", ["t", "c", "integral_c"],
              zip(w.c_times[sel], w.c_samples[sel], w.c_integral[sel]))
    write_csv(out / "A_trace.csv", ["t", "A", "B"], zip(w.A.times, w.A.A, w.A.B))
    _write_diagnostics(out / "diagnostics.csv", w.diagnostics)
    svg_line_chart(out / "diagnostics.svg", [
        Series("X(t) - X(0)", w.front.times, w.front.X - w.front.X[0]),
        Series("integral of c", w.front.times, w.C(w.front.times), dashed=True),
    ], title="front location and designed speed", xlabel="t", ylabel="sites")
    st = w.stats
    return Outcome(w.passed, {"gamma": w.gamma, "c0_tilde": w.c0, "mu": w.mu, "mu_tilde": w.mu_tilde,
                              "delta": w.delta, "d1": w.d1_star, "retried": w.retried,
                              "f_bar": [st.f_bar_inf, st.f_bar_sup, st.f_bar_inf_plus, st.f_bar_sup_plus]})


def cmd_partmetric(cfg: Config, out: Path) -> Outcome:
    from .metrics import ordering_defect, part_metric_monitor

    fld = cfg.field()
    s = cfg.section("partmetric")
    rng = np.random.default_rng(cfg.seed)
    shape = (int(s["pairs"]), int(s["sites"]))
    u0 = rng.uniform(s["low"], s["high"], shape)
    v0 = rng.uniform(s["low"], s["high"], shape)
    from .lattice import default_options

    opts = default_options(fld, cfg.dt)
    mon = part_metric_monitor(fld, u0, v0, 0.0, float(s["t1"]), opts=opts, tau=float(s["tau"]),
                              sigma=float(s["sigma"]))
    increases = np.max(np.diff(mon.rho, axis=0), axis=0, initial=0.0)
    lo, hi = np.minimum(u0, v0), np.maximum(u0, v0)
    _, order = ordering_defect(fld, lo, hi, 0.0, float(s["t1"]), opts=opts)
    dec = np.asarray(mon.decrement, dtype=float)
    write_csv(out / "partmetric.csv", ["pair", "rho_start", "rho_end", "max_increase", "decrement"],
              ((k, mon.rho[0, k], mon.rho[-1, k], increases[k], dec[k]) for k in range(shape[0])))
    write_csv(out / "ordering.csv", ["max_defect"], [(float(order.max()),)])
    separated = ~np.isnan(dec)
    ok = (mon.max_increase <= 1e-8 and order.max() <= 1e-10
          and (not separated.any() or float(dec[separated].min()) >= 1e-3))
    return Outcome(ok, {"pairs": shape[0], "sites": shape[1], "max_increase": mon.max_increase,
                        "ordering_defect": float(order.max())})


def cmd_stability(cfg: Config, out: Path) -> Outcome:
    from .metrics import audit_stability_hypotheses, perturb_front, stability_trace

    s = cfg.section("stability")
    fld = cfg.field()
    if fld.is_periodic:
        w = _periodic_wave(cfg)
        U0, bnd = w.values[0], w.ghost_boundary()
    else:
        from .waves_timehet import TimeHetOptions, build_transition_wave

        ws = cfg.section("wave_timehet")
        w = build_transition_wave(fld, options=TimeHetOptions(
            stats_horizon=float(ws["stats_horizon"]), gamma_offset=float(ws["gamma_offset"]),
            n_max=int(ws["n_max"]), tol=float(ws["tol"]), t_out=float(s["t1"]), dt=cfg.dt))
        U0, bnd = w.values[0], w.boundary()
    rng = np.random.default_rng(cfg.seed)
    u0 = perturb_front(U0, rng, float(s["low"]), float(s["high"]))
    trace = stability_trace(fld, int(w.sites[0]), U0, u0, 0.0, float(s["t1"]), bnd)
    report = audit_stability_hypotheses(w.samples(), seed=cfg.seed)
    write_csv(out / "ratio.csv", ["t", "ratio_norm"], zip(trace.times, trace.ratio))
    write_csv(out / "hypotheses.csv", ["clause", "status", "witness"], report.rows())
    svg_line_chart(out / "ratio.svg", [Series("ratio norm", trace.times, trace.ratio)],
                   title="distance to the wave", xlabel="t", ylabel="sup |u/U - 1|", logy=True)
    final = trace.value_at(float(s["t1"]))
    rise = trace.max_increase_after(float(s["burn_in"]))
    ok = final < float(s["target"]) and rise <= float(s["slack"]) and report.passed
    return Outcome(ok, {"final_ratio": final, "max_increase_after_burn_in": rise,
                        "hypotheses": [r[:2] for r in report.rows()]})


def cmd_uniqueness(cfg: Config, out: Path) -> Outcome:
    w = _periodic_wave(cfg)
    write_csv(out / "uniqueness.csv", ["gap", "threshold", "passed"], [(w.gap, 1e-4, w.gap < 1e-4)])
    return Outcome(w.gap < 1e-4, {"gap": w.gap, **_wave_params(w)}, f"gap {w.gap:.3g}")


COMMANDS: dict[str, Callable[[Config, Path], Outcome]] = {
    "audit": cmd_audit,
    "simulate": cmd_simulate,
    "entire": cmd_entire,
    "floquet": cmd_floquet,
    "speed": cmd_speed,
    "wave-periodic": cmd_wave_periodic,
    "wave-timehet": cmd_wave_timehet,
    "partmetric": cmd_partmetric,
    "stability": cmd_stability,
    "uniqueness": cmd_uniqueness,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lattice-kpp", description="Traveling waves of lattice Fisher-KPP equations.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--threads", type=int, default=1,
                   help="recorded in the manifest; computations run in one thread")
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    return p


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("usage error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.tol_scale != 1.0:
            cfg = cfg.scaled(args.tol_scale)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        outcome = COMMANDS[args.command](cfg, out)
    except (LatticeKPPError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    code = EXIT_OK if outcome.passed else EXIT_DIAGNOSTIC
    manifest = RunManifest(
        command=args.command,
        config=cfg.snapshot(),
        seed=cfg.seed,
        parameters={**outcome.parameters, "threads": args.threads, "dt": cfg.dt},
        tolerances={f"{sec}.{key}": cfg.sections[sec][key]
                    for sec, sec_vals in cfg.sections.items() for key in sec_vals if "tol" in key},
        wall_clock=time.perf_counter() - start,
        status="pass" if outcome.passed else "diagnostic failure",
        exit_code=code,
    )
    manifest.write(out)
    line = f"{args.command}: {'pass' if outcome.passed else 'FAIL'}"
    print(line + (f" ({outcome.summary})" if outcome.summary else ""))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
