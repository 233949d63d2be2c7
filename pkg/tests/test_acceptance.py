"""Desk-scale acceptance checks; each test prints one pass/fail line."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lattice_kpp.coeffs import make_family
from lattice_kpp.floquet import find_mu_star, lambda_of_mu
from lattice_kpp.lattice import Boundary, compute_entire_solution
from lattice_kpp.metrics import (
    ordering_defect,
    part_metric_monitor,
    perturb_front,
    ratio_norm,
    stability_trace,
)
from lattice_kpp.waves_periodic import build_periodic_wave
from lattice_kpp.waves_timehet import c0_tilde

from conftest import CONFIGS, report


def line(n, ok, text):
    report(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")


def test_criterion_01_floquet_closed_form(homogeneous):
    start = time.perf_counter()
    errors = [abs(lambda_of_mu(homogeneous, mu).lam - (math.exp(mu) + math.exp(-mu) - 1.0))
              for mu in (0.25, 0.5, 1.0, 2.0)]
    elapsed = time.perf_counter() - start
    ok = max(errors) < 1e-8 and elapsed < 5
    line(1, ok, f"max |lambda - closed form| = {max(errors):.2e} (< 1e-8), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_critical_speed(homogeneous):
    start = time.perf_counter()
    speed = find_mu_star(homogeneous)
    elapsed = time.perf_counter() - start
    mus = np.linspace(0.05, 3.0, 10_000)
    oracle = float(((np.exp(mus) + np.exp(-mus) - 1.0) / mus).min())
    c0, _ = c0_tilde(1.0)
    gap_grid, gap_c0 = abs(speed.c_star - oracle), abs(speed.c_star - c0)
    ok = gap_grid < 1e-6 and gap_c0 < 1e-6 and elapsed < 10
    line(2, ok, f"c* = {speed.c_star:.10f}, grid gap {gap_grid:.2e}, c0 gap {gap_c0:.2e} (< 1e-6), "
                f"{elapsed:.2f} s (< 10 s)")
    assert ok


def test_criterion_03_comparison_principle(periodic_field):
    rng = np.random.default_rng(2024)
    lower = rng.uniform(0.0, 2.0, (100, 201))
    upper = lower + rng.uniform(0.0, 1.0, (100, 201))
    start = time.perf_counter()
    _, worst = ordering_defect(periodic_field, lower, upper, 0.0, 5.0, offset=-100,
                               boundary=Boundary.periodic())
    elapsed = time.perf_counter() - start
    ok = worst.max() <= 1e-10 and elapsed < 60
    line(3, ok, f"max_t max_j (u - v) = {worst.max():.2e} (<= 1e-10), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_04_part_metric(periodic_field):
    rng = np.random.default_rng(2025)
    u0 = rng.uniform(0.1, 2.0, (100, 201))
    v0 = rng.uniform(0.1, 2.0, (100, 201))
    start = time.perf_counter()
    trace = part_metric_monitor(periodic_field, u0, v0, 0.0, 1.0, offset=-100, tau=1.0, sigma=0.5)
    elapsed = time.perf_counter() - start
    dec = trace.decrement[~np.isnan(trace.decrement)]
    ok = trace.max_increase <= 1e-8 and dec.size > 0 and dec.min() >= 1e-3 and elapsed < 60
    line(4, ok, f"max per-step increase {trace.max_increase:.2e} (<= 1e-8), min decrement over tau=1 "
                f"{dec.min():.3g} on {dec.size} pairs (>= 1e-3), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_05_entire_solution():
    T, r0, r1 = 1.0, 1.5, 0.5
    field = make_family("time-periodic", {"T": T, "r0": r0, "r1": r1})
    up = compute_entire_solution(field, tol=1e-6, n_max=60)

    def rhs(t, u):
        return u * (r0 + r1 * np.sin(2 * np.pi * t / T) - u)

    u = np.array([field.M0])
    for _ in range(60):
        u = solve_ivp(rhs, (0.0, T), u, rtol=1e-12, atol=1e-14).y[:, -1]
    sol = solve_ivp(rhs, (0.0, T), u, rtol=1e-12, atol=1e-14, dense_output=True)
    oracle_err = max(abs(float(up.value(t, 0)) - float(sol.sol(t)[0])) for t in up.times)
    per = float(np.abs(up.values[-1] - up.values[0]).max())
    ok = up.history[-1] < 1e-6 and up.iterations <= 60 and oracle_err < 1e-6 and per < 1e-5
    line(5, ok, f"{up.iterations} periods, last change {up.history[-1]:.2e} (< 1e-6), oracle error "
                f"{oracle_err:.2e} (< 1e-6), periodicity {per:.2e} (< 1e-5)")
    assert ok


def test_criterion_06_periodic_wave(periodic_wave):
    wave, elapsed = periodic_wave
    names = ["convergence", "envelope bound", "ODE residual", "time periodicity", "space periodicity",
             "monotone iterates"]
    diags = {n: wave.diagnostic(n) for n in names}
    iters = max(wave.upper.iterations, wave.lower.iterations)
    ok = (all(d.passed for d in diags.values()) and iters <= 80 and elapsed < 600
          and diags["time periodicity"].value < 1e-5 and diags["space periodicity"].value < 1e-5)
    summary = ", ".join(f"{n} {d.value:.2e}" for n, d in diags.items())
    line(6, ok, f"{iters} iterations (<= 80), {summary}, {elapsed:.0f} s (< 600 s)")
    assert ok, [(n, d.value, d.threshold) for n, d in diags.items() if not d.passed]


def test_criterion_07_uniqueness(periodic_wave):
    wave, _ = periodic_wave
    ok = wave.gap < 1e-4
    line(7, ok, f"upper-lower gap {wave.gap:.2e} (< 1e-4)")
    assert ok


def test_criterion_08_stability(periodic_wave):
    wave, _ = periodic_wave
    U0 = wave.values[0]
    u0 = perturb_front(U0, np.random.default_rng(8))
    trace = stability_trace(wave.field, int(wave.sites[0]), U0, u0, 0.0, 40.0, wave.ghost_boundary())
    final = trace.value_at(40.0)
    rise = trace.max_increase_after(5.0)
    ok = final < 0.01 and rise <= 1e-6
    line(8, ok, f"ratio norm {trace.ratio[0]:.3f} -> {final:.2e} at t=40 (< 0.01), "
                f"max increase after t=5 {rise:.2e} (<= 1e-6)")
    assert ok


def test_criterion_09_time_heterogeneous_wave(timehet_wave, constant_timehet_wave):
    w = timehet_wave
    diags = {d.name: d for d in w.diagnostics}
    ordering = diags["envelope ordering"]
    tracking = diags["front tracking"]
    margin = w.A.margin
    # degenerate case: constant rate against the periodic-wave machinery at the same speed
    wc = constant_timehet_wave
    pw = build_periodic_wave(make_family("homogeneous"), c=wc.gamma)
    X0 = int(wc.front.X[0])
    sel = np.arange(X0 - 20, X0 + 41)
    a = wc.values[0][np.searchsorted(wc.sites, sel)]
    b = pw.values[0][np.searchsorted(pw.sites, sel)]
    degenerate = ratio_norm(a, b)
    ok = (ordering.passed and tracking.value <= 3 and margin >= w.delta / 2 and degenerate < 1e-3)
    line(9, ok, f"envelope ordering {ordering.value:.2e}, front tracking {tracking.value:.2f} sites (<= 3), "
                f"A margin {margin:.4f} (>= {w.delta / 2:.4f}), constant-rate ratio norm "
                f"{degenerate:.2e} (< 1e-3)")
    assert ok


RUNS = [
    ("floquet", "homogeneous"),
    ("speed", "homogeneous"),
    ("partmetric", "homogeneous"),
    ("entire", "periodic_logistic"),
    ("wave-periodic", "periodic"),
    ("uniqueness", "periodic"),
    ("stability", "periodic"),
    ("wave-timehet", "quasiperiodic"),
]


def _artifacts(out):
    files = {}
    for p in sorted(out.iterdir()):
        data = p.read_bytes()
        if p.name == "manifest.json":
            doc = json.loads(data)
            doc.pop("wall_clock_seconds")
            data = json.dumps(doc, sort_keys=True).encode()
        files[p.name] = data
    return files


def test_criterion_10_determinism(tmp_path):
    mismatches, failures = [], []
    for command, config in RUNS:
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{command}-{rep}"
            proc = subprocess.run([sys.executable, "-m", "lattice_kpp.cli", command, "--config",
                                   str(CONFIGS / f"{config}.toml"), "--out", str(out)],
                                  capture_output=True, text=True)
            if proc.returncode != 0:
                failures.append(f"{command} exit {proc.returncode}: {proc.stderr.strip()[-200:]}")
            outputs.append(_artifacts(out))
        a, b = outputs
        if a.keys() != b.keys():
            mismatches.append(f"{command}: file sets differ")
        mismatches += [f"{command}/{name}" for name in a if name in b and a[name] != b[name]]
    ok = not mismatches and not failures
    line(10, ok, f"{len(RUNS)} commands run twice, {len(mismatches)} differing artifacts, "
                 f"{len(failures)} failed runs")
    assert ok, mismatches + failures
