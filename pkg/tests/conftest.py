import time
from pathlib import Path

import numpy as np
import pytest

from lattice_kpp.coeffs import make_family
from lattice_kpp.waves_periodic import build_periodic_wave
from lattice_kpp.waves_timehet import build_transition_wave

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

_SUMMARY: list[str] = []


def report(line: str) -> None:
    """Queue a line for the end-of-run summary."""
    _SUMMARY.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in _SUMMARY:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def homogeneous():
    return make_family("homogeneous")


@pytest.fixture(scope="session")
def periodic_field():
    return make_family("time-space-periodic")


@pytest.fixture(scope="session")
def quasiperiodic():
    return make_family("time-only")


@pytest.fixture(scope="session")
def periodic_wave(periodic_field):
    start = time.perf_counter()
    wave = build_periodic_wave(periodic_field, c_offset=0.5)
    return wave, time.perf_counter() - start


@pytest.fixture(scope="session")
def homogeneous_wave(homogeneous):
    return build_periodic_wave(homogeneous, c_offset=0.5)


@pytest.fixture(scope="session")
def timehet_wave(quasiperiodic):
    return build_transition_wave(quasiperiodic)


@pytest.fixture(scope="session")
def constant_timehet_wave():
    return build_transition_wave(make_family("time-only", {"amps": [], "freqs": []}))
