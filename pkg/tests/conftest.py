"""Shared fixtures. Expensive full-resolution derivative fits are computed
once per session and reused by every test that needs them."""

import numpy as np
import pytest

from phdaegp import benchmarks, harness
from phdaegp.deriv import DerivativeMethod, fit_time_gp


@pytest.fixture(scope="session")
def circuit():
    return benchmarks.load_benchmark("circuit")


@pytest.fixture(scope="session")
def pendulum():
    return benchmarks.load_benchmark("pendulum")


@pytest.fixture(scope="session")
def circuit_cache(circuit):
    """Derivative cache holding the full-data GP derivative of the circuit."""
    system, traj = circuit
    cache = harness.DerivativeCache()
    cache.get(traj, system, DerivativeMethod("gp_full"))
    return cache


@pytest.fixture(scope="session")
def sine_fits():
    """GP derivative fits of sin(t) on [0, 10 pi] at several sample counts."""
    out = {}
    for n in (8, 50, 200, 1000, 3000):
        t = np.linspace(0.0, 10.0 * np.pi, n)
        model = fit_time_gp(t, np.sin(t))
        d = model.mean_derivative(t[:, None])
        out[n] = float(np.sqrt(np.mean((d - np.cos(t)) ** 2)))
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record one report line per acceptance criterion, echoed immediately."""

    def record(label, passed, detail):
        line = f"ACCEPTANCE {label} {'PASS' if passed else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance report")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
