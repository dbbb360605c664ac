"""Shared fixtures: small configurations that keep the unit tests fast."""

import sys

import numpy as np
import pytest

from morcal.fom import ControlSignal, FomConfig


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criteria verdicts collected during the run."""
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(module, "RESULT_LINES", [])
            if lines:
                terminalreporter.section("acceptance criteria")
                for line in lines:
                    terminalreporter.write_line(line)
            break


@pytest.fixture
def small_cfg():
    """A 30-point configuration that integrates in milliseconds."""
    return FomConfig(
        grid_points=30,
        domain_length=1.0,
        coolant_velocity=0.01,
        rho_cp_coolant=1.0e6,
        rho_cp_solid=2.0e6,
        conductivity_coolant=0.132,
        conductivity_solid=0.2,
        exchange_coefficient=3.0e4,
        arrhenius_prefactor=3.0e4,
        arrhenius_exponent=1500.0,
        inflow_temperature=533.15,
        initial_temperature=533.15,
        dt=0.5,
        t_end=200.0,
    )


@pytest.fixture
def step_signal():
    """Unit heat load switched off at t=100."""
    return ControlSignal(heat_times=np.array([0.0, 100.0]), heat_values=np.array([1.0, 0.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
