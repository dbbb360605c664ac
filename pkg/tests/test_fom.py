"""Full-order model: discretization arithmetic, integration, and guards."""

import math

import numpy as np
import pytest

from morcal.errors import ConfigError, DataError, NumericError
from morcal.fom import (
    ControlSignal,
    FomConfig,
    arrhenius_source,
    fom_integrate,
    fom_rhs,
)

# Independently evaluated 5000 * exp(1500 / 533.15).
ARRHENIUS_AT_INFLOW = 83338.03451307402


def test_arrhenius_source_reference_value():
    cfg = FomConfig(grid_points=4)
    value = arrhenius_source(np.array([533.15]), 1.0, cfg)
    assert value.shape == (1,)
    assert math.isclose(value[0], ARRHENIUS_AT_INFLOW, rel_tol=1e-13)


def test_arrhenius_source_scales_linearly_with_load():
    cfg = FomConfig(grid_points=4)
    t = np.array([520.0, 540.0, 560.0])
    one = arrhenius_source(t, 1.0, cfg)
    assert np.allclose(arrhenius_source(t, 2.5, cfg), 2.5 * one, rtol=1e-14)


def test_arrhenius_source_grows_as_temperature_falls():
    cfg = FomConfig(grid_points=4)
    values = arrhenius_source(np.array([500.0, 600.0]), 1.0, cfg)
    assert values[0] > values[1]


def test_arrhenius_source_rejects_nonpositive_temperature():
    cfg = FomConfig(grid_points=4)
    with pytest.raises(NumericError):
        arrhenius_source(np.array([300.0, -1.0]), 1.0, cfg)


def _dense_rhs_oracle(state, heat_load, cfg):
    """Plain-loop rediscretization used to cross-check the vectorized rhs."""
    npts = cfg.grid_points
    dx = cfg.dx
    tc = state[:npts]
    ts = state[npts:]
    out_c = np.zeros(npts)
    out_s = np.zeros(npts)
    for i in range(npts):
        # advection on the coolant, first-order upwind, inlet skipped
        if i >= 1 and cfg.coolant_velocity > 0.0:
            out_c[i] -= cfg.coolant_velocity * (tc[i] - tc[i - 1]) / dx
        # diffusion with zero-gradient ghost nodes
        left_c = tc[i - 1] if i > 0 else tc[i]
        right_c = tc[i + 1] if i < npts - 1 else tc[i]
        if i > 0:
            out_c[i] += (
                cfg.conductivity_coolant
                / cfg.rho_cp_coolant
                * (left_c - 2.0 * tc[i] + right_c)
                / dx**2
            )
        left_s = ts[i - 1] if i > 0 else ts[i]
        right_s = ts[i + 1] if i < npts - 1 else ts[i]
        out_s[i] += (
            cfg.conductivity_solid
            / cfg.rho_cp_solid
            * (left_s - 2.0 * ts[i] + right_s)
            / dx**2
        )
        # exchange between the phases where solid exists
        flux = cfg.exchange_coefficient * cfg.solid_mask[i] * (ts[i] - tc[i])
        out_c[i] += flux / cfg.rho_cp_coolant
        out_s[i] -= flux / cfg.rho_cp_solid
        # temperature-driven source in the solid
        if cfg.solid_mask[i] > 0.0:
            out_s[i] += (
                heat_load
                * cfg.arrhenius_prefactor
                * math.exp(cfg.arrhenius_exponent / ts[i])
                / cfg.rho_cp_solid
            )
    out_c[0] = 0.0
    return np.concatenate([out_c, out_s])


def test_rhs_matches_dense_oracle(rng):
    cfg = FomConfig(grid_points=7, dt=0.01, t_end=1.0)
    state = 533.15 + 30.0 * rng.standard_normal(cfg.n)
    got = fom_rhs(state, (1.3, 0.0), cfg)
    want = _dense_rhs_oracle(state, 1.3, cfg)
    assert np.allclose(got, want, rtol=1e-13, atol=1e-16)


def test_rhs_inlet_node_is_pinned(small_cfg):
    state = 533.15 + np.linspace(0.0, 25.0, small_cfg.n)
    rhs = fom_rhs(state, (1.0, 0.0), small_cfg)
    assert rhs[0] == 0.0


def test_rhs_source_acts_only_on_solid_rows(small_cfg):
    state = np.full(small_cfg.n, 533.15)
    with_load = fom_rhs(state, (1.0, 0.0), small_cfg)
    without = fom_rhs(state, (0.0, 0.0), small_cfg)
    diff = with_load - without
    npts = small_cfg.grid_points
    assert np.all(diff[:npts] == 0.0)
    solid = small_cfg.solid_mask > 0.0
    assert np.all(diff[npts:][solid] > 0.0)
    assert np.all(diff[npts:][~solid] == 0.0)


def test_rhs_rejects_wrong_state_size(small_cfg):
    with pytest.raises(DataError):
        fom_rhs(np.zeros(small_cfg.n + 1), (1.0, 0.0), small_cfg)


def test_control_signal_is_right_continuous():
    sig = ControlSignal(heat_times=np.array([0.0, 10.0]), heat_values=np.array([1.0, 0.25]))
    assert sig.heat_load(0.0) == 1.0
    assert sig.heat_load(9.999) == 1.0
    assert sig.heat_load(10.0) == 0.25
    assert sig.heat_load(11.0) == 0.25
    assert sig.inflow_rate_derivative(5.0) == 0.0


def test_control_signal_validation():
    with pytest.raises(ConfigError):
        ControlSignal(heat_times=np.array([0.0, 0.0]), heat_values=np.array([1.0, 2.0]))
    with pytest.raises(ConfigError):
        ControlSignal(heat_times=np.array([0.0]), heat_values=np.array([1.0, 2.0]))
    with pytest.raises(ConfigError):
        ControlSignal(heat_times=np.array([0.0]), heat_values=np.array([-1.0]))


def test_config_validation_rejects_bad_values():
    with pytest.raises(ConfigError):
        FomConfig(grid_points=1).validate()
    with pytest.raises(ConfigError):
        FomConfig(grid_points=10, dt=-1.0).validate()
    with pytest.raises(ConfigError):
        FomConfig(grid_points=10, rho_cp_coolant=0.0).validate()
    cfg = FomConfig(grid_points=10)
    cfg.solid_mask = np.ones(3)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_integrate_refuses_unstable_step(small_cfg, step_signal):
    small_cfg.dt = 10.0 * small_cfg.stability_limit()
    with pytest.raises(NumericError):
        fom_integrate(small_cfg, step_signal)


def test_integrate_saves_states_controls_and_exact_rhs(small_cfg, step_signal):
    traj = fom_integrate(small_cfg, step_signal, save_every=40)
    n_steps = round(small_cfg.t_end / small_cfg.dt)
    assert traj.states.shape == (small_cfg.n, n_steps // 40 + 1)
    assert traj.times[0] == 0.0
    assert np.allclose(np.diff(traj.times), 40 * small_cfg.dt)
    # controls carry the load that drives the following step
    assert traj.controls.shape == (traj.times.size, 2)
    assert np.all(traj.controls[traj.times < 100.0, 0] == 1.0)
    assert np.all(traj.controls[traj.times >= 100.0, 0] == 0.0)
    # stored derivatives are the exact rhs at the stored states
    for j in (0, 2, traj.times.size - 1):
        want = fom_rhs(traj.states[:, j], traj.controls[j], small_cfg)
        assert np.allclose(traj.derivatives[:, j], want, rtol=1e-14)


def test_integrate_first_column_is_initial_state(small_cfg, step_signal):
    traj = fom_integrate(small_cfg, step_signal, save_every=10)
    assert np.all(traj.states[:, 0] == 533.15)
    # the pinned inlet never moves
    assert np.all(traj.states[0, :] == 533.15)


def test_integration_error_halves_with_dt():
    """Explicit Euler is first order: halving dt roughly halves the error."""
    base = FomConfig(
        grid_points=20,
        rho_cp_coolant=1.0e6,
        rho_cp_solid=2.0e6,
        arrhenius_prefactor=3.0e4,
        dt=0.8,
        t_end=120.0,
    )
    signal = ControlSignal(heat_times=np.array([0.0]), heat_values=np.array([1.0]))

    def final_state(dt):
        cfg = FomConfig(**{**base.__dict__, "dt": dt, "solid_mask": None})
        return fom_integrate(cfg, signal, save_every=round(120.0 / dt)).states[:, -1]

    fine = final_state(0.1)
    err_coarse = np.linalg.norm(final_state(0.8) - fine)
    err_half = np.linalg.norm(final_state(0.4) - fine)
    ratio = err_coarse / err_half
    assert 1.8 < ratio < 2.4


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_integrate_detects_blowup():
    cfg = FomConfig(
        grid_points=10,
        rho_cp_coolant=1.0,
        rho_cp_solid=1.0,
        conductivity_coolant=1e-9,
        conductivity_solid=1e-9,
        exchange_coefficient=0.0,
        arrhenius_prefactor=1e30,
        dt=1.0,
        t_end=50.0,
        initial_temperature=1.0,
        inflow_temperature=1.0,
        coolant_velocity=1e-6,
    )
    signal = ControlSignal(heat_times=np.array([0.0]), heat_values=np.array([1.0]))
    with pytest.raises(NumericError):
        fom_integrate(cfg, signal)
