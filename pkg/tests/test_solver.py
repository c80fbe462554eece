import math

import numpy as np
import pytest

from nserlx.experiments import InitialDataSpec, make_perturbation
from nserlx.grid import Grid
from nserlx.linear import TorusPropagator, semigroup_propagate
from nserlx.model import NORMALIZED, FlowState
from nserlx.solver import (
    DT_CAP,
    NormRequest,
    SimConfig,
    SolverError,
    Stepper,
    cfl_suggest,
    integrate,
    run,
    self_convergence,
    snapshot_steps,
    step,
)


def _small_state(grid, eps=1e-3, seed=3):
    return make_perturbation(InitialDataSpec(-1.0, eps, grid.d, seed), grid)


def test_equilibrium_bit_stable():
    g = Grid(2, 8)
    st = Stepper(g, NORMALIZED, 0.05)
    hat = np.zeros((6,) + g.spec_shape, complex)
    for _ in range(10_000):
        hat = st(hat)
    assert np.all(hat == 0)


def test_single_mode_matches_semigroup():
    g = Grid(2, 16)
    i = (0, 2)  # |k| = 2 along the halved axis
    hat = np.zeros((6,) + g.spec_shape, complex)
    hat[:, 0, 2] = 1e-6 * np.array([1.0, 0.3j, -0.5, 0.2, 0.4j, 0.1])
    dt = 1e-3
    out = step(FlowState(g, hat), dt).hat
    # the mode's compressible/solenoidal amplitudes, propagated with the radial semigroup
    v = 1j * hat[2][i]  # khat = (0, 1): potential velocity from u_y
    z = 1j * hat[5][i]
    prof = np.array([[hat[0][i], v, hat[3][i], z, hat[1][i], hat[4][i]]])
    ref = semigroup_propagate(prof, np.array([2.0]), dt)[0]
    got = np.array([out[0][i], 1j * out[2][i], out[3][i], 1j * out[5][i], out[1][i], out[4][i]])
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_linear_regime_agreement_random_data():
    g = Grid(2, 32)
    st0 = _small_state(g, 1e-6)
    dt = 1e-4
    out = step(st0, dt).hat
    ref = TorusPropagator(g).apply(st0.hat, dt)
    assert math.sqrt(g.l2_sq(out - ref) / g.l2_sq(ref)) <= 1e-9


def test_hermitian_and_zero_mode_preserved():
    g = Grid(2, 32)
    st = _small_state(g, 5e-2)
    out = integrate(st, 0.02, 0.4)
    assert g.hermitian_asymmetry(out.hat) <= 1e-13
    assert out.hat[0][0, 0] == 0


@pytest.mark.parametrize("scheme,lo,hi", [("IF-RK2", 3.2, 4.8), ("IF-RK4", 12.8, 19.2)])
def test_self_convergence(scheme, lo, hi):
    g = Grid(2, 32)
    st = _small_state(g, 0.3)
    rep = self_convergence(st, 0.1, 1.0, scheme=scheme)
    assert lo <= rep.ratio <= hi, rep


def _uniform_flow(g, speed):
    u = np.stack([np.full(g.shape, speed), np.zeros(g.shape)])
    return FlowState.from_physical(g, np.zeros(g.shape), u, np.zeros(g.shape), np.zeros((2,) + g.shape))


def test_cfl_examples():
    g = Grid(2, 128)
    assert cfl_suggest(FlowState.zeros(g)) == DT_CAP
    coarse = cfl_suggest(_uniform_flow(g, 1.0), cap=1.0)
    assert coarse == pytest.approx(0.4 * 2 * math.pi / 128, rel=1e-12)
    fine = cfl_suggest(_uniform_flow(Grid(2, 256), 1.0), cap=1.0)
    assert fine == pytest.approx(0.5 * coarse, rel=1e-12)
    assert cfl_suggest(_uniform_flow(g, 1.0)) == pytest.approx(0.4 * g.dx)  # below the cap


def test_vacuum_aborts_with_step_index():
    g = Grid(2, 16)
    a = -0.9 * np.cos(g.x[0])
    u = np.stack([3.0 * np.sin(g.x[0]), np.zeros(g.shape)])
    st = FlowState.from_physical(g, a, u, np.zeros(g.shape), np.zeros((2,) + g.shape))
    with pytest.raises(SolverError) as exc:
        run(SimConfig(grid=g, dt=0.05, T=5.0), st)
    assert exc.value.step >= 1


def test_nan_aborts():
    g = Grid(2, 8)
    hat = np.zeros((6,) + g.spec_shape, complex)
    hat[1, 1, 1] = np.nan
    with pytest.raises(SolverError, match="step 0"):
        run(SimConfig(grid=g, dt=0.1, T=0.2), FlowState(g, hat))


def test_zero_amplitude_run():
    g = Grid(2, 16)
    cfg = SimConfig(grid=g, dt=0.1, T=1.0, norms=(NormRequest.parse("all:low:0:1"),), energy_js=(0,), sigma0=-1.0)
    res = run(cfg, FlowState.zeros(g))
    for row in res.diagnostics:
        assert row["X"] == 0 and row["Z"] == 0 and row["norms"]["all:low:0:1"] == 0
        assert row["mass_a"] == 0 and row["mass_n_drift"] == 0 and row["min_density"] == 1.0
        assert all(v == 0 for v in row["energies"].values())


def test_small_data_run_diagnostics():
    g = Grid(2, 32, 8 * math.pi)
    spec = InitialDataSpec(-1.0, 1e-3, 2, seed=4)
    cfg = SimConfig(grid=g, dt=0.05, T=3.0, init=spec, sigma0=-1.0, cadence=2, energy_js=(-1, 0, 1))
    res = run(cfg)
    X = res.series("X")
    assert np.all(np.diff(X) >= 0)  # sups and time integrals only grow
    assert np.abs(res.series("mass_a")).max() <= 1e-12
    assert np.abs(res.series("mass_n_drift")).max() <= 1e-10
    assert res.steps == 60 and len(res.diagnostics) == 31
    assert set(res.diagnostics[-1]["energies"]) == {"E1[-1]", "E1[0]", "E2[-1]", "E2[0]", "E2[1]"}


def test_config_validation():
    g = Grid(2, 8)
    for kw in (dict(dt=0.0), dict(dt=0.1, T=0.01), dict(cadence=0), dict(scheme="Euler")):
        with pytest.raises(ValueError):
            SimConfig(grid=g, **kw)
    with pytest.raises(ValueError):
        NormRequest.parse("nope:low:0:1")


def test_effective_dt_lands_on_T():
    cfg = SimConfig(grid=Grid(2, 8), dt=0.3, T=1.0)
    assert cfg.n_steps == 3 and cfg.effective_dt * 3 == pytest.approx(1.0)


def test_snapshot_steps_log_spaced():
    cfg = SimConfig(grid=Grid(2, 8), dt=0.01, T=10.0)
    s = snapshot_steps(cfg, 20)
    assert s[0] == 0 and s[-1] == 1000 and np.all(np.diff(s) > 0)


def test_stepper_dt_mismatch():
    g = Grid(2, 8)
    st = Stepper(g, NORMALIZED, 0.1)
    with pytest.raises(ValueError):
        step(FlowState.zeros(g), 0.2, stepper=st)
