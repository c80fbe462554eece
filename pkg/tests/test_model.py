import math

import numpy as np
import pytest

from nserlx.grid import Grid
from nserlx.linear import full_symbol
from nserlx.model import (
    NORMALIZED,
    DomainError,
    FlowState,
    ModelParams,
    VacuumError,
    dereformulate,
    f_coef,
    g_coef,
    h_coef,
    linear_tendency,
    mass_tendencies,
    nonlinear_G,
    reformulate,
    relative_velocity_residual,
    rhs,
)


def _smooth_state(g: Grid, amp: float = 0.05, seed: int = 0) -> FlowState:
    """Random low-mode fields (|k| <= 2) so products stay far inside the dealiased band."""
    rng = np.random.default_rng(seed)
    hat = np.zeros((2 * g.d + 2,) + g.spec_shape, complex)
    low = (g.kmag <= 2.0 * g.fundamental) & (g.kmag > 0)
    hat[:, low] = rng.standard_normal((hat.shape[0], low.sum())) + 1j * rng.standard_normal((hat.shape[0], low.sum()))
    phys = g.to_physical(hat)
    phys *= amp / np.abs(phys).max()
    return FlowState(g, g.to_spectral(phys))


def _physical_oracle(state: FlowState, params: ModelParams) -> np.ndarray:
    """Tendencies from the unreformulated equations for (rho, u, n, w)."""
    g = state.grid
    d = g.d
    D = lambda f: g.to_physical(g.grad(g.to_spectral(f)))  # noqa: E731
    rho, u, n, w = dereformulate(state, params)
    grad_u = np.stack([D(u[c]) for c in range(d)])  # [c, e] = d_e u_c
    grad_w = np.stack([D(w[c]) for c in range(d)])
    div_u = sum(grad_u[c, c] for c in range(d))
    lap_u = np.stack([sum(D(grad_u[c, e])[e] for e in range(d)) for c in range(d)])
    graddiv = D(div_u)
    out = np.empty((2 * d + 2,) + g.shape)
    rho_t = -sum(D(rho * u[e])[e] for e in range(d))
    out[0] = rho_t / params.rho_bar
    visc = params.mu * lap_u + (params.mu + params.lam) * graddiv
    out[1 : 1 + d] = (
        -np.einsum("e...,ce...->c...", u, grad_u)
        - params.pressure_prime(rho) * D(rho) / rho
        + visc / rho
        + params.kappa * n * (w - u) / rho
    )
    n_t = -sum(D(n * w[e])[e] for e in range(d))
    out[1 + d] = n_t / n
    out[2 + d :] = -np.einsum("e...,ce...->c...", w, grad_w) - D(n) / n + params.kappa * (u - w)
    return out


@pytest.mark.parametrize(
    "params",
    [
        NORMALIZED,
        ModelParams(mu=0.7, lam=0.2, kappa=1.5, rho_bar=2.0, n_bar=0.5, pressure="gamma", gamma=1.4, sound_speed_sq=1.3),
    ],
    ids=["normalized", "general"],
)
@pytest.mark.parametrize("d", [2, 3])
def test_rhs_matches_physical_variables(params, d):
    g = Grid(d, 32)
    st = _smooth_state(g, seed=d)
    got = rhs(st, params).physical()
    ref = _physical_oracle(st, params)
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_reformulate_examples():
    g = Grid(2, 16)
    one, zero = np.ones(g.shape), np.zeros((2,) + g.shape)
    st = reformulate(g, one, zero, one, zero)
    assert np.abs(st.hat).max() == 0
    st = reformulate(g, one, zero, math.e * one, zero)
    assert np.allclose(st.b, 1.0, atol=1e-15)
    rho = 1 + 0.1 * np.cos(g.x[0])
    st = reformulate(g, rho, zero, one, zero)
    assert np.allclose(st.a, 0.1 * np.cos(g.x[0]), atol=1e-15)
    back = dereformulate(st)[0]
    assert np.abs(back - rho).max() <= 1e-12
    with pytest.raises(DomainError):
        reformulate(g, -one, zero, one, zero)


def test_coefficient_examples():
    assert float(g_coef(1.0)) == 0.5
    assert float(g_coef(0.0)) == float(f_coef(0.0)) == float(h_coef(0.0, 0.0)) == 0.0
    b = np.linspace(-1, 1, 7)
    assert np.allclose(h_coef(0.0, b), 1 - np.exp(b), atol=0, rtol=1e-15)


def test_G_with_constant_relative_velocity():
    g = Grid(2, 16)
    b = 0.3 * np.sin(g.x[1])
    u = np.stack([np.full(g.shape, 0.2), np.full(g.shape, -0.1)])
    st = FlowState.from_physical(g, np.zeros(g.shape), u, b, np.zeros((2,) + g.shape))
    G = nonlinear_G(st)
    i = (3, 5)
    assert G[0][i] == pytest.approx((1 - math.exp(b[i])) * 0.2, rel=1e-12)
    assert G[1][i] == pytest.approx((1 - math.exp(b[i])) * -0.1, rel=1e-12)


def test_equilibrium_is_fixed_point():
    g = Grid(2, 16)
    st = FlowState.zeros(g)
    assert np.abs(rhs(st).hat).max() == 0
    assert np.abs(nonlinear_G(st)).max() == 0


def test_single_mode_density():
    g = Grid(2, 16)
    a = 1e-3 * np.cos(g.x[0])
    st = FlowState.from_physical(g, a, np.zeros((2,) + g.shape), np.zeros(g.shape), np.zeros((2,) + g.shape))
    t = rhs(st).physical()
    grad_a = -1e-3 * np.sin(g.x[0])
    # du = -grad a + g(a) grad a = -grad a / (1 + a) with P' = 1
    assert np.allclose(t[1], -grad_a / (1 + a), atol=1e-15)
    assert np.abs(t[0]).max() < 1e-17 and np.abs(t[3:]).max() < 1e-17


def test_mass_structure():
    g = Grid(2, 32)
    st = _smooth_state(g, 0.1, seed=7)
    mean_da, mean_dn = mass_tendencies(st, rhs(st))
    assert abs(mean_da) <= 1e-15
    assert abs(mean_dn) <= 1e-12


def test_drag_swap_symmetry():
    # constant velocities: every derivative vanishes and only drag is left
    g = Grid(2, 16)
    u = np.stack([np.full(g.shape, 0.3), np.full(g.shape, -0.2)])
    w = np.stack([np.full(g.shape, -0.1), np.full(g.shape, 0.4)])
    zero = np.zeros(g.shape)
    params = ModelParams(kappa=1.7, n_bar=0.8)
    fwd = linear_tendency(FlowState.from_physical(g, zero, u, zero, w), params)
    rev = linear_tendency(FlowState.from_physical(g, zero, w, zero, u), params)
    assert np.allclose(fwd[1:3], -rev[1:3], atol=1e-15)
    assert np.allclose(fwd[4:6], -rev[4:6], atol=1e-15)
    assert fwd[1][0, 0].real == pytest.approx(-params.fluid_drag * 0.4)  # zero mode is the mean


def test_linear_part_matches_symbol():
    g = Grid(2, 16)
    st = _smooth_state(g, 1e-6, seed=4)
    lin = linear_tendency(st)
    flat, sym = st.hat.reshape(6, -1), lin.reshape(6, -1)
    k = g.k.reshape(2, -1)
    for m in np.flatnonzero(np.abs(flat).sum(axis=0) > 0):
        ref = full_symbol(k[:, m]) @ flat[:, m]
        assert np.allclose(sym[:, m], ref, rtol=1e-13, atol=1e-22)


@pytest.mark.parametrize("d", [2, 3])
def test_relative_velocity_identity(d):
    g = Grid(d, 16 if d == 2 else 8)
    st = _smooth_state(g, 0.2, seed=9)
    assert relative_velocity_residual(st) <= 1e-12
    same = st.hat.copy()
    same[2 + d :] = same[1 : 1 + d]
    assert relative_velocity_residual(FlowState(g, same)) <= 1e-12


def test_vacuum_error_names_point():
    g = Grid(2, 16)
    a = np.zeros(g.shape)
    a[4, 7] = -1.5
    st = FlowState.from_physical(g, a, np.zeros((2,) + g.shape), np.zeros(g.shape), np.zeros((2,) + g.shape))
    with pytest.raises(VacuumError, match=r"\(4, 7\)"):
        rhs(st)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        ModelParams(mu=1.0, lam=-2.5)
    with pytest.raises(DomainError):
        ModelParams(kappa=0.0)
