import math

import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import solve_ivp

from nserlx.grid import Grid
from nserlx.linear import (
    ModalPropagator,
    TorusPropagator,
    annulus_nodes,
    besov_decay_curve,
    calibrate_decay_constant,
    check_band,
    compressible_block,
    energy_E1_D1,
    energy_E2_D2,
    energy_E3_D3,
    full_symbol,
    helmholtz_merge,
    helmholtz_split,
    linear_trajectory,
    lyapunov_residual,
    mode_forms,
    parse_xi_grid,
    semigroup_propagate,
    solenoidal_block,
    spectrum_table,
    time_derivative,
    verify_key_inequalities,
)
from nserlx.lp import BesovSpec
from nserlx.model import DomainError, ModelParams
from nserlx.verification import block_field_grid, random_block_state

# -- symbol -------------------------------------------------------------------


def test_blocks_reproduce_full_symbol_spectrum():
    k = np.array([0.7, -1.3, 0.4])
    full = np.sort_complex(np.linalg.eigvals(full_symbol(k)))
    xi = float(np.linalg.norm(k))
    blocks = np.concatenate(
        [np.linalg.eigvals(compressible_block(xi)), np.tile(np.linalg.eigvals(solenoidal_block(xi)), 2)]
    )
    assert np.allclose(full, np.sort_complex(blocks), atol=1e-12)


def test_zero_frequency_spectra():
    assert np.allclose(np.sort(np.linalg.eigvals(compressible_block(0.0)).real), [-2, 0, 0, 0], atol=1e-12)
    assert np.allclose(np.sort(np.linalg.eigvals(solenoidal_block(0.0)).real), [-2, 0], atol=1e-15)


@pytest.mark.parametrize("xi", [0.0, 0.3, 5.0, 1e3])
def test_solenoidal_trace(xi):
    assert np.trace(solenoidal_block(xi)) == pytest.approx(-(xi**2) - 2, rel=1e-15)


def test_solenoidal_large_frequency():
    ev = np.sort(np.linalg.eigvals(solenoidal_block(100.0)).real)
    assert ev[0] == pytest.approx(-1e4, rel=2e-4)
    assert abs(ev[1] + 1) <= 2e-4  # O(xi^-2)


def test_hyperbolic_part_is_skew():
    # the symmetric part carries only dissipation, so it is negative semidefinite
    for xi in (0.01, 1.0, 30.0):
        A = compressible_block(xi)
        assert np.linalg.eigvalsh(A + A.T).max() <= 1e-12


def test_low_frequency_scaling_constants():
    xi = np.geomspace(1e-3, 0.1, 200)
    ec = np.sort(np.linalg.eigvals(compressible_block(xi)).real, axis=-1)[:, ::-1]
    es = np.sort(np.linalg.eigvals(solenoidal_block(xi)).real, axis=-1)[:, ::-1]
    slow = -np.concatenate([ec[:, :3], es[:, :1]], axis=1) / xi[:, None] ** 2
    # measured once and pinned
    assert slow.min() == pytest.approx(0.249375003906, rel=1e-9)
    assert slow.max() == pytest.approx(0.5, rel=1e-9)
    assert (np.abs(ec[:, 3] + 2) / xi).max() <= 0.06
    assert (np.abs(es[:, 1] + 2) / xi).max() <= 0.06


def test_spectrum_table_and_grid_parser():
    xi = parse_xi_grid("log:1e-3:1e3:64")
    assert xi.size == 64 and xi[0] == pytest.approx(1e-3) and xi[-1] == pytest.approx(1e3)
    assert np.allclose(parse_xi_grid("lin:0:2:5"), [0, 0.5, 1, 1.5, 2])
    tab = spectrum_table(xi)
    assert tab.shape == (64, 13)
    assert np.all(np.diff(tab[:, 1:7], axis=1) <= 1e-12)
    with pytest.raises(ValueError):
        parse_xi_grid("log:0:1:10")


def test_negative_frequency_rejected():
    with pytest.raises(DomainError):
        ModalPropagator(np.array([-1.0]))


# -- semigroup ----------------------------------------------------------------


def _profile(rng, n):
    return rng.standard_normal((n, 6)) + 1j * rng.standard_normal((n, 6))


def test_semigroup_identity_at_zero(rng):
    xi = np.geomspace(0.1, 10, 7)
    p = _profile(rng, 7)
    assert np.allclose(semigroup_propagate(p, xi, 0.0), p, atol=1e-15)


def test_solenoidal_relaxation_at_zero_frequency():
    p = np.array([[0, 0, 0, 0, 1.0, 0.0]])
    for t in (0.1, 1.0, 3.0):
        out = semigroup_propagate(p, np.array([0.0]), t)
        pp, qq = out[0, 4].real, out[0, 5].real
        assert pp - qq == pytest.approx(math.exp(-2 * t), rel=1e-12)
        assert pp + qq == pytest.approx(1.0, rel=1e-12)


def _rk4(A, y, t, dt):
    for _ in range(int(round(t / dt))):
        k1 = A @ y
        k2 = A @ (y + 0.5 * dt * k1)
        k3 = A @ (y + 0.5 * dt * k2)
        k4 = A @ (y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.mark.parametrize("xi", [0.05, 1.0, 3.0])
def test_compressible_profile_vs_rk4(xi):
    y0 = np.array([1.0, -0.5, 0.3, 0.8])
    ref = _rk4(compressible_block(xi), y0, 1.0, 1e-4)
    prof = np.zeros((1, 6))
    prof[0, :4] = y0
    out = semigroup_propagate(prof, np.array([xi]), 1.0)[0, :4]
    assert np.abs(out - ref).max() <= 1e-8


def test_semigroup_property(rng):
    xi = np.geomspace(1e-3, 1e2, 50)
    p = _profile(rng, 50)
    one = semigroup_propagate(semigroup_propagate(p, xi, 0.3), xi, 0.9)
    two = semigroup_propagate(p, xi, 1.2)
    assert np.abs(one - two).max() <= 1e-10 * np.abs(two).max()


def test_propagator_matches_dense_expm():
    xi = np.concatenate([[1e-4], np.geomspace(1e-3, 1e3, 97), [1 / math.sqrt(2), 2.0, math.sqrt(3)]])
    prop = ModalPropagator(xi)
    comp, sol = prop.matrices(0.7)
    ref_c = scipy.linalg.expm(0.7 * compressible_block(xi))
    ref_s = scipy.linalg.expm(0.7 * solenoidal_block(xi))
    assert np.abs(comp - ref_c).max() <= 1e-10
    assert np.abs(sol - ref_s).max() <= 1e-10


def test_semigroup_argument_errors(rng):
    with pytest.raises(DomainError):
        semigroup_propagate(_profile(rng, 2), np.array([1.0, 2.0]), -0.1)
    with pytest.raises(DomainError):
        semigroup_propagate(_profile(rng, 2), np.array([2.0, 1.0]), 0.1)


# -- torus --------------------------------------------------------------------


def test_helmholtz_round_trip(rng):
    g = Grid(3, 8)
    hat = g.to_spectral(rng.standard_normal((8,) + g.shape))
    hat[(slice(None), 0, 0, 0)] = 0
    xi, comp, sol = helmholtz_split(g, hat)
    assert np.allclose(helmholtz_merge(g, comp, sol), hat, atol=1e-15)


def test_torus_propagator_vs_full_symbol(rng):
    g = Grid(2, 8)
    hat = g.to_spectral(rng.standard_normal((6,) + g.shape))
    hat[(slice(None), 0, 0)] = 0
    out = TorusPropagator(g).apply(hat, 0.4).reshape(6, -1)
    k = g.k.reshape(2, -1)
    flat = hat.reshape(6, -1)
    for m in range(1, flat.shape[1]):
        ref = scipy.linalg.expm(0.4 * full_symbol(k[:, m])) @ flat[:, m]
        assert np.allclose(out[:, m], ref, atol=1e-14)


# -- energy functionals ---------------------------------------------------------


def test_zero_fields_and_zero_eta():
    g = block_field_grid(0)
    zero = np.zeros((6,) + g.spec_shape, complex)
    for fn in (energy_E1_D1, energy_E2_D2, energy_E3_D3):
        assert fn(g, zero, 0, 0.1) == (0.0, 0.0)
    h = random_block_state(g, 0, np.random.default_rng(0))
    E, D = energy_E1_D1(g, h, 0, 0.0)
    assert E == pytest.approx(0.5 * g.l2_sq(h), rel=1e-14)
    u, w = h[1:3], h[4:6]
    grad_u = sum(g.l2_sq(g.grad(u[c])) for c in range(2))
    assert D == pytest.approx(grad_u + g.l2_sq(u - w), rel=1e-13)
    assert energy_E2_D2(g, h, 0, 0.0)[0] == pytest.approx(0.5 * g.l2_sq(h), rel=1e-14)
    assert energy_E3_D3(g, h, 0, 0.0)[0] == pytest.approx(0.5 * g.l2_sq(h[3:]), rel=1e-14)


@pytest.mark.parametrize("which,fn,j", [("E1", energy_E1_D1, -2), ("E2", energy_E2_D2, 1), ("E3", energy_E3_D3, 0)])
def test_torus_energy_equals_mode_forms(which, fn, j):
    g = block_field_grid(j)
    h = random_block_state(g, j, np.random.default_rng(5))
    E, D = fn(g, h, j, 0.07)
    xi, comp, sol = helmholtz_split(g, h)
    w = g.weights.ravel() * g.volume
    Ef, Df = mode_forms(xi, j, 0.07, which)
    tot_E = tot_D = 0.0
    for c in range(2):  # one solenoidal pair per Cartesian component
        x = np.concatenate([comp, sol[:, c, :]], axis=1) if c == 0 else np.concatenate([0 * comp, sol[:, c, :]], axis=1)
        tot_E += float(np.sum(w * np.real(np.einsum("mi,mij,mj->m", x.conj(), Ef, x))))
        tot_D += float(np.sum(w * np.real(np.einsum("mi,mij,mj->m", x.conj(), Df, x))))
    assert E == pytest.approx(tot_E, rel=1e-12)
    assert D == pytest.approx(tot_D, rel=1e-12)


def _sharp_e3_range(j, eta):
    E, _ = mode_forms(annulus_nodes(j, 4096), j, eta, "E3")
    keep = [2, 3, 5]
    ev = np.linalg.eigvalsh(E[:, keep][:, :, keep])
    return ev.min(), ev.max()


def test_particle_equivalence_sharp_constant():
    eta = 0.05
    # j >= 0: the symmetric bound 1/2 -+ 2 eta holds for every mode
    for j in range(0, 5):
        lo, hi = _sharp_e3_range(j, eta)
        assert 0.5 - 2 * eta <= lo and hi <= 0.5 + 2 * eta
    # j = -1: the best constant is 8/3 eta, reached near |xi| = 4/3 with w parallel to grad b
    lo, hi = _sharp_e3_range(-1, eta)
    assert hi == pytest.approx(0.5 + 8 / 3 * eta, rel=1e-6)
    assert lo == pytest.approx(0.5 - 8 / 3 * eta, rel=1e-6)


def test_particle_equivalence_adversarial_block_minus_one():
    g = block_field_grid(-1)
    i = np.unravel_index(np.argmin(np.abs(g.kmag - 4 / 3)), g.kmag.shape)
    k = g.k[(slice(None),) + i]
    r = float(np.linalg.norm(k))
    h = np.zeros((6,) + g.spec_shape, complex)
    h[3][i] = 1.0
    h[4:6][(slice(None),) + i] = 1j * k / r  # w aligned with grad b
    E, _ = energy_E3_D3(g, h, -1, 0.05)
    ratio = E / g.l2_sq(h[3:])
    assert ratio > 0.5 + 2 * 0.05
    assert ratio <= 0.5 + 8 / 3 * 0.05 + 1e-12


# -- key inequalities ---------------------------------------------------------


def test_key_inequality_examples():
    w = np.array([1.0 + 2j, -0.5, 3j])
    assert verify_key_inequalities(w / 2, w, 0).tri_ratio == pytest.approx(1.0, abs=1e-12)
    assert verify_key_inequalities(w, w, 0).tri_ratio == pytest.approx(2.0, rel=1e-15)
    rep = verify_key_inequalities(np.zeros(3), w, 2)
    assert rep.ok and rep.branch_constant == 0.125


# -- Lyapunov -----------------------------------------------------------------


def test_time_derivative_orders():
    t = np.arange(9) * 0.1
    der, sl = time_derivative(t**4, 0.1)
    assert np.allclose(der, 4 * t[sl] ** 3, atol=1e-12)
    der, sl = time_derivative(t[:4] ** 2, 0.1)
    assert np.allclose(der, 2 * t[sl], atol=1e-12)
    with pytest.raises(ValueError):
        time_derivative(t[:2], 0.1)


def test_equilibrium_trajectory():
    g = block_field_grid(0)
    traj = np.zeros((5, 6) + g.spec_shape, complex)
    rep = lyapunov_residual(g, traj, 1e-3, 0, "E1", 0.05)
    assert rep.dissipation_residual == 0 and rep.gronwall_residual == 0


def test_short_trajectory_rejected():
    g = block_field_grid(0)
    with pytest.raises(ValueError):
        lyapunov_residual(g, np.zeros((2, 6) + g.spec_shape, complex), 1e-3, 0)


def test_single_mode_heat_flow_decays():
    j = -2
    g = block_field_grid(j)
    h = np.zeros((6,) + g.spec_shape, complex)
    i = np.unravel_index(np.argmin(np.abs(g.kmag - 2.0**j)), g.kmag.shape)
    h[2][i] = 1.0  # solenoidal u only (k along the first axis)
    traj = linear_trajectory(g, h, np.arange(7) * 1e-3)
    E = np.array([energy_E1_D1(g, x, j, 0.05)[0] for x in traj])
    dE, _ = time_derivative(E, 1e-3)
    assert np.all(dE < 0)


def test_decay_constants_pinned():
    assert calibrate_decay_constant("E1", 0.05, range(-4, 1)) == pytest.approx(0.0546565862, rel=1e-7)
    assert calibrate_decay_constant("E2", 0.05, range(-1, 5)) == pytest.approx(0.0137653453, rel=1e-7)
    assert calibrate_decay_constant("E3", 0.05, range(-1, 5)) == pytest.approx(0.0535844526, rel=1e-7)


@pytest.mark.parametrize("which,j", [("E1", 1), ("E2", -2), ("E3", -3)])
def test_functionals_outside_their_band(which, j):
    with pytest.raises(ValueError):
        check_band(which, j)


def test_lyapunov_identity_exact():
    for which, j in (("E1", -1), ("E2", 2)):
        r = annulus_nodes(j, 32)
        E, D = mode_forms(r, j, 0.05, which)
        A = np.zeros(r.shape + (6, 6))
        A[:, :4, :4] = compressible_block(r)
        A[:, 4:, 4:] = solenoidal_block(r)
        res = D + np.swapaxes(A, -1, -2) @ E + E @ A
        assert np.abs(res).max() <= 1e-12 * np.abs(D).max()


# -- continuum decay curves ---------------------------------------------------


def test_decay_curve_domain():
    with pytest.raises(DomainError):
        besov_decay_curve(0.5, 2, BesovSpec(1.0, 1, "low"), [1.0, 2.0])
    with pytest.raises(DomainError):
        besov_decay_curve(-1.5, 2, BesovSpec(0.0, 1, "low"), [1.0, 2.0])


def test_initial_blocks_are_flat():
    curve = besov_decay_curve(-1.0, 2, BesovSpec(-1.0, math.inf, "low"), [0.0], quantity="heat", nodes=512)
    js = curve.js
    low = (js <= -3) & (js >= -40)
    weighted = 2.0 ** (-1.0 * js[low]) * curve.block_norms[0, low]
    assert weighted.max() / weighted.min() - 1 <= 1e-6


def test_heat_curve_closed_form():
    # flat envelope (s0 = -d/2): sum_j ||Delta_j e^{t lap} f||^2 ~ int e^{-2 r^2 t} r dr ~ 1/t
    t = np.array([50.0, 200.0, 800.0])
    curve = besov_decay_curve(-1.0, 2, BesovSpec(0.0, math.inf, "low"), t, quantity="heat", nodes=1024)
    total = np.sqrt((curve.block_norms**2).sum(axis=1))
    slope = np.polyfit(np.log(t), np.log(total), 1)[0]
    assert slope == pytest.approx(-0.5, abs=2e-3)


def test_general_parameters_still_dissipative():
    p = ModelParams(mu=0.3, lam=0.5, kappa=2.0, rho_bar=1.5, n_bar=0.7, sound_speed_sq=2.0)
    xi = np.geomspace(1e-3, 1e3, 128)
    assert np.linalg.eigvals(compressible_block(xi, p)).real.max() <= 1e-12
    assert np.linalg.eigvals(solenoidal_block(xi, p)).real.max() <= 1e-12


def test_ode_oracle_full_state():
    # exp(tA) applied to a single torus mode agrees with a tight-tolerance ODE solve
    k = np.array([0.6, -0.8])
    A = full_symbol(k)
    y0 = np.array([1, 0.2j, -0.4, 0.3, 0.1, -0.6j])
    sol = solve_ivp(lambda _t, y: A @ y, (0, 2.0), y0, rtol=1e-12, atol=1e-14, method="DOP853")
    assert np.allclose(scipy.linalg.expm(2.0 * A) @ y0, sol.y[:, -1], atol=1e-10)
