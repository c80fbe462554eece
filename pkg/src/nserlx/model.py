"""State, parameters and right-hand sides of the perturbed NS-Euler system.

Unknowns are ``a = rho/rho_bar - 1``, the fluid velocity ``u``,
``b = log(n/n_bar)`` and the particle velocity ``w``. With the normalized
constants (``P'(rho_bar) = kappa = rho_bar = n_bar = mu = 1``, ``lambda = -1``)
the equations read::

    a_t + div u = -div(a u)
    u_t + grad a - lap u + (u - w) = -u.grad u + G
    b_t + div w = -w.grad b
    w_t + grad b + (w - u) = -w.grad w

with ``G = g(a) grad a + f(a) lap u + h(a, b) (u - w)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Grid

log = logging.getLogger(__name__)

VACUUM_FLOOR = 1e-6


class VacuumError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical constants. Defaults are the normalized set."""

    mu: float = 1.0
    lam: float = -1.0
    kappa: float = 1.0
    rho_bar: float = 1.0
    n_bar: float = 1.0
    pressure: str = "isothermal"
    gamma: float = 1.4
    # P'(rho_bar); the pressure law is scaled to hit it
    sound_speed_sq: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if not 2 * self.mu + self.lam > 0:
            raise DomainError(f"need 2*mu + lambda > 0, got {2 * self.mu + self.lam}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not (self.rho_bar > 0 and self.n_bar > 0):
            raise DomainError("equilibrium densities must be positive")
        if self.pressure not in ("isothermal", "gamma"):
            raise DomainError(f"unknown pressure law {self.pressure!r}")
        if self.pressure == "gamma" and not self.gamma >= 1:
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")
        if not self.sound_speed_sq > 0:
            raise DomainError("P'(rho_bar) must be positive")

    @property
    def normalized(self) -> bool:
        return (
            self.mu == 1.0
            and self.lam == -1.0
            and self.kappa == 1.0
            and self.rho_bar == 1.0
            and self.n_bar == 1.0
            and self.sound_speed_sq == 1.0
        )

    @property
    def fluid_drag(self) -> float:
        """Linear drag rate felt by the fluid, ``kappa n_bar / rho_bar``."""
        return self.kappa * self.n_bar / self.rho_bar

    def pressure_prime(self, rho):
        """``P'(rho)``; isothermal ``P = c rho`` or ``P = A rho^gamma`` scaled so ``P'(rho_bar) = c``."""
        rho = np.asarray(rho, dtype=float)
        if self.pressure == "isothermal":
            return np.full_like(rho, self.sound_speed_sq)
        return self.sound_speed_sq * (rho / self.rho_bar) ** (self.gamma - 1.0)


NORMALIZED = ModelParams()


# ---------------------------------------------------------------------------
# nonlinear coefficient functions (normalized constants)
# ---------------------------------------------------------------------------


def g_coef(a, params: ModelParams = NORMALIZED):
    """``g(a) = -P'(1+a)/(1+a) + 1``."""
    a = np.asarray(a, dtype=float)
    return -params.pressure_prime(1.0 + a) / (1.0 + a) + 1.0


def f_coef(a):
    a = np.asarray(a, dtype=float)
    return -a / (a + 1.0)


def h_coef(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    eb = np.exp(b)
    return (eb - 1.0) * a / (a + 1.0) + a / (a + 1.0) - eb + 1.0


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


def n_fields(d: int) -> int:
    return 2 * d + 2


def field_names(d: int) -> list[str]:
    axes = "xyz"[:d]
    return ["a"] + [f"u{c}" for c in axes] + ["b"] + [f"w{c}" for c in axes]


@dataclass(frozen=True, eq=False)
class FlowState:
    """Perturbation fields ``(a, u, b, w)`` on a periodic grid.

    ``hat`` packs the half-grid spectra in the order ``a, u_1..u_d, b,
    w_1..w_d``; physical samples are derived on demand and cached.
    """

    grid: Grid
    hat: np.ndarray

    def __post_init__(self):
        expected = (n_fields(self.grid.d),) + self.grid.spec_shape
        if self.hat.shape != expected:
            raise ValueError(f"spectrum shape {self.hat.shape} != {expected}")
        self.hat.setflags(write=False)

    @classmethod
    def from_physical(cls, grid: Grid, a, u, b, w) -> FlowState:
        d = grid.d
        phys = np.empty((n_fields(d),) + grid.shape)
        phys[0] = a
        phys[1 : 1 + d] = u
        phys[1 + d] = b
        phys[2 + d :] = w
        return cls(grid, grid.to_spectral(phys))

    @classmethod
    def zeros(cls, grid: Grid) -> FlowState:
        return cls(grid, np.zeros((n_fields(grid.d),) + grid.spec_shape, dtype=complex))

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def a_hat(self):
        return self.hat[0]

    @property
    def u_hat(self):
        return self.hat[1 : 1 + self.d]

    @property
    def b_hat(self):
        return self.hat[1 + self.d]

    @property
    def w_hat(self):
        return self.hat[2 + self.d :]

    @cached_property
    def physical(self) -> np.ndarray:
        out = self.grid.to_physical(self.hat)
        out.setflags(write=False)
        return out

    @property
    def a(self):
        return self.physical[0]

    @property
    def u(self):
        return self.physical[1 : 1 + self.d]

    @property
    def b(self):
        return self.physical[1 + self.d]

    @property
    def w(self):
        return self.physical[2 + self.d :]

    def min_density(self) -> float:
        return float(1.0 + self.a.min())

    def with_hat(self, hat: np.ndarray) -> FlowState:
        return FlowState(self.grid, hat)

    def consistency_error(self) -> float:
        """Relative mismatch between the cached samples and a fresh transform."""
        back = self.grid.to_spectral(self.physical)
        scale = max(float(np.abs(self.hat).max()), np.finfo(float).tiny)
        return float(np.abs(back - self.hat).max() / scale)


@dataclass(frozen=True, eq=False)
class Tendencies:
    grid: Grid
    hat: np.ndarray

    @property
    def da(self):
        return self.hat[0]

    @property
    def du(self):
        return self.hat[1 : 1 + self.grid.d]

    @property
    def db(self):
        return self.hat[1 + self.grid.d]

    @property
    def dw(self):
        return self.hat[2 + self.grid.d :]

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.hat)


def reformulate(grid: Grid, rho, u, n, w, params: ModelParams = NORMALIZED) -> FlowState:
    rho = np.asarray(rho, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(rho <= 0) or np.any(n <= 0):
        raise DomainError("densities must be strictly positive")
    a = rho / params.rho_bar - 1.0
    b = np.log(n / params.n_bar)
    return FlowState.from_physical(grid, a, u, b, w)


def dereformulate(state: FlowState, params: ModelParams = NORMALIZED):
    rho = params.rho_bar * (1.0 + state.a)
    n = params.n_bar * np.exp(state.b)
    return rho, np.array(state.u), n, np.array(state.w)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def check_vacuum(state: FlowState, floor: float = VACUUM_FLOOR) -> None:
    dens = 1.0 + state.a
    idx = np.unravel_index(int(np.argmin(dens)), dens.shape)
    worst = float(dens[idx])
    if not worst >= floor:
        raise VacuumError(f"1 + a = {worst:.3e} < {floor:g} at grid point {tuple(int(i) for i in idx)}")


def lame(grid: Grid, uh: np.ndarray, params: ModelParams) -> np.ndarray:
    """``mu lap u + (mu + lambda) grad div u`` in spectral space."""
    out = params.mu * grid.lap(uh)
    if params.mu + params.lam != 0.0:
        out = out + (params.mu + params.lam) * grid.grad(grid.div(uh))
    return out


def linear_tendency(state: FlowState, params: ModelParams = NORMALIZED) -> np.ndarray:
    g = state.grid
    d = g.d
    out = np.empty_like(state.hat)
    uh, wh = state.u_hat, state.w_hat
    out[0] = -g.div(uh)
    out[1 : 1 + d] = (
        -params.sound_speed_sq * g.grad(state.a_hat)
        + lame(g, uh, params) / params.rho_bar
        - params.fluid_drag * (uh - wh)
    )
    out[1 + d] = -g.div(wh)
    out[2 + d :] = -g.grad(state.b_hat) - params.kappa * (wh - uh)
    return out


class _Products:
    """Dealiased physical-space ingredients shared by the nonlinear terms."""

    def __init__(self, state: FlowState, params: ModelParams):
        g = state.grid
        d = g.d
        m = g.dealias
        hat = state.hat * m
        ah, uh, bh, wh = hat[0], hat[1 : 1 + d], hat[1 + d], hat[2 + d :]
        pieces = [hat, g.grad(ah), g.grad(bh)]
        pieces.append(np.stack([g.grad(uh[c]) for c in range(d)]).reshape(d * d, *g.spec_shape))
        pieces.append(np.stack([g.grad(wh[c]) for c in range(d)]).reshape(d * d, *g.spec_shape))
        pieces.append(lame(g, uh, params))
        stacked = np.concatenate(pieces)
        phys = g.to_physical(stacked)
        nf = n_fields(d)
        i = 0
        self.fields = phys[i : i + nf]
        i += nf
        self.grad_a = phys[i : i + d]
        i += d
        self.grad_b = phys[i : i + d]
        i += d
        # grad_u[c, e] = d u_c / d x_e
        self.grad_u = phys[i : i + d * d].reshape(d, d, *g.shape)
        i += d * d
        self.grad_w = phys[i : i + d * d].reshape(d, d, *g.shape)
        i += d * d
        self.lame_u = phys[i : i + d]
        self.a = self.fields[0]
        self.u = self.fields[1 : 1 + d]
        self.b = self.fields[1 + d]
        self.w = self.fields[2 + d :]

    def advect(self, vel, grad):
        return np.einsum("e...,ce...->c...", vel, grad)


def _G_physical(p: _Products, params: ModelParams) -> np.ndarray:
    a, b = p.a, p.b
    rho = 1.0 + a
    c_grad = params.sound_speed_sq - params.pressure_prime(params.rho_bar * rho) / rho
    c_visc = (1.0 / rho - 1.0) / params.rho_bar
    c_drag = params.fluid_drag * (1.0 - np.exp(b) / rho)
    return c_grad * p.grad_a + c_visc * p.lame_u + c_drag * (p.u - p.w)


def nonlinear_G(state: FlowState, params: ModelParams = NORMALIZED) -> np.ndarray:
    """Physical samples of ``G = g(a) grad a + f(a) lap u + h(a,b) (u - w)``.

    Inputs are dealiased before the pointwise products; the returned field
    is the raw product (mask it before adding to a spectrum).
    """
    check_vacuum(state)
    return _G_physical(_Products(state, params), params)


def nonlinear_tendency(state: FlowState, params: ModelParams = NORMALIZED) -> np.ndarray:
    """Dealiased spectrum of everything on the right of the linear operator."""
    g = state.grid
    d = g.d
    p = _Products(state, params)
    phys = np.empty((n_fields(d) + d,) + g.shape)
    # slots: a*u (d comps, divergence taken spectrally), u-eq, b-eq, w-eq
    phys[0:d] = p.a * p.u
    phys[d : 2 * d] = -p.advect(p.u, p.grad_u) + _G_physical(p, params)
    phys[2 * d] = -np.einsum("c...,c...->...", p.w, p.grad_b)
    phys[2 * d + 1 : 3 * d + 1] = -p.advect(p.w, p.grad_w)
    spec = g.to_spectral(phys[: 3 * d + 1]) * g.dealias
    out = np.empty_like(state.hat)
    out[0] = -g.div(spec[0:d])
    out[1 : 1 + d] = spec[d : 2 * d]
    out[1 + d] = spec[2 * d]
    out[2 + d :] = spec[2 * d + 1 : 3 * d + 1]
    return out


def rhs(state: FlowState, params: ModelParams = NORMALIZED, nonlinear: bool = True) -> Tendencies:
    check_vacuum(state)
    out = linear_tendency(state, params)
    if nonlinear:
        out = out + nonlinear_tendency(state, params)
    return Tendencies(state.grid, out)


def relative_velocity_residual(state: FlowState, params: ModelParams = NORMALIZED) -> float:
    """Grid max of the defect in the damped equation for ``u - w``.

    Compares ``du - dw`` from :func:`rhs` against an independent assembly of
    ``-(kappa n_bar/rho_bar + kappa)(u - w) - P' grad a + lame(u)/rho_bar
    + grad b - u.grad u + w.grad w + G``, which with normalized constants is
    ``-2(u - w) - grad a + lap u + grad b - u.grad u + w.grad w + G``.
    """
    if not params.normalized:
        log.warning("relative-velocity identity with non-normalized constants is unverified")
    g = state.grid
    d = g.d
    tend = rhs(state, params)
    lhs = tend.du - tend.dw
    p = _Products(state, params)
    prod = np.concatenate(
        [
            -p.advect(p.u, p.grad_u),
            p.advect(p.w, p.grad_w),
            _G_physical(p, params),
        ]
    )
    prod_hat = g.to_spectral(prod) * g.dealias
    uh, wh = state.u_hat, state.w_hat
    bracket = (
        -(params.fluid_drag + params.kappa) * (uh - wh)
        - params.sound_speed_sq * g.grad(state.a_hat)
        + lame(g, uh, params) / params.rho_bar
        + g.grad(state.b_hat)
        + prod_hat[0:d]
        + prod_hat[d : 2 * d]
        + prod_hat[2 * d : 3 * d]
    )
    defect = g.to_physical(lhs - bracket)
    return float(np.sqrt(np.sum(defect**2, axis=0)).max())


def mass_tendencies(state: FlowState, tend: Tendencies) -> tuple[float, float]:
    """Means of ``da`` and of ``dn/dt = n_bar e^b db`` (up to the factor n_bar)."""
    g = state.grid
    mean_da = float(np.real(tend.da[(0,) * g.d]))
    db = g.to_physical(tend.db)
    mean_dn = float(np.mean(np.exp(state.b) * db))
    return mean_da, mean_dn


def field_scale(state: FlowState) -> float:
    return float(np.abs(state.physical).max()) if state.hat.size else 0.0


__all__ = [
    "DomainError",
    "FlowState",
    "ModelParams",
    "NORMALIZED",
    "Tendencies",
    "VacuumError",
    "check_vacuum",
    "dereformulate",
    "f_coef",
    "field_names",
    "g_coef",
    "h_coef",
    "linear_tendency",
    "mass_tendencies",
    "nonlinear_G",
    "nonlinear_tendency",
    "reformulate",
    "relative_velocity_residual",
    "rhs",
]
