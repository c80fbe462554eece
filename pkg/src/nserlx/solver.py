"""Integrating-factor Runge-Kutta time stepping for the perturbation system.

The constant-coefficient linear part is exponentiated exactly per
wavevector (4x4 compressible and 2x2 solenoidal blocks, see
:mod:`nserlx.linear`); only the nonlinear remainder is treated explicitly.

IF-RK2 (Heun under the integrating factor ``E = exp(dt L)``)::

    k1 = N(u)
    k2 = N(E (u + dt k1))
    u+ = E (u + dt/2 k1) + dt/2 k2

IF-RK4 is the classical scheme with half-step factors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.linalg

from . import _accel
from .functionals import FunctionalSeries, FunctionalSettings, FunctionalTracker, block_groups
from .grid import Grid
from .linear import compressible_block, energy_E1_D1, energy_E2_D2, solenoidal_block
from .lp import BesovSpec, besov_from_blocks, build_filter_bank
from .model import NORMALIZED, FlowState, ModelParams, VacuumError, check_vacuum, nonlinear_tendency

log = logging.getLogger(__name__)

C_ADV = 0.4
DT_CAP = 0.05
SCHEMES = ("IF-RK2", "IF-RK4")


class SolverError(RuntimeError):
    """Raised when a step produces NaN or loses positivity; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class NormRequest:
    """A named Besov diagnostic, e.g. ``all:low:0.5:1``."""

    group: str
    spec: BesovSpec

    @property
    def name(self) -> str:
        r = "inf" if self.spec.r == math.inf else str(int(self.spec.r))
        return f"{self.group}:{self.spec.band}:{self.spec.s:g}:{r}"

    @classmethod
    def parse(cls, text: str) -> NormRequest:
        try:
            group, band, s, r = text.split(":")
            spec = BesovSpec(float(s), math.inf if r == "inf" else int(r), band)
        except ValueError as exc:
            raise ValueError(f"bad norm request {text!r}; expected group:band:s:r") from exc
        from .functionals import GROUPS

        if group not in GROUPS:
            raise ValueError(f"unknown group {group!r} in norm request; choose from {', '.join(GROUPS)}")
        return cls(group, spec)


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    params: ModelParams = NORMALIZED
    dt: float = 1e-2
    T: float = 1.0
    scheme: Literal["IF-RK2", "IF-RK4"] = "IF-RK2"
    cadence: int = 1
    init: object | None = None  # experiments.InitialDataSpec
    output: str | None = None
    norms: tuple[NormRequest, ...] = ()
    energy_js: tuple[int, ...] = ()
    snapshot_every: int = 0
    sigma0: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt:
            raise ValueError(f"T = {self.T} must be at least dt = {self.dt}")
        if self.cadence < 1:
            raise ValueError(f"cadence must be >= 1, got {self.cadence}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def effective_dt(self) -> float:
        return self.T / self.n_steps


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------


class LinearFactor:
    """Per-mode ``exp(tau L)`` on the grid, computed with a dense matrix exponential."""

    def __init__(self, grid: Grid, params: ModelParams, tau: float):
        self.grid = grid
        k2 = np.round(grid.k2.ravel(), 12)
        uniq, inverse = np.unique(k2, return_inverse=True)
        xi = np.sqrt(uniq)
        comp = scipy.linalg.expm(tau * compressible_block(xi, params))
        sol = scipy.linalg.expm(tau * solenoidal_block(xi, params))
        zero = xi == 0
        # densities at k = 0 are exactly conserved by the linear part
        comp[zero, 0, :] = (1.0, 0.0, 0.0, 0.0)
        comp[zero, 2, :] = (0.0, 0.0, 1.0, 0.0)
        self.comp = np.ascontiguousarray(comp[inverse])
        self.sol = np.ascontiguousarray(sol[inverse])
        self.khat = np.ascontiguousarray(grid.khat.reshape(grid.d, -1))

    def __call__(self, hat: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(hat.reshape(hat.shape[0], -1))
        return _accel.apply_modes(flat, self.comp, self.sol, self.khat).reshape(hat.shape)


class Stepper:
    """Holds the precomputed factors for one ``(grid, params, dt, scheme)``."""

    def __init__(self, grid: Grid, params: ModelParams, dt: float, scheme: str = "IF-RK2"):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.scheme = scheme
        self.E = LinearFactor(grid, params, dt)
        self.Eh = LinearFactor(grid, params, dt / 2) if scheme == "IF-RK4" else None

    def N(self, hat: np.ndarray) -> np.ndarray:
        return nonlinear_tendency(FlowState(self.grid, hat), self.params)

    def __call__(self, hat: np.ndarray) -> np.ndarray:
        dt = self.dt
        E = self.E
        if self.scheme == "IF-RK2":
            k1 = self.N(hat)
            k2 = self.N(E(hat + dt * k1))
            return E(hat + 0.5 * dt * k1) + 0.5 * dt * k2
        Eh = self.Eh
        k1 = self.N(hat)
        eu = Eh(hat)
        k2 = self.N(Eh(hat + 0.5 * dt * k1))
        k3 = self.N(eu + 0.5 * dt * k2)
        k4 = self.N(E(hat) + dt * Eh(k3))
        return E(hat) + dt / 6.0 * (E(k1) + 2.0 * Eh(k2 + k3) + k4)


def _check(hat: np.ndarray, grid: Grid, step_index: int) -> FlowState:
    if not np.all(np.isfinite(hat)):
        raise SolverError("non-finite coefficients", step_index)
    state = FlowState(grid, hat)
    try:
        check_vacuum(state)
    except VacuumError as exc:
        raise SolverError(str(exc), step_index) from exc
    return state


def step(state: FlowState, dt: float, config: SimConfig | None = None, stepper: Stepper | None = None) -> FlowState:
    """Advance one step; builds the propagators unless a ``stepper`` is supplied."""
    if stepper is None:
        params = config.params if config is not None else NORMALIZED
        scheme = config.scheme if config is not None else "IF-RK2"
        stepper = Stepper(state.grid, params, dt, scheme)
    elif not math.isclose(stepper.dt, dt, rel_tol=1e-14):
        raise ValueError("stepper was built for a different dt")
    return _check(stepper(state.hat.copy()), state.grid, 1)


def cfl_suggest(state: FlowState, config: SimConfig | None = None, cap: float = DT_CAP) -> float:
    """``C_adv dx / speed`` capped at ``cap``.

    ``speed`` is the larger of the velocity maxima and the deviation of the
    local sound speed from its equilibrium value; the equilibrium sound part
    is integrated exactly by the linear factor and does not restrict ``dt``.
    """
    params = config.params if config is not None else NORMALIZED
    g = state.grid
    umax = float(np.sqrt(np.sum(state.u**2, axis=0)).max())
    wmax = float(np.sqrt(np.sum(state.w**2, axis=0)).max())
    rho = params.rho_bar * (1.0 + state.a)
    cs = np.sqrt(np.maximum(params.pressure_prime(rho), 0.0))
    cs_excess = float(np.abs(cs - math.sqrt(params.sound_speed_sq)).max())
    speed = max(umax, wmax, cs_excess)
    if speed <= 0.0:
        return cap
    return min(C_ADV * g.dx / speed, cap)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    config: SimConfig
    final: FlowState
    diagnostics: list[dict] = field(default_factory=list)
    functionals: FunctionalSeries = field(default_factory=FunctionalSeries)
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    steps: int = 0

    def series(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.diagnostics])


class Diagnostics:
    """Per-tick diagnostics: Besov norms, functionals, mass, density floor, energies."""

    def __init__(self, config: SimConfig, state0: FlowState):
        self.config = config
        g = state0.grid
        self.bank = build_filter_bank(g)
        self.tracker = FunctionalTracker(FunctionalSettings(g.d, sigma0=config.sigma0), self.bank.js)
        self.mass_n0 = self._particle_mass(state0)

    @staticmethod
    def _particle_mass(state: FlowState) -> float:
        return float(np.exp(state.b).mean() * state.grid.volume)

    def __call__(self, t: float, step_index: int, state: FlowState) -> dict:
        groups = block_groups(state.hat, self.bank)
        js = self.bank.js
        row: dict = {"t": t, "step": step_index}
        row["norms"] = {
            req.name: float(besov_from_blocks(groups[req.group], req.spec, js)) for req in self.config.norms
        }
        row.update(self.tracker.push(t, groups))
        row["mass_a"] = float(state.hat[0][(0,) * state.grid.d].real)
        mass_n = self._particle_mass(state)
        row["mass_n_drift"] = (mass_n - self.mass_n0) / self.mass_n0
        row["min_density"] = state.min_density()
        energies = {}
        for j in self.config.energy_js:
            filt = state.hat * self.bank.sample(j)
            if j <= 0:
                energies[f"E1[{j}]"] = energy_E1_D1(state.grid, filt, j, 0.05)[0]
            if j >= -1:
                energies[f"E2[{j}]"] = energy_E2_D2(state.grid, filt, j, 0.05)[0]
        row["energies"] = energies
        return row


def run(
    config: SimConfig,
    state0: FlowState | None = None,
    on_tick: Callable[[dict], None] | None = None,
    on_snapshot: Callable[[float, np.ndarray], None] | None = None,
    keep_snapshots: bool = False,
) -> RunResult:
    """Integrate to ``config.T`` emitting diagnostics every ``cadence`` steps."""
    if state0 is None:
        if config.init is None:
            raise ValueError("run needs an initial state or an init spec")
        from .experiments import make_perturbation

        state0 = make_perturbation(config.init, config.grid)
    if state0.grid != config.grid:
        raise ValueError("initial state lives on a different grid than the config")
    n = config.n_steps
    dt = config.effective_dt
    if dt != config.dt:
        log.info("dt adjusted from %g to %g to land on T", config.dt, dt)
    stepper = Stepper(config.grid, config.params, dt, config.scheme)
    diag = Diagnostics(config, state0)
    result = RunResult(config=config, final=state0)

    def emit(i: int, st: FlowState):
        t = i * dt
        row = diag(t, i, st)
        result.diagnostics.append(row)
        result.functionals.append(t, {k: row[k] for k in ("X", "X_theta", "Z") if k in row})
        if on_tick is not None:
            on_tick(row)

    def snap(i: int, st: FlowState):
        if on_snapshot is not None:
            on_snapshot(i * dt, st.hat)
        if keep_snapshots:
            result.snapshots.append((i * dt, st.hat.copy()))

    state = _check(state0.hat.copy(), config.grid, 0)
    emit(0, state)
    if config.snapshot_every:
        snap(0, state)
    for i in range(1, n + 1):
        state = _check(stepper(state.hat.copy()), config.grid, i)
        if i % config.cadence == 0 or i == n:
            emit(i, state)
        if config.snapshot_every and (i % config.snapshot_every == 0 or i == n):
            snap(i, state)
    result.final = state
    result.steps = n
    return result


def integrate(state: FlowState, dt: float, T: float, params: ModelParams = NORMALIZED, scheme: str = "IF-RK2") -> FlowState:
    """Bare integration without diagnostics."""
    n = max(1, int(round(T / dt)))
    stepper = Stepper(state.grid, params, T / n, scheme)
    hat = state.hat.copy()
    for i in range(1, n + 1):
        hat = stepper(hat)
        if not np.all(np.isfinite(hat)):
            raise SolverError("non-finite coefficients", i)
    return _check(hat, state.grid, n)


@dataclass(frozen=True)
class ConvergenceReport:
    dts: tuple[float, float, float]
    errors: tuple[float, float]
    ratio: float

    @property
    def order(self) -> float:
        return math.log2(self.ratio)


def self_convergence(
    state: FlowState, dt: float, T: float, params: ModelParams = NORMALIZED, scheme: str = "IF-RK2"
) -> ConvergenceReport:
    """Richardson ratio ``|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|`` at time ``T``."""
    dts = (dt, dt / 2, dt / 4)
    finals = [integrate(state, h, T, params, scheme).hat for h in dts]
    g = state.grid
    e1 = math.sqrt(g.l2_sq(finals[0] - finals[1]))
    e2 = math.sqrt(g.l2_sq(finals[1] - finals[2]))
    return ConvergenceReport(dts=dts, errors=(e1, e2), ratio=e1 / e2 if e2 > 0 else math.inf)


def snapshot_steps(config: SimConfig, count: int) -> Sequence[int]:
    """Log-spaced step indices for decay plots."""
    n = config.n_steps
    raw = np.unique(np.round(np.geomspace(1, n, count)).astype(int))
    return [0] + [int(i) for i in raw]
