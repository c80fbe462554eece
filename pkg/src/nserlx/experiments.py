"""Initial data with prescribed low-frequency regularity, decay fits and rate tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .functionals import FunctionalSeries, FunctionalSettings, FunctionalTracker, block_groups
from .grid import Grid
from .linear import besov_decay_curve, check_sigma0
from .lp import BesovSpec, besov_from_blocks, build_filter_bank, chi
from .model import NORMALIZED, DomainError, FlowState, ModelParams

COMPONENTS = ("a", "u", "b", "w")
DENSITY_FLOOR = 0.5


@dataclass(frozen=True)
class InitialDataSpec:
    """Random-phase data with ``|f_hat(k)| ~ |k|^{-sigma0 - d/2} chi(|k| / k_cut)``."""

    sigma0: float
    epsilon: float
    d: int = 2
    seed: int = 0
    mix: tuple[str, ...] = COMPONENTS
    k_cut: float = 2.0

    def __post_init__(self):
        check_sigma0(self.sigma0, self.d)
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.mix or any(c not in COMPONENTS for c in self.mix):
            raise ValueError(f"mix must be a nonempty subset of {COMPONENTS}, got {self.mix}")
        if not self.k_cut > 0:
            raise ValueError("k_cut must be positive")


def initial_functional(state: FlowState) -> float:
    """Discrete analogue of the initial-data norm ``X_0`` (the functional ``X`` at t = 0)."""
    bank = build_filter_bank(state.grid)
    tr = FunctionalTracker(FunctionalSettings(state.grid.d), bank.js)
    return tr.push(0.0, block_groups(state.hat, bank))["X"]


def _unit_phases(grid: Grid, rng: np.random.Generator, count: int) -> np.ndarray:
    """Hermitian-consistent unit-modulus spectra of real white noise."""
    noise = rng.standard_normal((count,) + grid.shape)
    spec = grid.to_spectral(noise)
    mag = np.abs(spec)
    return np.where(mag > 0, spec / np.where(mag > 0, mag, 1.0), 0.0)


def make_perturbation(spec: InitialDataSpec, grid: Grid) -> FlowState:
    """Seeded, real, mean-free data scaled so the discrete ``X_0`` equals ``epsilon``."""
    if spec.d != grid.d:
        raise ValueError(f"spec is for d = {spec.d} but the grid has d = {grid.d}")
    if spec.epsilon == 0:
        return FlowState.zeros(grid)
    d = grid.d
    rng = np.random.default_rng(spec.seed)
    r = grid.kmag
    with np.errstate(divide="ignore"):
        env = np.where(r > 0, r ** (-spec.sigma0 - d / 2.0), 0.0) * chi(r / spec.k_cut) * grid.dealias
    phases = _unit_phases(grid, rng, 2 * d + 2)
    hat = np.zeros((2 * d + 2,) + grid.spec_shape, dtype=complex)
    if "a" in spec.mix:
        hat[0] = env * phases[0]
    if "b" in spec.mix:
        hat[1 + d] = env * phases[1 + d]
    if "u" in spec.mix:
        hat[1 : 1 + d] = env * phases[1 : 1 + d] / math.sqrt(d)
    if "w" in spec.mix:
        hat[2 + d :] = env * phases[2 + d :] / math.sqrt(d)
    hat[(slice(None),) + (0,) * d] = 0.0
    state = FlowState(grid, hat)
    x0 = initial_functional(state)
    if x0 == 0:
        raise DomainError("envelope has no support on this grid; increase L or k_cut")
    state = FlowState(grid, hat * (spec.epsilon / x0))
    if state.min_density() < DENSITY_FLOOR:
        raise DomainError(
            f"epsilon = {spec.epsilon} gives min(1 + a) = {state.min_density():.3f} < {DENSITY_FLOOR}; "
            "reduce the amplitude"
        )
    return state


# ---------------------------------------------------------------------------
# power-law fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    intercept: float
    window: tuple[float, float]
    r_squared: float
    residual_max: float
    samples: int


MIN_FIT_SAMPLES = 10


def fit_power_law(times: Sequence[float], norms: Sequence[float], window: tuple[float, float] | None = None) -> DecayFit:
    """Least squares of ``log norm`` against ``log(1 + t)`` inside ``window``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and norms differ in length")
    if window is None:
        window = (float(t.min()), float(t.max()))
    lo, hi = window
    if lo > hi:
        raise ValueError(f"empty window {window}")
    if t.size and (lo < t.min() - 1e-12 * abs(t.min()) or hi > t.max() + 1e-12 * abs(t.max())):
        raise ValueError(f"window {window} extends outside the data range [{t.min()}, {t.max()}]")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < MIN_FIT_SAMPLES:
        raise ValueError(f"only {int(sel.sum())} samples in window; need at least {MIN_FIT_SAMPLES}")
    if np.any(y[sel] <= 0) or not np.all(np.isfinite(y[sel])):
        raise ValueError("norms must be positive and finite for a log-log fit")
    x = np.log1p(t[sel])
    ly = np.log(y[sel])
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        exponent=float(slope),
        intercept=float(intercept),
        window=(float(lo), float(hi)),
        r_squared=min(1.0, max(0.0, r2)),
        residual_max=float(np.abs(resid).max()),
        samples=int(sel.sum()),
    )


# ---------------------------------------------------------------------------
# theoretical rates
# ---------------------------------------------------------------------------

Quantity = Literal["composite", "relative"]


@dataclass(frozen=True)
class RateKey:
    quantity: str
    band: str
    r: float
    d: int
    sigma0: float
    sigma: float
    smallness: bool = False


class RateTable:
    """Theoretical decay exponents (negative numbers) with their validity ranges.

    ``smallness=True`` selects the extended ranges that hold under the
    additional smallness hypothesis on the low-frequency data.
    """

    def __init__(self, eps: float = 0.1):
        self.eps = eps

    def exponent(self, key: RateKey) -> float:
        d, s0, s = key.d, key.sigma0, key.sigma
        check_sigma0(s0, d)
        if key.quantity == "composite":
            if key.band == "low" and key.r == 1:
                upper = d / 2 + 1 if key.smallness else d / 2 - 1
                self._check_open(s, s0, upper)
                return -0.5 * (s - s0)
            if key.band == "high":
                if key.smallness:
                    return -0.5 * (d + 1 - 2 * s0 - 2 * self.eps)
                return -0.5 * (d / 2 - 1 - s0)
        if key.quantity == "relative":
            if key.band == "low" and key.r == math.inf and math.isclose(s, s0):
                if key.smallness:
                    return -0.5
                return -min(0.5, 0.5 * (d / 2 - 1 - s0))
            if key.band == "low" and key.r == 1:
                if key.smallness:
                    upper = d / 2
                else:
                    if d < 3:
                        raise DomainError("the Besov-1 relative-velocity rate without smallness needs d >= 3")
                    upper = d / 2 - 2
                self._check_open(s, s0, upper)
                return -0.5 * (1 + s - s0)
        raise DomainError(f"no tabulated rate for {key}")

    @staticmethod
    def _check_open(s: float, s0: float, upper: float) -> None:
        if not (s0 < s <= upper + 1e-12):
            raise DomainError(f"sigma = {s} outside the admissible interval ({s0}, {upper}]")

    def entries(self, d: int, sigma0: float, sigmas: Sequence[float]) -> dict[RateKey, float]:
        out = {}
        for s in sigmas:
            for q, band, r in (("composite", "low", 1), ("relative", "low", 1)):
                for small in (False, True):
                    key = RateKey(q, band, r, d, sigma0, s, small)
                    try:
                        out[key] = self.exponent(key)
                    except DomainError:
                        pass
        for small in (False, True):
            key = RateKey("relative", "low", math.inf, d, sigma0, sigma0, small)
            out[key] = self.exponent(key)
            key = RateKey("composite", "high", 1, d, sigma0, d / 2 - 1, small)
            out[key] = self.exponent(key)
        return out


# ---------------------------------------------------------------------------
# decay experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayRequest:
    quantity: Quantity
    spec: BesovSpec
    mix: tuple[str, ...] = COMPONENTS


@dataclass(frozen=True)
class DecayRow:
    quantity: str
    sigma: float
    r: float
    theory: float | None
    fitted: float
    delta: float | None
    passed: bool | None
    r_squared: float


@dataclass
class DecayReport:
    kind: str
    d: int
    sigma0: float
    rows: list[DecayRow] = field(default_factory=list)
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)


def _theory_for(req: DecayRequest, d: int, sigma0: float, table: RateTable) -> float | None:
    key = RateKey(req.quantity, req.spec.band, req.spec.r, d, sigma0, req.spec.s)
    try:
        return table.exponent(key)
    except DomainError:
        return None


def decay_experiment(
    kind: Literal["linear-continuum", "nonlinear-torus"],
    d: int,
    sigma0: float,
    requests: Sequence[DecayRequest],
    times: Sequence[float],
    tol: float = 0.05,
    window: tuple[float, float] | None = None,
    params: ModelParams = NORMALIZED,
    grid: Grid | None = None,
    epsilon: float = 1e-3,
    seed: int = 0,
    dt: float = 0.01,
) -> DecayReport:
    """Fit decay exponents and compare with :class:`RateTable`.

    Linear-continuum rows pass or fail at ``tol``; nonlinear-torus rows are
    informational (``passed`` is ``None``) because the torus spectral gap
    turns algebraic decay into exponential decay at late times.
    """
    check_sigma0(sigma0, d)
    table = RateTable()
    report = DecayReport(kind=kind, d=d, sigma0=sigma0)
    times = np.asarray(times, dtype=float)
    series: dict[DecayRequest, np.ndarray] = {}
    if kind == "linear-continuum":
        for req in requests:
            curve = besov_decay_curve(sigma0, d, req.spec, times, quantity=req.quantity, params=params, mix=req.mix)
            series[req] = curve.norms
    elif kind == "nonlinear-torus":
        from .solver import integrate

        if grid is None:
            raise ValueError("nonlinear-torus experiments need a grid")
        state = make_perturbation(InitialDataSpec(sigma0, epsilon, d, seed), grid)
        bank = build_filter_bank(grid)
        hats = []
        t_prev = 0.0
        for t in times:
            if t > t_prev:
                state = integrate(state, dt, t - t_prev, params)
            t_prev = t
            hats.append(state.hat)
        for req in requests:
            group = "all" if req.quantity == "composite" else "rel"
            series[req] = np.array(
                [float(besov_from_blocks(block_groups(h, bank)[group], req.spec, bank.js)) for h in hats]
            )
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    for req in requests:
        y = series[req]
        fit = fit_power_law(times, y, window)
        theory = _theory_for(req, d, sigma0, table)
        delta = None if theory is None else fit.exponent - theory
        passed = None
        if kind == "linear-continuum" and theory is not None:
            passed = abs(delta) <= tol
        report.rows.append(
            DecayRow(req.quantity, req.spec.s, req.spec.r, theory, fit.exponent, delta, passed, fit.r_squared)
        )
        name = f"{req.quantity}:{req.spec.band}:{req.spec.s:g}:{'inf' if req.spec.r == math.inf else 1}"
        report.curves[name] = (times, y)
    return report


def composite_functionals(
    times: Sequence[float],
    hats: Sequence[np.ndarray],
    grid: Grid,
    sigma0: float | None = None,
    theta: float | None = None,
    eps: float = 0.1,
) -> FunctionalSeries:
    """``X``, ``X_theta`` and ``Z`` along a uniformly sampled trajectory."""
    if len(hats) == 0:
        raise ValueError("empty trajectory")
    times = np.asarray(times, dtype=float)
    if times.size > 2 and not np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9, atol=0):
        raise ValueError("trajectory must have a uniform cadence")
    bank = build_filter_bank(grid)
    tracker = FunctionalTracker(FunctionalSettings(grid.d, sigma0=sigma0, theta=theta, eps=eps), bank.js)
    out = FunctionalSeries()
    for t, h in zip(times, hats):
        out.append(float(t), tracker.push(float(t), block_groups(h, bank)))
    return out
