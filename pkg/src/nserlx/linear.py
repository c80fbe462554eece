"""Fourier symbol of the linearized system and everything built on it.

After a Helmholtz split the linear operator at frequency ``xi = |k|``
decouples into

* a 4x4 compressible block on ``(a, v, b, z)`` with ``v = i khat.u`` and
  ``z = i khat.w`` (so ``v`` is the Fourier image of ``Lambda^{-1} div u``)::

      a' = -xi v
      v' = c2 xi a - nu_c xi^2 v - beta (v - z)
      b' = -xi z
      z' =  xi b - kappa (z - v)

* a 2x2 solenoidal block on the transverse amplitudes ``(p, q)``::

      p' = -nu_s xi^2 p - beta (p - q)
      q' = -kappa (q - p)

where ``c2 = P'(rho_bar)``, ``nu_c = (2 mu + lambda)/rho_bar``,
``nu_s = mu/rho_bar`` and ``beta = kappa n_bar / rho_bar``. A "profile" is a
stack of per-frequency vectors ``(a, v, b, z, p_1, q_1, ..., p_m, q_m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from . import _accel
from .grid import Grid
from .lp import BesovSpec, besov_from_blocks, phi
from .model import NORMALIZED, DomainError, ModelParams

COND_LIMIT = 1e8


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------


def compressible_block(xi, params: ModelParams = NORMALIZED) -> np.ndarray:
    """Stack of 4x4 compressible blocks, shape ``(*xi.shape, 4, 4)``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise DomainError("frequency must be nonnegative")
    beta = params.fluid_drag
    kap = params.kappa
    nu_c = (2 * params.mu + params.lam) / params.rho_bar
    out = np.zeros(xi.shape + (4, 4))
    out[..., 0, 1] = -xi
    out[..., 1, 0] = params.sound_speed_sq * xi
    out[..., 1, 1] = -nu_c * xi**2 - beta
    out[..., 1, 3] = beta
    out[..., 2, 3] = -xi
    out[..., 3, 1] = kap
    out[..., 3, 2] = xi
    out[..., 3, 3] = -kap
    return out


def solenoidal_block(xi, params: ModelParams = NORMALIZED) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise DomainError("frequency must be nonnegative")
    beta = params.fluid_drag
    kap = params.kappa
    nu_s = params.mu / params.rho_bar
    out = np.zeros(xi.shape + (2, 2))
    out[..., 0, 0] = -nu_s * xi**2 - beta
    out[..., 0, 1] = beta
    out[..., 1, 0] = kap
    out[..., 1, 1] = -kap
    return out


@dataclass(frozen=True)
class SymbolBlocks:
    xi: float
    compressible: np.ndarray
    solenoidal: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        """All six eigenvalues, sorted by decreasing real part."""
        ev = np.concatenate([np.linalg.eigvals(self.compressible), np.linalg.eigvals(self.solenoidal)])
        return ev[np.argsort(-ev.real, kind="stable")]


def symbol_blocks(xi: float, params: ModelParams = NORMALIZED) -> SymbolBlocks:
    if xi < 0:
        raise DomainError(f"frequency must be nonnegative, got {xi}")
    return SymbolBlocks(float(xi), compressible_block(xi, params), solenoidal_block(xi, params))


def full_symbol(k: Sequence[float], params: ModelParams = NORMALIZED) -> np.ndarray:
    """Unreduced ``(2d+2)``-square symbol acting on ``(a, u, b, w)`` hats.

    Only used to cross-check the Helmholtz-reduced blocks.
    """
    k = np.asarray(k, dtype=float)
    d = k.size
    n = 2 * d + 2
    ia, iu, ib, iw = 0, slice(1, 1 + d), 1 + d, slice(2 + d, n)
    beta = params.fluid_drag
    m = np.zeros((n, n), dtype=complex)
    m[ia, iu] = -1j * k
    m[iu, ia] = -1j * k * params.sound_speed_sq
    m[iu, iu] = (
        -(params.mu * (k @ k) * np.eye(d) + (params.mu + params.lam) * np.outer(k, k)) / params.rho_bar
        - beta * np.eye(d)
    )
    m[iu, iw] = beta * np.eye(d)
    m[ib, iw] = -1j * k
    m[iw, ib] = -1j * k
    m[iw, iw] = -params.kappa * np.eye(d)
    m[iw, iu] = params.kappa * np.eye(d)
    return m


def spectrum_table(xi: np.ndarray, params: ModelParams = NORMALIZED) -> np.ndarray:
    """Rows ``(xi, re_1..re_6, im_1..im_6)``; eigenvalues sorted by decreasing real part."""
    xi = np.asarray(xi, dtype=float)
    ev = np.concatenate(
        [np.linalg.eigvals(compressible_block(xi, params)), np.linalg.eigvals(solenoidal_block(xi, params))],
        axis=-1,
    )
    order = np.argsort(-ev.real, axis=-1, kind="stable")
    ev = np.take_along_axis(ev, order, axis=-1)
    return np.column_stack([xi, ev.real, ev.imag])


def parse_xi_grid(text: str) -> np.ndarray:
    """``log:lo:hi:n`` or ``lin:lo:hi:n``."""
    try:
        kind, lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ValueError(f"bad frequency grid {text!r}; expected log:lo:hi:n or lin:lo:hi:n") from exc
    if n < 1 or lo < 0 or hi < lo:
        raise ValueError(f"bad frequency grid {text!r}")
    if kind == "log":
        if lo <= 0:
            raise ValueError("log grid needs a positive lower end")
        return np.geomspace(lo, hi, n)
    if kind == "lin":
        return np.linspace(lo, hi, n)
    raise ValueError(f"unknown grid kind {kind!r}")


# ---------------------------------------------------------------------------
# matrix exponentials
# ---------------------------------------------------------------------------


def expm_series(mats: np.ndarray, order: int = 18) -> np.ndarray:
    """Scaling-and-squaring Taylor exponential of a stack of small matrices."""
    mats = np.asarray(mats, dtype=float)
    if mats.shape[0] == 0:
        return mats.copy()
    norm = np.abs(mats).sum(axis=-2).max(axis=-1).max()
    s = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0 else 0
    b = mats / 2.0**s
    n = mats.shape[-1]
    out = np.broadcast_to(np.eye(n), mats.shape).copy()
    term = out.copy()
    for i in range(1, order + 1):
        term = term @ b / i
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


class _EigenPropagator:
    """``exp(t M)`` for a stack of real matrices, reusing one eigendecomposition."""

    def __init__(self, mats: np.ndarray):
        self.mats = mats
        lam, vec = np.linalg.eig(mats)
        cond = np.linalg.cond(vec)
        self.bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
        good = ~self.bad
        self.lam = lam[good]
        self.vec = vec[good]
        self.vinv = np.linalg.inv(vec[good])
        self.good = good

    def at(self, t: float) -> np.ndarray:
        out = np.empty_like(self.mats)
        scaled = self.vec * np.exp(t * self.lam)[..., None, :]
        out[self.good] = np.real(scaled @ self.vinv)
        if self.bad.any():
            out[self.bad] = expm_series(t * self.mats[self.bad])
        return out


class ModalPropagator:
    """Exact linear semigroup on per-frequency profiles."""

    def __init__(self, xi: np.ndarray, params: ModelParams = NORMALIZED):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0):
            raise DomainError("frequency must be nonnegative")
        self.xi = xi
        self.params = params
        self._comp = _EigenPropagator(compressible_block(xi, params))
        self._sol = _EigenPropagator(solenoidal_block(xi, params))

    @property
    def fallback_count(self) -> int:
        return int(self._comp.bad.sum() + self._sol.bad.sum())

    def matrices(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        return self._comp.at(t), self._sol.at(t)

    def apply(self, profile: np.ndarray, t: float) -> np.ndarray:
        comp, sol = self.matrices(t)
        profile = np.asarray(profile)
        out = np.empty(profile.shape, dtype=np.result_type(profile, float))
        out[:, :4] = np.einsum("nij,nj->ni", comp, profile[:, :4])
        pairs = profile[:, 4:].reshape(profile.shape[0], -1, 2)
        out[:, 4:] = np.einsum("nij,nmj->nmi", sol, pairs).reshape(profile.shape[0], -1)
        return out


def semigroup_propagate(
    profile: np.ndarray, xi: np.ndarray, t: float, params: ModelParams = NORMALIZED
) -> np.ndarray:
    """Apply ``exp(t * symbol(xi))`` to every row of ``profile``."""
    xi = np.asarray(xi, dtype=float)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if xi.ndim != 1 or xi.size == 0:
        raise DomainError("frequency grid must be a nonempty 1-d array")
    if xi.size > 1 and not (xi[0] > 0 and np.all(np.diff(xi) > 0)):
        raise DomainError("radial grid must be strictly positive and increasing")
    return ModalPropagator(xi, params).apply(profile, t)


# -- torus helpers -----------------------------------------------------------


def helmholtz_split(grid: Grid, hat: np.ndarray):
    """Flatten a packed torus spectrum into ``(xi, comp, sol)``.

    ``comp`` is ``(M, 4)`` on ``(a, v, b, z)``; ``sol`` is ``(M, d, 2)`` holding
    the Cartesian components of the solenoidal parts of ``u`` and ``w``.
    """
    d = grid.d
    m = int(np.prod(grid.spec_shape))
    flat = hat.reshape(2 * d + 2, m)
    kh = grid.khat.reshape(d, m)
    a, u, b, w = flat[0], flat[1 : 1 + d], flat[1 + d], flat[2 + d :]
    v = 1j * np.sum(kh * u, axis=0)
    z = 1j * np.sum(kh * w, axis=0)
    us = u + 1j * kh * v
    ws = w + 1j * kh * z
    comp = np.stack([a, v, b, z], axis=1)
    sol = np.stack([us.T, ws.T], axis=-1)
    return grid.kmag.ravel(), comp, sol


def helmholtz_merge(grid: Grid, comp: np.ndarray, sol: np.ndarray) -> np.ndarray:
    d = grid.d
    kh = grid.khat.reshape(d, -1)
    out = np.empty((2 * d + 2, comp.shape[0]), dtype=complex)
    out[0] = comp[:, 0]
    out[1 : 1 + d] = -1j * kh * comp[:, 1] + sol[:, :, 0].T
    out[1 + d] = comp[:, 2]
    out[2 + d :] = -1j * kh * comp[:, 3] + sol[:, :, 1].T
    return out.reshape((2 * d + 2,) + grid.spec_shape)


class TorusPropagator:
    """Linear semigroup on a torus state, one exponential per distinct ``|k|``."""

    def __init__(self, grid: Grid, params: ModelParams = NORMALIZED):
        self.grid = grid
        k2 = np.round(grid.k2.ravel(), 12)
        uniq, self.inverse = np.unique(k2, return_inverse=True)
        self.modal = ModalPropagator(np.sqrt(uniq), params)
        self.khat = np.ascontiguousarray(grid.khat.reshape(grid.d, -1))

    def matrices(self, t: float):
        comp, sol = self.modal.matrices(t)
        return comp[self.inverse], sol[self.inverse]

    def apply(self, hat: np.ndarray, t: float) -> np.ndarray:
        comp, sol = self.matrices(t)
        flat = hat.reshape(hat.shape[0], -1)
        out = _accel.apply_modes(flat, comp, sol, self.khat)
        return out.reshape(hat.shape)


def linear_trajectory(
    grid: Grid, hat0: np.ndarray, times: Sequence[float], params: ModelParams = NORMALIZED
) -> np.ndarray:
    prop = TorusPropagator(grid, params)
    return np.stack([prop.apply(hat0, float(t)) for t in times])


# ---------------------------------------------------------------------------
# block energy functionals (torus, Parseval)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyParams:
    eta1: float = 0.05
    eta2: float = 0.05
    eta3: float = 0.05

    def __post_init__(self):
        for name in ("eta1", "eta2", "eta3"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


class _BlockPieces:
    def __init__(self, grid: Grid, hat: np.ndarray):
        g = grid
        d = g.d
        self.g = g
        self.a, self.u, self.b, self.w = hat[0], hat[1 : 1 + d], hat[1 + d], hat[2 + d :]
        self.grad_a = g.grad(self.a)
        self.grad_b = g.grad(self.b)
        self.div_u = g.div(self.u)
        self.div_w = g.div(self.w)

    def sq(self, x):
        return self.g.l2_sq(x)

    def ip(self, x, y):
        return self.g.inner(x, y)

    def grad_sq_vec(self, v):
        return float(self.g.volume * np.sum(self.g.weights * self.g.k2 * np.abs(v) ** 2))


def energy_E1_D1(grid: Grid, hat: np.ndarray, j: int, eta1: float) -> tuple[float, float]:
    """Low-frequency functional and its dissipation for a block-filtered state."""
    p = _BlockPieces(grid, hat)
    rel = p.u - p.w
    E = 0.5 * p.sq(hat) + eta1 * p.ip(p.u, p.grad_a) + eta1 * p.ip(p.w, p.grad_b)
    D = (
        p.grad_sq_vec(p.u)
        + p.sq(rel)
        + eta1 * (p.sq(p.grad_a) - p.sq(p.div_u) + p.ip(rel - grid.lap(p.u), p.grad_a))
        + eta1 * (p.sq(p.grad_b) - p.sq(p.div_w) + p.ip(-rel, p.grad_b))
    )
    return E, D


def energy_E2_D2(grid: Grid, hat: np.ndarray, j: int, eta2: float) -> tuple[float, float]:
    p = _BlockPieces(grid, hat)
    rel = p.u - p.w
    wj = 2.0 ** (-2 * j)
    E = (
        0.5 * p.sq(hat)
        + eta2 * (0.5 * p.sq(p.grad_a) + p.ip(p.u, p.grad_a))
        + eta2 * wj * p.ip(p.w, p.grad_b)
    )
    D = (
        p.grad_sq_vec(p.u)
        + p.sq(rel)
        + eta2 * (p.sq(p.grad_a) - p.sq(p.div_u) + p.ip(rel, p.grad_a))
        + eta2 * wj * (p.sq(p.grad_b) - p.sq(p.div_w) + p.ip(-rel, p.grad_b))
    )
    return E, D


def energy_E3_D3(grid: Grid, hat: np.ndarray, j: int, eta3: float) -> tuple[float, float]:
    """Particle-phase functional; the cross term pairs ``w - u`` with ``grad b``."""
    p = _BlockPieces(grid, hat)
    wj = 2.0 ** (-2 * j)
    E = 0.5 * (p.sq(p.b) + p.sq(p.w)) + eta3 * wj * p.ip(p.w, p.grad_b)
    D = p.sq(p.w) + eta3 * wj * (p.sq(p.grad_b) - p.sq(p.div_w) + p.ip(p.w - p.u, p.grad_b))
    return E, D


ENERGIES = {"E1": energy_E1_D1, "E2": energy_E2_D2, "E3": energy_E3_D3}


# ---------------------------------------------------------------------------
# per-mode quadratic forms (independent oracle for the functionals)
# ---------------------------------------------------------------------------

# coordinates (a, v, b, z, p, q)
_A, _V, _B, _Z, _P, _Q = range(6)


def _sym(h, i, j, val):
    h[..., i, j] += val / 2.0
    h[..., j, i] += val / 2.0


def mode_forms(xi, j: int, eta: float, which: Literal["E1", "E2", "E3"] = "E1"):
    """Real symmetric ``(E, D)`` with ``E = Re x^* E x`` for one Fourier mode.

    Normalized constants only (the functionals are built for them).
    """
    r = np.asarray(xi, dtype=float)
    E = np.zeros(r.shape + (6, 6))
    D = np.zeros(r.shape + (6, 6))
    wj = 2.0 ** (-2 * j)
    # (u | grad a) = -r Re(v conj a); (w | grad b) = -r Re(z conj b)
    if which in ("E1", "E2"):
        for i in range(6):
            E[..., i, i] = 0.5
        cross_b = eta if which == "E1" else eta * wj
        _sym(E, _A, _V, -eta * r)
        _sym(E, _B, _Z, -cross_b * r)
        if which == "E2":
            E[..., _A, _A] += 0.5 * eta * r**2
        # ||grad u||^2 + ||u - w||^2
        D[..., _V, _V] += r**2
        D[..., _P, _P] += r**2
        for x, y in ((_V, _Z), (_P, _Q)):
            D[..., x, x] += 1
            D[..., y, y] += 1
            _sym(D, x, y, -2.0)
        # eta (||grad a||^2 - ||div u||^2 + (u - w [- lap u] | grad a))
        D[..., _A, _A] += eta * r**2
        D[..., _V, _V] -= eta * r**2
        _sym(D, _A, _V, -eta * r)
        _sym(D, _A, _Z, eta * r)
        if which == "E1":
            _sym(D, _A, _V, -eta * r**3)
        # cross_b (||grad b||^2 - ||div w||^2 + (w - u | grad b))
        D[..., _B, _B] += cross_b * r**2
        D[..., _Z, _Z] -= cross_b * r**2
        _sym(D, _B, _Z, -cross_b * r)
        _sym(D, _B, _V, cross_b * r)
    elif which == "E3":
        for i in (_B, _Z, _Q):
            E[..., i, i] = 0.5
        _sym(E, _B, _Z, -eta * wj * r)
        D[..., _Z, _Z] += 1
        D[..., _Q, _Q] += 1
        D[..., _B, _B] += eta * wj * r**2
        D[..., _Z, _Z] -= eta * wj * r**2
        _sym(D, _B, _Z, -eta * wj * r)
        _sym(D, _B, _V, eta * wj * r)
    else:
        raise ValueError(f"unknown functional {which!r}")
    return E, D


def full_block(xi, params: ModelParams = NORMALIZED) -> np.ndarray:
    """6x6 block-diagonal symbol on ``(a, v, b, z, p, q)``."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape + (6, 6))
    out[..., :4, :4] = compressible_block(xi, params)
    out[..., 4:, 4:] = solenoidal_block(xi, params)
    return out


BANDS = {"E1": (None, 0), "E2": (-1, None), "E3": (-1, None)}


def check_band(which: str, j: int) -> None:
    """Each functional is only coercive on its own range of blocks."""
    lo, hi = BANDS[which]
    if (lo is not None and j < lo) or (hi is not None and j > hi):
        raise ValueError(f"{which} is defined for blocks in [{lo}, {hi}], got j = {j}")


def annulus_nodes(j: int, n: int = 256) -> np.ndarray:
    lo, hi = 0.75 * 2.0**j, 8.0 / 3.0 * 2.0**j
    return np.geomspace(lo, hi, n)


def calibrate_decay_constant(
    which: str, eta: float, js: Sequence[int], n: int = 256, radii: np.ndarray | None = None
) -> float:
    """Largest ``c`` with ``D >= c * w_j * E`` on every sampled annulus.

    ``w_j = 2^{2j}`` for E1 and 1 for E2/E3. For E3 the fluid velocity is
    treated as forcing, so the bound is taken on the ``(b, z, q)`` subspace
    with the ``u``-coupling removed from D. ``radii`` replaces the sampled
    annulus by explicit frequencies (e.g. the lattice points of a grid block).
    """
    best = math.inf
    for j in js:
        check_band(which, j)
        r = annulus_nodes(j, n) if radii is None else np.asarray(radii, dtype=float)
        E, D = mode_forms(r, j, eta, which)
        if which == "E3":
            keep = [_B, _Z, _Q]
            D = D.copy()
            D[..., _B, _V] = D[..., _V, _B] = 0.0
            E = E[..., keep][..., keep, :]
            D = D[..., keep][..., keep, :]
        weight = 4.0**j if which == "E1" else 1.0
        for e, dd in zip(E, D):
            lo = scipy.linalg.eigh(dd, e, eigvals_only=True)[0]
            best = min(best, lo / weight)
    return float(best)


# ---------------------------------------------------------------------------
# key algebraic inequalities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyInequalityReport:
    j: int
    tri_ratio: float
    branch_ratio: float
    branch_constant: float
    tol: float = 1e-12
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _sqnorm(x, grid: Grid | None) -> float:
    if grid is not None:
        return grid.l2_sq(x)
    return float(np.sum(np.abs(x) ** 2))


def verify_key_inequalities(u_j, w_j, j: int, grid: Grid | None = None, tol: float = 1e-12) -> KeyInequalityReport:
    """Check ``||u||^2 + ||u-w||^2 >= ||w||^2/2`` and the two velocity branches.

    Ratios are LHS/RHS (``inf`` when the RHS vanishes); a ratio below
    ``1 - tol`` is a violation. The branch is ``c = 1/2`` times ``2^{2j}||w||^2``
    for ``j <= 0`` and ``c = 1/8`` times ``||w||^2`` for ``j >= 1``; ``j = -1``
    and ``0`` satisfy both and are checked against the stricter one.
    """
    u_j = np.asarray(u_j)
    w_j = np.asarray(w_j)
    uu = _sqnorm(u_j, grid)
    ww = _sqnorm(w_j, grid)
    rr = _sqnorm(u_j - w_j, grid)
    violations = []

    def ratio(lhs, rhs):
        if rhs <= 0:
            return math.inf
        return lhs / rhs

    tri = ratio(uu + rr, 0.5 * ww)
    if tri < 1 - tol:
        violations.append(f"tri: ratio {tri:.16g}")
    lhs = rr + 4.0**j * uu
    checks = []
    if j <= 0:
        checks.append((0.5, ratio(lhs, 0.5 * 4.0**j * ww)))
    if j >= -1:
        checks.append((0.125, ratio(lhs, 0.125 * ww)))
    for c, rat in checks:
        if rat < 1 - tol:
            violations.append(f"branch c={c}: ratio {rat:.16g}")
    c, rat = min(checks, key=lambda cr: cr[1])
    return KeyInequalityReport(j=j, tri_ratio=tri, branch_ratio=rat, branch_constant=c, tol=tol, violations=violations)


# ---------------------------------------------------------------------------
# Lyapunov checks along linear trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovReport:
    which: str
    j: int
    scale: float
    dissipation_residual: float
    gronwall_residual: float
    decay_constant: float

    def ok(self, rel_tol: float) -> bool:
        lim = rel_tol * self.scale
        return self.dissipation_residual <= lim and self.gronwall_residual <= lim


def time_derivative(values: np.ndarray, dt: float) -> tuple[np.ndarray, slice]:
    """Central differences: 4th order with >= 5 samples, else 2nd order."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 3:
        raise ValueError("need at least 3 samples for a time derivative")
    if n >= 5:
        der = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * dt)
        return der, slice(2, n - 2)
    der = (v[2:] - v[:-2]) / (2 * dt)
    return der, slice(1, n - 1)


def lyapunov_residual(
    grid: Grid,
    trajectory: np.ndarray,
    dt: float,
    j: int,
    which: Literal["E1", "E2", "E3"] = "E1",
    eta: float = 0.05,
    decay_constant: float | None = None,
) -> LyapunovReport:
    """Max over time of ``dE/dt + D`` and of the Gronwall form.

    ``trajectory`` holds block-filtered packed spectra at uniform spacing
    ``dt``. For E1 the Gronwall form is ``dE/dt + c 2^{2j} E``; for E2 it is
    ``dE/dt + c E``; for E3 the fluid velocity acts as a source, so both
    checks subtract ``||u_j|| (||w_j|| + eta 2^{-2j} ||grad b_j||)``.
    """
    trajectory = np.asarray(trajectory)
    if trajectory.shape[0] < 3:
        raise ValueError("trajectory must have at least 3 samples")
    fn = ENERGIES[which]
    ED = np.array([fn(grid, h, j, eta) for h in trajectory])
    E, D = ED[:, 0], ED[:, 1]
    dE, sl = time_derivative(E, dt)
    if decay_constant is None:
        lo, hi = 0.75 * 2.0**j, 8.0 / 3.0 * 2.0**j
        r = np.unique(np.round(grid.kmag[(grid.kmag > lo) & (grid.kmag < hi)], 12))
        decay_constant = calibrate_decay_constant(which, eta, [j], radii=r if r.size else None)
    c = decay_constant
    weight = 4.0**j if which == "E1" else 1.0
    source = np.zeros_like(E)
    if which == "E3":
        d = grid.d
        for i, h in enumerate(trajectory):
            u, w, b = h[1 : 1 + d], h[2 + d :], h[1 + d]
            source[i] = math.sqrt(grid.l2_sq(u)) * (
                math.sqrt(grid.l2_sq(w)) + eta * 4.0 ** (-j) * math.sqrt(grid.l2_sq(grid.grad(b)))
            )
    diss = dE + D[sl] - source[sl]
    gron = dE + c * weight * E[sl] - source[sl]
    scale = float(np.abs(E).max())
    return LyapunovReport(
        which=which,
        j=j,
        scale=scale,
        dissipation_residual=float(diss.max()),
        gronwall_residual=float(gron.max()),
        decay_constant=float(c),
    )


# ---------------------------------------------------------------------------
# semi-analytic Besov decay curves on continuum frequencies
# ---------------------------------------------------------------------------

Quantity = Literal["composite", "relative", "a", "u", "b", "w", "heat"]

_PROJECTIONS = {
    "composite": (np.eye(4), np.eye(2)),
    "relative": (np.array([[0.0, 1.0, 0.0, -1.0]]), np.array([[1.0, -1.0]])),
    "a": (np.array([[1.0, 0, 0, 0]]), np.zeros((0, 2))),
    "u": (np.array([[0, 1.0, 0, 0]]), np.array([[1.0, 0.0]])),
    "b": (np.array([[0, 0, 1.0, 0]]), np.zeros((0, 2))),
    "w": (np.array([[0, 0, 0, 1.0]]), np.array([[0.0, 1.0]])),
}


def component_covariance(d: int, mix: Sequence[str] = ("a", "u", "b", "w")) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal variances of isotropic random-phase data, unit energy per field.

    A random isotropic vector field puts ``1/d`` of its energy in the
    potential part and ``(d-1)/d`` in the solenoidal part.
    """
    comp = np.zeros(4)
    sol = np.zeros(2)
    for name in mix:
        if name == "a":
            comp[0] = 1.0
        elif name == "b":
            comp[2] = 1.0
        elif name == "u":
            comp[1] = 1.0 / d
            sol[0] = (d - 1) / d
        elif name == "w":
            comp[3] = 1.0 / d
            sol[1] = (d - 1) / d
        else:
            raise ValueError(f"unknown component {name!r}")
    return comp, sol


def sigma0_range(d: int) -> tuple[float, float]:
    """Admissible low-frequency regularity ``[-d/2, d/2 - 1)``."""
    return -d / 2.0, d / 2.0 - 1.0


def check_sigma0(sigma0: float, d: int) -> None:
    lo, hi = sigma0_range(d)
    if not (lo <= sigma0 < hi):
        raise DomainError(f"sigma0 = {sigma0} outside [-d/2, d/2 - 1) = [{lo}, {hi}) for d = {d}")


def sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass
class DecayCurve:
    times: np.ndarray
    norms: np.ndarray
    block_norms: np.ndarray
    js: np.ndarray


def besov_decay_curve(
    sigma0: float,
    d: int,
    spec: BesovSpec,
    times: Sequence[float],
    quantity: Quantity = "composite",
    params: ModelParams = NORMALIZED,
    mix: Sequence[str] = ("a", "u", "b", "w"),
    nodes: int = 2048,
    j_min: int = -60,
    j_max: int | None = None,
    check_range: bool = True,
) -> DecayCurve:
    """Besov norms of the linearly propagated envelope data at each time.

    Initial data has expected spectral power ``|xi|^{-2 sigma0 - d}`` per
    field (random phases, isotropic). Per block the squared L^2 norm is the
    radial integral of ``phi(2^{-j} r)^2 * power(r, t) * |S^{d-1}| r^{d-1}``,
    evaluated with the trapezoid rule on ``nodes`` log-spaced points.
    ``quantity="heat"`` replaces the system by the scalar heat symbol.
    """
    if check_range:
        check_sigma0(sigma0, d)
    if j_max is None:
        j_max = 0 if spec.band == "low" else 6
    js = np.arange(j_min, j_max + 1)
    x_lo = np.log(0.75)
    x_hi = np.log(8.0 / 3.0)
    x = np.linspace(x_lo, x_hi, nodes)
    wq = np.full(nodes, x[1] - x[0])
    wq[0] *= 0.5
    wq[-1] *= 0.5
    base = np.exp(x)
    r = (2.0 ** js[:, None] * base[None, :]).ravel()
    measure = (np.broadcast_to(wq * phi(base) ** 2, (js.size, nodes)).ravel()) * r**d * sphere_area(d)
    envelope = r ** (-2.0 * sigma0 - d)
    times = np.asarray(times, dtype=float)
    blocks = np.empty((times.size, js.size))
    if quantity == "heat":
        for i, t in enumerate(times):
            power = envelope * np.exp(-2.0 * r**2 * t)
            blocks[i] = np.sqrt((measure * power).reshape(js.size, nodes).sum(axis=1))
    else:
        proj_c, proj_s = _PROJECTIONS[quantity]
        var_c, var_s = component_covariance(d, mix)
        comp = _EigenPropagator(compressible_block(r, params))
        sol = _EigenPropagator(solenoidal_block(r, params))
        for i, t in enumerate(times):
            ec = comp.at(t)
            es = sol.at(t)
            yc = np.einsum("qi,nij->nqj", proj_c, ec) * np.sqrt(var_c)
            ys = np.einsum("qi,nij->nqj", proj_s, es) * np.sqrt(var_s)
            power = envelope * ((yc**2).sum(axis=(1, 2)) + (ys**2).sum(axis=(1, 2)))
            blocks[i] = np.sqrt((measure * power).reshape(js.size, nodes).sum(axis=1))
    norms = besov_from_blocks(blocks, spec, js)
    return DecayCurve(times=times, norms=np.asarray(norms), block_norms=blocks, js=js)
