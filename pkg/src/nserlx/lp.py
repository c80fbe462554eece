"""Littlewood-Paley blocks and homogeneous Besov norms on a periodic grid.

The radial cutoff ``chi`` equals 1 on ``[0, 3/4]`` and 0 on ``[4/3, inf)``,
joined by the smooth step ``psi(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)})``.
The dyadic profile is ``phi(r) = chi(r/2) - chi(r)``, supported in
``[3/4, 8/3]``, and block ``j`` multiplies a spectrum by ``phi(2^{-j}|xi|)``.

Low-frequency norms sum over ``j <= 0`` and high-frequency norms over
``j >= -1``; the split of a field itself uses ``j <= -1`` versus ``j >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy.special import expit

from . import _accel
from .grid import Grid

CHI_FLAT = 0.75
CHI_ZERO = 4.0 / 3.0
PHI_SUPPORT = (0.75, 8.0 / 3.0)

# band boundaries for norms carrying the low/high superscripts
LOW_MAX_J = 0
HIGH_MIN_J = -1


class ResolutionError(ValueError):
    pass


class MeanError(ValueError):
    pass


def smooth_step(x):
    """``psi`` on [0, 1]: 0 at 0, 1 at 1, all derivatives vanish at both ends."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0.0) & (x < 1.0)
    xi = np.where(inner, x, 0.5)
    # psi(x) = 1 / (1 + exp(1/x - 1/(1-x)))
    val = expit(1.0 / (1.0 - xi) - 1.0 / xi)
    return np.where(inner, val, out)


def chi(r):
    r = np.asarray(r, dtype=float)
    return smooth_step((CHI_ZERO - r) / (CHI_ZERO - CHI_FLAT))


def phi(r):
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


def lowest_block(r):
    """Smallest ``j`` with ``phi(2^{-j} r) > 0`` (the next one is ``j + 1``)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return np.floor(np.log2(3.0 * r / 8.0)).astype(np.int64) + 1


@dataclass(frozen=True)
class BesovSpec:
    """Norm request ``B^s_{2,r}`` restricted to a frequency band."""

    s: float
    r: float = 1
    band: Literal["low", "high", "all"] = "all"

    def __post_init__(self):
        if self.r not in (1, math.inf):
            raise ValueError(f"summation index must be 1 or inf, got {self.r}")
        if self.band not in ("low", "high", "all"):
            raise ValueError(f"band must be low, high or all, got {self.band!r}")

    def block_mask(self, js: np.ndarray) -> np.ndarray:
        if self.band == "low":
            return js <= LOW_MAX_J
        if self.band == "high":
            return js >= HIGH_MIN_J
        return np.ones_like(js, dtype=bool)


@dataclass(frozen=True, eq=False)
class DyadicFilterBank:
    """Cutoffs sampled on a grid's wavevectors.

    Each stored mode lies in at most two adjacent blocks; ``jlo`` holds the
    offset ``j - j_min`` of the lower one and ``wlo``/``whi`` the two cutoff
    values (flattened over the half grid).
    """

    grid: Grid
    j_min: int
    j_max: int
    jlo: np.ndarray
    wlo: np.ndarray
    whi: np.ndarray

    @property
    def js(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @property
    def nblocks(self) -> int:
        return self.j_max - self.j_min + 1

    def sample(self, j: int) -> np.ndarray:
        """``phi(2^{-j}|xi|)`` on the half grid."""
        self._check(j)
        return self._samples[j - self.j_min]

    @cached_property
    def _samples(self) -> np.ndarray:
        r = self.grid.kmag
        return np.stack([phi(r * 2.0 ** (-j)) for j in self.js])

    def partition_sum(self) -> np.ndarray:
        """``sum_j phi(2^{-j}|xi|)`` on the half grid (0 at the zero mode)."""
        return (self.wlo + self.whi).reshape(self.grid.spec_shape)

    def overlap_constant(self) -> float:
        """Smallest ``C`` with ``||f||^2 <= C sum_j ||Delta_j f||^2`` on this grid."""
        sq = (self.wlo**2 + self.whi**2).reshape(self.grid.spec_shape)
        nz = self.grid.kmag > 0
        return float(1.0 / sq[nz].min())

    def _check(self, j: int) -> None:
        if not (self.j_min <= j <= self.j_max):
            raise IndexError(f"block {j} outside bank range [{self.j_min}, {self.j_max}]")


def build_filter_bank(grid: Grid) -> DyadicFilterBank:
    if grid.N < 8:
        raise ResolutionError(f"N={grid.N} is too small to represent a full dyadic annulus (need N >= 8)")
    j_min = math.floor(math.log2(grid.fundamental)) - 1
    j_max = math.ceil(math.log2(grid.kmax))
    r = grid.kmag.ravel()
    nz = r > 0
    jl = np.full(r.shape, j_min, dtype=np.int64)
    jl[nz] = lowest_block(r[nz])
    if jl[nz].min() < j_min or jl[nz].max() > j_max:
        raise AssertionError("block range does not cover the grid")  # pragma: no cover
    wlo = np.where(nz, phi(r * 2.0 ** (-jl.astype(float))), 0.0)
    whi = np.where(nz, phi(r * 2.0 ** (-(jl + 1).astype(float))), 0.0)
    whi = np.where(jl + 1 > j_max, 0.0, whi)
    return DyadicFilterBank(
        grid=grid,
        j_min=j_min,
        j_max=j_max,
        jlo=np.ascontiguousarray(jl - j_min),
        wlo=np.ascontiguousarray(wlo),
        whi=np.ascontiguousarray(whi),
    )


# ---------------------------------------------------------------------------
# blocks and norms
# ---------------------------------------------------------------------------


def apply_block(fh: np.ndarray, j: int, bank: DyadicFilterBank) -> np.ndarray:
    return fh * bank.sample(j)


def block_norms_sq(fh: np.ndarray, bank: DyadicFilterBank, keep_axes: int = 0) -> np.ndarray:
    """``||Delta_j f||^2_{L^2}`` for every block of the bank.

    Leading axes beyond the first ``keep_axes`` are treated as components and
    summed; the result has shape ``(*fh.shape[:keep_axes], nblocks)``.
    """
    g = bank.grid
    power = np.abs(fh) ** 2 * g.weights
    kept = power.shape[:keep_axes]
    power = power.reshape(*kept, -1, int(np.prod(g.spec_shape))).sum(axis=-2)
    out = _accel.block_energy(power, bank.jlo, bank.wlo, bank.whi, bank.nblocks)
    return g.volume * out


def block_norms(fh: np.ndarray, bank: DyadicFilterBank, keep_axes: int = 0) -> np.ndarray:
    return np.sqrt(block_norms_sq(fh, bank, keep_axes))


def check_mean_free(fh: np.ndarray, grid: Grid, tol: float = 1e-8) -> None:
    nd = grid.d
    comps = fh.reshape(-1, *grid.spec_shape) if fh.ndim > nd else fh[None]
    for c in comps:
        mean = abs(c[(0,) * nd]) * math.sqrt(grid.volume)
        total = math.sqrt(grid.l2_sq(c))
        if mean > tol * total and mean > 0:
            raise MeanError(
                f"field has mean {mean:.3e} relative to L2 norm {total:.3e}; "
                "pass remove_mean=True to discard the zero mode"
            )


def besov_from_blocks(norms: np.ndarray, spec: BesovSpec, js: np.ndarray) -> np.ndarray:
    """Combine per-block L^2 norms (last axis) into the requested Besov norm."""
    mask = spec.block_mask(js)
    weighted = 2.0 ** (spec.s * js[mask]) * norms[..., mask]
    if weighted.shape[-1] == 0:
        return np.zeros(weighted.shape[:-1])
    if spec.r == 1:
        return weighted.sum(axis=-1)
    return weighted.max(axis=-1)


def besov_norm(
    fh: np.ndarray,
    spec: BesovSpec,
    bank: DyadicFilterBank,
    remove_mean: bool = False,
) -> float:
    """Homogeneous ``B^s_{2,r}`` norm of a gridded field (components combined)."""
    if not remove_mean:
        check_mean_free(fh, bank.grid)
    return float(besov_from_blocks(block_norms(fh, bank), spec, bank.js))


def low_high_split(fh: np.ndarray, bank: DyadicFilterBank) -> tuple[np.ndarray, np.ndarray]:
    """Split into ``sum_{j<=-1} Delta_j f`` and ``sum_{j>=0} Delta_j f``."""
    low = np.zeros_like(fh)
    high = np.zeros_like(fh)
    for j in bank.js:
        piece = apply_block(fh, int(j), bank)
        if j <= -1:
            low += piece
        else:
            high += piece
    return low, high


def chemin_lerner_from_blocks(
    block_series: np.ndarray,
    rho: float,
    spec: BesovSpec,
    js: np.ndarray,
    dt: float | None = None,
    times: Sequence[float] | None = None,
) -> float:
    """Chemin-Lerner norm from a ``(n_times, n_blocks)`` array of block L^2 norms."""
    block_series = np.asarray(block_series, dtype=float)
    if block_series.ndim != 2 or block_series.shape[0] == 0:
        raise ValueError("empty time series")
    if rho == math.inf:
        per_block = block_series.max(axis=0)
    elif rho in (1, 2):
        n = block_series.shape[0]
        if times is None:
            if dt is None:
                raise ValueError("need dt or times for a time-integrated norm")
            times = np.arange(n) * dt
        times = np.asarray(times, dtype=float)
        if n == 1:
            per_block = np.zeros(block_series.shape[1])
        else:
            per_block = np.trapezoid(block_series**rho, times, axis=0) ** (1.0 / rho)
    else:
        raise ValueError(f"time exponent must be 1, 2 or inf, got {rho}")
    return float(besov_from_blocks(per_block, spec, np.asarray(js)))


def chemin_lerner_norm(
    series: Sequence[np.ndarray] | np.ndarray,
    rho: float,
    spec: BesovSpec,
    bank: DyadicFilterBank,
    dt: float | None = None,
    times: Sequence[float] | None = None,
) -> float:
    """Discrete ``L~^rho_T(B^s_{2,r})`` norm of a uniformly sampled series.

    The time norm is taken block by block (trapezoid rule for ``rho`` in
    {1, 2}, max for ``rho = inf``) before the weighted ``l^r`` sum.
    """
    if len(series) == 0:
        raise ValueError("empty time series")
    blocks = np.stack([block_norms(f, bank) for f in series])
    return chemin_lerner_from_blocks(blocks, rho, spec, bank.js, dt=dt, times=times)
