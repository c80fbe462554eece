"""Exact-identity and inequality checks run by ``nserlx verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid
from .linear import (
    compressible_block,
    energy_E1_D1,
    energy_E3_D3,
    full_block,
    mode_forms,
    solenoidal_block,
    verify_key_inequalities,
)
from .lp import build_filter_bank, phi
from .model import FlowState, relative_velocity_residual


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    seconds: float = 0.0
    detail: str = ""


def _timed(name: str, fn: Callable[[], tuple[float, float, bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    value, limit, ok, detail = fn()
    return CheckResult(name, float(value), float(limit), bool(ok), time.perf_counter() - t0, detail)


def partition_of_unity(n: int = 100_000, seed: int = 0) -> float:
    """Max ``|sum_j phi(2^-j r) - 1|`` over log-uniform random radii."""
    rng = np.random.default_rng(seed)
    r = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), n))
    js = np.arange(-25, 25)
    total = phi(r[None, :] * 2.0 ** (-js[:, None].astype(float))).sum(axis=0)
    return float(np.abs(total - 1.0).max())


def random_block_vectors(rng: np.random.Generator, trials: int, dim: int = 24):
    u = rng.standard_normal((trials, dim)) + 1j * rng.standard_normal((trials, dim))
    w = rng.standard_normal((trials, dim)) + 1j * rng.standard_normal((trials, dim))
    # random relative scales stress both regimes
    u *= np.exp(rng.uniform(-4, 4, trials))[:, None]
    w *= np.exp(rng.uniform(-4, 4, trials))[:, None]
    return u, w


def key_inequality_trials(trials: int = 10_000, seed: int = 1, js=(0,)) -> tuple[int, float]:
    """Violations and minimum ratio over random vectors for every ``j`` in ``js``."""
    rng = np.random.default_rng(seed)
    bad = 0
    worst = math.inf
    for j in js:
        u, w = random_block_vectors(rng, trials)
        for a, b in zip(u, w):
            rep = verify_key_inequalities(a, b, int(j))
            bad += len(rep.violations)
            worst = min(worst, rep.tri_ratio, rep.branch_ratio)
    return bad, worst


def block_field_grid(j: int, d: int = 2, N: int = 32) -> Grid:
    """Torus whose block ``j`` annulus holds many lattice points."""
    return Grid(d, N, 2 * math.pi * 4.0 * 2.0 ** (-j))


def random_block_state(grid: Grid, j: int, rng: np.random.Generator, mask: np.ndarray | None = None) -> np.ndarray:
    d = grid.d
    phys = rng.standard_normal((2 * d + 2,) + grid.shape)
    hat = grid.to_spectral(phys)
    if mask is None:
        mask = build_filter_bank(grid).sample(j)
    return hat * mask


def energy_equivalence_range(which: str, j: int, eta: float, samples: int, seed: int = 2) -> tuple[float, float]:
    """Min and max of ``E / ||block||^2`` over random band-limited fields."""
    rng = np.random.default_rng(seed + 1000 * (j + 10))
    g = block_field_grid(j)
    d = g.d
    lo, hi = math.inf, -math.inf
    fn = energy_E1_D1 if which == "E1" else energy_E3_D3
    mask = build_filter_bank(g).sample(j)
    for _ in range(samples):
        h = random_block_state(g, j, rng, mask)
        E, _ = fn(g, h, j, eta)
        norm = g.l2_sq(h) if which == "E1" else g.l2_sq(h[1 + d :])
        lo = min(lo, E / norm)
        hi = max(hi, E / norm)
    return lo, hi


def dissipativity(d: int = 2, n: int = 512) -> tuple[float, float]:
    """Largest real part on ``xi`` in [1e-3, 1e3] and the deviation at ``xi = 0``."""
    xi = np.geomspace(1e-3, 1e3, n)
    ev = np.concatenate([np.linalg.eigvals(compressible_block(xi)), np.linalg.eigvals(solenoidal_block(xi))], axis=-1)
    c0 = np.sort(np.linalg.eigvals(compressible_block(0.0)).real)
    s0 = np.sort(np.linalg.eigvals(solenoidal_block(0.0)).real)
    dev = max(np.abs(c0 - [-2, 0, 0, 0]).max(), np.abs(s0 - [-2, 0]).max())
    return float(ev.real.max()), float(dev)


def lyapunov_identity_defect(which: str, js, eta: float = 0.05) -> float:
    """``max |D + A^T E + E A|`` on sampled annuli (exact for E1 and E2)."""
    worst = 0.0
    for j in js:
        r = np.geomspace(0.75 * 2.0**j, 8 / 3 * 2.0**j, 64)
        E, D = mode_forms(r, j, eta, which)
        A = full_block(r)
        res = D + np.swapaxes(A, -1, -2) @ E + E @ A
        worst = max(worst, float(np.abs(res).max() / np.abs(D).max()))
    return worst


def relative_velocity_trials(n: int = 100, seed: int = 3) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n):
        d = 2 if i % 2 == 0 else 3
        g = Grid(d, 8 if d == 3 else 16)
        phys = 0.2 * rng.standard_normal((2 * d + 2,) + g.shape)
        st = FlowState(g, g.to_spectral(phys) * g.dealias)
        worst = max(worst, relative_velocity_residual(st))
    return worst


def run_all(quick: bool = False) -> list[CheckResult]:
    trials = 1000 if quick else 10_000
    samples = 50 if quick else 1000
    out = []
    out.append(_timed("partition of unity", lambda: (lambda v: (v, 1e-10, v <= 1e-10, ""))(partition_of_unity())))

    def tri():
        bad, worst = key_inequality_trials(trials, js=(0,))
        u = np.ones(8) + 0.5j
        eq = verify_key_inequalities(u / 2, u, 0).tri_ratio
        return bad, 0, bad == 0 and abs(eq - 1) <= 1e-12, f"min ratio {worst:.6g}, equality case {eq!r}"

    out.append(_timed("key inequality |u|^2+|u-w|^2 >= |w|^2/2", tri))

    def branches():
        bad, worst = key_inequality_trials(trials // 10, seed=5, js=range(-4, 5))
        return bad, 0, bad == 0, f"min ratio {worst:.6g}"

    out.append(_timed("velocity branches c=1/2 (j<=0), 1/8 (j>=-1)", branches))

    def eq1():
        worst = 0.0
        eta = 0.1
        for j in range(-4, 1):
            lo, hi = energy_equivalence_range("E1", j, eta, samples // 10 if quick else samples // 5)
            worst = max(worst, (0.5 - 4 * eta / 3) - lo, hi - (0.5 + 4 * eta / 3))
        return worst, 1e-12, worst <= 1e-12, "max excess over [1/2 -+ 4 eta/3]"

    out.append(_timed("low-frequency energy equivalence", eq1))

    def eq3():
        worst = 0.0
        eta = 0.05
        for j in range(-1, 5):
            lo, hi = energy_equivalence_range("E3", j, eta, samples // 10 if quick else samples // 5)
            worst = max(worst, (0.5 - 2 * eta) - lo, hi - (0.5 + 2 * eta))
        return worst, 1e-12, worst <= 1e-12, "max excess over [1/2 -+ 2 eta]"

    out.append(_timed("particle energy equivalence", eq3))

    def diss():
        worst = 0.0
        dev = 0.0
        for d in (2, 3):
            m, z = dissipativity(d)
            worst, dev = max(worst, m), max(dev, z)
        return max(worst, dev), 1e-12, worst <= 1e-12 and dev <= 1e-12, f"max Re {worst:.3g}, xi=0 deviation {dev:.3g}"

    out.append(_timed("linear dissipativity", diss))

    def lyap():
        v = max(lyapunov_identity_defect("E1", range(-4, 1)), lyapunov_identity_defect("E2", range(-1, 5)))
        return v, 1e-12, v <= 1e-12, "relative defect of d/dt E + D = 0"

    out.append(_timed("Lyapunov identities", lyap))

    def rel():
        v = relative_velocity_trials(20 if quick else 100)
        return v, 1e-12, v <= 1e-12, ""

    out.append(_timed("relative velocity identity", rel))
    return out
