"""Time-integrated Besov functionals assembled block by block.

Everything works on per-block L^2 norms of a few field groups, so a run can
update the functionals in O(blocks) per diagnostic tick:

* ``X``: the small-data energy functional (sup-in-time low and high pieces
  plus time integrals of the dissipated norms),
* ``X_theta``: the same with the polynomial weight ``t^theta``,
* ``Z``: the decay functional with weights ``<t> = sqrt(1 + t^2)``.

Tilde (Chemin-Lerner) pieces take the time norm per block before the ``l^1``
sum; plain ``L^inf_t`` pieces take the sup of the Besov norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .lp import HIGH_MIN_J, LOW_MAX_J, DyadicFilterBank, block_norms_sq

GROUPS = ("all", "rel", "a", "grad_a", "u", "bw", "ubw")


def block_groups(hat: np.ndarray, bank: DyadicFilterBank) -> dict[str, np.ndarray]:
    """Per-block L^2 norms of the field groups used by the functionals."""
    g: Grid = bank.grid
    d = g.d
    per_field = block_norms_sq(hat, bank, keep_axes=1)
    rel = block_norms_sq(hat[1 : 1 + d] - hat[2 + d :], bank)
    grad_a = block_norms_sq(g.grad(hat[0]), bank)
    u = per_field[1 : 1 + d].sum(axis=0)
    bw = per_field[1 + d :].sum(axis=0)
    out = {
        "all": per_field.sum(axis=0),
        "rel": rel,
        "a": per_field[0],
        "grad_a": grad_a,
        "u": u,
        "bw": bw,
        "ubw": u + bw,
    }
    return {k: np.sqrt(v) for k, v in out.items()}


def japanese(t: float) -> float:
    return math.sqrt(1.0 + t * t)


@dataclass(frozen=True)
class FunctionalSettings:
    d: int
    sigma0: float | None = None
    theta: float | None = None
    eps: float = 0.1
    n_sigma: int = 17

    def resolved_theta(self) -> float | None:
        if self.theta is not None:
            return self.theta
        if self.sigma0 is None:
            return None
        return 0.5 * (self.d / 2 + 1 - self.sigma0) + 0.25

    @property
    def alpha(self) -> float:
        return 0.5 * (self.d + 1 - 2 * self.sigma0 - 2 * self.eps)


class _Piece:
    """One term ``|| w(t) f ||`` of a functional, updated per tick."""

    def __init__(self, group: str, s: float, band: str, time_norm: str, tilde: bool, weight):
        self.group = group
        self.s = s
        self.band = band
        self.time_norm = time_norm  # "inf", "1", "2"
        self.tilde = tilde
        self.weight = weight
        self.acc = None
        self.prev_t = None
        self.prev_val = None
        self.sup = 0.0

    def update(self, t: float, blocks: np.ndarray, js: np.ndarray) -> float:
        mask = js <= LOW_MAX_J if self.band == "low" else js >= HIGH_MIN_J
        wb = self.weight(t) * 2.0 ** (self.s * js[mask]) * blocks[mask]
        if self.time_norm == "inf":
            if self.tilde:
                self.acc = wb if self.acc is None else np.maximum(self.acc, wb)
                return float(self.acc.sum())
            self.sup = max(self.sup, float(wb.sum()))
            return self.sup
        p = 1 if self.time_norm == "1" else 2
        val = wb**p
        if self.acc is None:
            self.acc = np.zeros_like(val)
        else:
            self.acc = self.acc + 0.5 * (t - self.prev_t) * (val + self.prev_val)
        self.prev_t, self.prev_val = t, val
        return float((self.acc ** (1.0 / p)).sum())


def _one(_t):
    return 1.0


class FunctionalTracker:
    """Streaming evaluation of ``X``, ``X_theta`` and ``Z`` from block norms."""

    def __init__(self, settings: FunctionalSettings, js: np.ndarray):
        self.settings = settings
        self.js = np.asarray(js)
        d = settings.d
        h = d / 2
        self.pieces: dict[str, list[_Piece]] = {}
        self.pieces["X"] = self._x_pieces(h, _one)
        theta = settings.resolved_theta()
        if theta is not None:
            self.pieces["X_theta"] = self._x_pieces(h, lambda t, th=theta: t**th, theta_variant=True)
        if settings.sigma0 is not None:
            self.pieces["Z"] = self._z_pieces(h)

    @staticmethod
    def _x_pieces(h: float, wt, theta_variant: bool = False) -> list[_Piece]:
        pieces = [
            _Piece("all", h - 1, "low", "inf", True, wt),
            _Piece("all", h + 1, "low", "1", True, wt),
            _Piece("rel", h, "low", "1", True, wt),
            _Piece("rel", h - 1, "low", "2", True, wt),
        ]
        if theta_variant:
            pieces += [
                _Piece("grad_a", h - 1, "high", "inf", True, wt),
                _Piece("u", h - 1, "high", "inf", True, wt),
            ]
        else:
            pieces += [
                _Piece("a", h, "high", "inf", True, wt),
                _Piece("u", h - 1, "high", "inf", True, wt),
            ]
        pieces += [
            _Piece("bw", h + 1, "high", "inf", True, wt),
            _Piece("a", h, "high", "1", True, wt),
            _Piece("ubw", h + 1, "high", "1", True, wt),
        ]
        return pieces

    def _z_pieces(self, h: float) -> list[_Piece]:
        st = self.settings
        s0, eps, alpha = st.sigma0, st.eps, st.alpha
        pieces = []
        for s in np.linspace(s0 + eps, h + 1, st.n_sigma):
            pieces.append(_Piece("all", s, "low", "inf", False, lambda t, s=s: japanese(t) ** (0.5 * (s - s0))))
        pieces.append(_RelSigma0(s0))
        for s in np.linspace(s0 + eps, h, st.n_sigma):
            pieces.append(_Piece("rel", s, "low", "inf", False, lambda t, s=s: japanese(t) ** (0.5 * (1 + s - s0))))
        jw = lambda t: japanese(t) ** alpha  # noqa: E731
        pieces += [
            _Piece("a", h, "high", "inf", True, jw),
            _Piece("u", h - 1, "high", "inf", True, jw),
            _Piece("u", h + 1, "high", "inf", True, lambda t: t**alpha),
            _Piece("bw", h + 1, "high", "inf", True, jw),
        ]
        return pieces

    def push(self, t: float, groups: dict[str, np.ndarray]) -> dict[str, float]:
        out = {}
        self.last_pieces = {}
        for name, pieces in self.pieces.items():
            vals = [p.update(t, groups[p.group], self.js) for p in pieces]
            self.last_pieces[name] = vals
            if name == "Z":
                st = self.settings
                n = st.n_sigma
                out[name] = max(vals[:n]) + vals[n] + max(vals[n + 1 : 2 * n + 1]) + sum(vals[2 * n + 1 :])
            else:
                out[name] = float(sum(vals))
        return out


class _RelSigma0(_Piece):
    """``sup_t <t>^{1/2} || u - w ||^low_{B^{sigma0}_{2,inf}}``."""

    def __init__(self, s0: float):
        super().__init__("rel", s0, "low", "inf", False, lambda t: japanese(t) ** 0.5)

    def update(self, t, blocks, js):
        mask = js <= LOW_MAX_J
        vals = 2.0 ** (self.s * js[mask]) * blocks[mask]
        cur = self.weight(t) * (float(vals.max()) if vals.size else 0.0)
        self.sup = max(self.sup, cur)
        return self.sup


@dataclass
class FunctionalSeries:
    times: list[float] = field(default_factory=list)
    values: dict[str, list[float]] = field(default_factory=dict)

    def append(self, t: float, vals: dict[str, float]) -> None:
        self.times.append(t)
        for k, v in vals.items():
            self.values.setdefault(k, []).append(v)

    def as_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.asarray(self.times)}
        out.update({k: np.asarray(v) for k, v in self.values.items()})
        return out
