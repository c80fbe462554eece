"""Periodic box, wavevectors and real-FFT transforms.

Spectral coefficients are stored on the real-FFT half grid and normalized so
that ``f(x) = sum_k f_hat(k) exp(i k.x)``; the ``weights`` array counts each
stored mode with its conjugate partner, so ``||f||^2 = L^d sum weights*|f_hat|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from ._accel import fft_workers


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``[0, L)^d`` with ``N`` points per direction."""

    d: int
    N: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.d}")
        if self.N <= 0 or self.N % 2:
            raise GridError(f"N must be a positive even integer, got {self.N}")
        if not self.L > 0:
            raise GridError(f"box length must be positive, got {self.L}")

    # -- shapes -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def spec_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.d - 1) + (self.N // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def fundamental(self) -> float:
        return 2 * np.pi / self.L

    # -- wavevectors ------------------------------------------------------
    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode numbers, shape ``(d, *spec_shape)``."""
        full = np.fft.fftfreq(self.N, 1.0 / self.N)
        half = np.arange(self.N // 2 + 1, dtype=float)
        return np.stack(np.meshgrid(*([full] * (self.d - 1) + [half]), indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        return self.fundamental * self.mode_index

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def khat(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(self.kmag > 0, self.k / np.where(self.kmag > 0, self.kmag, 1.0), 0.0)
        return out

    @cached_property
    def weights(self) -> np.ndarray:
        """Conjugate multiplicity of each stored mode (1 or 2)."""
        w = np.full(self.spec_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0  # Nyquist plane of the last axis
        return w

    @cached_property
    def dealias(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every ``|n_i| <= N/3``."""
        return np.all(np.abs(self.mode_index) <= self.N / 3, axis=0)

    @property
    def kmax(self) -> float:
        """Largest wavevector magnitude representable on the grid."""
        return float(np.sqrt(self.d) * (self.N // 2) * self.fundamental)

    @cached_property
    def x(self) -> np.ndarray:
        pts = np.arange(self.N) * self.dx
        return np.stack(np.meshgrid(*([pts] * self.d), indexing="ij"))

    # -- transforms -------------------------------------------------------
    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self.axes, workers=fft_workers()) / self.N**self.d

    def to_physical(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fh * self.N**self.d, s=self.shape, axes=self.axes, workers=fft_workers())

    # -- spectral calculus ------------------------------------------------
    def grad(self, fh: np.ndarray) -> np.ndarray:
        """Gradient of a scalar spectrum; a new leading axis of length d."""
        return 1j * self.k * fh[None]

    def div(self, vh: np.ndarray) -> np.ndarray:
        return 1j * np.sum(self.k * vh, axis=0)

    def lap(self, fh: np.ndarray) -> np.ndarray:
        return -self.k2 * fh

    # -- norms ------------------------------------------------------------
    def l2_sq(self, fh: np.ndarray) -> float:
        """Squared L^2 norm summed over all leading (component) axes."""
        return float(self.volume * np.sum(self.weights * np.abs(fh) ** 2))

    def inner(self, fh: np.ndarray, gh: np.ndarray) -> float:
        """Real L^2 inner product ``Re int f . conj(g)`` over all components."""
        return float(self.volume * np.sum(self.weights * np.real(fh * np.conj(gh))))

    def hermitian_asymmetry(self, fh: np.ndarray) -> float:
        """Max ``|f(k) - conj f(-k)|`` on the self-conjugate planes of the half grid."""
        worst = 0.0
        n = self.N
        for plane in (0, n // 2):
            sl = fh[..., plane]
            mirrored = sl
            for ax in range(1, self.d):
                mirrored = np.roll(np.flip(mirrored, axis=-ax), 1, axis=-ax)
            worst = max(worst, float(np.max(np.abs(sl - np.conj(mirrored)), initial=0.0)))
        return worst
