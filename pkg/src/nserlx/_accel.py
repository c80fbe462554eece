"""Hot per-mode kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``NSERLX_NUMBA``:

* unset or ``"1"``: use numba when it imports, numpy otherwise
* ``"0"``: force the numpy path

``NSERLX_THREADS`` caps numba's thread pool and the FFT worker count.
Both paths are kept importable under the names ``*_numpy`` / ``*_numba`` so
tests and the benchmark can compare them directly.
"""

from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("NSERLX_NUMBA", "1").strip() != "0"


def thread_cap() -> int | None:
    raw = os.environ.get("NSERLX_THREADS", "").strip()
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError(f"NSERLX_THREADS must be >= 1, got {raw!r}")
    return n


if HAVE_NUMBA and thread_cap() is not None:
    numba.set_num_threads(min(thread_cap(), numba.config.NUMBA_NUM_THREADS))


def fft_workers() -> int:
    return thread_cap() or 1


# ---------------------------------------------------------------------------
# dyadic block accumulation
# ---------------------------------------------------------------------------


def block_energy_numpy(power, jlo, wlo, whi, nblocks):
    """Sum ``phi_j^2 * power`` into per-block bins.

    Every mode touches at most two adjacent blocks ``jlo`` and ``jlo + 1``
    (offsets into the bank's index range); ``wlo``/``whi`` are the two
    cutoff values. ``power`` may carry leading batch axes.
    """
    power = np.asarray(power)
    lead = power.shape[:-1]
    flat = power.reshape(-1, power.shape[-1])
    out = np.empty((flat.shape[0], nblocks))
    lo2 = wlo * wlo
    hi2 = whi * whi
    hi_idx = np.minimum(jlo + 1, nblocks - 1)
    for i, row in enumerate(flat):
        acc = np.bincount(jlo, weights=lo2 * row, minlength=nblocks + 1)[:nblocks]
        acc = acc + np.bincount(hi_idx, weights=hi2 * row, minlength=nblocks + 1)[:nblocks]
        out[i] = acc
    return out.reshape(*lead, nblocks)


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _block_energy_kernel(flat, jlo, wlo, whi, nblocks, out):
        nb, m = flat.shape
        for b in range(nb):
            for i in range(m):
                p = flat[b, i]
                if p == 0.0:
                    continue
                j = jlo[i]
                out[b, j] += wlo[i] * wlo[i] * p
                if j + 1 < nblocks:
                    out[b, j + 1] += whi[i] * whi[i] * p

    def block_energy_numba(power, jlo, wlo, whi, nblocks):
        power = np.asarray(power, dtype=np.float64)
        lead = power.shape[:-1]
        flat = np.ascontiguousarray(power.reshape(-1, power.shape[-1]))
        out = np.zeros((flat.shape[0], nblocks))
        _block_energy_kernel(flat, jlo, wlo, whi, nblocks, out)
        return out.reshape(*lead, nblocks)

else:  # pragma: no cover
    block_energy_numba = block_energy_numpy


# ---------------------------------------------------------------------------
# per-mode linear propagator (Helmholtz-reduced 4x4 + 2x2 blocks)
# ---------------------------------------------------------------------------


def apply_modes_numpy(hat, comp, sol, khat):
    """Apply per-mode real block matrices to a packed state spectrum.

    Parameters
    ----------
    hat : complex array, shape (2d+2, M)
        Packed coefficients ``a, u_1..u_d, b, w_1..w_d`` for M modes.
    comp : float array, shape (M, 4, 4)
        Block acting on ``(a, v, b, z)`` with ``v = i khat.u``, ``z = i khat.w``.
    sol : float array, shape (M, 2, 2)
        Block acting on the solenoidal parts ``(u_s, w_s)`` componentwise.
    khat : float array, shape (d, M)
        Unit wavevectors; zero at the origin.
    """
    d = khat.shape[0]
    a = hat[0]
    u = hat[1 : 1 + d]
    b = hat[1 + d]
    w = hat[2 + d :]
    v = 1j * np.sum(khat * u, axis=0)
    z = 1j * np.sum(khat * w, axis=0)
    us = u + 1j * khat * v
    ws = w + 1j * khat * z
    x = np.stack([a, v, b, z])
    y = np.einsum("mij,jm->im", comp, x)
    s = np.stack([us, ws])
    t = np.einsum("mij,jcm->icm", sol, s)
    out = np.empty_like(hat)
    out[0] = y[0]
    out[1 : 1 + d] = -1j * khat * y[1] + t[0]
    out[1 + d] = y[2]
    out[2 + d :] = -1j * khat * y[3] + t[1]
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _apply_modes_kernel(hat, comp, sol, khat, out):
        d = khat.shape[0]
        m = hat.shape[1]
        x = np.empty(4, dtype=np.complex128)
        us = np.empty(d, dtype=np.complex128)
        ws = np.empty(d, dtype=np.complex128)
        for i in range(m):
            v = 0j
            z = 0j
            for c in range(d):
                v += khat[c, i] * hat[1 + c, i]
                z += khat[c, i] * hat[2 + d + c, i]
            v *= 1j
            z *= 1j
            for c in range(d):
                us[c] = hat[1 + c, i] + 1j * khat[c, i] * v
                ws[c] = hat[2 + d + c, i] + 1j * khat[c, i] * z
            x[0] = hat[0, i]
            x[1] = v
            x[2] = hat[1 + d, i]
            x[3] = z
            y0 = comp[i, 0, 0] * x[0] + comp[i, 0, 1] * x[1] + comp[i, 0, 2] * x[2] + comp[i, 0, 3] * x[3]
            y1 = comp[i, 1, 0] * x[0] + comp[i, 1, 1] * x[1] + comp[i, 1, 2] * x[2] + comp[i, 1, 3] * x[3]
            y2 = comp[i, 2, 0] * x[0] + comp[i, 2, 1] * x[1] + comp[i, 2, 2] * x[2] + comp[i, 2, 3] * x[3]
            y3 = comp[i, 3, 0] * x[0] + comp[i, 3, 1] * x[1] + comp[i, 3, 2] * x[2] + comp[i, 3, 3] * x[3]
            out[0, i] = y0
            out[1 + d, i] = y2
            for c in range(d):
                p = sol[i, 0, 0] * us[c] + sol[i, 0, 1] * ws[c]
                q = sol[i, 1, 0] * us[c] + sol[i, 1, 1] * ws[c]
                out[1 + c, i] = -1j * khat[c, i] * y1 + p
                out[2 + d + c, i] = -1j * khat[c, i] * y3 + q

    def apply_modes_numba(hat, comp, sol, khat):
        hat = np.ascontiguousarray(hat, dtype=np.complex128)
        out = np.empty_like(hat)
        _apply_modes_kernel(
            hat,
            np.ascontiguousarray(comp, dtype=np.float64),
            np.ascontiguousarray(sol, dtype=np.float64),
            np.ascontiguousarray(khat, dtype=np.float64),
            out,
        )
        return out

else:  # pragma: no cover
    apply_modes_numba = apply_modes_numpy


if USE_NUMBA:
    block_energy = block_energy_numba
    apply_modes = apply_modes_numba
else:
    block_energy = block_energy_numpy
    apply_modes = apply_modes_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
log.debug("nserlx kernels backend: %s", BACKEND)
