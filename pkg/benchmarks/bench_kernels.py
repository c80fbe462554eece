"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat 20]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from nserlx import _accel
from nserlx.grid import Grid
from nserlx.lp import build_filter_bank
from nserlx.model import NORMALIZED
from nserlx.solver import LinearFactor


def _cases(rng):
    bank = build_filter_bank(Grid(2, 256, 32 * np.pi))
    power = rng.random((6, bank.jlo.size))
    yield "block_energy  d=2 N=256", (power, bank.jlo, bank.wlo, bank.whi, bank.nblocks), "block_energy"
    bank3 = build_filter_bank(Grid(3, 64, 16 * np.pi))
    power3 = rng.random((8, bank3.jlo.size))
    yield "block_energy  d=3 N=64", (power3, bank3.jlo, bank3.wlo, bank3.whi, bank3.nblocks), "block_energy"
    for d, n in ((2, 256), (3, 64)):
        lf = LinearFactor(Grid(d, n), NORMALIZED, 0.05)
        m = lf.comp.shape[0]
        hat = rng.standard_normal((2 + 2 * d, m)) + 1j * rng.standard_normal((2 + 2 * d, m))
        yield f"apply_modes   d={d} N={n}", (hat, lf.comp, lf.sol, lf.khat), "apply_modes"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max rel diff")
    for label, argv_k, name in _cases(rng):
        fnp = getattr(_accel, f"{name}_numpy")
        fnb = getattr(_accel, f"{name}_numba")
        a, b = fnp(*argv_k), fnb(*argv_k)  # also triggers compilation
        diff = float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-300))
        t_np = min(timeit.repeat(lambda: fnp(*argv_k), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fnb(*argv_k), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:26s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.2f}x  {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
