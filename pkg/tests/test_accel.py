import os
import subprocess
import sys

import numpy as np
import pytest

from nserlx import _accel
from nserlx.grid import Grid
from nserlx.lp import build_filter_bank
from nserlx.solver import LinearFactor
from nserlx.model import NORMALIZED

numba_only = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@numba_only
def test_block_energy_paths_agree(rng):
    bank = build_filter_bank(Grid(2, 64, 20.0))
    power = rng.random((3, bank.jlo.size))
    a = _accel.block_energy_numpy(power, bank.jlo, bank.wlo, bank.whi, bank.nblocks)
    b = _accel.block_energy_numba(power, bank.jlo, bank.wlo, bank.whi, bank.nblocks)
    assert np.allclose(a, b, rtol=1e-13, atol=0)


@numba_only
def test_apply_modes_paths_agree(rng):
    g = Grid(3, 8)
    lf = LinearFactor(g, NORMALIZED, 0.3)
    hat = rng.standard_normal((8, lf.comp.shape[0])) + 1j * rng.standard_normal((8, lf.comp.shape[0]))
    a = _accel.apply_modes_numpy(hat, lf.comp, lf.sol, lf.khat)
    b = _accel.apply_modes_numba(hat, lf.comp, lf.sol, lf.khat)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-15)


def _backend_with(flag: str) -> str:
    env = dict(os.environ, NSERLX_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from nserlx import _accel; print(_accel.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_env_flag_selects_numpy():
    assert _backend_with("0") == "numpy"


@numba_only
def test_env_flag_default_numba():
    assert _backend_with("1") == "numba"


def test_thread_cap_validation(monkeypatch):
    monkeypatch.setenv("NSERLX_THREADS", "0")
    with pytest.raises(ValueError):
        _accel.thread_cap()
    monkeypatch.setenv("NSERLX_THREADS", "3")
    assert _accel.thread_cap() == 3 and _accel.fft_workers() == 3
