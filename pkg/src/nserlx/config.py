"""Plain-text ``key = value`` configuration files.

Grammar (UTF-8)::

    file    := line*
    line    := blank | comment | entry
    comment := '#' anything
    entry   := key '=' value [ '#' anything ]
    key     := [A-Za-z_][A-Za-z0-9_]*
    value   := non-empty text up to the first '#' (surrounding spaces stripped)

Lists are comma separated. Every file starts with ``kind = simulate``,
``kind = decay`` or ``kind = analysis``; keys are strict per kind and a
misspelling is an error that lists the closest known keys.
"""

from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .experiments import COMPONENTS, DecayRequest, InitialDataSpec
from .grid import Grid, GridError
from .linear import parse_xi_grid, sigma0_range
from .lp import BesovSpec
from .model import ModelParams
from .solver import SCHEMES, NormRequest, SimConfig


class ConfigError(ValueError):
    pass


_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line)`` map; syntax errors carry the line number."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: invalid key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


# -- typed fields -----------------------------------------------------------


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _int(v: str) -> int:
    return int(v)


def _str(v: str) -> str:
    return v


def _list(conv: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse(v: str) -> tuple:
        return tuple(conv(p.strip()) for p in v.split(",") if p.strip())

    return parse


MODEL_KEYS = {
    "viscosity": _float,
    "bulk_lambda": _float,
    "drag": _float,
    "rho_bar": _float,
    "n_bar": _float,
    "pressure": _str,
    "gamma": _float,
    "sound_speed_sq": _float,
}

DATA_KEYS = {"sigma0": _float, "epsilon": _float, "seed": _int, "mix": _list(_str), "k_cut": _float}

SCHEMAS: dict[str, dict[str, Callable]] = {
    "simulate": {
        "kind": _str,
        "d": _int,
        "N": _int,
        "L": _float,
        "dt": _float,
        "T": _float,
        "scheme": _str,
        "cadence": _int,
        "norms": _list(_str),
        "energy_js": _list(_int),
        "snapshot_every": _int,
        "output": _str,
        **MODEL_KEYS,
        **DATA_KEYS,
    },
    "decay": {
        "kind": _str,
        "experiment": _str,
        "d": _int,
        "sigma0": _float,
        "quantities": _list(_str),
        "t_min": _float,
        "t_max": _float,
        "n_times": _int,
        "tol": _float,
        "mix": _list(_str),
        "N": _int,
        "L": _float,
        "dt": _float,
        "epsilon": _float,
        "seed": _int,
        **MODEL_KEYS,
    },
    "analysis": {"kind": _str, "d": _int, "xi_grid": _str, **MODEL_KEYS},
}

REQUIRED = {
    "simulate": ("d", "N", "dt", "T"),
    "decay": ("d", "sigma0"),
    "analysis": ("d",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int
    sigma0: float
    requests: tuple[DecayRequest, ...]
    times: np.ndarray
    tol: float
    params: ModelParams
    grid: Grid | None
    dt: float
    epsilon: float
    seed: int


@dataclass(frozen=True)
class AnalysisConfig:
    d: int
    xi: np.ndarray
    params: ModelParams


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, sorted(known), n=3, cutoff=0.6)
    return f"; did you mean {', '.join(close)}?" if close else f"; known keys: {', '.join(sorted(known))}"


def _typed(raw: dict[str, tuple[str, int]], source: str) -> tuple[str, dict]:
    if "kind" not in raw:
        raise ConfigError(f"{source}: missing 'kind' (one of {', '.join(SCHEMAS)})")
    kind = raw["kind"][0]
    if kind not in SCHEMAS:
        raise ConfigError(f"{source}:{raw['kind'][1]}: unknown kind {kind!r}; choose from {', '.join(SCHEMAS)}")
    schema = SCHEMAS[kind]
    out = {}
    for key, (value, line) in raw.items():
        if key not in schema:
            raise ConfigError(f"{source}:{line}: unknown key {key!r} for kind {kind}{_suggest(key, schema)}")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{line}: bad value for {key!r}: {value!r} ({exc})") from exc
    for key in REQUIRED[kind]:
        if key not in out:
            raise ConfigError(f"{source}: missing required key {key!r}")
    return kind, out


def _params(v: dict) -> ModelParams:
    kw = {}
    names = {
        "viscosity": "mu",
        "bulk_lambda": "lam",
        "drag": "kappa",
        "rho_bar": "rho_bar",
        "n_bar": "n_bar",
        "pressure": "pressure",
        "gamma": "gamma",
        "sound_speed_sq": "sound_speed_sq",
    }
    for key, attr in names.items():
        if key in v:
            kw[attr] = v[key]
    try:
        return ModelParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"model parameters: {exc}") from exc


def _check_sigma0(v: dict) -> None:
    if "sigma0" in v:
        lo, hi = sigma0_range(v["d"])
        s = v["sigma0"]
        if not (lo <= s < hi):
            raise ConfigError(
                f"sigma0 = {s} violates the low-frequency hypothesis -d/2 <= sigma0 < d/2 - 1 "
                f"(here [{lo}, {hi}) for d = {v['d']})"
            )


def _grid(v: dict) -> Grid:
    try:
        return Grid(v["d"], v["N"], v.get("L", 2 * math.pi))
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _mix(v: dict) -> tuple[str, ...]:
    mix = v.get("mix", COMPONENTS)
    bad = [m for m in mix if m not in COMPONENTS]
    if bad or not mix:
        raise ConfigError(f"mix: components must be drawn from {', '.join(COMPONENTS)}, got {', '.join(mix)}")
    return tuple(mix)


def build(kind: str, v: dict):
    if v["d"] not in (2, 3):
        raise ConfigError(f"d must be 2 or 3, got {v['d']}")
    _check_sigma0(v)
    params = _params(v)
    if kind == "simulate":
        grid = _grid(v)
        if v.get("scheme", "IF-RK2") not in SCHEMES:
            raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}, got {v['scheme']!r}")
        init = None
        if "epsilon" in v:
            if "sigma0" not in v:
                raise ConfigError("epsilon given without sigma0")
            try:
                init = InitialDataSpec(
                    sigma0=v["sigma0"],
                    epsilon=v["epsilon"],
                    d=v["d"],
                    seed=v.get("seed", 0),
                    mix=_mix(v),
                    k_cut=v.get("k_cut", 2.0),
                )
            except ValueError as exc:
                raise ConfigError(f"initial data: {exc}") from exc
        try:
            norms = tuple(NormRequest.parse(s) for s in v.get("norms", ()))
            return SimConfig(
                grid=grid,
                params=params,
                dt=v["dt"],
                T=v["T"],
                scheme=v.get("scheme", "IF-RK2"),
                cadence=v.get("cadence", 1),
                init=init,
                output=v.get("output"),
                norms=norms,
                energy_js=tuple(v.get("energy_js", ())),
                snapshot_every=v.get("snapshot_every", 0),
                sigma0=v.get("sigma0"),
            )
        except ValueError as exc:
            raise ConfigError(f"simulate: {exc}") from exc
    if kind == "decay":
        exp = v.get("experiment", "linear-continuum")
        if exp not in ("linear-continuum", "nonlinear-torus"):
            raise ConfigError(f"experiment must be linear-continuum or nonlinear-torus, got {exp!r}")
        mix = _mix(v)
        reqs = []
        for q in v.get("quantities", ("composite:low:0:1",)):
            try:
                name, band, s, r = q.split(":")
                if name not in ("composite", "relative"):
                    raise ValueError(f"unknown quantity {name!r}")
                spec = BesovSpec(float(s), math.inf if r == "inf" else int(r), band)
            except ValueError as exc:
                raise ConfigError(f"quantities: bad entry {q!r} ({exc}); expected quantity:band:s:r") from exc
            if spec.s < v["sigma0"] or (spec.s == v["sigma0"] and spec.r == 1):
                raise ConfigError(f"quantities: sigma = {spec.s} must exceed sigma0 = {v['sigma0']} (open interval)")
            reqs.append(DecayRequest(name, spec, mix))
        t_min, t_max, n = v.get("t_min", 10.0), v.get("t_max", 1000.0), v.get("n_times", 60)
        if not (0 < t_min < t_max) or n < 10:
            raise ConfigError("times: need 0 < t_min < t_max and n_times >= 10")
        grid = _grid(v) if exp == "nonlinear-torus" and "N" in v else None
        if exp == "nonlinear-torus" and grid is None:
            raise ConfigError("nonlinear-torus experiments need N (and optionally L)")
        return ExperimentConfig(
            experiment=exp,
            d=v["d"],
            sigma0=v["sigma0"],
            requests=tuple(reqs),
            times=np.geomspace(t_min, t_max, n),
            tol=v.get("tol", 0.05),
            params=params,
            grid=grid,
            dt=v.get("dt", 0.01),
            epsilon=v.get("epsilon", 1e-3),
            seed=v.get("seed", 0),
        )
    try:
        xi = parse_xi_grid(v.get("xi_grid", "log:1e-3:1e3:512"))
    except ValueError as exc:
        raise ConfigError(f"xi_grid: {exc}") from exc
    return AnalysisConfig(d=v["d"], xi=xi, params=params)


def parse_config_text(text: str, source: str = "<config>"):
    kind, values = _typed(parse_text(text, source), source)
    return build(kind, values)


def parse_config(path: str | Path):
    """Read and validate a config file; raises :class:`ConfigError` on any problem."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{p}: not valid UTF-8 ({exc})") from exc
    return parse_config_text(text, str(p))
