"""Experiment configuration: a flat set of keys, grouped into INI sections for reading."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .noise import NoiseSpectrum
from .spectral import TorusGrid

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # grid
    n: int = 32
    dealias: str = "two_thirds"
    kappa: float = 0.01
    # noise
    alpha0: float = 0.05
    phi_kind: str = "constant"          # constant | band | table
    phi_low: float = 0.05               # amplitude on |k| <= R (band) or everywhere (constant)
    phi_high: float = 0.05              # amplitude on |k| > R (band)
    phi_table: str = ""                 # "k1,k2=value; ..." overrides on top of phi_low
    split_radius: float = 2.0
    # time stepping
    h: float = 1e-3
    t_end: float = 0.1
    substeps: int = 1
    # initial data
    lam0: float = 1.0                   # L^2 norm of the smooth part u_s
    rough_fraction: float = 0.0         # ||u_r||_{C^-kappa} as a fraction of 2 alpha0
    rough_cut: float = 4.0
    # ensemble / bookkeeping
    ensemble: int = 8
    seed: int = 0
    report_every: int = 1
    monitor_every: int = 1
    checkpoint_every: int = 0
    k_max: float = 0.0                  # clamp for K; 0 means the grid Nyquist n/2
    run_dpd: bool = True
    # invariant measure runs
    sharp_N: int = 0                    # 0 means the full lattice
    burn_in: float = 50.0
    sample_every: int = 10
    scheme: str = "split"
    nonlinear: bool = True
    # decay / mixing
    lambdas: tuple = (1.0, 4.0, 16.0)
    n_samples: int = 40
    # verification
    suites: tuple = ("paraproducts", "heatflow", "moments331", "concentration441", "suptime444", "wick", "ledger")
    quick: bool = True
    out_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ConfigError(f"n must be an even integer >= 4 (got {self.n})")
        for name in ("kappa", "h", "t_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive (got {getattr(self, name)})")
        if self.alpha0 < 0 or self.split_radius < 0 or self.lam0 < 0:
            raise ConfigError("alpha0, split_radius and lam0 must be non-negative")
        if not 0 <= self.rough_fraction <= 1:
            raise ConfigError("rough_fraction must lie in [0, 1]")
        if self.phi_kind not in ("constant", "band", "table"):
            raise ConfigError(f"unknown phi_kind {self.phi_kind!r}")
        if self.dealias not in ("two_thirds", "none"):
            raise ConfigError(f"unknown dealias rule {self.dealias!r}")
        if self.ensemble < 1 or self.substeps < 1:
            raise ConfigError("ensemble and substeps must be >= 1")

    def grid(self) -> TorusGrid:
        return TorusGrid(self.n, self.dealias, max(1, self.threads))

    def spectrum(self, grid: TorusGrid | None = None) -> NoiseSpectrum:
        grid = grid or self.grid()
        R = self.split_radius
        if self.phi_kind == "constant":
            return NoiseSpectrum.constant(grid, self.phi_low, max(self.alpha0, abs(self.phi_low)), R)
        if self.phi_kind == "band":
            return NoiseSpectrum.band(grid, self.phi_low, self.phi_high, R, self.alpha0)
        table = {}
        for item in filter(None, (s.strip() for s in self.phi_table.split(";"))):
            key, val = item.split("=")
            k1, k2 = (int(v) for v in key.split(","))
            table[(k1, k2)] = complex(val.strip())
        spec = NoiseSpectrum.from_table(grid, table, self.phi_low, None, R)
        if spec.alpha0 > self.alpha0 and self.alpha0 > 0:
            raise ConfigError(f"phi table exceeds alpha0 on |k| > R ({spec.alpha0} > {self.alpha0})")
        return NoiseSpectrum(grid, spec.phi, max(self.alpha0, spec.alpha0), R)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    default = _FIELDS[name].default
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            try:
                as_float = float(raw)
            except ValueError:
                as_float = None
            if as_float is not None and as_float.is_integer():
                return int(as_float)
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    if isinstance(default, tuple):
        items = [s.strip() for s in raw.replace(";", ",").split(",") if s.strip()]
        if default and isinstance(default[0], float):
            return tuple(float(s) for s in items)
        return tuple(items)
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse INI text; keys may sit in any section (sections are for grouping only)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            values[key] = _convert(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)
