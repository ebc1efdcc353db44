"""Experiment configuration and JSON loading."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import ConfigurationError
from ..fvm import AdvectiveMode, DiffusivityMean, FluxConfig


class Experiment(enum.Enum):
    CONVERGENCE = "convergence"
    TWO_STRIP = "two-strip"
    FIVE_STRIP = "five-strip"
    FIVE_SPOT = "five-spot"
    SKEW_ADVECTION = "skew-advection"
    TRUNCATION = "truncation"
    SOLVER_SCALING = "solver-scaling"


_ALIASES = {"advection": Experiment.SKEW_ADVECTION}
BC_MODES = ("dirichlet", "neumann", "both")
DOMAINS = ("perforated_square", "unit_square", "unit_disk")
_DOMAIN_ALIASES = {"perforated": "perforated_square", "square": "unit_square", "disk": "unit_disk"}
INSTANCES = ("meshless", "oracle")
CLOSURES = ("dirichlet", "outflow")

# per-experiment defaults applied when the config leaves a field unset
_DEFAULTS = {
    Experiment.CONVERGENCE: dict(sizes=[16, 32, 64, 128], domain="perforated"),
    Experiment.TWO_STRIP: dict(sizes=[128], ratios=[4.0, 64.0], domain="square"),
    Experiment.FIVE_STRIP: dict(sizes=[40, 80], domain="square", perturbation=0.0),
    Experiment.FIVE_SPOT: dict(sizes=[32], ratios=[1.0, 1000.0], domain="square"),
    Experiment.SKEW_ADVECTION: dict(sizes=[16, 32, 64, 128], domain="square"),
    Experiment.TRUNCATION: dict(sizes=[16, 32, 64, 128], domain="perforated"),
    Experiment.SOLVER_SCALING: dict(sizes=[16, 32, 64, 128], domain="square"),
}


def parse_experiment(name) -> Experiment:
    if isinstance(name, Experiment):
        return name
    key = str(name).strip().lower().replace("_", "-")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Experiment(key)
    except ValueError:
        valid = ", ".join(e.value for e in Experiment)
        raise ConfigurationError(f"unknown experiment {name!r}; choose from {valid}") from None


@dataclass
class ExperimentConfig:
    """Everything a bench run needs; unset fields take per-experiment defaults.

    ``sizes`` are lattice counts ``N`` (spacing ``1/N``). ``pe`` drives the
    advection tables, ``ratios`` the Darcy contrasts ``R = eps1 / eps2``.
    """

    experiment: Experiment
    sizes: list = None
    seed: int = 1
    flux: FluxConfig = field(default_factory=FluxConfig)
    bc_mode: str = "both"
    pe: list = field(default_factory=lambda: [1.0, 100.0, 10000.0])
    ratios: list = None
    output_dir: str = "results"
    domain: str = None
    perturbation: float = None
    volume_schemes: list = field(default_factory=lambda: ["uniform", "multiresolution"])
    instances: list = field(default_factory=lambda: ["meshless"])
    skew: bool = True
    skew_pe: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0])
    skew_size: int = 64
    closures: list = field(default_factory=lambda: list(CLOSURES))
    reference_refinement: int = 2
    write_solutions: bool = True
    write_vtk: bool = False
    tol: float = 1e-8
    max_iter: int = 5000

    def __post_init__(self):
        self.experiment = parse_experiment(self.experiment)
        for key, value in _DEFAULTS[self.experiment].items():
            if getattr(self, key) is None:
                setattr(self, key, list(value) if isinstance(value, list) else value)
        if self.perturbation is None:
            self.perturbation = 0.2
        if self.ratios is None:
            self.ratios = [1.0]
        if isinstance(self.flux, dict):
            self.flux = FluxConfig(**self.flux)
        self.validate()

    def validate(self) -> None:
        sizes = list(self.sizes)
        if not sizes or any(int(n) != n or n < 2 for n in sizes):
            raise ConfigurationError("sizes must be integers >= 2")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigurationError("sizes must be strictly increasing")
        self.sizes = [int(n) for n in sizes]
        if self.bc_mode not in BC_MODES:
            raise ConfigurationError(f"bc_mode must be one of {BC_MODES}")
        self.domain = _DOMAIN_ALIASES.get(self.domain, self.domain)
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"domain must be one of {DOMAINS}")
        if not 0.0 <= self.perturbation < 0.5:
            raise ConfigurationError("perturbation must lie in [0, 0.5)")
        if any(pe <= 0 for pe in list(self.pe) + list(self.skew_pe)):
            raise ConfigurationError("Peclet numbers must be positive")
        if any(r <= 0 for r in self.ratios):
            raise ConfigurationError("diffusivity ratios must be positive")
        for v in self.volume_schemes:
            if v not in ("uniform", "multiresolution"):
                raise ConfigurationError(f"unknown volume scheme {v!r}")
        for v in self.instances:
            if v not in INSTANCES:
                raise ConfigurationError(f"unknown instance {v!r}")
        for v in self.closures:
            if v not in CLOSURES:
                raise ConfigurationError(f"unknown closure {v!r}")
        if self.reference_refinement < 1:
            raise ConfigurationError("reference_refinement must be >= 1")

    @property
    def bc_list(self) -> list:
        return ["dirichlet", "neumann"] if self.bc_mode == "both" else [self.bc_mode]

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


def _flux_from(value) -> FluxConfig:
    if isinstance(value, FluxConfig):
        return value
    try:
        if isinstance(value, str):
            return FluxConfig(advective=value)
        if isinstance(value, dict):
            return FluxConfig(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad flux config: {exc}") from exc
    raise ConfigurationError("flux must be a string or an object")


def config_from_dict(data: dict, **overrides) -> ExperimentConfig:
    """Build a config from JSON-like data; ``None`` overrides are ignored."""
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known - {"mean"}
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in data:
        raise ConfigurationError("config needs an 'experiment'")
    flux = _flux_from(data.pop("flux", FluxConfig()))
    if "mean" in data:
        try:
            flux = FluxConfig(advective=flux.advective, mean=DiffusivityMean(data.pop("mean")))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    try:
        return ExperimentConfig(flux=flux, **data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return config_from_dict(data, **overrides)


__all__ = ["Experiment", "ExperimentConfig", "config_from_dict", "load_config",
           "parse_experiment", "AdvectiveMode", "DiffusivityMean"]
