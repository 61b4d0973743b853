"""Experiment configuration: YAML blocks, validation, and object builders.

A config file holds the six blocks below; every key has a default equal
to the reference experiment (put option, hide-small sweep), so a partial
file or an empty one is valid. Unknown keys anywhere are rejected.
Loading the dump of a config returns an equal config, and the sha256
hash of the canonical dump identifies a run in result files.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from typing import List, Tuple, Union

import yaml

from .drivers import DriverContext
from .levy_model import (
    DiscreteJumpGrid,
    HideLarge,
    HideSmall,
    LevyMarketSpec,
    NoSignal,
    SignalScenario,
    build_grid,
)
from .simulate import TimeGrid, payoff_terminal

__all__ = [
    "MarketBlock",
    "GridBlock",
    "SchemeBlock",
    "ScenarioBlock",
    "PayoffBlock",
    "UtilityBlock",
    "FlagsBlock",
    "ExperimentConfig",
    "load_config",
    "load_config_text",
    "dump_config",
    "config_hash",
]

_VARIANTS = ("nosignal", "hidesmall", "hidelarge")


@dataclass(frozen=True)
class MarketBlock:
    rho: float = 0.1
    alpha: float = 1.5
    epsilon: float = 0.01
    kappa: Union[float, str] = "compensate"
    sigma: float = 0.2
    s0: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if isinstance(self.kappa, str) and self.kappa != "compensate":
            raise ValueError(f"kappa must be a number or 'compensate', got {self.kappa!r}")


@dataclass(frozen=True)
class GridBlock:
    q: int = 20
    e_min: float = 0.05
    e_max: float = 5.0
    layout: str = "geometric"


@dataclass(frozen=True)
class SchemeBlock:
    n_steps: int = 10
    n_paths: int = 65536
    n_cells: int = 64
    design: str = "const"
    min_count: int = 50
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(self.seeds) == 0:
            raise ValueError("seeds must be nonempty")
        if self.design not in ("const", "const-linear"):
            raise ValueError(f"unknown design {self.design!r}")


@dataclass(frozen=True)
class ScenarioBlock:
    variant: str = "hidesmall"
    c_values: Tuple[float, ...] = (0.1, 0.3, 0.6, 1.0, 2.0)

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        if any(c <= 0 for c in self.c_values):
            raise ValueError("cutoffs must be > 0")


@dataclass(frozen=True)
class PayoffBlock:
    type: str = "put"
    strike: float = 1.0


@dataclass(frozen=True)
class UtilityBlock:
    lam: float = 0.4
    pi_lower: float = 1.0
    pi_upper: float = 1.0
    x: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.pi_lower < 0 or self.pi_upper < 0:
            raise ValueError("position bounds must be >= 0")


@dataclass(frozen=True)
class FlagsBlock:
    sigma_in_square: bool = True


_BLOCKS = {
    "market": MarketBlock,
    "grid": GridBlock,
    "scheme": SchemeBlock,
    "scenario": ScenarioBlock,
    "payoff": PayoffBlock,
    "utility": UtilityBlock,
    "flags": FlagsBlock,
}


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketBlock = field(default_factory=MarketBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    scheme: SchemeBlock = field(default_factory=SchemeBlock)
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)
    payoff: PayoffBlock = field(default_factory=PayoffBlock)
    utility: UtilityBlock = field(default_factory=UtilityBlock)
    flags: FlagsBlock = field(default_factory=FlagsBlock)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ValueError(f"config root must be a mapping, got {type(data).__name__}")
        unknown = set(data) - set(_BLOCKS)
        if unknown:
            raise ValueError(f"unknown config block(s): {sorted(unknown)}")
        kwargs = {}
        for name, block_cls in _BLOCKS.items():
            block_data = data.get(name, {}) or {}
            allowed = {f.name for f in fields(block_cls)}
            bad = set(block_data) - allowed
            if bad:
                raise ValueError(f"unknown key(s) in block {name!r}: {sorted(bad)}")
            kwargs[name] = block_cls(**block_data)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in _BLOCKS:
            block = getattr(self, name)
            d = dataclasses.asdict(block)
            for k, v in d.items():
                if isinstance(v, tuple):
                    d[k] = list(v)
            out[name] = d
        return out

    # builders

    def market_spec(self) -> LevyMarketSpec:
        mb = self.market
        base = dict(rho=mb.rho, alpha=mb.alpha, epsilon=mb.epsilon,
                    sigma=mb.sigma, s0=mb.s0, T=mb.T)
        if mb.kappa == "compensate":
            probe = LevyMarketSpec(kappa=0.0, **base)
            return LevyMarketSpec(kappa=probe.eta_integral(), **base)
        return LevyMarketSpec(kappa=float(mb.kappa), **base)

    def jump_grid(self, spec: LevyMarketSpec) -> DiscreteJumpGrid:
        gb = self.grid
        return build_grid(gb.q, spec, e_min=gb.e_min, e_max=gb.e_max, layout=gb.layout)

    def time_grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.scheme.n_steps, self.market.T)

    def scenarios(self) -> List[SignalScenario]:
        sb = self.scenario
        if sb.variant == "nosignal" or not sb.c_values:
            return [NoSignal()]
        mk = HideSmall if sb.variant == "hidesmall" else HideLarge
        return [mk(c=c) for c in sb.c_values]

    def driver_context(self, spec: LevyMarketSpec, grid: DiscreteJumpGrid,
                       scenario: SignalScenario) -> DriverContext:
        ub = self.utility
        return DriverContext.build(spec, grid, scenario, ub.lam,
                                   pi_lower=ub.pi_lower, pi_upper=ub.pi_upper,
                                   sigma_in_square=self.flags.sigma_in_square)

    def payoff_values(self, s_t):
        return payoff_terminal(s_t, self.payoff.type, self.payoff.strike)


def load_config(path) -> ExperimentConfig:
    """Load a config from a YAML file; missing blocks fall back to defaults."""
    with open(path, "r") as fh:
        return load_config_text(fh.read())


def load_config_text(text: str) -> ExperimentConfig:
    return ExperimentConfig.from_dict(yaml.safe_load(text) or {})


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML dump (sorted keys); load(dump(cfg)) == cfg."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]
