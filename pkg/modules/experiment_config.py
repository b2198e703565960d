"""
Experiment Configuration Module
Strict YAML parsing of experiment files into the typed settings used by every
command, and the resolved-config copy written next to each run's outputs
"""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, Union
import logging

import yaml

from config import Config
from modules.attention_solver import SolverConfig
from modules.cognitive_load import QualityTechnology
from modules.corpus_loader import TextMetricsConfig
from modules.did_estimator import DidSpec
from modules.exceptions import ConfigError
from modules.market import PRICING_RULES
from modules.mechanisms import MechanismParams
from modules.simulator import SimConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarketSettings:
    """Load coefficients and pricing rule of the static market"""

    alpha_attention: float = Config.ALPHA_ATTENTION
    alpha_memory: float = Config.ALPHA_MEMORY
    pricing_rule: str = 'anchor'

    def __post_init__(self):
        if self.alpha_attention <= 0 or self.alpha_memory <= 0:
            raise ValueError("load coefficients must be positive")
        if self.pricing_rule not in PRICING_RULES:
            raise ValueError(f"pricing_rule must be one of {PRICING_RULES}")


@dataclass(frozen=True)
class SweepSettings:
    """Market size and load grid of a complexity sweep"""

    n_investors: int = 20
    n_assets: int = 5
    load_grid: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    attention_capacity: float = 4.0
    memory_capacity: float = 8.0
    high_share: float = 0.5
    value_shock_std: float = 1.0
    anchor: float = 10.0
    compare_shares: Tuple[float, ...] = (0.8, 0.2)

    def __post_init__(self):
        if self.n_investors < 1 or self.n_assets < 1:
            raise ValueError("sweep needs at least one investor and one asset")
        if len(self.load_grid) < 3:
            raise ValueError("load_grid needs at least three points")


@dataclass(frozen=True)
class EstimationSettings:
    """DiD columns, event window and placebo size"""

    outcomes: Tuple[str, ...] = ('log_speed', 'accuracy', 'log_duration')
    treatment: str = 'treated'
    controls: Tuple[str, ...] = ('log_market_cap', 'institutional_ownership',
                                 'analyst_coverage')
    unit_key: Union[str, Tuple[str, ...]] = 'firm_id'
    time_key: Union[str, Tuple[str, ...]] = 'period'
    cluster_key: Optional[str] = None
    demean_tolerance: float = 1e-10
    max_demean_sweeps: int = 200
    period_key: str = 'period'
    adoption_key: str = 'adoption_period'
    event_window: Tuple[int, int] = (4, 6)
    binned: bool = True
    placebo_draws: int = 500
    heterogeneity: Optional[str] = None

    def __post_init__(self):
        if not self.outcomes:
            raise ValueError("at least one outcome is required")
        if len(self.event_window) != 2:
            raise ValueError("event_window must be [pre, post]")
        for outcome in self.outcomes:
            self.spec(outcome)

    def spec(self, outcome: Optional[str] = None) -> DidSpec:
        """DidSpec for one outcome (the first configured outcome by default)"""
        return DidSpec(
            outcome=outcome or self.outcomes[0],
            treatment=self.treatment,
            controls=tuple(self.controls),
            unit_key=self.unit_key,
            time_key=self.time_key,
            cluster_key=self.cluster_key,
            demean_tolerance=self.demean_tolerance,
            max_demean_sweeps=self.max_demean_sweeps,
            period_key=self.period_key,
            adoption_key=self.adoption_key,
        )


SECTIONS: Dict[str, Type] = {
    'simulation': SimConfig,
    'mechanisms': MechanismParams,
    'technology': QualityTechnology,
    'solver': SolverConfig,
    'did': EstimationSettings,
    'sweep': SweepSettings,
    'textmetrics': TextMetricsConfig,
    'market': MarketSettings,
}
TOP_LEVEL_KEYS = ('seed', 'output_dir', 'threads')


def _build_section(name: str, cls: Type, data: Any):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section [{name}] must be a mapping", {'section': name})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(map(str, unknown))}",
                          {'section': name, 'unknown_keys': unknown})
    kwargs = {key: tuple(value) if isinstance(value, list) else value
              for key, value in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{name}] settings: {e}", {'section': name}) from e


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """
    All settings of one experiment

    The top-level seed overrides the simulation and mechanism seeds so that a
    run is reproducible from its resolved copy alone.
    """

    seed: int = Config.DEFAULT_SEED
    output_dir: str = Config.OUTPUT_DIR
    threads: int = Config.THREADS
    simulation: SimConfig = field(default_factory=SimConfig)
    mechanisms: MechanismParams = field(default_factory=MechanismParams)
    technology: QualityTechnology = field(default_factory=QualityTechnology)
    solver: SolverConfig = field(default_factory=SolverConfig)
    did: EstimationSettings = field(default_factory=EstimationSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    textmetrics: TextMetricsConfig = field(default_factory=TextMetricsConfig)
    market: MarketSettings = field(default_factory=MarketSettings)

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError("threads must be at least 1", {'threads': self.threads})
        object.__setattr__(self, 'simulation', replace(self.simulation, rng_seed=self.seed))
        object.__setattr__(self, 'mechanisms', replace(self.mechanisms, rng_seed=self.seed))

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'ExperimentConfig':
        """
        Build from a parsed mapping, rejecting unknown keys at every level

        Raises:
            ConfigError: on unknown keys or invalid values
        """
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a mapping")
        unknown = sorted(set(data) - set(SECTIONS) - set(TOP_LEVEL_KEYS))
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(map(str, unknown))}",
                              {'unknown_keys': unknown})
        kwargs = {name: _build_section(name, cls_, data[name])
                  for name, cls_ in SECTIONS.items() if name in data}
        for key in TOP_LEVEL_KEYS:
            if key in data:
                kwargs[key] = data[key]
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid experiment config: {e}") from e

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}", {'path': str(path)})
        try:
            with open(path) as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}", {'path': str(path)}) from e
        logger.info(f"Loaded experiment config from {path}")
        return cls.from_dict(data)

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       threads: Optional[int] = None) -> 'ExperimentConfig':
        """Apply command-line overrides"""
        changes = {key: value for key, value in
                   (('seed', seed), ('output_dir', output_dir), ('threads', threads))
                   if value is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def write_resolved(self, path: Union[str, Path]) -> Path:
        """Write the fully resolved configuration as YAML"""
        path = Path(path)
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=True, default_flow_style=False)
        return path
