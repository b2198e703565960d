"""
Panel Simulator Module
Simulates disclosure events firm by firm under staggered load-reducing treatment,
measures the three price-discovery outcomes and assembles the panel dataset
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
import pandas as pd

from config import Config
from modules.attention_solver import SolverConfig, solve_allocation
from modules.cognitive_load import (
    Disclosure,
    InvestorProfile,
    QualityTechnology,
    cognitive_load,
    quality_array,
)
from modules.exceptions import DegenerateEvent, NonConvergence
from modules.market import MarketState, equilibrium_prices, normalize_weights
from modules.mechanisms import (
    MechanismParams,
    perceived_contents,
    sample_slot_masks,
    strategic_complexity,
)

logger = logging.getLogger(__name__)

SPEED_THRESHOLD = 0.9
DURATION_GAP_THRESHOLD = 0.1
DEGENERATE_GAP = 1e-9

PANEL_COLUMNS = [
    'firm_id', 'period', 'group', 'cluster_id', 'adoption_period', 'treated',
    'years_since_treatment', 'log_speed', 'accuracy', 'log_duration', 'speed_days',
    'duration_days', 'censored', 'structure', 'processing_error', 'final_quality',
    'log_market_cap', 'institutional_ownership', 'analyst_coverage',
    'low_institutional', 'small_firm', 'low_analyst_coverage', 'anchor', 'fundamental',
]


def _default_cohorts() -> Dict[str, int]:
    return {'early': 12, 'middle': 18, 'late': 24, 'never': 40}


@dataclass(frozen=True)
class SimConfig:
    """Size, treatment design and heterogeneity of a simulated panel"""

    n_firms: int = 200
    n_investors: int = 50
    n_periods: int = 40
    trading_days_per_period: int = 30
    items_per_disclosure: int = 3
    treatment_start_periods: Dict[str, int] = field(default_factory=_default_cohorts)
    treatment_load_multiplier: float = 0.7
    sophistication_mix_range: Tuple[float, float] = (0.2, 0.9)
    ownership_noise_std: float = 0.05
    value_shock_std: float = 1.0
    structure_range: Tuple[float, float] = (12.0, 29.0)
    structure_noise_std: float = 0.05
    item_spread: float = 0.3
    attention_capacity: float = 12.0
    memory_capacity: float = 24.0
    high_sophistication: float = 1.0
    low_sophistication: float = 0.2
    initial_price: float = 50.0
    completion_threshold: float = 0.99
    strategic_complexity: bool = False
    dump_paths: bool = False
    rng_seed: int = Config.DEFAULT_SEED

    def __post_init__(self):
        for name in ('n_firms', 'n_investors', 'n_periods', 'trading_days_per_period',
                     'items_per_disclosure'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.treatment_load_multiplier <= 1.0:
            raise ValueError("treatment_load_multiplier must lie in (0, 1]")
        if not self.treatment_start_periods:
            raise ValueError("at least one treatment cohort is required")
        for group, start in self.treatment_start_periods.items():
            if not 0 <= start <= self.n_periods:
                raise ValueError(f"adoption period {start} of group {group!r} outside "
                                 f"[0, {self.n_periods}]")
        low, high = self.sophistication_mix_range
        if not 0.0 <= low <= high <= 1.0:
            raise ValueError("sophistication_mix_range must be an ordered pair in [0, 1]")
        if not 0.0 < self.structure_range[0] <= self.structure_range[1]:
            raise ValueError("structure_range must be an ordered positive pair")
        if not 0.0 <= self.item_spread < 1.0:
            raise ValueError("item_spread must lie in [0, 1)")
        if not 0.0 < self.completion_threshold < 1.0:
            raise ValueError("completion_threshold must lie in (0, 1)")
        if self.value_shock_std <= 0:
            raise ValueError("value_shock_std must be positive")

    def cohort_of(self, firm_index: int) -> Tuple[str, int]:
        """Round-robin assignment of firms to adoption cohorts"""
        groups = list(self.treatment_start_periods.items())
        return groups[firm_index % len(groups)]


@dataclass(frozen=True)
class EventOutcome:
    """Price-discovery outcomes of one disclosure event"""

    incorporation_speed_days: float
    incorporation_accuracy: float
    mispricing_duration_days: float
    censored: bool = False


@dataclass(frozen=True)
class FirmEvent:
    """Everything a single disclosure event needs besides the mechanisms"""

    firm_id: str
    period: int
    contents: np.ndarray
    item_structures: np.ndarray
    anchor: float
    investors: List[InvestorProfile]

    @property
    def fundamental(self) -> float:
        return float(self.anchor + np.sum(self.contents))


@dataclass
class EventResult:
    path: np.ndarray
    outcome: EventOutcome
    processing_error: float
    final_quality: float


@dataclass(frozen=True)
class PanelObservation:
    """One firm-period row of the panel"""

    firm_id: str
    period: int
    group: str
    cluster_id: str
    adoption_period: int
    treated: int
    years_since_treatment: int
    log_speed: float
    accuracy: float
    log_duration: float
    speed_days: float
    duration_days: float
    censored: bool
    structure: float
    processing_error: float
    final_quality: float
    log_market_cap: float
    institutional_ownership: float
    analyst_coverage: float
    low_institutional: int = 0
    small_firm: int = 0
    low_analyst_coverage: int = 0
    anchor: float = 0.0
    fundamental: float = 0.0

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)


def extract_outcomes(path: Sequence[float], fundamental: float, anchor: float,
                     trading_days: Optional[int] = None) -> EventOutcome:
    """
    Speed, accuracy and mispricing duration of a daily price path

    path[0] is the release day price (the anchor); path[t] the close of day t.

    Args:
        path: daily prices, day 0 through the end of the period
        fundamental: post-disclosure fundamental value
        anchor: pre-disclosure price
        trading_days: period cap (defaults to the path length)

    Returns:
        EventOutcome

    Raises:
        DegenerateEvent: if the fundamental gap is zero
    """
    path = np.asarray(path, dtype=float)
    days = trading_days if trading_days is not None else path.shape[0] - 1
    gap = fundamental - anchor
    if abs(gap) < DEGENERATE_GAP:
        raise DegenerateEvent("no fundamental gap to incorporate",
                              {'fundamental': fundamental, 'anchor': anchor})

    residual = np.abs(path - fundamental)
    above = np.nonzero(residual > DURATION_GAP_THRESHOLD * abs(gap))[0]
    duration = float(above[-1]) if above.size else 0.0
    censored = bool(above.size and above[-1] >= days)

    eventual = path[-1] - anchor
    if abs(eventual) < DEGENERATE_GAP:
        return EventOutcome(float(days), 0.0, float(days), censored=True)

    adjustment = (path[1:] - anchor) / eventual
    reached = np.nonzero(adjustment >= SPEED_THRESHOLD - 1e-12)[0]
    speed = float(reached[0] + 1) if reached.size else float(days)
    accuracy = float(np.clip(adjustment[0], 0.0, 1.0))
    return EventOutcome(min(speed, float(days)), accuracy, min(duration, float(days)), censored)


def _selection_codes(mask: np.ndarray) -> np.ndarray:
    bits = 1 << np.arange(mask.shape[1])
    return (mask.astype(np.int64) * bits[None, :]).sum(axis=1)


def simulate_event(event: FirmEvent, mechanisms: MechanismParams, tech: QualityTechnology,
                   solver_cfg: SolverConfig, rng: np.random.Generator, trading_days: int,
                   completion_threshold: float = 0.99) -> EventResult:
    """
    Day-by-day processing of one disclosure event

    Each day every investor with unfinished items selects up to its processing
    slots by selective attention, solves its allocation over the selected items
    and extracts that day's quality from what remains unprocessed. Prices
    aggregate cumulative quality over the investors' perceived contents.

    Args:
        event: FirmEvent
        mechanisms: MechanismParams
        tech: processing technology
        solver_cfg: SolverConfig
        rng: numpy Generator owned by this firm
        trading_days: days in the period
        completion_threshold: cumulative quality at which an item counts as processed

    Returns:
        EventResult with the daily path, outcome and channel diagnostics
    """
    contents = np.asarray(event.contents, dtype=float)
    fundamental = event.fundamental
    if abs(fundamental - event.anchor) < DEGENERATE_GAP:
        raise DegenerateEvent(f"degenerate event for firm {event.firm_id}",
                              {'firm_id': event.firm_id, 'period': event.period})

    items = [Disclosure.from_structure(f"{event.firm_id}:{event.period}:{k}", float(c), float(s))
             for k, (c, s) in enumerate(zip(contents, event.item_structures))]
    loads = np.array([cognitive_load(d) for d in items])
    investors = event.investors
    n, k_items = len(investors), len(items)
    weights = np.array([inv.market_weight for inv in investors])

    perceived = perceived_contents(contents, loads,
                                   np.array([inv.total_capacity for inv in investors]),
                                   mechanisms.error_scale, rng)

    # investors sharing capacities share solutions
    profiles: Dict[Tuple[float, float], int] = {}
    type_index = np.array([profiles.setdefault((inv.effective_attention, inv.effective_memory),
                                               len(profiles)) for inv in investors])
    representatives = {idx: investors[int(np.argmax(type_index == idx))]
                       for idx in profiles.values()}
    day_quality: Dict[int, np.ndarray] = {}

    def quality_for(code: int) -> np.ndarray:
        if code not in day_quality:
            type_id, bitmask = divmod(code, 1 << k_items)
            chosen = [j for j in range(k_items) if bitmask & (1 << j)]
            (theta_a, theta_w), _ = solve_allocation(representatives[type_id],
                                                     [items[j] for j in chosen], tech, solver_cfg)
            row = np.zeros(k_items)
            row[chosen] = _chosen_quality(theta_a, theta_w, [items[j] for j in chosen], tech)
            day_quality[code] = row
        return day_quality[code]

    remaining = np.ones((n, k_items))
    path = np.empty(trading_days + 1)
    path[0] = event.anchor
    for day in range(1, trading_days + 1):
        active = remaining > 1.0 - completion_threshold
        if not active.any():
            path[day:] = path[day - 1]
            break
        selected = sample_slot_masks(loads, mechanisms.gamma, active,
                                     mechanisms.processing_slots, rng)
        codes = type_index * (1 << k_items) + _selection_codes(selected)
        for code in np.unique(codes[selected.any(axis=1)]):
            members = codes == code
            remaining[members] *= 1.0 - quality_for(int(code))

        path[day] = event.anchor + _event_price(investors, items, perceived, contents,
                                                 1.0 - remaining)

    quality = 1.0 - remaining
    aggregate = weights @ quality
    error = float(weights @ np.abs(perceived - contents[None, :]).mean(axis=1))
    outcome = extract_outcomes(path, fundamental, event.anchor, trading_days)
    return EventResult(path, outcome, error, float(aggregate.mean()))


def _chosen_quality(theta_a: np.ndarray, theta_w: np.ndarray, chosen: List[Disclosure],
                    tech: QualityTechnology) -> np.ndarray:
    loads_a = np.array([d.attention_load for d in chosen])
    loads_w = np.array([d.memory_load for d in chosen])
    return quality_array(theta_a, theta_w, loads_a, loads_w, tech)


def _event_price(investors: List[InvestorProfile], items: List[Disclosure],
                 perceived: np.ndarray, contents: np.ndarray, quality: np.ndarray) -> float:
    """Sum over items of aggregate-quality-weighted perceived content"""
    weights = np.array([inv.market_weight for inv in investors])
    aggregate = weights @ quality
    processed = weights @ (quality * perceived)
    consensus = np.where(aggregate > 0, processed / np.where(aggregate > 0, aggregate, 1.0),
                         contents)
    state = MarketState(investors, items, consensus, np.zeros(len(items)), quality)
    return float(equilibrium_prices(state).sum())


def build_investors(cfg: SimConfig, n_high: int) -> List[InvestorProfile]:
    """Equal-weight investor population with n_high sophisticated investors"""
    investors = [
        InvestorProfile(
            f"investor_{i}", cfg.attention_capacity, cfg.memory_capacity, market_weight=1.0,
            sophistication=cfg.high_sophistication if i < n_high else cfg.low_sophistication,
        )
        for i in range(cfg.n_investors)
    ]
    return normalize_weights(investors)


class StrategicStructureTable:
    """
    Strategic structure S* tabulated over bad-news content and interpolated

    Built once per run so that firms share the best responses.
    """

    def __init__(self, cfg: SimConfig, mechanisms: MechanismParams, tech: QualityTechnology,
                 solver_cfg: SolverConfig, points: int = 41):
        self.contents = np.linspace(-4.0 * cfg.value_shock_std, 0.0, points)
        representative = InvestorProfile('representative', cfg.attention_capacity,
                                         cfg.memory_capacity, 1.0, cfg.high_sophistication)
        self.structures = np.array([
            strategic_complexity(float(c), mechanisms, tech, representative, solver_cfg)
            for c in self.contents
        ])
        logger.info(f"Strategic structure table built over {points} content levels")

    def __call__(self, content: float) -> float:
        if content >= 0:
            return 0.0
        return float(np.interp(content, self.contents, self.structures))


@dataclass
class FirmResult:
    observations: List[PanelObservation]
    paths: List[Dict[str, float]]
    excluded: int


def simulate_firm(firm_index: int, cfg: SimConfig, mechanisms: MechanismParams,
                  tech: QualityTechnology, solver_cfg: SolverConfig,
                  seed: np.random.SeedSequence,
                  strategic_table: Optional[StrategicStructureTable] = None) -> FirmResult:
    """
    All periods of one firm, driven by the firm's own generator stream

    Every draw happens whether or not the firm is treated, so the treatment
    multiplier changes loads only.
    """
    rng = np.random.default_rng(seed)
    firm_id = f"firm_{firm_index:04d}"
    group, adoption = cfg.cohort_of(firm_index)

    base_structure = rng.uniform(*cfg.structure_range)
    base_mix = rng.uniform(*cfg.sophistication_mix_range)
    log_market_cap = rng.normal(0.0, 1.0)
    coverage_rate = rng.uniform(1.0, 12.0)
    item_sd = cfg.value_shock_std / np.sqrt(cfg.items_per_disclosure)

    anchor = cfg.initial_price
    observations, paths, excluded = [], [], 0
    for period in range(cfg.n_periods):
        treated = int(period >= adoption)
        mix = float(np.clip(base_mix + rng.normal(0.0, cfg.ownership_noise_std), 0.0, 1.0))
        n_high = int(round(mix * cfg.n_investors))
        log_market_cap += rng.normal(0.0, 0.1)
        coverage = float(rng.poisson(coverage_rate))
        contents = rng.normal(0.0, item_sd, size=cfg.items_per_disclosure)
        item_factors = rng.uniform(1.0 - cfg.item_spread, 1.0 + cfg.item_spread,
                                   size=cfg.items_per_disclosure)
        structure = base_structure * np.exp(rng.normal(0.0, cfg.structure_noise_std))
        if strategic_table is not None:
            structure += strategic_table(float(contents.sum()))
        if treated:
            structure *= cfg.treatment_load_multiplier

        event = FirmEvent(firm_id, period, contents, structure * item_factors, anchor,
                          build_investors(cfg, n_high))
        try:
            result = simulate_event(event, mechanisms, tech, solver_cfg, rng,
                                    cfg.trading_days_per_period, cfg.completion_threshold)
        except DegenerateEvent as e:
            logger.warning(f"Excluded {firm_id} period {period}: {e.message}")
            excluded += 1
            continue
        except NonConvergence as e:
            e.context.update({'firm_id': firm_id, 'period': period})
            raise

        outcome = result.outcome
        if outcome.censored:
            logger.debug(f"{firm_id} period {period}: censored event")
        observations.append(PanelObservation(
            firm_id=firm_id,
            period=period,
            group=group,
            cluster_id=group,
            adoption_period=adoption,
            treated=treated,
            years_since_treatment=period - adoption if treated else 0,
            log_speed=float(np.log(outcome.incorporation_speed_days)),
            accuracy=outcome.incorporation_accuracy,
            log_duration=float(np.log1p(outcome.mispricing_duration_days)),
            speed_days=outcome.incorporation_speed_days,
            duration_days=outcome.mispricing_duration_days,
            censored=outcome.censored,
            structure=float(structure),
            processing_error=result.processing_error,
            final_quality=result.final_quality,
            log_market_cap=float(log_market_cap),
            institutional_ownership=n_high / cfg.n_investors,
            analyst_coverage=coverage,
            anchor=float(anchor),
            fundamental=event.fundamental,
        ))
        if cfg.dump_paths:
            paths.extend({'firm_id': firm_id, 'period': period, 'day': day,
                          'price': float(price), 'fundamental': event.fundamental}
                         for day, price in enumerate(result.path))
        anchor = float(result.path[-1])

    return FirmResult(observations, paths, excluded)


def _simulate_firm_job(args) -> FirmResult:
    return simulate_firm(*args)


def _flag_terciles(observations: List[PanelObservation]) -> List[PanelObservation]:
    """Bottom-tercile ownership and size, below-median coverage; all on firm averages"""
    if not observations:
        return observations
    frame = pd.DataFrame([o.to_record() for o in observations])
    firm_means = frame.groupby('firm_id')[['institutional_ownership', 'log_market_cap',
                                           'analyst_coverage']].mean()
    ownership = firm_means['institutional_ownership']
    size = firm_means['log_market_cap']
    low_inst = ownership <= ownership.quantile(1 / 3)
    small = size <= size.quantile(1 / 3)
    coverage = firm_means['analyst_coverage']
    low_coverage = coverage < coverage.median()
    return [
        PanelObservation(**{**o.to_record(),
                            'low_institutional': int(low_inst[o.firm_id]),
                            'small_firm': int(small[o.firm_id]),
                            'low_analyst_coverage': int(low_coverage[o.firm_id])})
        for o in observations
    ]


def run_simulation(cfg: SimConfig, mechanisms: Optional[MechanismParams] = None,
                   tech: Optional[QualityTechnology] = None,
                   solver_cfg: Optional[SolverConfig] = None,
                   threads: int = 1) -> Tuple[List[PanelObservation], pd.DataFrame]:
    """
    Simulate the whole panel

    Firms run on independent generator streams spawned from the master seed and
    are merged in (firm, period) order, so output does not depend on threads.

    Args:
        cfg: SimConfig
        mechanisms: MechanismParams
        tech: processing technology
        solver_cfg: SolverConfig
        threads: worker processes

    Returns:
        Tuple of (panel observations, daily paths frame; empty unless dump_paths)
    """
    mechanisms = mechanisms or MechanismParams()
    tech = tech or QualityTechnology()
    solver_cfg = solver_cfg or SolverConfig()
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_firms)
    strategic_table = (StrategicStructureTable(cfg, mechanisms, tech, solver_cfg)
                       if cfg.strategic_complexity else None)

    jobs = [(j, cfg, mechanisms, tech, solver_cfg, seeds[j], strategic_table)
            for j in range(cfg.n_firms)]
    logger.info(f"Simulating {cfg.n_firms} firms x {cfg.n_periods} periods "
                f"(seed={cfg.rng_seed}, threads={threads})")
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunksize = max(1, len(jobs) // (4 * threads))
            results = list(pool.map(_simulate_firm_job, jobs, chunksize=chunksize))
    else:
        results = [_simulate_firm_job(job) for job in jobs]

    observations = [obs for result in results for obs in result.observations]
    observations.sort(key=lambda o: (o.firm_id, o.period))
    excluded = sum(result.excluded for result in results)
    logger.info(f"Simulation finished: {len(observations)} rows, {excluded} excluded events")

    paths = pd.DataFrame([row for result in results for row in result.paths],
                         columns=['firm_id', 'period', 'day', 'price', 'fundamental'])
    return _flag_terciles(observations), paths


def panel_frame(observations: Sequence[PanelObservation]) -> pd.DataFrame:
    """Panel observations as a DataFrame with the documented column order"""
    return pd.DataFrame([o.to_record() for o in observations], columns=PANEL_COLUMNS)


def write_panel(observations: Sequence[PanelObservation], out_dir: Union[str, Path],
                metadata: Dict[str, Any], paths: Optional[pd.DataFrame] = None) -> Path:
    """
    Write panel.csv plus a panel_metadata.json sidecar (and paths.csv if given)

    Returns:
        Path of the panel CSV
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel_path = out_dir / 'panel.csv'
    panel_frame(observations).to_csv(panel_path, index=False, float_format='%.10g')
    with open(out_dir / 'panel_metadata.json', 'w') as f:
        json.dump({'rows': len(observations), 'columns': PANEL_COLUMNS, **metadata},
                  f, indent=2, sort_keys=True, default=str)
    if paths is not None and not paths.empty:
        paths.to_csv(out_dir / 'paths.csv', index=False, float_format='%.10g')
    logger.info(f"Panel with {len(observations)} rows written to {panel_path}")
    return panel_path
