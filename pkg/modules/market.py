"""
Market Module
Aggregates investor processing quality into prices and measures mispricing
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from config import Config
from modules.attention_solver import SolverConfig, solve_market
from modules.cognitive_load import Disclosure, InvestorProfile, QualityTechnology

logger = logging.getLogger(__name__)

PRICING_RULES = ('anchor', 'literal')
WEIGHT_TOLERANCE = 1e-12


def normalize_weights(investors: Sequence[InvestorProfile]) -> List[InvestorProfile]:
    """Rescale market weights to sum to one (equal weights when all are zero)"""
    weights = np.array([inv.market_weight for inv in investors], dtype=float)
    total = weights.sum()
    if total <= 0:
        weights = np.full(len(investors), 1.0 / len(investors))
    else:
        weights = weights / total
    return [replace(inv, market_weight=float(w)) for inv, w in zip(investors, weights)]


@dataclass
class MarketState:
    """Investors, disclosures, values, anchors and the realized quality matrix"""

    investors: List[InvestorProfile]
    disclosures: List[Disclosure]
    fundamental_values: np.ndarray
    anchor_prices: np.ndarray
    quality: np.ndarray = field(default=None)
    pricing_rule: str = 'anchor'

    def __post_init__(self):
        n, m = len(self.investors), len(self.disclosures)
        self.fundamental_values = np.asarray(self.fundamental_values, dtype=float)
        self.anchor_prices = np.asarray(self.anchor_prices, dtype=float)
        if self.quality is None:
            self.quality = np.zeros((n, m))
        self.quality = np.atleast_2d(np.asarray(self.quality, dtype=float))

        if self.pricing_rule not in PRICING_RULES:
            raise ValueError(f"pricing_rule must be one of {PRICING_RULES}")
        if self.fundamental_values.shape != (m,) or self.anchor_prices.shape != (m,):
            raise ValueError(f"value and anchor vectors must have length {m}")
        if self.quality.shape != (n, m):
            raise ValueError(f"quality matrix must be {n} x {m}, got {self.quality.shape}")
        if (self.quality < 0).any() or (self.quality > 1).any():
            raise ValueError("quality entries must lie in [0, 1]")
        total = sum(inv.market_weight for inv in self.investors)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"market weights must sum to 1, got {total!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([inv.market_weight for inv in self.investors], dtype=float)

    def aggregate_quality(self) -> np.ndarray:
        """sum_i omega_i Q_ij per asset"""
        return self.weights @ self.quality

    def with_quality(self, quality: np.ndarray) -> 'MarketState':
        return replace(self, quality=quality)


def equilibrium_prices(state: MarketState) -> np.ndarray:
    """
    Prices implied by aggregate processing quality

    The anchor rule moves each price from its anchor toward fundamental value
    by aggregate quality; the literal rule prices processed value only.

    Args:
        state: MarketState

    Returns:
        Price vector
    """
    aggregate = state.aggregate_quality()
    if state.pricing_rule == 'literal':
        return aggregate * state.fundamental_values
    return state.anchor_prices + aggregate * (state.fundamental_values - state.anchor_prices)


def mispricing(state: MarketState, prices: np.ndarray) -> np.ndarray:
    """Absolute price-fundamental gap per asset"""
    return np.abs(np.asarray(prices, dtype=float) - state.fundamental_values)


def solve_state(state: MarketState, tech: QualityTechnology,
                cfg: Optional[SolverConfig] = None, threads: int = 1) -> MarketState:
    """Re-solve every investor's allocation and store the resulting quality matrix"""
    allocation, _ = solve_market(state.investors, state.disclosures, tech, cfg, threads)
    quality = np.clip(allocation.quality(state.disclosures, tech), 0.0, 1.0)
    return state.with_quality(quality)


def _structure_for_load(load: float, alpha_attention: float, alpha_memory: float) -> float:
    return load / max(alpha_attention, alpha_memory)


def proposition2_sweep(base_state: MarketState, load_grid: Sequence[float],
                       tech: QualityTechnology, cfg: Optional[SolverConfig] = None,
                       alpha_attention: float = Config.ALPHA_ATTENTION,
                       alpha_memory: float = Config.ALPHA_MEMORY,
                       threads: int = 1) -> pd.DataFrame:
    """
    Mean mispricing as every disclosure's load is raised along a grid

    Args:
        base_state: MarketState supplying investors, contents, values and anchors
        load_grid: nondecreasing load levels, at least three
        tech: processing technology
        cfg: SolverConfig
        alpha_attention: attention load per unit of structure
        alpha_memory: memory load per unit of structure
        threads: worker threads for the per-investor solves

    Returns:
        DataFrame with columns load, mean_mispricing
    """
    grid = np.asarray(load_grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 3:
        raise ValueError("load grid needs at least three points")
    if (np.diff(grid) < 0).any() or (grid < 0).any():
        raise ValueError("load grid must be nonnegative and nondecreasing")

    rows = []
    for load in grid:
        structure = _structure_for_load(load, alpha_attention, alpha_memory)
        disclosures = [d.with_structure(structure, alpha_attention, alpha_memory)
                       for d in base_state.disclosures]
        state = solve_state(replace(base_state, disclosures=disclosures), tech, cfg, threads)
        gap = mispricing(state, equilibrium_prices(state))
        rows.append({'load': float(load), 'mean_mispricing': float(gap.mean())})
        logger.info(f"Sweep load={load:g}: mean mispricing {gap.mean():.6f}")

    return pd.DataFrame(rows, columns=['load', 'mean_mispricing'])


def with_capacity_share(state: MarketState, high_share: float, high: float = 1.0,
                        low: float = 0.2) -> MarketState:
    """
    Assign high sophistication to the first share of investors, low to the rest

    Market weights are left unchanged.
    """
    if not 0.0 <= high_share <= 1.0:
        raise ValueError("high_share must lie in [0, 1]")
    n_high = int(round(high_share * len(state.investors)))
    investors = [replace(inv, sophistication=high if i < n_high else low)
                 for i, inv in enumerate(state.investors)]
    return replace(state, investors=investors)


def capacity_share_comparison(base_state: MarketState, load_grid: Sequence[float],
                              tech: QualityTechnology, cfg: Optional[SolverConfig] = None,
                              shares: Sequence[float] = (0.8, 0.2),
                              alpha_attention: float = Config.ALPHA_ATTENTION,
                              alpha_memory: float = Config.ALPHA_MEMORY,
                              threads: int = 1) -> pd.DataFrame:
    """
    Run the load sweep once per share of high-capacity investors

    Returns:
        Long DataFrame with columns high_share, load, mean_mispricing
    """
    frames = []
    for share in shares:
        table = proposition2_sweep(with_capacity_share(base_state, share), load_grid,
                                   tech, cfg, alpha_attention, alpha_memory, threads)
        table.insert(0, 'high_share', float(share))
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


def build_sweep_state(n_investors: int, n_assets: int, rng: np.random.Generator,
                      attention_capacity: float = 4.0, memory_capacity: float = 8.0,
                      high_share: float = 0.5, value_shock_std: float = 1.0,
                      anchor: float = 10.0,
                      pricing_rule: str = 'anchor') -> MarketState:
    """
    Random market for load sweeps: fundamentals equal anchor plus disclosure content

    Args:
        n_investors: number of investors
        n_assets: number of disclosing firms
        rng: numpy Generator
        attention_capacity: base attention budget
        memory_capacity: base working-memory budget
        high_share: share of investors at full sophistication (rest at 0.2)
        value_shock_std: standard deviation of disclosure content
        anchor: pre-disclosure price of every asset
        pricing_rule: 'anchor' or 'literal'

    Returns:
        MarketState with zero quality
    """
    contents = rng.normal(0.0, value_shock_std, size=n_assets)
    disclosures = [Disclosure.from_structure(f"firm_{j}", float(c), 1.0)
                   for j, c in enumerate(contents)]
    investors = normalize_weights([
        InvestorProfile(f"investor_{i}", attention_capacity, memory_capacity,
                        market_weight=1.0, sophistication=1.0)
        for i in range(n_investors)
    ])
    anchors = np.full(n_assets, anchor)
    state = MarketState(investors, disclosures, anchors + contents, anchors,
                        pricing_rule=pricing_rule)
    return with_capacity_share(state, high_share)


def write_sweep_csv(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a sweep table to CSV with its documented header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format='%.10g')
    logger.info(f"Sweep table written to {path}")
    return path
