"""
Mechanisms Module
Selective attention, processing errors and strategic complexity as standalone
transforms used by the panel simulator
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Union
import logging

import numpy as np
from scipy import optimize

from config import Config
from modules.attention_solver import SolverConfig, solve_allocation
from modules.cognitive_load import (
    Disclosure,
    InvestorProfile,
    QualityTechnology,
    processing_quality,
)

logger = logging.getLogger(__name__)

COARSE_GRID_POINTS = 601


@dataclass(frozen=True)
class MechanismParams:
    """Parameters of the three cognitive-load mechanisms"""

    gamma: float = 0.1
    error_scale: float = 0.2
    complexity_benefit: float = 1.0
    complexity_cost: float = 0.01
    rng_seed: int = Config.DEFAULT_SEED
    processing_slots: int = 2
    max_structure: float = Config.MAX_STRUCTURE

    def __post_init__(self):
        for name in ('gamma', 'error_scale', 'complexity_benefit', 'complexity_cost'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.processing_slots < 1:
            raise ValueError("processing_slots must be at least 1")
        if self.max_structure <= 0:
            raise ValueError("max_structure must be positive")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def attention_probabilities(loads: Sequence[float], gamma: float) -> np.ndarray:
    """
    Probability of processing each disclosure: softmax of -gamma * load

    Args:
        loads: cognitive load per disclosure
        gamma: load sensitivity

    Returns:
        Probability vector summing to one
    """
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 1 or loads.shape[0] < 1:
        raise ValueError("at least one load is required")
    if not np.isfinite(loads).all():
        raise ValueError("loads must be finite")
    scores = -gamma * loads
    scores -= scores.max()
    weights = np.exp(scores)
    return weights / weights.sum()


def select_assets(loads: Sequence[float], gamma: float, processing_slots: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Sample processing_slots asset indices without replacement, in draw order"""
    probabilities = attention_probabilities(loads, gamma)
    m = probabilities.shape[0]
    if processing_slots > m:
        raise ValueError(f"processing_slots={processing_slots} exceeds {m} assets")
    if processing_slots == m:
        return np.arange(m)
    return rng.choice(m, size=processing_slots, replace=False, p=probabilities)


def sample_slot_masks(loads: Sequence[float], gamma: float, available: np.ndarray,
                      processing_slots: int, rng: np.random.Generator) -> np.ndarray:
    """
    Slot selection for a whole block of investors at once

    Perturbing the softmax logits with Gumbel noise and keeping the top
    processing_slots gives the same law as sequential sampling without
    replacement. Unavailable assets are never selected.

    Args:
        loads: cognitive load per asset (length M)
        gamma: load sensitivity
        available: N x M mask of assets each investor may still process
        processing_slots: slots per investor
        rng: numpy Generator

    Returns:
        N x M boolean selection mask
    """
    available = np.atleast_2d(np.asarray(available, dtype=bool))
    logits = -gamma * np.asarray(loads, dtype=float)
    keys = logits[None, :] + rng.gumbel(size=available.shape)
    keys = np.where(available, keys, -np.inf)
    slots = min(processing_slots, available.shape[1])
    top = np.argsort(-keys, axis=1, kind='stable')[:, :slots]
    mask = np.zeros_like(available)
    np.put_along_axis(mask, top, True, axis=1)
    return mask & available


def apply_selective_attention(quality: np.ndarray, loads: Sequence[float], gamma: float,
                              processing_slots: Union[int, Sequence[int]],
                              rng: np.random.Generator) -> np.ndarray:
    """
    Zero the quality of assets an investor does not select for processing

    Args:
        quality: investors x assets quality matrix
        loads: cognitive load per asset
        gamma: load sensitivity
        processing_slots: slots per investor (scalar or one per investor)
        rng: numpy Generator

    Returns:
        New quality matrix
    """
    quality = np.atleast_2d(np.asarray(quality, dtype=float))
    n, m = quality.shape
    slots = np.broadcast_to(np.asarray(processing_slots, dtype=int), (n,))
    if (slots < 1).any():
        raise ValueError("processing_slots must be at least 1")
    if (slots > m).any():
        raise ValueError(f"processing_slots exceeds the {m} available assets")

    selected = np.zeros_like(quality)
    for i in range(n):
        chosen = select_assets(loads, gamma, int(slots[i]), rng)
        selected[i, chosen] = quality[i, chosen]
    return selected


def error_multiplier(load: Union[float, np.ndarray],
                     total_capacity: Union[float, np.ndarray]) -> np.ndarray:
    """g(L, Theta) = L / (Theta_A + Theta_W)"""
    return np.asarray(load, dtype=float) / np.asarray(total_capacity, dtype=float)


def processing_error(content: float, load: float, investor: InvestorProfile,
                     params: MechanismParams, rng: np.random.Generator) -> float:
    """
    Content as perceived by an investor after a load-driven processing error

    Args:
        content: true disclosure content
        load: cognitive load of the disclosure
        investor: InvestorProfile supplying the capacities
        params: MechanismParams (error_scale)
        rng: numpy Generator

    Returns:
        content + epsilon * g(L, Theta)
    """
    if load < 0:
        raise ValueError(f"load must be nonnegative, got {load}")
    noise = rng.normal(0.0, params.error_scale)
    return float(content + noise * error_multiplier(load, investor.total_capacity))


def perceived_contents(contents: np.ndarray, loads: np.ndarray, total_capacities: np.ndarray,
                       error_scale: float, rng: np.random.Generator) -> np.ndarray:
    """
    Vectorized processing errors for an investors x assets block

    Args:
        contents: true content per asset (length M)
        loads: load per asset (length M)
        total_capacities: summed effective capacity per investor (length N)
        error_scale: standard deviation of the base noise
        rng: numpy Generator

    Returns:
        N x M perceived contents
    """
    contents = np.asarray(contents, dtype=float)
    g = error_multiplier(np.asarray(loads, dtype=float)[None, :],
                         np.asarray(total_capacities, dtype=float)[:, None])
    noise = rng.normal(0.0, error_scale, size=g.shape)
    return contents[None, :] + noise * g


def representative_quality(structure: float, investor: InvestorProfile, tech: QualityTechnology,
                           cfg: Optional[SolverConfig] = None,
                           alpha_attention: float = Config.ALPHA_ATTENTION,
                           alpha_memory: float = Config.ALPHA_MEMORY) -> float:
    """Quality the representative investor reaches on a lone disclosure of given structure"""
    disclosure = Disclosure.from_structure('representative', 1.0, structure,
                                           alpha_attention, alpha_memory)
    (theta_a, theta_w), _ = solve_allocation(investor, [disclosure], tech, cfg)
    return processing_quality(float(theta_a[0]), float(theta_w[0]), disclosure, tech)


def strategic_objective(structure: float, content: float, params: MechanismParams,
                        tech: QualityTechnology, investor: InvestorProfile,
                        cfg: Optional[SolverConfig] = None) -> float:
    """Pi(S) - kappa(S): bad-news suppression benefit net of quadratic complexity cost"""
    bad_news = max(0.0, -content)
    benefit = params.complexity_benefit * bad_news * (
        1.0 - representative_quality(structure, investor, tech, cfg))
    return benefit - params.complexity_cost * structure ** 2


def strategic_complexity(content: float, params: MechanismParams, tech: QualityTechnology,
                         investor: InvestorProfile, cfg: Optional[SolverConfig] = None) -> float:
    """
    Firm's best-response disclosure structure

    A coarse grid over [0, max_structure] locates the best cell, then a
    golden-section search refines inside the neighbouring cells.

    Args:
        content: disclosure content (negative means bad news)
        params: MechanismParams
        tech: processing technology
        investor: representative investor
        cfg: SolverConfig

    Returns:
        Chosen structure S*
    """
    if not np.isfinite(content):
        raise ValueError("content must be finite")
    if content >= 0:
        return 0.0

    def objective(s: float) -> float:
        return strategic_objective(s, content, params, tech, investor, cfg)

    grid = np.linspace(0.0, params.max_structure, COARSE_GRID_POINTS)
    values = np.array([objective(s) for s in grid])
    k = int(np.argmax(values))
    best_s, best_value = float(grid[k]), float(values[k])

    if 0 < k < len(grid) - 1 and values[k] > max(values[k - 1], values[k + 1]):
        try:
            result = optimize.minimize_scalar(lambda s: -objective(s),
                                              bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                              method='golden')
            s_refined = float(np.clip(result.x, grid[k - 1], grid[k + 1]))
            refined_value = objective(s_refined)
            if refined_value > best_value:
                best_s, best_value = s_refined, refined_value
        except ValueError as e:
            logger.debug(f"Golden-section refinement skipped: {e}")

    logger.debug(f"Strategic structure for content {content:.4f}: {best_s:.4f}")
    return best_s
