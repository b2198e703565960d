"""
Cognitive Load Module
Domain types and pure functions of the cognitive-load model: disclosure load,
processing-quality technology and investor utility
"""
from dataclasses import dataclass
from typing import Sequence, Tuple, Union
import logging

import numpy as np

from config import Config

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def load_components(structure: float,
                    alpha_attention: float = Config.ALPHA_ATTENTION,
                    alpha_memory: float = Config.ALPHA_MEMORY) -> Tuple[float, float]:
    """
    Map presentation complexity to the two load components

    Args:
        structure: S_j, nonnegative structural complexity
        alpha_attention: attention load per unit of structure
        alpha_memory: working-memory load per unit of structure

    Returns:
        Tuple of (attention load, memory load)
    """
    if structure < 0:
        raise ValueError(f"structure must be nonnegative, got {structure}")
    return alpha_attention * structure, alpha_memory * structure


@dataclass(frozen=True)
class Disclosure:
    """One firm's information release: content, structure and its cognitive load"""

    firm_id: str
    content: float
    structure: float
    attention_load: float
    memory_load: float

    def __post_init__(self):
        if self.structure < 0:
            raise ValueError(f"structure must be nonnegative, got {self.structure}")
        if self.attention_load < 0 or self.memory_load < 0:
            raise ValueError(
                f"load components must be nonnegative, got "
                f"({self.attention_load}, {self.memory_load})"
            )

    @classmethod
    def from_structure(cls, firm_id: str, content: float, structure: float,
                       alpha_attention: float = Config.ALPHA_ATTENTION,
                       alpha_memory: float = Config.ALPHA_MEMORY) -> 'Disclosure':
        """Build a disclosure whose loads follow the linear structure map"""
        attention_load, memory_load = load_components(structure, alpha_attention, alpha_memory)
        return cls(firm_id, float(content), float(structure), attention_load, memory_load)

    def with_structure(self, structure: float,
                       alpha_attention: float = Config.ALPHA_ATTENTION,
                       alpha_memory: float = Config.ALPHA_MEMORY) -> 'Disclosure':
        """Same content, new structure and recomputed loads"""
        return Disclosure.from_structure(self.firm_id, self.content, structure,
                                         alpha_attention, alpha_memory)

    def load(self) -> float:
        return cognitive_load(self)


@dataclass(frozen=True)
class InvestorProfile:
    """
    Cognitive capacities and market weight of one investor

    The capacity fields hold base budgets; the effective budgets used by the
    solver are scaled by sophistication.
    """

    investor_id: str
    attention_capacity: float
    memory_capacity: float
    market_weight: float = 0.0
    sophistication: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sophistication <= 1.0:
            raise ValueError(f"sophistication must lie in [0, 1], got {self.sophistication}")
        if self.market_weight < 0:
            raise ValueError(f"market weight must be nonnegative, got {self.market_weight}")
        if self.effective_attention <= 0 or self.effective_memory <= 0:
            raise ValueError(
                f"investor {self.investor_id}: capacities must be strictly positive"
            )

    @property
    def effective_attention(self) -> float:
        return self.attention_capacity * self.sophistication

    @property
    def effective_memory(self) -> float:
        return self.memory_capacity * self.sophistication

    @property
    def total_capacity(self) -> float:
        return self.effective_attention + self.effective_memory


@dataclass(frozen=True)
class QualityTechnology:
    """Saturating-exponential processing technology with shape parameters a and b"""

    saturation_attention: float = 1.0
    saturation_memory: float = 1.0

    def __post_init__(self):
        if self.saturation_attention <= 0 or self.saturation_memory <= 0:
            raise ValueError("saturation parameters must be strictly positive")


@dataclass
class AllocationMatrix:
    """Attention and working-memory allocations, investors by assets"""

    attention: np.ndarray
    memory: np.ndarray

    def __post_init__(self):
        self.attention = np.atleast_2d(np.asarray(self.attention, dtype=float))
        self.memory = np.atleast_2d(np.asarray(self.memory, dtype=float))
        if self.attention.shape != self.memory.shape:
            raise ValueError("attention and memory allocations must share a shape")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.attention.shape

    def is_feasible(self, investors: Sequence[InvestorProfile], tolerance: float = 1e-9) -> bool:
        """Check nonnegativity and both per-investor budget constraints"""
        if len(investors) != self.attention.shape[0]:
            return False
        if (self.attention < 0).any() or (self.memory < 0).any():
            return False
        budgets_a = np.array([inv.effective_attention for inv in investors])
        budgets_w = np.array([inv.effective_memory for inv in investors])
        return bool(
            (self.attention.sum(axis=1) <= budgets_a + tolerance).all()
            and (self.memory.sum(axis=1) <= budgets_w + tolerance).all()
        )

    def quality(self, disclosures: Sequence[Disclosure], tech: QualityTechnology) -> np.ndarray:
        """Processing-quality matrix Q_ij implied by the allocation"""
        loads_a = np.array([d.attention_load for d in disclosures])
        loads_w = np.array([d.memory_load for d in disclosures])
        return quality_array(self.attention, self.memory, loads_a, loads_w, tech)


def cognitive_load(d: Disclosure) -> float:
    """
    Cognitive load of a disclosure: the binding one of its two resource demands

    Args:
        d: Disclosure

    Returns:
        max(attention load, memory load)
    """
    return max(d.attention_load, d.memory_load)


def _factor(theta: ArrayLike, load: ArrayLike, rate: float) -> np.ndarray:
    # zero load means no barrier: factor 1
    theta = np.asarray(theta, dtype=float)
    load = np.asarray(load, dtype=float)
    safe = np.where(load > 0, load, 1.0)
    return np.where(load > 0, -np.expm1(-rate * theta / safe), 1.0)


def _factor_slope(theta: ArrayLike, load: ArrayLike, rate: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    load = np.asarray(load, dtype=float)
    safe = np.where(load > 0, load, 1.0)
    return np.where(load > 0, (rate / safe) * np.exp(-rate * theta / safe), 0.0)


def quality_array(theta_a: ArrayLike, theta_w: ArrayLike, loads_a: ArrayLike,
                  loads_w: ArrayLike, tech: QualityTechnology) -> np.ndarray:
    """Vectorized processing quality; arguments broadcast against each other"""
    return (_factor(theta_a, loads_a, tech.saturation_attention)
            * _factor(theta_w, loads_w, tech.saturation_memory))


def quality_gradient_array(theta_a: ArrayLike, theta_w: ArrayLike, loads_a: ArrayLike,
                           loads_w: ArrayLike,
                           tech: QualityTechnology) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized partial derivatives of quality in the two allocations"""
    fa = _factor(theta_a, loads_a, tech.saturation_attention)
    fw = _factor(theta_w, loads_w, tech.saturation_memory)
    da = _factor_slope(theta_a, loads_a, tech.saturation_attention) * fw
    dw = _factor_slope(theta_w, loads_w, tech.saturation_memory) * fa
    return da, dw


def processing_quality(theta_a: float, theta_w: float, d: Disclosure,
                       tech: QualityTechnology) -> float:
    """
    Quality of information extraction for one investor and one disclosure

    Args:
        theta_a: attention allocated
        theta_w: working memory allocated
        d: Disclosure being processed
        tech: processing technology

    Returns:
        Q in [0, 1)
    """
    if theta_a < 0 or theta_w < 0:
        raise ValueError(f"allocations must be nonnegative, got ({theta_a}, {theta_w})")
    return float(quality_array(theta_a, theta_w, d.attention_load, d.memory_load, tech))


def quality_gradient(theta_a: float, theta_w: float, d: Disclosure,
                     tech: QualityTechnology) -> Tuple[float, float]:
    """
    Analytic partials of processing_quality

    Returns:
        Tuple of (dQ/dtheta_a, dQ/dtheta_w)
    """
    if theta_a < 0 or theta_w < 0:
        raise ValueError(f"allocations must be nonnegative, got ({theta_a}, {theta_w})")
    da, dw = quality_gradient_array(theta_a, theta_w, d.attention_load, d.memory_load, tech)
    return float(da), float(dw)


def investor_utility(q_row: Sequence[float], values: Sequence[float]) -> float:
    """
    Utility of a quality row: importance-weighted sum of extracted information

    Args:
        q_row: processing quality per asset
        values: economic significance per asset (sign ignored)

    Returns:
        sum_j |values_j| * q_j
    """
    q = np.asarray(q_row, dtype=float)
    v = np.asarray(values, dtype=float)
    if q.shape != v.shape:
        raise ValueError(f"length mismatch: {q.shape[0] if q.ndim else 1} qualities "
                         f"vs {v.shape[0] if v.ndim else 1} values")
    return float(np.sum(np.abs(v) * q))
