"""
Attention Solver Module
Solves each investor's constrained attention / working-memory allocation and
checks the equal-marginal-value conditions at the optimum
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import itertools
import logging

import numpy as np

from modules.cognitive_load import (
    AllocationMatrix,
    Disclosure,
    InvestorProfile,
    QualityTechnology,
    quality_array,
    quality_gradient_array,
)
from modules.exceptions import NonConvergence

logger = logging.getLogger(__name__)

AllocationRow = Tuple[np.ndarray, np.ndarray]

# Armijo sufficient-increase constant and backtracking limits
ARMIJO = 1e-4
MAX_BACKTRACKS = 40
MIN_STEP, MAX_STEP = 1e-12, 1e12

# grid cells evaluated per block by the brute-force oracle
ORACLE_BLOCK_CELLS = 4_000_000


@dataclass(frozen=True)
class SolverConfig:
    """Iteration limits and tolerances for the allocation solver"""

    max_iterations: int = 5000
    step_size: float = 0.05
    kkt_tolerance: float = 1e-6
    budget_tolerance: float = 1e-9
    multi_start: bool = True

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        for name in ('step_size', 'kkt_tolerance', 'budget_tolerance'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ShadowPrices:
    """Marginal utility of one more unit of each cognitive resource"""

    lambda_attention: float
    lambda_memory: float


def project_budget(y: np.ndarray, budget: float) -> np.ndarray:
    """
    Euclidean projection onto {x >= 0, sum(x) <= budget}

    Args:
        y: point to project
        budget: resource budget

    Returns:
        Projected point; exact zeros on the boundary
    """
    y = np.asarray(y, dtype=float)
    clipped = np.maximum(y, 0.0)
    if clipped.sum() <= budget:
        return clipped
    # budget binds: sort-based projection onto the scaled simplex
    u = np.sort(y)[::-1]
    cumulative = np.cumsum(u) - budget
    ranks = np.arange(1, y.shape[0] + 1)
    k = np.nonzero(u - cumulative / ranks > 0)[0][-1]
    tau = cumulative[k] / (k + 1)
    return np.maximum(y - tau, 0.0)


class _Problem:
    """One investor's allocation problem in array form"""

    def __init__(self, investor: InvestorProfile, disclosures: Sequence[Disclosure],
                 tech: QualityTechnology):
        if len(disclosures) < 1:
            raise ValueError("at least one disclosure is required")
        self.investor = investor
        self.tech = tech
        self.weights = np.abs(np.array([d.content for d in disclosures], dtype=float))
        self.loads_a = np.array([d.attention_load for d in disclosures], dtype=float)
        self.loads_w = np.array([d.memory_load for d in disclosures], dtype=float)
        self.budget_a = investor.effective_attention
        self.budget_w = investor.effective_memory
        self.m = len(disclosures)

    def utility(self, theta_a: np.ndarray, theta_w: np.ndarray) -> float:
        q = quality_array(theta_a, theta_w, self.loads_a, self.loads_w, self.tech)
        return float(np.dot(self.weights, q))

    def gradient(self, theta_a: np.ndarray, theta_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        da, dw = quality_gradient_array(theta_a, theta_w, self.loads_a, self.loads_w, self.tech)
        return self.weights * da, self.weights * dw

    def project(self, theta_a: np.ndarray, theta_w: np.ndarray) -> AllocationRow:
        return project_budget(theta_a, self.budget_a), project_budget(theta_w, self.budget_w)


def _shadow_price(theta: np.ndarray, grad: np.ndarray, budget: float,
                  cfg: SolverConfig) -> float:
    if theta.sum() < budget - cfg.budget_tolerance:
        return 0.0
    interior = theta > 10 * cfg.budget_tolerance
    if not interior.any():
        return 0.0
    return max(float(grad[interior].mean()), 0.0)


def _residual(theta: np.ndarray, grad: np.ndarray, lam: float, cfg: SolverConfig) -> float:
    interior = theta > 10 * cfg.budget_tolerance
    gap = grad - lam
    interior_gap = np.abs(gap[interior]).max() if interior.any() else 0.0
    boundary_gap = np.maximum(gap[~interior], 0.0).max() if (~interior).any() else 0.0
    return float(max(interior_gap, boundary_gap))


def _shadow_and_residual(problem: _Problem, theta_a: np.ndarray, theta_w: np.ndarray,
                         cfg: SolverConfig) -> Tuple[ShadowPrices, float]:
    grad_a, grad_w = problem.gradient(theta_a, theta_w)
    lam_a = _shadow_price(theta_a, grad_a, problem.budget_a, cfg)
    lam_w = _shadow_price(theta_w, grad_w, problem.budget_w, cfg)
    residual = max(_residual(theta_a, grad_a, lam_a, cfg),
                   _residual(theta_w, grad_w, lam_w, cfg))
    return ShadowPrices(lam_a, lam_w), residual


def _ascend(problem: _Problem, theta_a: np.ndarray, theta_w: np.ndarray,
            cfg: SolverConfig) -> Tuple[np.ndarray, np.ndarray, ShadowPrices, float, int]:
    """Projected gradient ascent with spectral steps and a backtracking safeguard"""
    theta_a, theta_w = problem.project(theta_a, theta_w)
    value = problem.utility(theta_a, theta_w)
    grad_a, grad_w = problem.gradient(theta_a, theta_w)
    step = cfg.step_size
    shadow, residual = _shadow_and_residual(problem, theta_a, theta_w, cfg)
    iteration = 0
    while residual >= cfg.kkt_tolerance and iteration < cfg.max_iterations:
        iteration += 1
        trial_step = step
        for _ in range(MAX_BACKTRACKS):
            new_a, new_w = problem.project(theta_a + trial_step * grad_a,
                                           theta_w + trial_step * grad_w)
            new_value = problem.utility(new_a, new_w)
            ascent = np.dot(grad_a, new_a - theta_a) + np.dot(grad_w, new_w - theta_w)
            if new_value >= value + ARMIJO * ascent:
                break
            trial_step *= 0.5
        new_grad_a, new_grad_w = problem.gradient(new_a, new_w)

        s = np.concatenate([new_a - theta_a, new_w - theta_w])
        y = np.concatenate([new_grad_a - grad_a, new_grad_w - grad_w])
        curvature = -float(np.dot(s, y))
        if curvature > 0:
            step = float(np.clip(np.dot(s, s) / curvature, MIN_STEP, MAX_STEP))
        else:
            step = min(trial_step * 2.0, MAX_STEP)

        theta_a, theta_w, value = new_a, new_w, new_value
        grad_a, grad_w = new_grad_a, new_grad_w
        shadow, residual = _shadow_and_residual(problem, theta_a, theta_w, cfg)
        if not np.any(s):
            break
    return theta_a, theta_w, shadow, residual, iteration


def _starting_points(problem: _Problem, cfg: SolverConfig) -> List[AllocationRow]:
    uniform = (np.full(problem.m, problem.budget_a / problem.m),
               np.full(problem.m, problem.budget_w / problem.m))
    starts = [uniform]
    if cfg.multi_start and problem.m > 1:
        for j in range(problem.m):
            corner_a = np.zeros(problem.m)
            corner_w = np.zeros(problem.m)
            corner_a[j] = problem.budget_a
            corner_w[j] = problem.budget_w
            starts.append((corner_a, corner_w))
    return starts


def solve_allocation(investor: InvestorProfile, disclosures: Sequence[Disclosure],
                     tech: QualityTechnology,
                     cfg: Optional[SolverConfig] = None) -> Tuple[AllocationRow, ShadowPrices]:
    """
    Optimal allocation of one investor's two cognitive budgets across disclosures

    The first start is the uniform feasible point; with multi_start the
    single-asset corners are also tried and a strictly better optimum replaces it.

    Args:
        investor: InvestorProfile with its capacities
        disclosures: disclosures competing for the budgets
        tech: processing technology
        cfg: SolverConfig

    Returns:
        Tuple of ((attention row, memory row), ShadowPrices)

    Raises:
        NonConvergence: if no start reaches the KKT tolerance
    """
    cfg = cfg or SolverConfig()
    problem = _Problem(investor, disclosures, tech)

    if problem.m == 1:
        # single task exhausts both budgets
        theta_a = np.array([problem.budget_a])
        theta_w = np.array([problem.budget_w])
        shadow, _ = _shadow_and_residual(problem, theta_a, theta_w, cfg)
        return (theta_a, theta_w), shadow

    best = None
    worst_residual = 0.0
    for start_a, start_w in _starting_points(problem, cfg):
        theta_a, theta_w, shadow, residual, iterations = _ascend(problem, start_a, start_w, cfg)
        logger.debug(f"investor {investor.investor_id}: residual {residual:.3e} "
                     f"after {iterations} iterations")
        if residual >= cfg.kkt_tolerance:
            worst_residual = max(worst_residual, residual)
            continue
        value = problem.utility(theta_a, theta_w)
        if best is None or value > best[0] + 1e-12:
            best = (value, theta_a, theta_w, shadow)

    if best is None:
        raise NonConvergence(
            f"allocation for investor {investor.investor_id} did not converge",
            {'investor_id': investor.investor_id, 'residual': worst_residual,
             'max_iterations': cfg.max_iterations},
        )
    _, theta_a, theta_w, shadow = best
    return (theta_a, theta_w), shadow


def kkt_residual(allocation: AllocationRow, shadow: ShadowPrices, investor: InvestorProfile,
                 disclosures: Sequence[Disclosure], tech: QualityTechnology,
                 cfg: Optional[SolverConfig] = None) -> float:
    """
    Largest violation of the first-order and complementary-slackness conditions

    Interior entries contribute |dU/dtheta - lambda|, boundary entries
    max(0, dU/dtheta - lambda).
    """
    cfg = cfg or SolverConfig()
    problem = _Problem(investor, disclosures, tech)
    theta_a = np.asarray(allocation[0], dtype=float)
    theta_w = np.asarray(allocation[1], dtype=float)
    grad_a, grad_w = problem.gradient(theta_a, theta_w)
    return max(_residual(theta_a, grad_a, shadow.lambda_attention, cfg),
               _residual(theta_w, grad_w, shadow.lambda_memory, cfg))


def marginal_values(allocation: AllocationRow, investor: InvestorProfile,
                    disclosures: Sequence[Disclosure],
                    tech: QualityTechnology) -> Tuple[np.ndarray, np.ndarray]:
    """dU/dtheta per asset for both resources"""
    problem = _Problem(investor, disclosures, tech)
    return problem.gradient(np.asarray(allocation[0], dtype=float),
                            np.asarray(allocation[1], dtype=float))


def allocation_utility(allocation: AllocationRow, investor: InvestorProfile,
                       disclosures: Sequence[Disclosure], tech: QualityTechnology) -> float:
    problem = _Problem(investor, disclosures, tech)
    return problem.utility(np.asarray(allocation[0], dtype=float),
                           np.asarray(allocation[1], dtype=float))


def _budget_grid(m: int, budget: float, resolution: float) -> np.ndarray:
    steps = int(round(1.0 / resolution))
    points = [combo for combo in itertools.product(range(steps + 1), repeat=m - 1)
              if sum(combo) <= steps]
    grid = np.array([list(combo) + [steps - sum(combo)] for combo in points], dtype=float)
    return grid * (budget / steps)


def brute_force_allocation(investor: InvestorProfile, disclosures: Sequence[Disclosure],
                           tech: QualityTechnology,
                           resolution: float = 1e-3) -> Tuple[AllocationRow, float]:
    """
    Exhaustive grid search over both exhausted budgets (test oracle, M <= 3)

    Returns:
        Tuple of ((attention row, memory row), utility)
    """
    problem = _Problem(investor, disclosures, tech)
    if problem.m > 3:
        raise ValueError("brute-force oracle supports at most 3 disclosures")
    grid_a = _budget_grid(problem.m, problem.budget_a, resolution)
    grid_w = _budget_grid(problem.m, problem.budget_w, resolution)
    factor_a = quality_array(grid_a, np.inf, problem.loads_a, np.zeros(problem.m), tech)
    factor_a = factor_a * problem.weights
    factor_w = quality_array(np.inf, grid_w, np.zeros(problem.m), problem.loads_w, tech)

    # row blocks keep memory at O(|grid|)
    rows = max(1, ORACLE_BLOCK_CELLS // len(grid_w))
    best_value, best_i, best_k = -np.inf, 0, 0
    for start in range(0, len(grid_a), rows):
        block = factor_a[start:start + rows] @ factor_w.T
        flat = int(np.argmax(block))
        if block.flat[flat] > best_value:
            i, k = np.unravel_index(flat, block.shape)
            best_value, best_i, best_k = float(block[i, k]), start + int(i), int(k)
    return (grid_a[best_i], grid_w[best_k]), best_value


def solve_market(investors: Sequence[InvestorProfile], disclosures: Sequence[Disclosure],
                 tech: QualityTechnology, cfg: Optional[SolverConfig] = None,
                 threads: int = 1) -> Tuple[AllocationMatrix, List[ShadowPrices]]:
    """
    Solve every investor's allocation over the same disclosures

    Args:
        investors: InvestorProfiles
        disclosures: Disclosures
        tech: processing technology
        cfg: SolverConfig
        threads: worker threads; investors are independent problems

    Returns:
        Tuple of (AllocationMatrix, shadow prices per investor)
    """
    cfg = cfg or SolverConfig()

    def solve(investor: InvestorProfile):
        return solve_allocation(investor, disclosures, tech, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, investors))
    else:
        results = [solve(inv) for inv in investors]

    attention = np.vstack([row[0] for row, _ in results])
    memory = np.vstack([row[1] for row, _ in results])
    logger.debug(f"Solved allocations for {len(investors)} investors over "
                 f"{len(disclosures)} disclosures")
    return AllocationMatrix(attention, memory), [shadow for _, shadow in results]
