"""
Unit tests for market pricing and load sweeps
"""
import numpy as np
import pandas as pd
import pytest

from modules.attention_solver import SolverConfig
from modules.cognitive_load import Disclosure, InvestorProfile, QualityTechnology
from modules.market import (
    MarketState,
    build_sweep_state,
    capacity_share_comparison,
    equilibrium_prices,
    mispricing,
    normalize_weights,
    proposition2_sweep,
    solve_state,
    write_sweep_csv,
)


@pytest.fixture
def two_investor_state():
    """Two equal-weight investors, one asset: anchor 10, value 14"""
    investors = [InvestorProfile('a', 1.0, 1.0, 0.5), InvestorProfile('b', 1.0, 1.0, 0.5)]
    disclosures = [Disclosure.from_structure('f', 4.0, 1.0)]
    return MarketState(investors, disclosures, np.array([14.0]), np.array([10.0]),
                       quality=np.array([[0.2], [0.6]]))


@pytest.fixture
def sweep_state():
    return build_sweep_state(6, 3, np.random.default_rng(5))


class TestEquilibriumPrices:
    """Test equilibrium_prices and mispricing"""

    def test_hand_example(self, two_investor_state):
        """Aggregate quality 0.4 moves the price 40% of the way"""
        prices = equilibrium_prices(two_investor_state)
        assert prices[0] == pytest.approx(11.6)
        assert mispricing(two_investor_state, prices)[0] == pytest.approx(2.4)

    def test_perfect_processing(self, two_investor_state):
        """Full quality prices at fundamental value"""
        state = two_investor_state.with_quality(np.ones((2, 1)))
        np.testing.assert_array_equal(equilibrium_prices(state), state.fundamental_values)
        np.testing.assert_array_equal(mispricing(state, equilibrium_prices(state)), [0.0])

    def test_zero_processing(self, two_investor_state):
        """No processing leaves the anchor in place"""
        state = two_investor_state.with_quality(np.zeros((2, 1)))
        np.testing.assert_array_equal(equilibrium_prices(state), [10.0])
        assert mispricing(state, equilibrium_prices(state))[0] == pytest.approx(4.0)

    def test_literal_rule(self, two_investor_state):
        """Literal rule prices only processed value"""
        state = MarketState(two_investor_state.investors, two_investor_state.disclosures,
                            np.array([14.0]), np.array([10.0]), np.zeros((2, 1)),
                            pricing_rule='literal')
        np.testing.assert_array_equal(equilibrium_prices(state), [0.0])

    def test_weights_must_sum_to_one(self):
        """Unnormalized weights are rejected"""
        investors = [InvestorProfile('a', 1.0, 1.0, 0.7), InvestorProfile('b', 1.0, 1.0, 0.7)]
        with pytest.raises(ValueError):
            MarketState(investors, [Disclosure.from_structure('f', 1.0, 1.0)],
                        np.array([1.0]), np.array([0.0]))

    def test_quality_range_checked(self, two_investor_state):
        """Quality entries outside [0, 1] are rejected"""
        with pytest.raises(ValueError):
            two_investor_state.with_quality(np.array([[1.5], [0.2]]))

    def test_normalize_weights(self):
        """Zero weights become equal weights"""
        investors = normalize_weights([InvestorProfile(f"i{k}", 1.0, 1.0) for k in range(4)])
        assert sum(inv.market_weight for inv in investors) == pytest.approx(1.0, abs=1e-12)


class TestSolveState:
    """Test solve_state"""

    def test_quality_matrix_filled(self, sweep_state):
        """Solved state carries a valid quality matrix and prices between anchor and value"""
        tech = QualityTechnology()
        state = solve_state(sweep_state, tech, SolverConfig())
        assert state.quality.shape == (6, 3)
        assert (state.quality > 0).any()
        prices = equilibrium_prices(state)
        low = np.minimum(state.anchor_prices, state.fundamental_values)
        high = np.maximum(state.anchor_prices, state.fundamental_values)
        assert ((prices >= low - 1e-12) & (prices <= high + 1e-12)).all()


class TestLoadSweep:
    """Test proposition2_sweep and the capacity-share comparison"""

    def test_mispricing_nondecreasing(self, sweep_state):
        """More load never improves price discovery"""
        table = proposition2_sweep(sweep_state, [1.0, 2.0, 4.0], QualityTechnology())
        assert list(table.columns) == ['load', 'mean_mispricing']
        assert (np.diff(table['mean_mispricing']) >= -1e-9).all()

    def test_repeated_load_constant(self, sweep_state):
        """Equal consecutive loads give equal mispricing"""
        table = proposition2_sweep(sweep_state, [1.0, 2.0, 2.0, 4.0], QualityTechnology())
        assert table['mean_mispricing'][1] == pytest.approx(table['mean_mispricing'][2],
                                                             abs=1e-12)

    def test_invalid_grid(self, sweep_state):
        """Grids need three nondecreasing nonnegative points"""
        with pytest.raises(ValueError):
            proposition2_sweep(sweep_state, [1.0, 2.0], QualityTechnology())
        with pytest.raises(ValueError):
            proposition2_sweep(sweep_state, [1.0, 3.0, 2.0], QualityTechnology())

    def test_more_sophisticated_market_misprices_less(self, sweep_state):
        """A larger high-capacity share lowers mean mispricing at each load"""
        table = capacity_share_comparison(sweep_state, [1.0, 2.0, 4.0], QualityTechnology(),
                                          shares=(0.8, 0.2))
        high = table[table['high_share'] == 0.8]['mean_mispricing'].to_numpy()
        low = table[table['high_share'] == 0.2]['mean_mispricing'].to_numpy()
        assert (high <= low + 1e-9).all()

    def test_csv_header(self, sweep_state, tmp_path):
        """Sweep table is written with its header"""
        table = proposition2_sweep(sweep_state, [1.0, 2.0, 4.0], QualityTechnology())
        path = write_sweep_csv(table, tmp_path / 'sweep.csv')
        written = pd.read_csv(path)
        assert list(written.columns) == ['load', 'mean_mispricing']
        assert len(written) == 3

    def test_load_and_share_properties_over_seeds(self):
        """20 seeds on loads 0.5 to 8: monotone in load, lower with more high-capacity investors"""
        grid = [0.5, 1.0, 2.0, 4.0, 8.0]
        for seed in range(20):
            state = build_sweep_state(6, 3, np.random.default_rng(seed))
            table = capacity_share_comparison(state, grid, QualityTechnology(),
                                              shares=(0.8, 0.2))
            high = table[table['high_share'] == 0.8]['mean_mispricing'].to_numpy()
            low = table[table['high_share'] == 0.2]['mean_mispricing'].to_numpy()
            assert (np.diff(high) >= -1e-9).all(), seed
            assert (np.diff(low) >= -1e-9).all(), seed
            assert (high <= low + 1e-9).all(), seed
