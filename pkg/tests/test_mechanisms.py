"""
Unit tests for the selective-attention, processing-error and strategic-complexity mechanisms
"""
import numpy as np
import pytest

from modules.cognitive_load import InvestorProfile, QualityTechnology
from modules.mechanisms import (
    MechanismParams,
    apply_selective_attention,
    attention_probabilities,
    error_multiplier,
    perceived_contents,
    processing_error,
    representative_quality,
    sample_slot_masks,
    strategic_complexity,
    strategic_objective,
)


@pytest.fixture
def representative():
    return InvestorProfile('representative', 1.0, 1.0)


class TestAttentionProbabilities:
    """Test attention_probabilities"""

    def test_equal_loads_uniform(self):
        """Symmetric loads give uniform probabilities"""
        np.testing.assert_allclose(attention_probabilities([3.0, 3.0, 3.0, 3.0], 2.0), 0.25)

    def test_zero_gamma_uniform(self):
        """No load sensitivity ignores loads"""
        np.testing.assert_allclose(attention_probabilities([1.0, 5.0, 9.0], 0.0), 1 / 3)

    def test_hand_value(self):
        """Loads (1, 2) at gamma 1"""
        np.testing.assert_allclose(attention_probabilities([1.0, 2.0], 1.0),
                                   [0.73106, 0.26894], atol=1e-5)

    def test_extreme_loads_stable(self):
        """Max-shift keeps huge loads a valid probability vector"""
        p = attention_probabilities([1e6, 2.0, 5e5, 0.0], 1.0)
        assert np.isfinite(p).all()
        assert (p >= 0).all()
        assert abs(p.sum() - 1.0) < 1e-12

    def test_shift_invariant_and_decreasing(self):
        """Adding a constant changes nothing; more load means less attention"""
        loads = np.array([0.5, 1.5, 4.0])
        np.testing.assert_allclose(attention_probabilities(loads, 0.7),
                                   attention_probabilities(loads + 100.0, 0.7), atol=1e-12)
        p = attention_probabilities(loads, 0.7)
        assert p[0] > p[1] > p[2]


class TestSelectiveAttention:
    """Test slot selection"""

    def test_all_slots_unchanged(self):
        """Processing every asset leaves quality untouched"""
        quality = np.array([[0.2, 0.5, 0.9], [0.1, 0.0, 0.4]])
        out = apply_selective_attention(quality, [1.0, 2.0, 3.0], 1.0, 3,
                                        np.random.default_rng(0))
        np.testing.assert_array_equal(out, quality)

    def test_large_gamma_picks_lowest_load(self):
        """A very load-averse investor almost always picks the lightest disclosure"""
        quality = np.ones((10_000, 3))
        out = apply_selective_attention(quality, [2.0, 1.0, 3.0], 1e3, 1,
                                        np.random.default_rng(1))
        assert (out[:, 1] > 0).mean() > 0.99

    def test_frequency_matches_softmax(self):
        """One slot over two assets follows the softmax probability"""
        quality = np.ones((10_000, 2))
        out = apply_selective_attention(quality, [1.0, 2.0], 1.0, 1, np.random.default_rng(2))
        assert (out[:, 0] > 0).mean() == pytest.approx(0.731, abs=0.02)

    def test_block_sampler_matches_softmax(self):
        """Gumbel top-k sampling has the same law"""
        available = np.ones((10_000, 2), dtype=bool)
        mask = sample_slot_masks([1.0, 2.0], 1.0, available, 1, np.random.default_rng(3))
        assert (mask.sum(axis=1) == 1).all()
        assert mask[:, 0].mean() == pytest.approx(0.731, abs=0.02)

    def test_block_sampler_respects_availability(self):
        """Unavailable assets are never chosen"""
        available = np.array([[True, False, True], [False, False, True]])
        mask = sample_slot_masks([1.0, 1.0, 1.0], 0.1, available, 2, np.random.default_rng(4))
        assert not (mask & ~available).any()
        assert mask[1].tolist() == [False, False, True]

    def test_too_many_slots(self):
        """More slots than assets is invalid"""
        with pytest.raises(ValueError):
            apply_selective_attention(np.ones((1, 2)), [1.0, 1.0], 1.0, 3,
                                      np.random.default_rng(0))


class TestProcessingError:
    """Test processing_error and perceived_contents"""

    def test_noiseless_limit(self):
        """Zero error scale reproduces content exactly"""
        params = MechanismParams(error_scale=0.0)
        investor = InvestorProfile('i', 2.0, 2.0)
        assert processing_error(1.7, 3.0, investor, params, np.random.default_rng(0)) == 1.7

    def test_zero_load(self):
        """Zero load means no error"""
        investor = InvestorProfile('i', 2.0, 2.0)
        rng = np.random.default_rng(0)
        assert processing_error(-0.4, 0.0, investor, MechanismParams(error_scale=1.0), rng) == -0.4

    def test_error_standard_deviation(self):
        """Error std equals scale times L over total capacity"""
        rng = np.random.default_rng(20240101)
        perceived = perceived_contents(np.array([0.0]), np.array([2.0]),
                                       np.full(100_000, 4.0), 1.0, rng)
        assert perceived.std() == pytest.approx(0.5, abs=0.01)

    def test_scalar_draws_agree(self):
        """Scalar draws have the same dispersion"""
        rng = np.random.default_rng(5)
        investor = InvestorProfile('i', 2.0, 2.0)
        params = MechanismParams(error_scale=1.0)
        draws = [processing_error(0.0, 2.0, investor, params, rng) for _ in range(20_000)]
        assert np.std(draws) == pytest.approx(0.5, abs=0.02)

    def test_error_multiplier(self):
        """g(L, Theta) = L / total capacity"""
        assert float(error_multiplier(3.0, 6.0)) == pytest.approx(0.5)


class TestStrategicComplexity:
    """Test strategic_complexity"""

    def test_good_news_corner(self, representative):
        """Nonnegative content never pays for complexity"""
        params = MechanismParams(complexity_benefit=1.0, complexity_cost=0.1)
        for content in (0.0, 0.5, 3.0):
            assert strategic_complexity(content, params, QualityTechnology(),
                                        representative) == 0.0

    def test_prohibitive_cost(self, representative):
        """Huge cost keeps structure near zero"""
        params = MechanismParams(complexity_benefit=1.0, complexity_cost=1e6)
        assert strategic_complexity(-5.0, params, QualityTechnology(),
                                    representative) == pytest.approx(0.0, abs=1e-3)

    def test_matches_fine_grid(self, representative):
        """Bad news of -5 at unit benefit and cost 0.1"""
        params = MechanismParams(complexity_benefit=1.0, complexity_cost=0.1)
        tech = QualityTechnology()
        chosen = strategic_complexity(-5.0, params, tech, representative)
        grid = np.arange(0.0, params.max_structure + 1e-9, 1e-3)
        values = np.array([strategic_objective(s, -5.0, params, tech, representative)
                           for s in grid])
        assert chosen == pytest.approx(grid[int(np.argmax(values))], abs=2e-3)
        assert chosen > 0.0

    def test_representative_quality_falls_with_structure(self, representative):
        """Heavier disclosures are processed less well"""
        tech = QualityTechnology()
        qualities = [representative_quality(s, representative, tech) for s in (0.5, 1, 2, 4)]
        assert all(a > b for a, b in zip(qualities, qualities[1:]))
        assert representative_quality(0.0, representative, tech) == 1.0
