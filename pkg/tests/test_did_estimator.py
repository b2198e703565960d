"""
Unit tests for the TWFE DiD estimator
"""
import numpy as np
import pandas as pd
import pytest

from modules.did_estimator import (
    DidSpec,
    cluster_ols,
    estimate,
    event_study,
    heterogeneity,
    placebo_test,
    relative_periods,
    simulate_planted_panel,
    within_transform,
)
from modules.exceptions import DataError, NonConvergence, RankDeficient, TooFewClusters


@pytest.fixture
def planted_spec():
    return DidSpec(outcome='y', treatment='treated', controls=('x',))


@pytest.fixture
def planted():
    return simulate_planted_panel(seed=7)


class TestWithinTransform:
    """Test alternating-projection demeaning"""

    def test_two_by_two(self):
        """Closed form y - unit mean - time mean + grand mean"""
        panel = pd.DataFrame({'firm_id': ['A', 'A', 'B', 'B'], 'period': [1, 2, 1, 2],
                              'y': [1.0, 2.0, 3.0, 5.0], 'treated': [0.0, 0.0, 0.0, 1.0]})
        demeaned = within_transform(panel, DidSpec(outcome='y'), ['y'])
        np.testing.assert_allclose(demeaned['y'], [0.25, -0.25, -0.25, 0.25], atol=1e-12)

    def test_single_unit(self):
        """One unit observed once per period leaves nothing"""
        panel = pd.DataFrame({'firm_id': ['A'] * 5, 'period': range(5),
                              'y': [3.0, 1.0, 4.0, 1.0, 5.0]})
        demeaned = within_transform(panel, DidSpec(outcome='y'), ['y'])
        np.testing.assert_allclose(demeaned['y'], 0.0, atol=1e-12)

    def test_unit_constant_invariance(self, planted, planted_spec):
        """Adding a unit-level constant leaves the demeaned outcome unchanged"""
        shifted = planted.copy()
        shifted['y'] += shifted['firm_id'].str[-2:].astype(int) * 3.0
        base = within_transform(planted, planted_spec, ['y'])
        moved = within_transform(shifted, planted_spec, ['y'])
        np.testing.assert_allclose(base['y'], moved['y'], atol=1e-8)

    def test_unbalanced_converges(self, planted, planted_spec):
        """Group means vanish on an unbalanced panel"""
        rng = np.random.default_rng(3)
        unbalanced = planted[rng.random(len(planted)) > 0.3]
        demeaned = within_transform(unbalanced, planted_spec, ['y'])
        unit_means = demeaned['y'].groupby(unbalanced['firm_id']).mean()
        time_means = demeaned['y'].groupby(unbalanced['period']).mean()
        assert unit_means.abs().max() < 1e-9
        assert time_means.abs().max() < 1e-9

    def test_nonconvergence(self, planted):
        """One sweep is not enough on an unbalanced panel"""
        rng = np.random.default_rng(5)
        unbalanced = planted[rng.random(len(planted)) > 0.3]
        spec = DidSpec(outcome='y', max_demean_sweeps=1, demean_tolerance=1e-12)
        with pytest.raises(NonConvergence):
            within_transform(unbalanced, spec, ['y'])


class TestEstimate:
    """Test estimate on panels with a known effect"""

    def test_recovers_planted_effect(self, planted, planted_spec):
        """beta = -0.162 within 0.005"""
        fit = estimate(planted, planted_spec)
        assert fit.beta_treatment == pytest.approx(-0.162, abs=0.005)
        assert fit.coefficient('x') == pytest.approx(0.3, abs=0.005)
        assert fit.n_obs == 200 * 40
        assert fit.n_clusters == 200

    def test_noiseless_exact(self, planted_spec):
        """Without noise the estimate is exact"""
        panel = simulate_planted_panel(sigma=0.0, seed=1)
        fit = estimate(panel, planted_spec)
        assert fit.beta_treatment == pytest.approx(-0.162, abs=1e-10)
        assert fit.coefficient('x') == pytest.approx(0.3, abs=1e-10)

    def test_confidence_interval_contains_estimate(self, planted, planted_spec):
        """Intervals are centered on the estimates"""
        fit = estimate(planted, planted_spec)
        low, high = fit.conf_int()[0]
        assert low < fit.beta_treatment < high
        report = fit.to_dict()
        assert report['coefficients']['treated']['ci_low'] == pytest.approx(low)
        assert report['n_clusters'] == 200

    def test_covariance_symmetric_psd(self, planted, planted_spec):
        """Cluster-robust covariance is symmetric positive semidefinite"""
        fit = estimate(planted, planted_spec)
        np.testing.assert_allclose(fit.covariance, fit.covariance.T)
        assert np.linalg.eigvalsh(fit.covariance).min() >= -1e-14

    def test_composite_time_key(self, planted, planted_spec):
        """Year x quarter cells reproduce the single period key"""
        panel = planted.assign(year=planted['period'] // 4, quarter=planted['period'] % 4)
        composite = DidSpec(outcome='y', controls=('x',), time_key=('year', 'quarter'))
        assert estimate(panel, composite).beta_treatment == pytest.approx(
            estimate(planted, planted_spec).beta_treatment, abs=1e-8)

    def test_missing_rows_dropped(self, planted, planted_spec):
        """Rows with missing outcome are excluded"""
        panel = planted.copy()
        panel.loc[:9, 'y'] = np.nan
        assert estimate(panel, planted_spec).n_obs == len(planted) - 10


class TestEstimateErrors:
    """Test estimator failure modes"""

    def test_missing_column(self, planted):
        """A missing column names itself"""
        with pytest.raises(DataError) as info:
            estimate(planted, DidSpec(outcome='log_speed'))
        assert 'log_speed' in info.value.message

    def test_absorbed_regressor(self, planted):
        """A unit-constant control is absorbed"""
        panel = planted.assign(size=planted['firm_id'].str[-3:].astype(float))
        with pytest.raises(RankDeficient):
            estimate(panel, DidSpec(outcome='y', controls=('size',)))

    def test_collinear_controls(self, planted):
        """Duplicated regressors are collinear"""
        panel = planted.assign(x2=2.0 * planted['x'])
        with pytest.raises(RankDeficient):
            estimate(panel, DidSpec(outcome='y', controls=('x', 'x2')))

    def test_single_cluster(self, planted):
        """One cluster cannot give a robust covariance"""
        panel = planted.assign(market='all')
        with pytest.raises(TooFewClusters):
            estimate(panel, DidSpec(outcome='y', cluster_key='market'))

    def test_outcome_is_treatment(self):
        """Outcome and treatment must differ"""
        with pytest.raises(ValueError):
            DidSpec(outcome='treated', treatment='treated')


class TestClusterOls:
    """Test the CR1 sandwich"""

    def test_singleton_clusters_match_hc1(self):
        """One observation per cluster reduces to HC1"""
        rng = np.random.default_rng(11)
        n, k = 50, 3
        x = rng.normal(size=(n, k))
        y = x @ np.array([0.5, -1.0, 2.0]) + rng.normal(size=n)
        coefficients, cov, residuals = cluster_ols(x, y, np.arange(n))
        expected, *_ = np.linalg.lstsq(x, y, rcond=None)
        u = y - x @ expected
        bread = np.linalg.inv(x.T @ x)
        hc1 = n / (n - k) * bread @ (x.T * u ** 2) @ x @ bread
        np.testing.assert_allclose(coefficients, expected, rtol=1e-10)
        np.testing.assert_allclose(residuals, u, atol=1e-10)
        np.testing.assert_allclose(cov, hc1, rtol=1e-8, atol=1e-14)

    def test_grouped_clusters_hand_sandwich(self):
        """Ten clusters of four rows match the CR1 formula"""
        rng = np.random.default_rng(12)
        x = rng.normal(size=(40, 2))
        y = x @ np.array([1.0, -0.5]) + rng.normal(size=40)
        clusters = np.repeat(np.arange(10), 4)
        _, cov, u = cluster_ols(x, y, clusters)
        scores = np.zeros((10, 2))
        np.add.at(scores, clusters, x * u[:, None])
        bread = np.linalg.inv(x.T @ x)
        factor = (10 / 9) * (39 / 38)
        np.testing.assert_allclose(cov, factor * bread @ scores.T @ scores @ bread, rtol=1e-8)
        assert np.all(np.diag(cov) > 0)


class TestEventStudy:
    """Test relative-time coefficients"""

    @pytest.fixture
    def one_cohort(self):
        return simulate_planted_panel(units=100, periods=40, beta=-0.2, sigma=0.01,
                                      seed=4, adoption_periods=(20, 40))

    def test_relative_periods(self, one_cohort, planted_spec):
        """Never-treated units get NaN"""
        relative = relative_periods(one_cohort, planted_spec)
        never = one_cohort['adoption_period'] == 40
        assert relative[never].isna().all()
        assert relative[~never].min() == -20

    def test_dynamic_effects(self, one_cohort, planted_spec):
        """Flat pre-trend, constant post effect, -1 omitted"""
        table = event_study(one_cohort, planted_spec, window=(4, 6)).set_index('relative_period')
        assert list(table.index) == list(range(-4, 7))
        assert table.loc[-1, 'coefficient'] == 0.0
        for r in (-4, -3, -2):
            assert table.loc[r, 'coefficient'] == pytest.approx(0.0, abs=0.015)
        for r in range(0, 7):
            assert table.loc[r, 'coefficient'] == pytest.approx(-0.2, abs=0.015)
        assert (table['n_obs'] > 0).all()

    def test_empty_cells_kept(self, planted_spec):
        """Relative periods nobody reaches are reported empty"""
        panel = simulate_planted_panel(units=60, periods=40, seed=2, adoption_periods=(36, 40))
        table = event_study(panel, planted_spec, window=(4, 6)).set_index('relative_period')
        for r in (4, 5, 6):
            assert table.loc[r, 'n_obs'] == 0
            assert np.isnan(table.loc[r, 'coefficient'])
        assert table.loc[3, 'n_obs'] == 30

    def test_no_treated_units(self, planted_spec):
        """A panel of never-treated units has no events"""
        panel = simulate_planted_panel(units=20, periods=10, adoption_periods=(10,))
        with pytest.raises(DataError):
            event_study(panel, planted_spec)


class TestHeterogeneity:
    """Test treatment x indicator interaction"""

    def test_split_effect(self, planted, planted_spec):
        """Extra effect for flagged units shows up in the interaction"""
        panel = planted.copy()
        panel['low'] = (panel['firm_id'].str[-1].astype(int) % 2 == 0).astype(float)
        panel['y'] += -0.1 * panel['treated'] * panel['low']
        fit = heterogeneity(panel, planted_spec, 'low')
        assert fit.names[:2] == ['treated', 'treated_x_low']
        assert 'low' not in fit.names
        assert fit.coefficient('treated') == pytest.approx(-0.162, abs=0.01)
        assert fit.coefficient('treated_x_low') == pytest.approx(-0.1, abs=0.01)


class TestPlacebo:
    """Test randomized adoption placebos"""

    def test_null_distribution_centered(self, planted_spec):
        """Without an effect, placebo betas center on zero"""
        panel = simulate_planted_panel(units=60, periods=20, beta=0.0, sigma=0.05,
                                       seed=8, adoption_periods=(6, 10, 14, 20))
        result = placebo_test(panel, planted_spec, n_draws=100, seed=1)
        assert len(result.betas) + result.failures == 100
        assert abs(result.betas.mean()) <= 2 * result.betas.std(ddof=1)

    def test_planted_effect_significant(self, planted_spec):
        """The planted effect beats every placebo"""
        panel = simulate_planted_panel(units=60, periods=20, sigma=0.01, seed=9,
                                       adoption_periods=(6, 10, 14, 20))
        result = placebo_test(panel, planted_spec, n_draws=100, seed=2)
        assert result.p_value < 0.01
        assert result.to_dict()['n_draws'] == 100

    def test_reproducible(self, planted_spec):
        """Same seed, same draws"""
        panel = simulate_planted_panel(units=30, periods=12, seed=3,
                                       adoption_periods=(4, 8, 12))
        first = placebo_test(panel, planted_spec, n_draws=100, seed=5)
        second = placebo_test(panel, planted_spec, n_draws=100, seed=5)
        np.testing.assert_array_equal(first.betas, second.betas)

    def test_minimum_draws(self, planted, planted_spec):
        """Fewer than 100 draws is rejected"""
        with pytest.raises(ValueError):
            placebo_test(planted, planted_spec, n_draws=10)


@pytest.mark.slow
class TestCoverage:
    """Coverage of cluster-robust intervals"""

    def test_ninety_five_percent_coverage(self, planted_spec):
        """Nominal 95% intervals cover the planted effect 90-99% of the time"""
        covered = 0
        for rep in range(200):
            panel = simulate_planted_panel(units=100, periods=10, sigma=0.5, seed=1000 + rep,
                                           adoption_periods=(3, 6, 10))
            low, high = estimate(panel, planted_spec).conf_int()[0]
            covered += low <= -0.162 <= high
        assert 0.90 <= covered / 200 <= 0.99
