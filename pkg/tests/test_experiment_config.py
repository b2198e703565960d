"""
Unit tests for experiment configuration parsing
"""
from dataclasses import fields
from pathlib import Path

import pytest
import yaml

from modules.exceptions import ConfigError
from modules.experiment_config import ExperimentConfig

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


class TestExperimentConfig:
    """Test ExperimentConfig parsing and overrides"""

    @pytest.mark.parametrize('name', ['default.yaml', 'null_treatment.yaml', 'calibrated.yaml',
                                      'sweep.yaml', 'estimate.yaml'])
    def test_bundled_configs_parse(self, name):
        """Every shipped config is valid"""
        experiment = ExperimentConfig.from_yaml(CONFIG_DIR / name)
        assert experiment.simulation.rng_seed == experiment.seed

    def test_empty_mapping_gives_defaults(self):
        """Missing sections take defaults"""
        experiment = ExperimentConfig.from_dict({})
        assert experiment.did.outcomes == ('log_speed', 'accuracy', 'log_duration')
        assert experiment.market.pricing_rule == 'anchor'

    def test_unknown_top_level_key(self):
        """Typos at the top level are rejected"""
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict({'simulaton': {}})
        assert info.value.exit_code == 2

    def test_unknown_section_key(self):
        """Typos inside a section are rejected with the key named"""
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict({'simulation': {'n_firm': 10}})
        assert 'n_firm' in info.value.message

    def test_invalid_value(self):
        """Out-of-range values become config errors"""
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'simulation': {'treatment_load_multiplier': 1.5}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'threads': 0})

    def test_missing_file(self, tmp_path):
        """A missing config file is a config error"""
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml(tmp_path / 'absent.yaml')

    def test_seed_override_propagates(self):
        """The top-level seed drives simulation and mechanism streams"""
        experiment = ExperimentConfig.from_dict({'seed': 3}).with_overrides(seed=42)
        assert experiment.seed == 42
        assert experiment.simulation.rng_seed == 42
        assert experiment.mechanisms.rng_seed == 42

    def test_lists_become_tuples(self):
        """YAML lists are stored as tuples"""
        experiment = ExperimentConfig.from_dict({'sweep': {'load_grid': [1, 2, 3]}})
        assert experiment.sweep.load_grid == (1, 2, 3)

    def test_resolved_round_trip(self, tmp_path):
        """The resolved copy reproduces the configuration"""
        experiment = ExperimentConfig.from_yaml(CONFIG_DIR / 'default.yaml').with_overrides(
            seed=5, threads=2)
        path = experiment.write_resolved(tmp_path / 'resolved_config.yaml')
        with open(path) as f:
            data = yaml.safe_load(f)
        assert data['seed'] == 5
        assert ExperimentConfig.from_dict(data) == experiment

    def test_calibrated_file_lists_every_parameter(self):
        """The calibrated config spells out every model setting"""
        with open(CONFIG_DIR / 'calibrated.yaml') as f:
            data = yaml.safe_load(f)
        experiment = ExperimentConfig.from_dict(data)
        for section in ('simulation', 'mechanisms', 'technology', 'solver', 'market'):
            names = {f.name for f in fields(getattr(experiment, section))} - {'rng_seed'}
            assert set(data[section]) == names, section

    def test_default_shares_calibrated_regime(self):
        """default.yaml runs the calibrated model"""
        default = ExperimentConfig.from_yaml(CONFIG_DIR / 'default.yaml')
        calibrated = ExperimentConfig.from_yaml(CONFIG_DIR / 'calibrated.yaml')
        assert default.simulation == calibrated.simulation
        assert default.mechanisms == calibrated.mechanisms
        assert default.technology == calibrated.technology
        assert default.simulation.treatment_load_multiplier == 0.8
