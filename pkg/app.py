"""
Command-line entry point for the Cognitive Load Market Laboratory

Subcommands: simulate, estimate, sweep, textmetrics, placebo
"""
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import List, Optional
import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd

from config import Config
from modules.corpus_loader import compute_corpus_metrics, write_metrics_csv
from modules.did_estimator import (
    estimate,
    event_study,
    heterogeneity,
    load_panel,
    placebo_test,
    simulate_planted_panel,
    write_event_study_csv,
    write_fit_json,
)
from modules.exceptions import CogLoadError, ConfigError
from modules.experiment_config import ExperimentConfig
from modules.market import (
    build_sweep_state,
    capacity_share_comparison,
    proposition2_sweep,
    write_sweep_csv,
)
from modules.simulator import run_simulation, write_panel

logger = logging.getLogger(__name__)

PLANTED_COLUMNS = {'outcome': 'y', 'controls': ('x',)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cogload',
        description='Cognitive-load market laboratory: simulate, sweep, estimate, text metrics')
    parser.add_argument('--config', default=None,
                        help=f'experiment YAML (default {Config.DEFAULT_CONFIG})')
    parser.add_argument('--out', default=None,
                        help='run directory; must be new or empty')
    parser.add_argument('--seed', type=int, default=None, help='override the config seed')
    parser.add_argument('--threads', type=int, default=None, help='worker processes')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL)
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('simulate', help='simulate a staggered-treatment panel')

    est = sub.add_parser('estimate', help='TWFE DiD and event study on a panel CSV')
    _add_panel_source(est)
    est.add_argument('--outcome', action='append', default=None,
                     help='outcome column (repeatable); default from config')
    est.add_argument('--event-window', type=int, nargs=2, metavar=('PRE', 'POST'),
                     default=None)
    est.add_argument('--heterogeneity', default=None, metavar='COLUMN',
                     help='0/1 column interacted with treatment')

    sub.add_parser('sweep', help='mean mispricing along a load grid')

    text = sub.add_parser('textmetrics', help='Fog, log file size and boilerplate per filing')
    text.add_argument('--manifest', required=True)
    text.add_argument('--corpus-dir', default=None)
    text.add_argument('--reference-set', choices=('cross_section', 'own_history'),
                      default=None)
    text.add_argument('--shingle-size', type=int, default=None, metavar='K')
    text.add_argument('--abbreviations', default=None, metavar='FILE',
                      help='abbreviation stop-list, one per line')
    text.add_argument('--no-strip-markup', action='store_true',
                      help='treat documents as plain text')

    placebo = sub.add_parser('placebo', help='randomized adoption-date placebo test')
    _add_panel_source(placebo)
    placebo.add_argument('--draws', type=int, default=None)
    placebo.add_argument('--outcome', default=None)
    return parser


def _add_panel_source(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--panel', help='panel CSV')
    source.add_argument('--planted', action='store_true',
                        help='use a generated known-effect panel (outcome y, control x)')


def prepare_run_dir(out: Optional[str], base: str, command: str) -> Path:
    """
    Create the write-once run directory

    Raises:
        ConfigError: if the directory exists and is not empty
    """
    if out is None:
        out = str(Path(base) / f"{command}-{datetime.now():%Y%m%d-%H%M%S}")
    run_dir = Path(out)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise ConfigError(f"run directory {run_dir} already holds outputs",
                          {'out': str(run_dir)})
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _panel_and_settings(args, experiment: ExperimentConfig):
    settings = experiment.did
    if args.planted:
        panel = simulate_planted_panel(seed=experiment.seed)
        settings = replace(settings, outcomes=(PLANTED_COLUMNS['outcome'],),
                           controls=PLANTED_COLUMNS['controls'])
    else:
        panel = load_panel(args.panel)
    return panel, settings


def cmd_simulate(args, experiment: ExperimentConfig, run_dir: Path) -> int:
    observations, paths = run_simulation(experiment.simulation, experiment.mechanisms,
                                         experiment.technology, experiment.solver,
                                         experiment.threads)
    metadata = {'seed': experiment.seed,
                'config': experiment.to_dict(),
                'expected_rows': experiment.simulation.n_firms * experiment.simulation.n_periods,
                'excluded_events': (experiment.simulation.n_firms
                                    * experiment.simulation.n_periods - len(observations))}
    write_panel(observations, run_dir, metadata,
                paths if experiment.simulation.dump_paths else None)
    return 0


def cmd_estimate(args, experiment: ExperimentConfig, run_dir: Path) -> int:
    panel, settings = _panel_and_settings(args, experiment)
    outcomes: List[str] = args.outcome or list(settings.outcomes)
    window = tuple(args.event_window or settings.event_window)
    indicator = args.heterogeneity or settings.heterogeneity

    report, tables = {}, []
    for outcome in outcomes:
        spec = settings.spec(outcome)
        fit = estimate(panel, spec)
        fit.event_study = event_study(panel, spec, window, settings.binned)
        report[outcome] = fit.to_dict()
        if indicator:
            report[outcome]['heterogeneity'] = heterogeneity(panel, spec, indicator).to_dict()
        tables.append(fit.event_study.assign(outcome=outcome))

    write_fit_json(report, run_dir / 'fit.json')
    write_event_study_csv(pd.concat(tables, ignore_index=True)[
        ['outcome', 'relative_period', 'coefficient', 'se', 'n_obs']],
        run_dir / 'event_study.csv')
    return 0


def cmd_sweep(args, experiment: ExperimentConfig, run_dir: Path) -> int:
    sweep = experiment.sweep
    rng = np.random.default_rng(experiment.seed)
    state = build_sweep_state(sweep.n_investors, sweep.n_assets, rng,
                              sweep.attention_capacity, sweep.memory_capacity,
                              sweep.high_share, sweep.value_shock_std, sweep.anchor,
                              experiment.market.pricing_rule)
    table = proposition2_sweep(state, sweep.load_grid, experiment.technology, experiment.solver,
                               experiment.market.alpha_attention,
                               experiment.market.alpha_memory, experiment.threads)
    write_sweep_csv(table, run_dir / 'sweep.csv')
    if sweep.compare_shares:
        comparison = capacity_share_comparison(state, sweep.load_grid, experiment.technology,
                                               experiment.solver, sweep.compare_shares,
                                               experiment.market.alpha_attention,
                                               experiment.market.alpha_memory,
                                               experiment.threads)
        write_sweep_csv(comparison, run_dir / 'sweep_by_capacity_share.csv')
    return 0


def textmetrics_overrides(args, experiment: ExperimentConfig) -> ExperimentConfig:
    """Fold textmetrics flags into the experiment so the resolved copy records them"""
    overrides = {'reference_set': args.reference_set, 'shingle_size': args.shingle_size,
                 'abbreviations_file': args.abbreviations}
    changes = {k: v for k, v in overrides.items() if v is not None}
    if args.no_strip_markup:
        changes['strip_markup'] = False
    if not changes:
        return experiment
    try:
        return replace(experiment, textmetrics=replace(experiment.textmetrics, **changes))
    except ValueError as e:
        raise ConfigError(f"invalid textmetrics option: {e}", changes) from e


def cmd_textmetrics(args, experiment: ExperimentConfig, run_dir: Path) -> int:
    table = compute_corpus_metrics(args.manifest, experiment.textmetrics, args.corpus_dir)
    write_metrics_csv(table, run_dir / 'text_metrics.csv')
    return 0


def cmd_placebo(args, experiment: ExperimentConfig, run_dir: Path) -> int:
    panel, settings = _panel_and_settings(args, experiment)
    spec = settings.spec(args.outcome)
    result = placebo_test(panel, spec, args.draws or settings.placebo_draws,
                          np.random.SeedSequence(experiment.seed), experiment.threads)
    pd.DataFrame({'draw': np.arange(len(result.betas)), 'beta': result.betas}).to_csv(
        run_dir / 'placebo.csv', index=False, float_format='%.10g')
    with open(run_dir / 'placebo.json', 'w') as f:
        json.dump({'outcome': spec.outcome, **result.to_dict()}, f, indent=2, sort_keys=True)
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'sweep': cmd_sweep,
    'textmetrics': cmd_textmetrics,
    'placebo': cmd_placebo,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Returns:
        Exit code: 0 success, 2 config error, 3 numerical failure, 4 data error,
        1 anything unexpected
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format=Config.LOG_FORMAT)
    try:
        config_path = args.config or Config.DEFAULT_CONFIG
        experiment = ExperimentConfig.from_yaml(config_path).with_overrides(
            seed=args.seed, output_dir=args.out, threads=args.threads)
        if args.command == 'textmetrics':
            experiment = textmetrics_overrides(args, experiment)
        run_dir = prepare_run_dir(args.out, experiment.output_dir, args.command)
        experiment.write_resolved(run_dir / 'resolved_config.yaml')
        logger.info(f"Running {args.command} into {run_dir}")
        code = COMMANDS[args.command](args, experiment, run_dir)
        logger.info(f"{args.command} finished")
        return code
    except CogLoadError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}")
        print(json.dumps({'error': type(e).__name__, 'message': str(e), 'context': {}}),
              file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
