"""
DiD Estimator Module
Two-way fixed effects difference-in-differences with cluster-robust standard
errors, event-study coefficients, placebo randomization and heterogeneity
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
import pandas as pd
from scipy import stats
import statsmodels.api as sm

from modules.exceptions import (
    CogLoadError,
    DataError,
    NonConvergence,
    RankDeficient,
    TooFewClusters,
)

logger = logging.getLogger(__name__)

KeySpec = Union[str, Tuple[str, ...]]
COLLINEARITY_TOLERANCE = 1e-9
MIN_PLACEBO_DRAWS = 100


@dataclass(frozen=True)
class DidSpec:
    """
    Columns and numerical settings of a TWFE regression

    time_key may name several columns; their combination forms one group key.
    cluster_key defaults to unit_key. period_key and adoption_key hold the
    calendar period and the adoption period used by event studies and placebos.
    """

    outcome: str = 'log_speed'
    treatment: str = 'treated'
    controls: Tuple[str, ...] = ()
    unit_key: KeySpec = 'firm_id'
    time_key: KeySpec = 'period'
    cluster_key: Optional[str] = None
    demean_tolerance: float = 1e-10
    max_demean_sweeps: int = 200
    period_key: str = 'period'
    adoption_key: str = 'adoption_period'

    def __post_init__(self):
        object.__setattr__(self, 'controls', tuple(self.controls))
        for name in ('unit_key', 'time_key'):
            value = getattr(self, name)
            if not isinstance(value, str):
                object.__setattr__(self, name, tuple(value))
        if self.outcome == self.treatment:
            raise ValueError("outcome and treatment must be different columns")
        if self.demean_tolerance <= 0:
            raise ValueError("demean_tolerance must be positive")
        if self.max_demean_sweeps < 1:
            raise ValueError("max_demean_sweeps must be at least 1")

    @property
    def cluster(self) -> KeySpec:
        return self.cluster_key or self.unit_key

    def key_columns(self) -> List[str]:
        columns: List[str] = []
        for key in (self.unit_key, self.time_key, self.cluster):
            columns.extend([key] if isinstance(key, str) else key)
        return list(dict.fromkeys(columns))


@dataclass
class DidFit:
    """Coefficients and cluster-robust covariance of one regression"""

    names: List[str]
    coefficients: np.ndarray
    covariance: np.ndarray
    n_obs: int
    n_clusters: int
    r_squared_within: float
    event_study: Optional[pd.DataFrame] = None
    outcome: str = ''

    def __post_init__(self):
        if self.n_clusters > self.n_obs:
            raise ValueError("more clusters than observations")

    @property
    def cluster_robust_se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def beta_treatment(self) -> float:
        return float(self.coefficients[0])

    @property
    def control_coefficients(self) -> np.ndarray:
        return self.coefficients[1:]

    @property
    def t_stats(self) -> np.ndarray:
        return self.coefficients / self.cluster_robust_se

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.cluster_robust_se[self.names.index(name)])

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        """Confidence intervals from a t distribution with G - 1 degrees of freedom"""
        critical = stats.t.ppf(0.5 + level / 2.0, max(self.n_clusters - 1, 1))
        half = critical * self.cluster_robust_se
        return np.column_stack([self.coefficients - half, self.coefficients + half])

    def to_dict(self) -> Dict[str, Any]:
        ci = self.conf_int()
        report: Dict[str, Any] = {
            'outcome': self.outcome,
            'beta_treatment': self.beta_treatment,
            'coefficients': {
                name: {'estimate': float(b), 'se': float(s), 't': float(t),
                       'ci_low': float(lo), 'ci_high': float(hi)}
                for name, b, s, t, (lo, hi) in zip(self.names, self.coefficients,
                                                  self.cluster_robust_se, self.t_stats, ci)
            },
            'n_obs': int(self.n_obs),
            'n_clusters': int(self.n_clusters),
            'r_squared_within': float(self.r_squared_within),
        }
        if self.event_study is not None:
            report['event_study'] = self.event_study.to_dict(orient='records')
        return report


@dataclass
class PlaceboResult:
    """Placebo coefficient distribution against the actual estimate"""

    actual_beta: float
    betas: np.ndarray
    p_value: float
    failures: int = 0
    failure_messages: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'actual_beta': float(self.actual_beta),
            'p_value': float(self.p_value),
            'n_draws': int(len(self.betas) + self.failures),
            'n_valid': int(len(self.betas)),
            'failures': int(self.failures),
            'placebo_mean': float(np.mean(self.betas)) if len(self.betas) else None,
            'placebo_sd': float(np.std(self.betas, ddof=1)) if len(self.betas) > 1 else None,
        }


def as_panel_frame(panel) -> pd.DataFrame:
    """Accept a DataFrame or a sequence of records exposing to_record()"""
    if isinstance(panel, pd.DataFrame):
        return panel
    return pd.DataFrame([obs.to_record() for obs in panel])


def load_panel(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file not found: {path}", {'path': str(path)})
    return pd.read_csv(path)


def _check_columns(panel: pd.DataFrame, columns: Sequence[str]):
    missing = [c for c in columns if c not in panel.columns]
    if missing:
        raise DataError(f"panel is missing column(s): {', '.join(missing)}",
                        {'missing_columns': missing})


def group_codes(panel: pd.DataFrame, key: KeySpec) -> np.ndarray:
    """Integer group codes for a single or composite key"""
    if isinstance(key, str):
        codes, _ = pd.factorize(panel[key], sort=True)
        return codes
    return panel.groupby(list(key), sort=True).ngroup().to_numpy()


def _group_means(values: np.ndarray, codes: np.ndarray, counts: np.ndarray) -> np.ndarray:
    sums = np.zeros((counts.shape[0], values.shape[1]))
    np.add.at(sums, codes, values)
    return sums / counts[:, None]


def within_transform(panel: pd.DataFrame, spec: DidSpec,
                     columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Sweep out unit and time fixed effects by alternating projections

    Each sweep subtracts unit-group means, then time-group means, until every
    group mean of every column is below demean_tolerance in absolute value.

    Args:
        panel: DataFrame holding the columns and both fixed-effect keys
        spec: DidSpec
        columns: columns to demean (default outcome, treatment, controls)

    Returns:
        DataFrame of demeaned columns, same index as the panel

    Raises:
        NonConvergence: if max_demean_sweeps sweeps do not reach the tolerance
    """
    panel = as_panel_frame(panel)
    columns = list(columns or [spec.outcome, spec.treatment, *spec.controls])
    _check_columns(panel, columns + spec.key_columns())
    if panel.empty:
        raise DataError("cannot demean an empty panel")

    values = panel[columns].to_numpy(dtype=float).copy()
    groups = []
    for key in (spec.unit_key, spec.time_key):
        codes = group_codes(panel, key)
        groups.append((codes, np.bincount(codes).astype(float)))

    deviation = np.inf
    for sweep in range(1, spec.max_demean_sweeps + 1):
        for codes, counts in groups:
            values -= _group_means(values, codes, counts)[codes]
        deviation = max(np.abs(_group_means(values, codes, counts)).max()
                        for codes, counts in groups)
        if deviation < spec.demean_tolerance:
            logger.debug(f"Demeaning converged after {sweep} sweep(s)")
            return pd.DataFrame(values, columns=columns, index=panel.index)

    raise NonConvergence(f"demeaning did not converge in {spec.max_demean_sweeps} sweeps",
                         {'max_group_mean': float(deviation),
                          'tolerance': spec.demean_tolerance})


def cluster_ols(x: np.ndarray, y: np.ndarray,
                clusters: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    OLS with the CR1 sandwich (G/(G-1)) ((n-1)/(n-k)) (X'X)^-1 (sum_g X_g'u_g u_g'X_g) (X'X)^-1

    Args:
        x: n x k regressors
        y: length-n outcome
        clusters: length-n integer cluster codes

    Returns:
        Tuple of (coefficients, k x k covariance matrix, residuals)
    """
    result = sm.OLS(y, x).fit(cov_type='cluster', cov_kwds={'groups': clusters})
    covariance = np.asarray(result.cov_params())
    return (np.asarray(result.params), (covariance + covariance.T) / 2.0,
            np.asarray(result.resid))


def _prepare(panel, spec: DidSpec, regressors: Sequence[str]) -> pd.DataFrame:
    panel = as_panel_frame(panel)
    used = [spec.outcome, *regressors]
    _check_columns(panel, used + spec.key_columns())
    complete = panel.dropna(subset=used + spec.key_columns())
    dropped = len(panel) - len(complete)
    if dropped:
        logger.warning(f"Dropped {dropped} rows with missing values in {used}")
    if complete.empty:
        raise DataError("no complete rows to estimate on", {'columns': used})
    return complete


def fit_twfe(panel, spec: DidSpec, regressors: Sequence[str]) -> DidFit:
    """
    Least squares on demeaned data with CR1 covariance for arbitrary regressors

    Raises:
        TooFewClusters: with fewer than two clusters
        RankDeficient: if a regressor is absorbed by the fixed effects or the
            demeaned design is collinear
    """
    regressors = list(regressors)
    data = _prepare(panel, spec, regressors)
    clusters = group_codes(data, spec.cluster)
    n_clusters = int(clusters.max()) + 1
    if n_clusters < 2:
        raise TooFewClusters(f"need at least 2 clusters, found {n_clusters}",
                             {'cluster_key': spec.cluster, 'n_clusters': n_clusters})

    demeaned = within_transform(data, spec, [spec.outcome, *regressors])
    y = demeaned[spec.outcome].to_numpy()
    x = demeaned[regressors].to_numpy()
    n, k = x.shape
    if n <= k:
        raise RankDeficient(f"{n} observations for {k} regressors", {'n_obs': n, 'k': k})

    raw_scale = np.maximum(np.linalg.norm(data[regressors].to_numpy(dtype=float), axis=0), 1.0)
    absorbed = [name for name, norm, scale in zip(regressors, np.linalg.norm(x, axis=0),
                                                   raw_scale)
                if norm <= COLLINEARITY_TOLERANCE * scale]
    if absorbed:
        raise RankDeficient(f"regressor(s) {absorbed} absorbed by the fixed effects",
                            {'absorbed': absorbed})
    if np.linalg.matrix_rank(x / np.linalg.norm(x, axis=0)) < k:
        raise RankDeficient("demeaned design is collinear", {'regressors': regressors})

    coefficients, covariance, residuals = cluster_ols(x, y, clusters)
    total = float(y @ y)
    r_squared = 1.0 - float(residuals @ residuals) / total if total > 0 else 0.0

    return DidFit(regressors, coefficients, covariance, n, n_clusters, r_squared,
                  outcome=spec.outcome)


def estimate(panel, spec: DidSpec) -> DidFit:
    """
    TWFE difference-in-differences: outcome on treatment and controls with
    unit and time fixed effects, clustered by spec.cluster

    Args:
        panel: DataFrame or sequence of PanelObservation
        spec: DidSpec

    Returns:
        DidFit with the treatment coefficient first
    """
    fit = fit_twfe(panel, spec, [spec.treatment, *spec.controls])
    logger.info(f"{spec.outcome}: beta={fit.beta_treatment:.5f} "
                f"(se {fit.cluster_robust_se[0]:.5f}, n={fit.n_obs}, G={fit.n_clusters})")
    return fit


def relative_periods(panel: pd.DataFrame, spec: DidSpec) -> pd.Series:
    """
    Periods since adoption for ever-treated units, NaN for never-treated ones

    A unit whose adoption period lies beyond the last observed period is
    never treated within the panel.
    """
    _check_columns(panel, [spec.period_key, spec.adoption_key])
    last = panel[spec.period_key].max()
    relative = (panel[spec.period_key] - panel[spec.adoption_key]).astype(float)
    return relative.where(panel[spec.adoption_key] <= last)


def event_study(panel, spec: DidSpec, window: Tuple[int, int] = (4, 6),
                binned: bool = True) -> pd.DataFrame:
    """
    Relative-time coefficients with period -1 as the omitted reference

    Args:
        panel: DataFrame or sequence of PanelObservation
        spec: DidSpec (the treatment column is replaced by relative-time dummies)
        window: (pre periods, post periods); dummies run from -pre to +post
        binned: fold periods beyond the window into the end points; otherwise
            drop treated-unit rows outside the window

    Returns:
        DataFrame with relative_period, coefficient, se, n_obs. Empty cells
        are kept with n_obs 0 and NaN estimates.
    """
    pre, post = window
    if pre < 2 or post < 0:
        raise ValueError("window needs at least two pre periods and nonnegative post periods")
    data = as_panel_frame(panel).copy()
    relative = relative_periods(data, spec)
    if relative.notna().sum() == 0:
        raise DataError("event study needs at least one treated unit",
                        {'adoption_key': spec.adoption_key})

    if binned:
        relative = relative.clip(lower=-pre, upper=post)
    else:
        outside = relative.notna() & ((relative < -pre) | (relative > post))
        data, relative = data[~outside], relative[~outside]

    periods = [r for r in range(-pre, post + 1) if r != -1]
    counts = {r: int((relative == r).sum()) for r in periods}
    empty = [r for r in periods if counts[r] == 0]
    if empty:
        logger.warning(f"Event study: no observations at relative period(s) {empty}")

    names = []
    for r in periods:
        if counts[r]:
            name = f"rel_{r}"
            data[name] = (relative == r).astype(float)
            names.append(name)

    fit = fit_twfe(data, spec, names + list(spec.controls))
    rows = []
    for r in periods:
        name = f"rel_{r}"
        if counts[r]:
            rows.append({'relative_period': r, 'coefficient': fit.coefficient(name),
                         'se': fit.se(name), 'n_obs': counts[r]})
        else:
            rows.append({'relative_period': r, 'coefficient': np.nan, 'se': np.nan,
                         'n_obs': 0})
    rows.append({'relative_period': -1, 'coefficient': 0.0, 'se': 0.0,
                 'n_obs': int((relative == -1).sum())})
    table = pd.DataFrame(rows).sort_values('relative_period').reset_index(drop=True)
    logger.info(f"Event study on {spec.outcome}: {len(names)} relative periods estimated")
    return table


def heterogeneity(panel, spec: DidSpec, indicator: str) -> DidFit:
    """
    Treatment effect split by a 0/1 indicator

    Adds treatment x indicator to the regression. The indicator itself enters
    only when it varies within units.

    Returns:
        DidFit with names [treatment, treatment_x_indicator, ...]
    """
    data = as_panel_frame(panel).copy()
    _check_columns(data, [indicator, spec.treatment])
    interaction = f"{spec.treatment}_x_{indicator}"
    data[interaction] = data[spec.treatment] * data[indicator]
    regressors = [spec.treatment, interaction]
    unit = spec.unit_key if isinstance(spec.unit_key, str) else list(spec.unit_key)
    if (data.groupby(unit)[indicator].nunique() > 1).any():
        regressors.append(indicator)
    fit = fit_twfe(data, spec, regressors + list(spec.controls))
    logger.info(f"Heterogeneity by {indicator}: base {fit.coefficient(spec.treatment):.5f}, "
                f"interaction {fit.coefficient(interaction):.5f}")
    return fit


def _placebo_draw(args) -> Tuple[Optional[float], Optional[str]]:
    data, spec, seed, candidates = args
    rng = np.random.default_rng(seed)
    units = group_codes(data, spec.unit_key)
    adoption = rng.choice(candidates, size=int(units.max()) + 1)
    placebo = data.copy()
    placebo[spec.treatment] = (placebo[spec.period_key].to_numpy()
                               >= adoption[units]).astype(float)
    try:
        return estimate(placebo, spec).beta_treatment, None
    except CogLoadError as e:
        return None, str(e)


def placebo_test(panel, spec: DidSpec, n_draws: int = 500,
                 seed: Union[int, np.random.SeedSequence] = 0,
                 threads: int = 1) -> PlaceboResult:
    """
    Randomization inference on the treatment coefficient

    Each draw assigns every unit an adoption period uniformly among the
    observed periods plus a never-treated option, re-estimates, and records
    the placebo coefficient. Draws use independent child streams and are
    merged in draw order.

    Args:
        panel: DataFrame or sequence of PanelObservation
        spec: DidSpec
        n_draws: number of placebo assignments (at least 100)
        seed: root seed or SeedSequence
        threads: worker processes

    Returns:
        PlaceboResult with the empirical two-sided p-value
    """
    if n_draws < MIN_PLACEBO_DRAWS:
        raise ValueError(f"placebo test needs at least {MIN_PLACEBO_DRAWS} draws")
    data = _prepare(panel, spec, [spec.treatment, *spec.controls])
    _check_columns(data, [spec.period_key])
    actual = estimate(data, spec).beta_treatment

    periods = np.sort(data[spec.period_key].unique())
    candidates = np.append(periods, periods[-1] + 1)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    jobs = [(data, spec, child, candidates) for child in root.spawn(n_draws)]

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_placebo_draw, jobs,
                                    chunksize=max(1, n_draws // (4 * threads))))
    else:
        outcomes = [_placebo_draw(job) for job in jobs]

    betas = np.array([b for b, _ in outcomes if b is not None])
    messages = [m for _, m in outcomes if m is not None]
    if messages:
        logger.warning(f"{len(messages)} of {n_draws} placebo draws failed; first: {messages[0]}")
    if betas.size == 0:
        raise DataError("every placebo draw failed", {'n_draws': n_draws})

    exceed = int(np.sum(np.abs(betas) >= abs(actual)))
    p_value = (1.0 + exceed) / (1.0 + betas.size)
    logger.info(f"Placebo test: actual beta {actual:.5f}, p={p_value:.4f} "
                f"over {betas.size} draws")
    return PlaceboResult(actual, betas, p_value, len(messages), messages)


def simulate_planted_panel(units: int = 200, periods: int = 40, beta: float = -0.162,
                           sigma: float = 0.01, seed: int = 0,
                           adoption_periods: Sequence[int] = (12, 18, 24, 40),
                           control_effect: float = 0.3) -> pd.DataFrame:
    """
    Known-DGP panel: y = 2 + 0.5 unit + time + beta treated + gamma x + noise

    Units are assigned to adoption periods round-robin; an adoption period at
    or beyond `periods` means never treated.

    Returns:
        DataFrame with firm_id, period, adoption_period, treated, x, y, cluster_id
    """
    rng = np.random.default_rng(seed)
    unit_effect = rng.normal(0.0, 1.0, size=units)
    time_effect = rng.normal(0.0, 0.5, size=periods)
    adoption = np.array([adoption_periods[i % len(adoption_periods)] for i in range(units)])

    unit_idx = np.repeat(np.arange(units), periods)
    period = np.tile(np.arange(periods), units)
    treated = (period >= adoption[unit_idx]).astype(float)
    x = rng.normal(0.0, 1.0, size=units * periods)
    noise = rng.normal(0.0, sigma, size=units * periods) if sigma > 0 else 0.0
    y = (2.0 + 0.5 * unit_effect[unit_idx] + time_effect[period] + beta * treated
         + control_effect * x + noise)

    return pd.DataFrame({
        'firm_id': [f"unit_{i:04d}" for i in unit_idx],
        'period': period,
        'adoption_period': adoption[unit_idx],
        'treated': treated,
        'x': x,
        'y': y,
        'cluster_id': [f"unit_{i:04d}" for i in unit_idx],
    })


def write_fit_json(report: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(report, f, indent=2, sort_keys=True, default=float)
    logger.info(f"Fit report written to {path}")
    return path


def write_event_study_csv(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format='%.10g')
    logger.info(f"Event-study table written to {path}")
    return path
