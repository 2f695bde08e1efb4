"""
Experiment driver: single runs over synthetic or parsed traces and sensitivity sweeps.

A sweep point regenerates (or re-maps, or re-filters) the traces for one axis
value and seed, then runs all three strategies on the same traces. The two
binned axes (`friend_distance`, `content_popularity_bin`) need one run per
seed and split its outcome log into bins. `mapped_friend_distance` instead
re-maps users per point so that the average friend distance nears the value.
"""
# Standard library imports
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
from scipy import stats

# Application-specific imports
from config.constants import (
    CONTENT_POPULARITY_BIN_EDGES, FRIEND_DISTANCE_EDGES_M, MAPPED_FRIEND_DISTANCE_TARGETS_M, MAPPING_SCHEMES,
    STRATEGY_IDS, SWEEP_AXES, SWEEP_FILE_TEMPLATE, SWEEP_LONG_TEMPLATE, SWEEP_REPLICATES_TEMPLATE
)
from utils.data_handlers import write_frame_csv, write_long_format
from .errors import UnknownOptionError
from .metrics import compute_metrics
from .scenarios import ExperimentConfig, SimConfig
from .simulator import SimulationResult, run_simulation
from .synth import generate_traces
from .trace_model import (
    MobilityTrace, SocialTrace, combine_traces, home_regions, map_users, map_users_for_distance,
    mean_friend_distance
)

logger = logging.getLogger(__name__)

AxisValue = Union[float, str]
Traces = Tuple[SocialTrace, MobilityTrace]

BINNED_AXES = ("friend_distance", "content_popularity_bin")
SUMMARY_METRICS = ["d2d_fraction", "total_requests", "d2d_requests", "contribution_mean",
                   "contribution_cv", "replica_fetches", "popularity_violations"]
OPTIONAL_METRICS = ["friend_distance_m"]


# --- Single Runs ---

def prepare_traces(cfg: ExperimentConfig, raw: Optional[Traces] = None) -> Traces:
    """
    Map social users onto mobility users and relabel both traces densely.

    Args:
        cfg: Experiment; its synth section is used when `raw` is None
        raw: Parsed (social, mobility) traces over independent user spaces

    Returns:
        (social, mobility) over simulated users 0..k-1
    """
    social, mobility = raw if raw is not None else generate_traces(cfg.synth)
    mapping = map_users(social, mobility, cfg.mapping, cfg.seed)
    return combine_traces(social, mobility, mapping)


def experiment_sim_config(cfg: ExperimentConfig, strategy: Optional[str] = None,
                          synthesized: bool = True) -> SimConfig:
    """Simulation parameters of `cfg`, with the strategy replaced and the synthetic horizon applied."""
    update: Dict[str, Any] = {}
    if strategy is not None:
        update['strategy'] = strategy
    if synthesized and cfg.sim.horizon_slots is None:
        update['horizon_slots'] = cfg.synth.horizon_slots
    if not update:
        return cfg.sim
    return SimConfig(**{**cfg.sim.model_dump(), **update})


def run_experiment(cfg: ExperimentConfig, traces: Optional[Traces] = None, strategy: Optional[str] = None,
                   tables_dir: Optional[str] = None) -> SimulationResult:
    """
    One simulation of an experiment.

    Args:
        cfg: Validated experiment
        traces: Already mapped traces; synthesised from `cfg` when None
        strategy: Strategy id overriding `cfg.sim.strategy`
        tables_dir: Destination of table dumps

    Returns:
        SimulationResult of the run
    """
    synthesized = traces is None
    if traces is None:
        traces = prepare_traces(cfg)
    return run_simulation(traces, experiment_sim_config(cfg, strategy, synthesized), tables_dir=tables_dir)

# --- End Single Runs ---


# --- Axis Handling ---

def check_axis(axis: str) -> str:
    """
    Raises:
        UnknownOptionError: If the axis is not a sweep axis
    """
    if axis not in SWEEP_AXES:
        raise UnknownOptionError("sweep axis", axis, SWEEP_AXES)
    return axis


def parse_axis_values(axis: str, values: Sequence[str]) -> List[AxisValue]:
    """
    Typed sweep values from their textual form.

    Raises:
        UnknownOptionError: For an unknown axis or mapping scheme
        ValueError: If a numeric axis value is not a number
    """
    check_axis(axis)
    parsed: List[AxisValue] = []
    for raw in values:
        raw = str(raw).strip()
        if axis == "mapping_scheme":
            if raw not in MAPPING_SCHEMES:
                raise UnknownOptionError("mapping scheme", raw, MAPPING_SCHEMES)
            parsed.append(raw)
        else:
            try:
                parsed.append(float(raw))
            except ValueError:
                raise ValueError(f"sweep value '{raw}' for axis {axis} is not a number")
    return parsed


def default_axis_values(axis: str) -> List[AxisValue]:
    """Bin lower edges for the binned axes, the mapping schemes for `mapping_scheme`."""
    check_axis(axis)
    if axis == "mapped_friend_distance":
        return list(MAPPED_FRIEND_DISTANCE_TARGETS_M)
    if axis == "friend_distance":
        return [float(e) for e in FRIEND_DISTANCE_EDGES_M[:-1]]
    if axis == "content_popularity_bin":
        return [float(e) for e in CONTENT_POPULARITY_BIN_EDGES]
    if axis == "mapping_scheme":
        return list(MAPPING_SCHEMES)
    raise ValueError(f"axis {axis} needs explicit values")


def apply_axis(cfg: ExperimentConfig, axis: str, value: AxisValue) -> ExperimentConfig:
    """Experiment for one value of a run axis; binned and mapping-driven axes leave the experiment unchanged."""
    check_axis(axis)
    if axis == "propagation_intensity":
        return cfg.with_modifications(synth={'propagation_intensity': float(value)})
    if axis == "crowdedness":
        return cfg.with_modifications(synth={'crowdedness': float(value)})
    if axis == "mapping_scheme":
        return cfg.with_modifications(mapping=str(value))
    if axis == "top_content_fraction":
        return cfg.with_modifications(sim={'top_content_fraction': float(value)})
    return cfg


def bin_index(keys: np.ndarray, lower_edges: Sequence[float]) -> np.ndarray:
    """Bin of each key among [e_i, e_{i+1}) with an open last bin; -1 below the first edge or for NaN."""
    keys = np.asarray(keys, dtype=float)
    index = np.searchsorted(np.asarray(lower_edges, dtype=float), keys, side='right') - 1
    index[np.isnan(keys)] = -1
    return index


def outcome_friend_distances(outcomes: pd.DataFrame, mobility: MobilityTrace) -> np.ndarray:
    """Distance in metres between the home regions of each requester and the friend it reshared from."""
    homes = home_regions(mobility.events, mobility.n_users)
    coordinates = mobility.regions.coordinates
    users = outcomes["user"].to_numpy(dtype=np.int64)
    parents = outcomes["parent"].to_numpy(dtype=np.int64)
    distances = np.full(len(outcomes), np.nan)

    valid = (parents >= 0) & (users < len(homes)) & (parents < len(homes))
    home_u = np.where(valid, homes[np.clip(users, 0, len(homes) - 1)], -1) if len(homes) else np.full(len(users), -1)
    home_v = np.where(valid, homes[np.clip(parents, 0, len(homes) - 1)], -1) if len(homes) else np.full(len(users), -1)
    valid &= (home_u >= 0) & (home_v >= 0) & (home_u < len(coordinates)) & (home_v < len(coordinates))
    if valid.any():
        delta = coordinates[home_u[valid]] - coordinates[home_v[valid]]
        distances[valid] = np.hypot(delta[:, 0], delta[:, 1])
    return distances

# --- End Axis Handling ---


# --- Sweep Points ---

@dataclass(frozen=True)
class SweepJob:
    axis: str
    value: Optional[AxisValue]
    seed: int
    cfg: ExperimentConfig
    bin_edges: Tuple[float, ...] = ()


def _row(axis: str, value: AxisValue, seed: int, summary: Dict[str, Any]) -> Dict[str, Any]:
    return {"axis": axis, "value": value, "seed": seed, **summary}


def _binned_rows(job: SweepJob, result: SimulationResult, mobility: MobilityTrace) -> List[Dict[str, Any]]:
    outcomes = result.outcomes
    if job.axis == "friend_distance":
        keys = outcome_friend_distances(outcomes, mobility)
    else:
        popularity = result.content_requests.reindex(outcomes["content"].to_numpy()).fillna(0)
        keys = popularity.to_numpy(dtype=float)
    index = bin_index(keys, job.bin_edges)
    rows = []
    for i, lower in enumerate(job.bin_edges):
        subset = outcomes[index == i]
        report = compute_metrics(subset, horizon_slots=result.horizon_slots, strategy=result.strategy)
        rows.append(_row(job.axis, lower, job.seed, report.summary()))
    return rows


def run_sweep_point(job: SweepJob) -> List[Dict[str, Any]]:
    """Rows of one sweep point: every strategy on the same traces (one row per bin for binned axes)."""
    cfg = job.cfg.with_seed(job.seed)
    if job.axis not in BINNED_AXES:
        cfg = apply_axis(cfg, job.axis, job.value)
    extra: Dict[str, Any] = {}
    if job.axis == "mapped_friend_distance":
        social, mobility = generate_traces(cfg.synth)
        mapping = map_users_for_distance(social, mobility, float(job.value), cfg.seed)
        extra["friend_distance_m"] = mean_friend_distance(social, mobility, mapping)
        traces = combine_traces(social, mobility, mapping)
    else:
        traces = prepare_traces(cfg)
    rows: List[Dict[str, Any]] = []
    for strategy in STRATEGY_IDS:
        result = run_simulation(traces, experiment_sim_config(cfg, strategy))
        if job.axis in BINNED_AXES:
            rows.extend(_binned_rows(job, result, traces[1]))
        else:
            rows.append(_row(job.axis, job.value, job.seed, {**result.metrics.summary(), **extra}))
    logger.info(f"sweep {job.axis}={job.value if job.value is not None else 'bins'} seed {job.seed}: done")
    return rows

# --- End Sweep Points ---


# --- Sweep Results ---

def trend(summary: pd.DataFrame, strategy: str, metric: str = "d2d_fraction") -> float:
    """
    Spearman rho of a summary metric against the numeric axis value for one strategy.

    Returns:
        rho, or NaN when fewer than two values exist or either side is constant
    """
    rows = summary[summary["strategy"] == strategy]
    values = pd.to_numeric(rows["value"], errors='coerce')
    if values.isna().any():
        raise ValueError("trend needs a numeric sweep axis")
    if len(rows) < 2 or values.nunique() < 2 or rows[metric].nunique() < 2:
        return math.nan
    rho, _ = stats.spearmanr(values.to_numpy(), rows[metric].to_numpy())
    return float(rho)


def summarize(replicates: pd.DataFrame) -> pd.DataFrame:
    """Seed means per (value, strategy) with the replicate count and the D2D fraction spread."""
    grouped = replicates.groupby(["value", "strategy"], sort=False)
    metrics = SUMMARY_METRICS + [m for m in OPTIONAL_METRICS if m in replicates.columns]
    summary = grouped[metrics].mean()
    summary["d2d_fraction_std"] = grouped["d2d_fraction"].std(ddof=0)
    summary["replicates"] = grouped.size()
    summary = summary.reset_index()
    summary.insert(0, "axis", replicates["axis"].iloc[0] if len(replicates) else "")
    return summary


@dataclass
class SweepResult:
    """
    Attributes:
        summary: One row per (value, strategy) with seed means
        replicates: One row per (value, strategy, seed)
    """
    axis: str
    values: List[AxisValue]
    summary: pd.DataFrame
    replicates: pd.DataFrame

    def trend(self, strategy: str, metric: str = "d2d_fraction") -> float:
        return trend(self.summary, strategy, metric)

    def write(self, out_dir: str, long_format: bool = True) -> List[str]:
        """Write the summary and replicate tables (and the long format) under `out_dir`."""
        paths = [os.path.join(out_dir, SWEEP_FILE_TEMPLATE.format(axis=self.axis)),
                 os.path.join(out_dir, SWEEP_REPLICATES_TEMPLATE.format(axis=self.axis))]
        write_frame_csv(self.summary, paths[0])
        write_frame_csv(self.replicates, paths[1])
        if long_format:
            paths.append(os.path.join(out_dir, SWEEP_LONG_TEMPLATE.format(axis=self.axis)))
            write_long_format(self.summary, paths[-1], ["value", "strategy"], SUMMARY_METRICS)
        return paths


def run_sweep(axis: str, values: Optional[Sequence[AxisValue]], base_cfg: ExperimentConfig,
              jobs: Optional[int] = None) -> SweepResult:
    """
    Run every strategy for every axis value and seed of `base_cfg.sweep.seeds`.

    Args:
        axis: One of the sweep axes
        values: Axis values; for binned axes the bin lower edges (defaults apply when None)
        base_cfg: Experiment every point starts from
        jobs: Parallel sweep points (defaults to `base_cfg.sweep.jobs`)

    Returns:
        SweepResult with one summary row per (value, strategy)

    Raises:
        UnknownOptionError: If the axis is unknown
    """
    check_axis(axis)
    values = list(values) if values else default_axis_values(axis)
    seeds = list(base_cfg.sweep.seeds)
    jobs = jobs or base_cfg.sweep.jobs

    if axis in BINNED_AXES:
        edges = tuple(sorted(float(v) for v in values))
        points = [SweepJob(axis, None, seed, base_cfg, edges) for seed in seeds]
    else:
        points = [SweepJob(axis, value, seed, base_cfg) for value in values for seed in seeds]
    logger.info(f"Sweeping {axis} over {len(values)} value(s), {len(seeds)} seed(s), {len(points)} point(s), jobs={jobs}")

    if jobs <= 1 or len(points) <= 1:
        results = [run_sweep_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as executor:
            results = list(executor.map(run_sweep_point, points))

    rows = [row for point_rows in results for row in point_rows]
    replicates = pd.DataFrame(rows)
    if axis in BINNED_AXES:
        order = {v: i for i, v in enumerate(sorted(float(v) for v in values))}
    else:
        order = {v: i for i, v in enumerate(values)}
    replicates = replicates.sort_values(
        by=["value", "strategy", "seed"],
        key=lambda col: col.map(order) if col.name == "value" else (
            col.map({s: i for i, s in enumerate(STRATEGY_IDS)}) if col.name == "strategy" else col),
        kind='stable',
    ).reset_index(drop=True)
    columns = ["axis", "value", "strategy", "seed"] + [c for c in replicates.columns
                                                       if c not in ("axis", "value", "strategy", "seed")]
    replicates = replicates[columns]
    return SweepResult(axis=axis, values=list(order), summary=summarize(replicates), replicates=replicates)

# --- End Sweep Results ---
