"""
Evaluation metrics computed from an outcome log.

The D2D delivery fraction counts demand requests only; replica fetches made
by the strategies are reported as a separate volume.
"""
# Standard library imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

# Third-party imports
import numpy as np
import pandas as pd

# Application-specific imports
from config.constants import DEFAULT_SLOT_LENGTH_S
from .trace_model import AssociationEvent

logger = logging.getLogger(__name__)

_TIME_TOLERANCE_S = 1e-6

SERIES_COLUMNS = ["slot", "requests", "d2d", "fraction", "cumulative_requests", "cumulative_d2d", "cumulative_fraction"]


@dataclass
class MetricsReport:
    """
    Delivery metrics of one run.

    Attributes:
        d2d_fraction: Cumulative D2D fraction (0 with `empty` set when there were no requests)
        series: Per-slot and cumulative fractions, one row per slot
        contribution: Uploads per user, indexed by user id
        per_content: Requests and D2D fraction per content
    """
    total_requests: int
    d2d_requests: int
    d2d_fraction: float
    empty: bool
    series: pd.DataFrame
    contribution: pd.Series
    per_content: pd.DataFrame
    popularity_violations: int = 0
    cap_violations: int = 0
    violation_slots: int = 0
    replica_fetches: int = 0
    replica_fetches_from_peers: int = 0
    mean_latency_s: float = 0.0
    deferred_requests: int = 0
    strategy: Optional[str] = None
    axis_values: Dict[str, Any] = field(default_factory=dict)

    @property
    def server_requests(self) -> int:
        return self.total_requests - self.d2d_requests

    @property
    def contribution_mean(self) -> float:
        return float(self.contribution.mean()) if len(self.contribution) else 0.0

    @property
    def contribution_cv(self) -> float:
        """Coefficient of variation of per-user uploads (population std over mean)."""
        mean = self.contribution_mean
        if mean <= 0:
            return 0.0
        return float(self.contribution.std(ddof=0) / mean)

    def contribution_cdf(self) -> pd.DataFrame:
        """Empirical CDF of per-user upload counts: columns `uploads`, `cdf`."""
        if len(self.contribution) == 0:
            return pd.DataFrame({"uploads": pd.Series(dtype=np.int64), "cdf": pd.Series(dtype=float)})
        counts = self.contribution.value_counts().sort_index()
        cdf = counts.cumsum() / counts.sum()
        return pd.DataFrame({"uploads": counts.index.astype(np.int64), "cdf": cdf.to_numpy()})

    def summary(self) -> Dict[str, Any]:
        """Scalar metrics as plain Python values (for YAML and sweep rows)."""
        data: Dict[str, Any] = {
            "strategy": self.strategy,
            "total_requests": int(self.total_requests),
            "d2d_requests": int(self.d2d_requests),
            "server_requests": int(self.server_requests),
            "d2d_fraction": float(self.d2d_fraction),
            "empty": bool(self.empty),
            "deferred_requests": int(self.deferred_requests),
            "mean_latency_s": float(self.mean_latency_s),
            "contribution_mean": self.contribution_mean,
            "contribution_cv": self.contribution_cv,
            "replica_fetches": int(self.replica_fetches),
            "replica_fetches_from_peers": int(self.replica_fetches_from_peers),
            "popularity_violations": int(self.popularity_violations),
            "cap_violations": int(self.cap_violations),
            "violation_slots": int(self.violation_slots),
        }
        data.update(self.axis_values)
        return data


def _slots(outcomes: pd.DataFrame, slot_length_s: float) -> pd.Series:
    if "slot" in outcomes.columns:
        return outcomes["slot"].astype(np.int64)
    return (outcomes["time_s"] // slot_length_s).astype(np.int64)


def slot_series(outcomes: pd.DataFrame, horizon_slots: Optional[int] = None,
                slot_length_s: float = DEFAULT_SLOT_LENGTH_S) -> pd.DataFrame:
    """Per-slot request and D2D counts with per-slot and cumulative fractions."""
    slots = _slots(outcomes, slot_length_s)
    d2d = (outcomes["served_by"] == "d2d").astype(np.int64)
    grouped = pd.DataFrame({"slot": slots, "d2d": d2d}).groupby("slot")["d2d"].agg(["count", "sum"])
    if horizon_slots is None:
        horizon_slots = int(slots.max()) + 1 if len(slots) else 0
    index = pd.RangeIndex(max(horizon_slots, int(slots.max()) + 1 if len(slots) else 0), name="slot")
    grouped = grouped.reindex(index, fill_value=0)

    series = pd.DataFrame({
        "slot": index.to_numpy(),
        "requests": grouped["count"].to_numpy(dtype=np.int64),
        "d2d": grouped["sum"].to_numpy(dtype=np.int64),
    })
    series["cumulative_requests"] = series["requests"].cumsum()
    series["cumulative_d2d"] = series["d2d"].cumsum()
    with np.errstate(divide='ignore', invalid='ignore'):
        series["fraction"] = np.where(series["requests"] > 0, series["d2d"] / series["requests"], 0.0)
        series["cumulative_fraction"] = np.where(series["cumulative_requests"] > 0,
                                                 series["cumulative_d2d"] / series["cumulative_requests"], 0.0)
    return series[SERIES_COLUMNS]


def contribution_counts(outcomes: pd.DataFrame, n_users: Optional[int] = None) -> pd.Series:
    """D2D uploads per serving peer; users that never uploaded appear with 0 when `n_users` is given."""
    peers = outcomes.loc[outcomes["served_by"] == "d2d", "peer"].astype(np.int64)
    counts = peers.value_counts().sort_index()
    if n_users is None:
        n_users = int(counts.index.max()) + 1 if len(counts) else 0
    n_users = max(n_users, int(counts.index.max()) + 1 if len(counts) else 0)
    counts = counts.reindex(pd.RangeIndex(n_users), fill_value=0).astype(np.int64)
    counts.index.name = "user"
    counts.name = "uploads"
    return counts


def per_content_frame(outcomes: pd.DataFrame) -> pd.DataFrame:
    """Requests, D2D-served requests and D2D fraction per content."""
    if outcomes.empty:
        return pd.DataFrame({"content": pd.Series(dtype=np.int64), "requests": pd.Series(dtype=np.int64),
                             "d2d": pd.Series(dtype=np.int64), "d2d_fraction": pd.Series(dtype=float)})
    frame = pd.DataFrame({"content": outcomes["content"].astype(np.int64),
                          "d2d": (outcomes["served_by"] == "d2d").astype(np.int64)})
    grouped = frame.groupby("content")["d2d"].agg(["count", "sum"]).reset_index()
    grouped.columns = ["content", "requests", "d2d"]
    grouped["d2d_fraction"] = grouped["d2d"] / grouped["requests"]
    return grouped


def compute_metrics(outcome_log: pd.DataFrame,
                    horizon_slots: Optional[int] = None,
                    slot_length_s: float = DEFAULT_SLOT_LENGTH_S,
                    n_users: Optional[int] = None,
                    violations: Optional[pd.DataFrame] = None,
                    replica_fetches: Optional[pd.DataFrame] = None,
                    strategy: Optional[str] = None) -> MetricsReport:
    """
    Delivery metrics of an outcome log.

    Args:
        outcome_log: One row per request with at least time_s, content,
            served_by and peer (a `slot` column is used when present)
        horizon_slots: Number of slots in the series (defaults to the last slot seen)
        slot_length_s: Slot length for logs without a `slot` column
        n_users: Size of the user space for the contribution histogram
        violations: Per-slot popularity and cap violation counts
        replica_fetches: Replica fetch log with a `source` column
        strategy: Strategy id recorded in the report

    Returns:
        MetricsReport; an empty log gives a zeroed report with `empty` set
    """
    total = int(len(outcome_log))
    d2d = int((outcome_log["served_by"] == "d2d").sum()) if total else 0
    empty = total == 0
    if empty:
        logger.warning("Outcome log has no requests; D2D fraction reported as 0")

    report = MetricsReport(
        total_requests=total,
        d2d_requests=d2d,
        d2d_fraction=d2d / total if total else 0.0,
        empty=empty,
        series=slot_series(outcome_log, horizon_slots, slot_length_s),
        contribution=contribution_counts(outcome_log, n_users),
        per_content=per_content_frame(outcome_log),
        strategy=strategy,
    )
    if total and "latency_s" in outcome_log.columns:
        report.mean_latency_s = float(outcome_log["latency_s"].mean())
    if "deferred" in outcome_log.columns:
        report.deferred_requests = int(outcome_log["deferred"].sum())
    if violations is not None and not violations.empty:
        report.popularity_violations = int(violations["popularity_violations"].sum())
        report.cap_violations = int(violations["cap_violations"].sum())
        report.violation_slots = int(((violations["popularity_violations"] > 0) | (violations["cap_violations"] > 0)).sum())
    if replica_fetches is not None:
        report.replica_fetches = int(len(replica_fetches))
        if len(replica_fetches):
            report.replica_fetches_from_peers = int((replica_fetches["source"] == "peer").sum())
    logger.debug(f"metrics: {d2d}/{total} requests via D2D, {report.replica_fetches} replica fetches")
    return report


def audit_outcomes(outcomes: pd.DataFrame, associations: Sequence[AssociationEvent],
                   upload_capacity: np.ndarray, slot_length_s: float = DEFAULT_SLOT_LENGTH_S) -> List[str]:
    """
    Post-hoc check of D2D outcomes against the mobility trace.

    A D2D peer must have been associated with the requester's region when
    the request was served (request time plus any deferral wait), and no
    peer may serve more than its upload capacity within one slot.

    Returns:
        Descriptions of the offending rows; empty when the log is consistent
    """
    problems: List[str] = []
    served = outcomes[outcomes["served_by"] == "d2d"]
    if served.empty:
        return problems
    by_user: Dict[int, List[AssociationEvent]] = {}
    for event in associations:
        by_user.setdefault(event.user, []).append(event)

    latency = served["latency_s"] if "latency_s" in served.columns else pd.Series(0.0, index=served.index)
    serve_times = served["time_s"] + latency
    tol = _TIME_TOLERANCE_S
    for (_, row), t in zip(served.iterrows(), serve_times):
        peer, region = int(row["peer"]), int(row["region"])
        present = any(e.region == region and e.time - tol <= t < e.end + tol for e in by_user.get(peer, ()))
        if not present:
            problems.append(f"request at {row['time_s']} by user {int(row['user'])}: peer {peer} "
                            f"not in region {region} at {t}")

    slots = ((serve_times + tol) // slot_length_s).astype(np.int64)
    uploads = pd.DataFrame({"slot": slots, "peer": served["peer"].astype(np.int64)}).value_counts()
    for (slot, peer), count in uploads.items():
        if count > upload_capacity[peer]:
            problems.append(f"peer {peer} uploaded {count} items in slot {slot}, capacity {upload_capacity[peer]}")
    return problems
