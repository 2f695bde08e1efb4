import pytest
import logging
import numpy as np
import pandas as pd

from d2d_sim.metrics import audit_outcomes, compute_metrics, contribution_counts, slot_series
from d2d_sim.simulator import outcomes_frame
from d2d_sim.trace_model import AssociationEvent
from utils.data_handlers import DataLoadError, OUTCOME_COLUMNS, read_outcome_log, write_outcome_log

# --- Fixtures ---

LOG_COLUMNS = ["time_s", "user", "content", "region", "served_by", "peer", "slot", "latency_s"]

# Three of four requests served by peers 0 and 1.
BASE_LOG_ROWS = [
    (10.0, 1, 5, 0, "d2d", 0, 0, 0.0),
    (20.0, 2, 5, 0, "d2d", 0, 0, 0.0),
    (400.0, 0, 6, 1, "server", -1, 1, 1.0),
    (410.0, 2, 6, 1, "d2d", 1, 1, 0.0),
]


@pytest.fixture
def outcome_log():
    return pd.DataFrame(BASE_LOG_ROWS, columns=LOG_COLUMNS)


@pytest.fixture
def report(outcome_log):
    return compute_metrics(outcome_log, horizon_slots=3, n_users=3, strategy="proposed")


# --- Test Cases Start Here ---

def test_empty_log_reports_zero(caplog):
    """No requests gives fraction 0 with the empty flag and a warning."""
    with caplog.at_level(logging.WARNING, logger="d2d_sim.metrics"):
        empty = compute_metrics(outcomes_frame([]), horizon_slots=4, n_users=3)
    assert empty.empty
    assert empty.total_requests == 0
    assert empty.d2d_fraction == 0.0
    assert "no requests" in caplog.text
    assert len(empty.series) == 4
    assert empty.series["requests"].sum() == 0
    assert list(empty.contribution) == [0, 0, 0]
    assert empty.contribution_cv == 0.0
    assert empty.per_content.empty


def test_delivery_fraction(report):
    """Three D2D deliveries of four requests."""
    assert not report.empty
    assert report.total_requests == 4
    assert report.d2d_requests == 3
    assert report.server_requests == 1
    assert report.d2d_fraction == pytest.approx(0.75)
    assert report.mean_latency_s == pytest.approx(0.25)


def test_contribution_counts_uploads_per_peer(report):
    """Every D2D delivery is credited to its peer; idle users count 0."""
    assert list(report.contribution) == [2, 1, 0]
    assert report.contribution.sum() == report.d2d_requests
    assert report.contribution_mean == pytest.approx(1.0)
    assert report.contribution_cv == pytest.approx(np.sqrt(2 / 3))

    cdf = report.contribution_cdf()
    assert list(cdf["uploads"]) == [0, 1, 2]
    np.testing.assert_allclose(cdf["cdf"], [1 / 3, 2 / 3, 1.0])


def test_slot_series_is_cumulative(report):
    """Per-slot fractions and the running fraction, padded to the horizon."""
    series = report.series
    assert list(series["slot"]) == [0, 1, 2]
    assert list(series["requests"]) == [2, 2, 0]
    np.testing.assert_allclose(series["fraction"], [1.0, 0.5, 0.0])
    np.testing.assert_allclose(series["cumulative_fraction"], [1.0, 0.75, 0.75])
    assert series["cumulative_fraction"].iloc[-1] == pytest.approx(report.d2d_fraction)


def test_slot_series_without_slot_column(outcome_log):
    """Slots are derived from request times when the log has no slot column."""
    series = slot_series(outcome_log.drop(columns=["slot"]), slot_length_s=300)
    assert list(series["requests"]) == [2, 2]
    assert list(series["d2d"]) == [2, 1]


def test_per_content_fractions(report):
    """Requests and D2D share per content."""
    per_content = report.per_content.set_index("content")
    assert per_content.loc[5, "requests"] == 2
    assert per_content.loc[5, "d2d_fraction"] == pytest.approx(1.0)
    assert per_content.loc[6, "d2d_fraction"] == pytest.approx(0.5)


def test_contribution_counts_extend_beyond_n_users(outcome_log):
    """A peer id beyond the declared user count widens the histogram."""
    counts = contribution_counts(outcome_log, n_users=1)
    assert list(counts.index) == [0, 1]
    assert counts.name == "uploads"


def test_summary_includes_violations_fetches_and_axis(outcome_log):
    """Violation counts, replica fetch volumes and sweep axis values land in the summary."""
    violations = pd.DataFrame({"slot": [0, 1, 2], "popularity_violations": [0, 2, 0], "cap_violations": [1, 0, 0]})
    fetches = pd.DataFrame({"slot": [0, 1, 1], "user": [0, 1, 2], "content": [5, 5, 6],
                            "source": ["peer", "server", "peer"], "peer": [1, -1, 0]})
    report = compute_metrics(outcome_log, horizon_slots=3, violations=violations, replica_fetches=fetches,
                             strategy="movement")
    report.axis_values = {"crowdedness": 4.0}
    summary = report.summary()
    assert summary["strategy"] == "movement"
    assert summary["popularity_violations"] == 2
    assert summary["cap_violations"] == 1
    assert summary["violation_slots"] == 2
    assert summary["replica_fetches"] == 3
    assert summary["replica_fetches_from_peers"] == 2
    assert summary["crowdedness"] == 4.0
    assert summary["d2d_fraction"] == pytest.approx(0.75)
    assert isinstance(summary["total_requests"], int)


def test_audit_flags_absent_peers_and_exceeded_caps():
    """A peer outside the region and a peer over its upload cap are both reported."""
    associations = [
        AssociationEvent(0.0, 0, 0, 300.0),
        AssociationEvent(300.0, 1, 1, 300.0),
    ]
    log = pd.DataFrame([
        (10.0, 2, 5, 0, "d2d", 0, 0, 0.0),
        (20.0, 3, 5, 0, "d2d", 0, 0, 0.0),
        (400.0, 2, 6, 0, "d2d", 0, 1, 0.0),
        (250.0, 3, 6, 1, "d2d", 1, 0, 100.0),
        (30.0, 3, 7, -1, "server", -1, 0, 1.0),
    ], columns=LOG_COLUMNS)
    problems = audit_outcomes(log, associations, np.array([1, 1, 1, 1]))
    assert len(problems) == 2
    assert any("peer 0 not in region 0" in p for p in problems)
    assert any("peer 0 uploaded 2 items in slot 0" in p for p in problems)


def test_audit_accepts_consistent_log(outcome_log):
    """Peers present in their regions within their caps raise nothing."""
    associations = [
        AssociationEvent(0.0, 0, 0, 300.0),
        AssociationEvent(300.0, 1, 1, 300.0),
    ]
    assert audit_outcomes(outcome_log, associations, np.array([2, 2, 2])) == []
    assert audit_outcomes(outcome_log[outcome_log["served_by"] == "server"], associations, np.array([0, 0, 0])) == []


def test_outcome_log_file(tmp_path, outcome_log):
    """The outcome log stores missing peers as '-' and reads back into the same metrics."""
    path = tmp_path / "run" / "outcomes.log"
    write_outcome_log(outcome_log, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "10,1,5,0,d2d,0"
    assert lines[2] == "400,0,6,1,server,-"

    parsed = read_outcome_log(str(path))
    assert list(parsed.columns) == OUTCOME_COLUMNS
    assert list(parsed["peer"]) == [0, 0, -1, 1]
    assert compute_metrics(parsed).d2d_fraction == pytest.approx(0.75)


@pytest.mark.parametrize("content, message", [
    ("10,1,5,0,d2d\n", "expected 6 fields"),
    ("10,1,5,0,cdn,-\n", "unknown server kind"),
    ("ten,1,5,0,d2d,0\n", "outcomes.log:1: invalid time_s"),
    ("10,1,5,0,d2d,0,7\n", "expected 6 fields, got 7"),
    ("10,1,5,0,d2d,0\n20,2,5\n", "outcomes.log:2: expected 6 fields, got 3"),
    ("10,1.5,5,0,d2d,0\n", "invalid user"),
    ("10,1,5,0,d2d,0\n20,2,5,0,d2d,0,1\n", "Error parsing"),
])
def test_malformed_outcome_log(tmp_path, content, message):
    """Malformed lines are reported with their line number."""
    path = tmp_path / "outcomes.log"
    path.write_text(content)
    with pytest.raises(DataLoadError, match=message):
        read_outcome_log(str(path))


def test_missing_outcome_log(tmp_path):
    """A missing log is a load error."""
    with pytest.raises(DataLoadError, match="not found"):
        read_outcome_log(str(tmp_path / "absent.log"))


def test_empty_outcome_log(tmp_path, outcome_log):
    """A run without requests writes an empty log that reads back as an empty table."""
    path = tmp_path / "outcomes.log"
    write_outcome_log(outcome_log.iloc[:0], str(path))
    assert path.read_text() == ""
    parsed = read_outcome_log(str(path))
    assert list(parsed.columns) == OUTCOME_COLUMNS
    assert len(parsed) == 0
    assert parsed["peer"].dtype == np.int64


def test_outcome_log_absent_region(tmp_path):
    """'-' in the region field stands for an unassociated requester."""
    path = tmp_path / "outcomes.log"
    path.write_text("12.5,3,9,-,server,-\n")
    parsed = read_outcome_log(str(path))
    assert parsed["time_s"].iloc[0] == pytest.approx(12.5)
    assert parsed["region"].iloc[0] == -1
    assert parsed["peer"].iloc[0] == -1
    write_outcome_log(parsed, str(path))
    assert path.read_text() == "12.5,3,9,-,server,-\n"
