"""
Discrete-time, event-driven replication engine.

Time is divided into slots of `slot_length_s` seconds. At the start of each
slot the engine closes the previous slot (dwell credit, budgets, history
windows), rebuilds the model tables from history before the slot, lets the
configured strategy assign replicas, and then plays the slot's trace events
in time order: association ends, association starts, shares, and requests.
Requests come from reshares; a requester downloads from a co-located peer
that holds the content and has upload budget left, else from the server.
"""
# Standard library imports
import bisect
import heapq
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

# Third-party imports
import numpy as np
import pandas as pd

# Application-specific imports
from config.constants import PROGRESS_LOG_EVERY_SLOTS
from utils.conversions import slot_of, slot_start
from utils.data_handlers import dump_tables
from .errors import SimulationInvariantError, TraceValidationError
from .metrics import MetricsReport, compute_metrics
from .mobility import MobilityModel
from .optimizations import timed, timed_block
from .propagation import CascadeHistory, HistoryCounters, PropagationModel
from .scenarios import SimConfig
from .strategies import InstanceSnapshot, ReplicationAssignment, StrategyContext, evaluate_objective, get_strategy
from .trace_model import AssociationEvent, MobilityTrace, ShareEvent, SocialTrace

logger = logging.getLogger(__name__)

# Event kinds, in processing order for equal times.
_END, _START, _SHARE, _REQUEST = 0, 1, 2, 3

# Extra random streams per slot, offset past the per-user streams.
_STREAM_REQUESTS = 1
_STREAM_FETCHES = 2


@dataclass(frozen=True)
class Request:
    time: float
    user: int
    content: int
    parent: Optional[int] = None


@dataclass(frozen=True)
class RequestOutcome:
    request: Request
    region: int
    served_by: str
    peer: Optional[int]
    latency_s: float
    slot: int
    deferred: bool = False

    @property
    def is_d2d(self) -> bool:
        return self.served_by == "d2d"


@dataclass(frozen=True)
class ReplicaFetch:
    slot: int
    user: int
    content: int
    source: str
    peer: Optional[int]


class SimState:
    """
    Device caches, upload budgets, region occupancy and the coordinator directory.

    The directory maps a content to {holder: region}; a holder that is not
    associated has region -1. Caches are insertion-ordered (oldest first).
    """

    def __init__(self, n_users: int, cache_capacity: np.ndarray, upload_capacity: np.ndarray):
        self.n_users = n_users
        self.cache_capacity = np.asarray(cache_capacity, dtype=np.int64)
        self.upload_capacity = np.asarray(upload_capacity, dtype=np.int64)
        self.caches: List[Dict[int, int]] = [dict() for _ in range(n_users)]
        self.remaining_uploads = self.upload_capacity.copy()
        self.region = np.full(n_users, -1, dtype=np.int64)
        self.occupants: Dict[int, Set[int]] = defaultdict(set)
        self.directory: Dict[int, Dict[int, int]] = defaultdict(dict)

    def cache_list(self, u: int) -> List[int]:
        return list(self.caches[u])

    def has_space(self, u: int) -> bool:
        return len(self.caches[u]) < self.cache_capacity[u]

    def store(self, u: int, c: int, slot: int) -> bool:
        """Add c to u's cache if absent and space remains."""
        if c in self.caches[u] or not self.has_space(u):
            return False
        self.caches[u][c] = slot
        self.directory[c][u] = int(self.region[u])
        return True

    def evict(self, u: int, c: int) -> None:
        self.caches[u].pop(c, None)
        holders = self.directory.get(c)
        if holders is not None:
            holders.pop(u, None)
            if not holders:
                del self.directory[c]

    def replace_cache(self, u: int, items: Sequence[int], slot: int) -> None:
        """Set u's cache to `items`, keeping insertion slots of retained items."""
        old = self.caches[u]
        for c in list(old):
            if c not in items:
                self.evict(u, c)
        new: Dict[int, int] = {}
        for c in items:
            new[c] = old.get(c, slot)
            self.directory[c][u] = int(self.region[u])
        self.caches[u] = new

    def associate(self, u: int, region: int) -> None:
        previous = int(self.region[u])
        if previous >= 0:
            self.occupants[previous].discard(u)
        self.region[u] = region
        if region >= 0:
            self.occupants[region].add(u)
        for c in self.caches[u]:
            self.directory[c][u] = region

    def disassociate(self, u: int) -> None:
        self.associate(u, -1)

    def reset_budgets(self) -> None:
        self.remaining_uploads = self.upload_capacity.copy()

    def holders_in_region(self, c: int, region: int, exclude: Optional[int] = None) -> List[int]:
        if region < 0:
            return []
        return sorted(v for v, r in self.directory.get(c, {}).items() if r == region and v != exclude)

    def audit(self) -> List[str]:
        """Mismatches between caches, directory, occupancy and budgets."""
        problems: List[str] = []
        entries = 0
        for u, cache in enumerate(self.caches):
            if len(cache) > self.cache_capacity[u]:
                problems.append(f"user {u} caches {len(cache)} items, capacity {self.cache_capacity[u]}")
            for c in cache:
                entries += 1
                if self.directory.get(c, {}).get(u) != self.region[u]:
                    problems.append(f"directory entry for content {c} at user {u} is "
                                    f"{self.directory.get(c, {}).get(u)}, user is in region {self.region[u]}")
        directory_entries = sum(len(h) for h in self.directory.values())
        if directory_entries != entries:
            problems.append(f"directory holds {directory_entries} replicas, caches hold {entries}")
        if (self.remaining_uploads < 0).any():
            problems.append(f"negative upload budget for user {int(np.argmin(self.remaining_uploads))}")
        for region, users in self.occupants.items():
            for u in users:
                if self.region[u] != region:
                    problems.append(f"user {u} listed in region {region} but is in {self.region[u]}")
        return problems


def handle_request(request: Request, state: SimState, rng: np.random.Generator,
                   region: Optional[int] = None, slot: int = 0, server_latency_s: float = 1.0, wait_s: float = 0.0,
                   d2d_allowed: bool = True) -> RequestOutcome:
    """
    Serve a request from a co-located holder with upload budget, else from the server.

    The holder is drawn uniformly among the eligible ones and its budget is
    decremented. Server downloads take `server_latency_s`; `wait_s` is added
    for requests that waited for their requester to come online.
    """
    if region is None:
        region = int(state.region[request.user])
    if d2d_allowed:
        eligible = [v for v in state.holders_in_region(request.content, region, exclude=request.user)
                    if state.remaining_uploads[v] > 0]
        if eligible:
            peer = eligible[int(rng.integers(len(eligible)))]
            state.remaining_uploads[peer] -= 1
            return RequestOutcome(request, region, "d2d", peer, wait_s, slot, deferred=wait_s > 0)
    return RequestOutcome(request, region, "server", None, server_latency_s + wait_s, slot, deferred=wait_s > 0)


@dataclass
class SimulationResult:
    outcomes: pd.DataFrame
    replica_fetches: pd.DataFrame
    violations: pd.DataFrame
    content_requests: pd.Series
    metrics: MetricsReport
    strategy: str
    horizon_slots: int
    extras: Dict[str, Any] = field(default_factory=dict)


def top_contents(events: Sequence[ShareEvent], fraction: float) -> Optional[Set[int]]:
    """
    Contents handled by D2D: the top `fraction` by total requests (reshares), ties by id.

    Returns None (no restriction) for fraction 1.
    """
    if fraction >= 1.0:
        return None
    counts = content_request_counts(events)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    keep = int(math.ceil(fraction * len(ranked)))
    return {c for c, _ in ranked[:keep]}


def content_request_counts(events: Sequence[ShareEvent]) -> Dict[int, int]:
    counts: Dict[int, int] = defaultdict(int)
    for event in events:
        if event.is_reshare:
            counts[event.content] += 1
    return dict(counts)


class Simulator:
    """
    Runs one simulation of a strategy over a pair of mapped traces.

    Attributes:
        state: Current SimState
        slot: Slot being simulated
    """

    def __init__(self, social: SocialTrace, mobility: MobilityTrace, cfg: SimConfig,
                 allowed_contents: Optional[Set[int]] = None, tables_dir: Optional[str] = None):
        self.cfg = cfg
        self.social = social
        self.mobility = mobility
        if social.n_users != mobility.n_users:
            raise TraceValidationError(
                f"social trace has {social.n_users} users but mobility trace has {mobility.n_users}; "
                f"relabel both with map_users and combine_traces first"
            )
        self.n_users = social.n_users
        self.n_regions = max(mobility.n_regions, max((e.region for e in mobility.events), default=-1) + 1, 1)
        self.slot_length = float(cfg.slot_length_s)
        self.horizon_slots = cfg.horizon_slots or self._trace_horizon()
        self.horizon_end = slot_start(self.horizon_slots, self.slot_length)
        self.allowed_contents = allowed_contents
        self.tables_dir = tables_dir

        self.state = SimState(self.n_users,
                              cfg.peer.cache_capacities(self.n_users),
                              cfg.peer.upload_capacities(self.n_users))
        self.history = HistoryCounters(self.n_users, self.n_regions,
                                       influence_window=cfg.influence_window_slots,
                                       preference_window=cfg.preference_window)
        self.cascades = CascadeHistory(social.graph)
        self.propagation = PropagationModel(social.graph, self.history, self.cascades,
                                            alpha=cfg.alpha, preference_window=cfg.preference_window)
        self.mobility_model = MobilityModel(self.n_regions, cfg.migration_norm)
        self.strategy = get_strategy(cfg.strategy)

        self.slot = 0
        self.outcomes: List[RequestOutcome] = []
        self.fetches: List[ReplicaFetch] = []
        self.violations: List[Tuple[int, int, int]] = []

        self._queue: List[Tuple[float, int, int, Any]] = []
        self._seq = 0
        self._starts: Dict[int, List[float]] = defaultdict(list)
        self._load_events()

        self._current_assoc: Dict[int, AssociationEvent] = {}
        self._credit_from: Dict[int, float] = {}
        self._last_assoc_before_slot: Dict[int, AssociationEvent] = {}
        self._slot_starts: Dict[int, List[AssociationEvent]] = defaultdict(list)
        self._migration_input: List[AssociationEvent] = []
        self._visited_last_slot: Dict[int, Set[int]] = {}
        self.last_region = np.full(self.n_users, -1, dtype=np.int64)
        self._shared_this_slot: Set[int] = set()
        self._shared_last_slot: List[int] = []
        self._contacts = np.zeros((self.n_users, self.n_users), dtype=bool)
        self.contact_counts = np.zeros(self.n_users, dtype=np.int64)
        self.observed_requests: Dict[int, Dict[int, int]] = defaultdict(lambda: defaultdict(int))
        self._track_observed = self.strategy.name == "popularity"
        self._request_rng = np.random.default_rng([cfg.seed, 0, self.n_users + _STREAM_REQUESTS])

    # --- Setup ---

    def _trace_horizon(self) -> int:
        last = max([e.time for e in self.social.events] + [e.end for e in self.mobility.events] + [0.0])
        return slot_of(last, self.slot_length) + 1

    def _push(self, time_s: float, kind: int, payload: Any) -> None:
        heapq.heappush(self._queue, (time_s, kind, self._seq, payload))
        self._seq += 1

    def _load_events(self) -> None:
        for event in self.mobility.events:
            if event.time >= self.horizon_end:
                continue
            self._push(event.time, _START, event)
            self._push(event.end, _END, event)
            self._starts[event.user].append(event.time)
        for starts in self._starts.values():
            starts.sort()
        for event in self.social.events:
            if event.time >= self.horizon_end:
                continue
            self._push(event.time, _SHARE, event)
            if event.is_reshare:
                self._push(event.time, _REQUEST, (Request(event.time, event.sharer, event.content, event.parent), 0.0))
        logger.debug(f"Queued {len(self._queue)} events over {self.horizon_slots} slots")

    # --- Slot bookkeeping ---

    def _slot_of(self, time_s: float) -> int:
        return slot_of(time_s, self.slot_length)

    def _credit_dwell(self, u: int, until: float) -> None:
        start = self._credit_from.get(u)
        event = self._current_assoc.get(u)
        if start is None or event is None or until <= start:
            return
        self.history.record_dwell(u, event.region, self._slot_of(start), until - start)
        self._credit_from[u] = until

    def advance_slot(self, T: int) -> SimState:
        """
        Close slot T-1 and open slot T.

        Credits dwell up to the boundary, records the previous slot's
        associations for the migration index, applies association changes
        at the boundary (replicas move with their carriers), resets upload
        budgets and rolls the history windows.
        """
        boundary = slot_start(T, self.slot_length)
        if T > 0:
            for u in list(self._current_assoc):
                self._credit_dwell(u, boundary)
            migration_input: List[AssociationEvent] = []
            visited: Dict[int, Set[int]] = {}
            for u, starts in sorted(self._slot_starts.items()):
                previous = self._last_assoc_before_slot.get(u)
                if previous is not None:
                    migration_input.append(previous)
                migration_input.extend(starts)
                visited[u] = {e.region for e in starts}
                self._last_assoc_before_slot[u] = starts[-1]
            for u, event in self._current_assoc.items():
                visited.setdefault(u, set()).add(event.region)
            self._migration_input = migration_input
            self._visited_last_slot = visited
            self._slot_starts = defaultdict(list)
            self._shared_last_slot = sorted(self._shared_this_slot)
            self._shared_this_slot = set()

        while self._queue and self._queue[0][0] <= boundary and self._queue[0][1] in (_END, _START):
            time_s, kind, _, payload = heapq.heappop(self._queue)
            self._dispatch(time_s, kind, payload)

        self.state.reset_budgets()
        self.history.roll(T)
        self.slot = T
        return self.state

    # --- Event handlers ---

    def _dispatch(self, time_s: float, kind: int, payload: Any) -> None:
        if kind == _END:
            self._on_association_end(time_s, payload)
        elif kind == _START:
            self._on_association_start(time_s, payload)
        elif kind == _SHARE:
            self._on_share(time_s, payload)
        else:
            request, wait = payload
            self._on_request(time_s, request, wait)

    def _on_association_start(self, time_s: float, event: AssociationEvent) -> None:
        u = event.user
        if u in self._current_assoc:
            self._on_association_end(time_s, self._current_assoc[u])
        for v in self.state.occupants.get(event.region, ()):
            if v != u and not self._contacts[u, v]:
                self._contacts[u, v] = self._contacts[v, u] = True
                self.contact_counts[u] += 1
                self.contact_counts[v] += 1
        self.state.associate(u, event.region)
        self._current_assoc[u] = event
        self._credit_from[u] = time_s
        self._slot_starts[u].append(event)
        self.last_region[u] = event.region

    def _on_association_end(self, time_s: float, event: AssociationEvent) -> None:
        u = event.user
        if self._current_assoc.get(u) is not event:
            return
        self._credit_dwell(u, time_s)
        del self._current_assoc[u]
        self._credit_from.pop(u, None)
        self.state.disassociate(u)

    def _on_share(self, time_s: float, event: ShareEvent) -> None:
        T = self.slot
        self.history.record_share(event.sharer, T)
        if event.is_reshare:
            self.history.record_acceptance(event.parent, event.sharer, T)
        self.cascades.record_share(event.sharer, event.content, time_s, T, event.is_reshare)
        if self.allowed_contents is None or event.content in self.allowed_contents:
            self._shared_this_slot.add(event.content)
        if not event.is_reshare:
            self.state.store(event.sharer, event.content, T)

    def _on_request(self, time_s: float, request: Request, wait: float) -> None:
        u = request.user
        region = int(self.state.region[u])
        if region < 0 and wait == 0.0:
            starts = self._starts.get(u, [])
            i = bisect.bisect_right(starts, time_s)
            if i < len(starts):
                next_start = starts[i]
                if next_start - time_s <= self.cfg.deadline_s and next_start < self.horizon_end:
                    self._push(next_start, _REQUEST, (request, next_start - time_s))
                    return

        rng = self._request_rng
        d2d_allowed = self.allowed_contents is None or request.content in self.allowed_contents
        outcome = handle_request(request, self.state, rng, region, self._slot_of(request.time),
                                 server_latency_s=self.cfg.server_latency_s, wait_s=wait,
                                 d2d_allowed=d2d_allowed)
        self.outcomes.append(outcome)

        if region >= 0:
            self.history.record_request(request.content, region, self.slot)
            if self._track_observed:
                for v in self.state.occupants.get(region, ()):
                    self.observed_requests[v][request.content] += 1
        self.state.store(u, request.content, self.slot)

    # --- Replication ---

    def _context(self, popularity, mobility_table) -> StrategyContext:
        return StrategyContext(
            slot=self.slot,
            seed=self.cfg.seed,
            caches=[self.state.cache_list(u) for u in range(self.n_users)],
            cache_capacity=self.state.cache_capacity,
            upload_capacity=self.state.upload_capacity,
            current_region=self.state.region.copy(),
            occupants=self.state.occupants,
            holders={c: set(h) for c, h in self.state.directory.items()},
            popularity=popularity,
            mobility=mobility_table,
            contact_counts=self.contact_counts,
            observed_requests=self.observed_requests,
            shared_last_slot=self._shared_last_slot,
            retain_zero_gain=self.cfg.retain_zero_gain_replicas,
            social_candidates_only=self.cfg.social_candidates_only,
            movement_copies=self.cfg.movement_copies,
            popularity_offers=self.cfg.popularity_offers,
        )

    def _apply_assignment(self, assignment: ReplicationAssignment) -> None:
        T = self.slot
        rng = np.random.default_rng([self.cfg.seed, T, self.n_users + _STREAM_FETCHES])
        planned: List[Tuple[int, List[int], List[ReplicaFetch]]] = []
        for u in sorted(assignment.caches):
            new_items = assignment.caches[u]
            old = self.state.caches[u]
            fetches = []
            for c in new_items:
                if c in old:
                    continue
                peer = assignment.sources.get((u, c))
                if peer is None:
                    local = self.state.holders_in_region(c, int(self.state.region[u]), exclude=u)
                    if local:
                        peer = local[int(rng.integers(len(local)))]
                fetches.append(ReplicaFetch(T, u, c, "server" if peer is None else "peer", peer))
            planned.append((u, new_items, fetches))
        for u, new_items, fetches in planned:
            self.state.replace_cache(u, new_items, T)
            self.fetches.extend(fetches)

    def _record_violations(self, popularity, mobility_table) -> None:
        if popularity is None or popularity.n_contents == 0:
            self.violations.append((self.slot, 0, 0))
            return
        K = {u: [c for c in self.state.caches[u] if c in popularity.index] for u in range(self.n_users)}
        snapshot = InstanceSnapshot(Q=mobility_table.Q, A=popularity.A,
                                    cache_capacity=self.state.cache_capacity,
                                    upload_capacity=self.state.upload_capacity,
                                    contents=popularity.contents)
        report = evaluate_objective(K, snapshot)
        self.violations.append((self.slot, len(report.popularity_violations), len(report.cap_violations)))

    def _active_contents(self, T: int) -> List[int]:
        active = self.cascades.active_contents(T, self.cfg.active_content_window_slots)
        if self.allowed_contents is not None:
            active = [c for c in active if c in self.allowed_contents]
        return active

    # --- Main loop ---

    @timed
    def run_slot(self, T: int) -> None:
        self.advance_slot(T)
        with timed_block("Simulator.tables"):
            influence, preference, popularity = self.propagation.build_tables(T, self._active_contents(T))
            _, mobility_table = self.mobility_model.build_tables(
                T, self._migration_input, preference.P, self.last_region, self._visited_last_slot)

        with timed_block("Simulator.replication"):
            assignment = self.strategy.replicate(self._context(popularity, mobility_table))
            self._apply_assignment(assignment)
            self._record_violations(popularity, mobility_table)

        if self.cfg.dump_tables and self.tables_dir:
            slots = self.cfg.dump_table_slots or [self.horizon_slots - 1]
            if T in slots:
                dump_tables(self.tables_dir, T, influence.I, preference.P, popularity.contents,
                            popularity.A, mobility_table.Q)

        self._request_rng = np.random.default_rng([self.cfg.seed, T, self.n_users + _STREAM_REQUESTS])
        slot_end = slot_start(T + 1, self.slot_length)
        with timed_block("Simulator.events"):
            while self._queue and self._queue[0][0] < slot_end:
                time_s, kind, _, payload = heapq.heappop(self._queue)
                self._dispatch(time_s, kind, payload)

        if self.cfg.audit_directory:
            problems = self.state.audit()
            if problems:
                raise SimulationInvariantError(T, "; ".join(problems[:5]))

    def run(self) -> SimulationResult:
        """Simulate every slot and collect the result."""
        logger.info(f"Simulating '{self.strategy.name}' over {self.horizon_slots} slots, "
                    f"{self.n_users} users, {self.n_regions} regions")
        for T in range(self.horizon_slots):
            self.run_slot(T)
            if (T + 1) % PROGRESS_LOG_EVERY_SLOTS == 0:
                served = sum(1 for o in self.outcomes if o.is_d2d)
                logger.info(f"slot {T + 1}/{self.horizon_slots}: {len(self.outcomes)} requests, {served} via D2D")
        return self._result()

    def _result(self) -> SimulationResult:
        outcomes = outcomes_frame(self.outcomes)
        fetches = pd.DataFrame([asdict(f) for f in self.fetches],
                               columns=["slot", "user", "content", "source", "peer"])
        violations = pd.DataFrame(self.violations, columns=["slot", "popularity_violations", "cap_violations"])
        in_horizon = [e for e in self.social.events if e.time < self.horizon_end]
        content_requests = pd.Series(content_request_counts(in_horizon), name="requests", dtype=np.int64)
        metrics = compute_metrics(outcomes, horizon_slots=self.horizon_slots, n_users=self.n_users,
                                  violations=violations, replica_fetches=fetches, strategy=self.strategy.name)
        return SimulationResult(outcomes=outcomes, replica_fetches=fetches, violations=violations,
                                content_requests=content_requests, metrics=metrics,
                                strategy=self.strategy.name, horizon_slots=self.horizon_slots)


def outcomes_frame(outcomes: Sequence[RequestOutcome]) -> pd.DataFrame:
    """One row per request outcome, in resolution order."""
    columns = ["time_s", "user", "content", "region", "served_by", "peer", "slot", "latency_s", "parent", "deferred"]
    rows = [(o.request.time, o.request.user, o.request.content, o.region, o.served_by,
             -1 if o.peer is None else o.peer, o.slot, o.latency_s,
             -1 if o.request.parent is None else o.request.parent, o.deferred) for o in outcomes]
    frame = pd.DataFrame(rows, columns=columns)
    return frame.astype({"user": np.int64, "content": np.int64, "region": np.int64, "peer": np.int64,
                         "slot": np.int64, "parent": np.int64, "deferred": bool})


def run_simulation(traces: Tuple[SocialTrace, MobilityTrace], cfg: SimConfig,
                   allowed_contents: Optional[Set[int]] = None,
                   tables_dir: Optional[str] = None) -> SimulationResult:
    """
    Run one simulation over mapped traces.

    Args:
        traces: (social, mobility) traces over the same dense user ids
        cfg: Simulation parameters
        allowed_contents: Contents eligible for D2D handling; defaults to the
            top `cfg.top_content_fraction` by total requests
        tables_dir: Where to dump model tables when `cfg.dump_tables` is set

    Returns:
        SimulationResult with the outcome log and its MetricsReport
    """
    social, mobility = traces
    if allowed_contents is None:
        allowed_contents = top_contents(social.events, cfg.top_content_fraction)
    try:
        return Simulator(social, mobility, cfg, allowed_contents=allowed_contents, tables_dir=tables_dir).run()
    except SimulationInvariantError:
        logger.error("Simulation aborted on an invariant violation", exc_info=True)
        raise
