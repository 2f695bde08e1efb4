"""
Replication strategies, the global objective and the exact small-instance optimiser.

`ProposedStrategy` follows the regional content replication heuristic: each
user keeps or picks up to B_u items from its previous replicas plus its
candidate set, sampled without replacement with probability proportional to
the replication gain sum_r Q[u][r] * A[c][r]. `MovementBasedStrategy` and
`PopularityBasedStrategy` are the two baselines. `exact_optimize` solves the
global problem (maximise sum_c sum_u beta_u K[u][c] gain[u][c] subject to the
cache capacities and to the regional popularity bounds) by exhaustive search
with pruning and serves as an oracle for small instances.
"""
# Standard library imports
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Type, Union

# Third-party imports
import numpy as np

# Application-specific imports
from config.constants import ORACLE_MAX_CELLS, STRATEGY_IDS
from .errors import InstanceTooLargeError, UnknownOptionError
from .mobility import MobilityTable
from .optimizations import timed
from .propagation import PopularityTable

logger = logging.getLogger(__name__)

_TOLERANCE = 1e-12


# --- Data Types ---

@dataclass
class ReplicationAssignment:
    """
    New caches for the users whose replicas change in slot `slot`.

    `caches` maps a user to its complete ordered cache; users absent keep
    theirs. `sources` names the peer that pushes an item, when the strategy
    decides it.
    """
    slot: int
    caches: Dict[int, List[int]] = field(default_factory=dict)
    sources: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def count(self, u: int) -> int:
        return len(self.caches.get(u, []))


@dataclass
class InstanceSnapshot:
    """Inputs of the global replication problem for one slot."""
    Q: np.ndarray
    A: np.ndarray
    cache_capacity: np.ndarray
    upload_capacity: np.ndarray
    contents: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.cache_capacity = np.asarray(self.cache_capacity, dtype=np.int64)
        self.upload_capacity = np.asarray(self.upload_capacity, dtype=float)
        if self.contents is None:
            self.contents = np.arange(self.A.shape[0])
        if self.Q.shape[1] != self.A.shape[1]:
            raise ValueError(f"Q covers {self.Q.shape[1]} regions but A covers {self.A.shape[1]}")

    @property
    def n_users(self) -> int:
        return self.Q.shape[0]

    @property
    def n_contents(self) -> int:
        return self.A.shape[0]

    @property
    def n_regions(self) -> int:
        return self.Q.shape[1]

    def gains(self) -> np.ndarray:
        """gain[u][c] = sum_r Q[u][r] * A[c][r]."""
        return self.Q @ self.A.T

    def as_matrix(self, K: Union[np.ndarray, Mapping[int, Iterable[int]]]) -> np.ndarray:
        """Boolean U x C matrix from a matrix or a user -> content-ids mapping."""
        if isinstance(K, np.ndarray):
            return K.astype(bool)
        index = {int(c): i for i, c in enumerate(self.contents)}
        matrix = np.zeros((self.n_users, self.n_contents), dtype=bool)
        for u, items in K.items():
            for c in items:
                if int(c) in index:
                    matrix[u, index[int(c)]] = True
        return matrix

    @classmethod
    def random(cls, rng: np.random.Generator, n_users: int, n_contents: int, n_regions: int,
               max_cache: int = 2, max_upload: int = 3, demand_scale: float = 3.0) -> 'InstanceSnapshot':
        """A random instance for oracle checks."""
        Q = rng.dirichlet(np.ones(n_regions), size=n_users)
        A = rng.uniform(0.0, demand_scale, size=(n_contents, n_regions))
        return cls(Q=Q, A=A,
                   cache_capacity=rng.integers(0, max_cache + 1, size=n_users),
                   upload_capacity=rng.integers(1, max_upload + 1, size=n_users))


@dataclass
class ObjectiveReport:
    objective: float
    cap_violations: List[int]
    popularity_violations: List[Tuple[int, int]]

    @property
    def feasible(self) -> bool:
        return not self.cap_violations and not self.popularity_violations


@dataclass
class OptimalAssignment:
    K: np.ndarray
    objective: float
    nodes_visited: int = 0


@dataclass(frozen=True)
class Transfer:
    """A popularity-baseline push accepted by `receiver`, evicting `evicted` if set."""
    holder: int
    receiver: int
    content: int
    evicted: Optional[int] = None

# --- End Data Types ---


# --- Heuristic Building Blocks ---

def _table_arrays(A: Union[PopularityTable, np.ndarray], Q: Union[MobilityTable, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(A, PopularityTable):
        contents, A_matrix = A.contents, A.A
    else:
        A_matrix = np.asarray(A, dtype=float)
        contents = np.arange(A_matrix.shape[0])
    Q_matrix = Q.Q if isinstance(Q, MobilityTable) else np.asarray(Q, dtype=float)
    return contents, A_matrix, Q_matrix


def candidate_set(u: int, A: Union[PopularityTable, np.ndarray], Q: Union[MobilityTable, np.ndarray],
                  T: Optional[int] = None) -> Set[int]:
    """Contents c with A[c][r] > 0 and Q[u][r] > 0 for some region r."""
    contents, A_matrix, Q_matrix = _table_arrays(A, Q)
    regions = Q_matrix[u] > 0
    if not regions.any() or A_matrix.size == 0:
        return set()
    hits = (A_matrix[:, regions] > 0).any(axis=1)
    return {int(c) for c in contents[hits]}


def replica_gain(u: int, c: int, Q: Union[MobilityTable, np.ndarray], A: Union[PopularityTable, np.ndarray]) -> float:
    """sum_r Q[u][r] * A[c][r]; 0 for a content without a popularity row."""
    Q_matrix = Q.Q if isinstance(Q, MobilityTable) else np.asarray(Q, dtype=float)
    if isinstance(A, PopularityTable):
        row = A.row(c)
    else:
        row = np.asarray(A, dtype=float)[c]
    return float(Q_matrix[u] @ row)


def weighted_sample_without_replacement(items: np.ndarray, weights: np.ndarray, k: int,
                                        rng: np.random.Generator) -> np.ndarray:
    """
    k distinct items drawn with probability proportional to weight, renormalising after each draw.

    Uses exponential keys: the k largest u^(1/w) (compared as log(u)/w) have
    the law of successive renormalised draws. Only positive weights are eligible.
    """
    items = np.asarray(items)
    weights = np.asarray(weights, dtype=float)
    positive = weights > 0
    items, weights = items[positive], weights[positive]
    if k <= 0 or len(items) == 0:
        return items[:0]
    if k >= len(items):
        keys = np.log(rng.random(len(items))) / weights
        return items[np.argsort(-keys, kind='stable')]
    keys = np.log(rng.random(len(items))) / weights
    top = np.argpartition(-keys, k - 1)[:k]
    return items[top[np.argsort(-keys[top], kind='stable')]]


def selection_keys(uniforms: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Exponential keys log(u) / gain; -inf where the gain is not positive."""
    gains = np.asarray(gains, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        keys = np.log(uniforms) / gains
    return np.where(gains > 0, keys, -np.inf)


def top_k_by_key(keys: np.ndarray, capacity: np.ndarray) -> List[np.ndarray]:
    """
    Per row, the column indices of the `capacity[row]` largest finite keys, best first.

    Taking the k largest keys of a row is gain-proportional sampling without
    replacement of k items, so one call samples every user of a slot.
    """
    keys = np.asarray(keys, dtype=float)
    capacity = np.asarray(capacity, dtype=np.int64)
    n_rows, n_cols = keys.shape
    k = int(min(capacity.max(initial=0), n_cols))
    if k <= 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(n_rows)]
    if k < n_cols:
        top = np.argpartition(-keys, k - 1, axis=1)[:, :k]
    else:
        top = np.tile(np.arange(n_cols), (n_rows, 1))
    top_keys = np.take_along_axis(keys, top, axis=1)
    order = np.argsort(-top_keys, axis=1, kind='stable')
    top = np.take_along_axis(top, order, axis=1)
    finite = np.isfinite(np.take_along_axis(top_keys, order, axis=1)).sum(axis=1)
    return [top[row, :min(int(capacity[row]), int(finite[row]))] for row in range(n_rows)]


def _select(z_items: np.ndarray, z_gains: np.ndarray, capacity: int, rng: np.random.Generator,
            keep_zero_gain: bool) -> List[int]:
    chosen = weighted_sample_without_replacement(z_items, z_gains, capacity, rng)
    selected = [int(c) for c in chosen]
    if keep_zero_gain and len(selected) < capacity:
        fillers = z_items[z_gains <= 0]
        if len(fillers):
            fillers = fillers[rng.permutation(len(fillers))][:capacity - len(selected)]
            selected.extend(int(c) for c in fillers)
    return selected


def select_replicas(u: int, W_prev: Iterable[int], candidates: Iterable[int], gains: Mapping[int, float],
                    B_u: int, rng: np.random.Generator, keep_zero_gain: bool = False) -> Set[int]:
    """
    Up to B_u replicas for user u from Z = W_prev + candidates.

    Items are sampled without replacement with probability proportional to
    gain. Zero-gain items are only taken as filler, when `keep_zero_gain` is
    set and the positive-gain items are exhausted.
    """
    z_items = np.array(sorted(set(int(c) for c in W_prev) | set(int(c) for c in candidates)), dtype=np.int64)
    z_gains = np.array([max(0.0, float(gains.get(int(c), 0.0))) for c in z_items])
    return set(_select(z_items, z_gains, B_u, rng, keep_zero_gain))


def movement_based_select(contact_history: np.ndarray, replication_requests: Sequence[int],
                          B_u: np.ndarray, rng: np.random.Generator, copies: int = 1,
                          holders: Optional[Mapping[int, Set[int]]] = None) -> Dict[int, List[int]]:
    """
    Carriers for each requested content, chosen with probability proportional to contact index.

    Args:
        contact_history: Contact index (distinct contacts) per user
        replication_requests: Contents that need carriers
        B_u: Cache capacity per user; users with capacity 0 never carry
        rng: Random generator
        copies: Distinct carriers per content
        holders: Users already holding each content (excluded)

    Returns:
        {content: [carriers]} with uniform choice when all eligible contact indices are 0
    """
    contacts = np.asarray(contact_history, dtype=float)
    capacity = np.asarray(B_u)
    assignment: Dict[int, List[int]] = {}
    for c in replication_requests:
        eligible = capacity > 0
        if holders is not None and c in holders:
            held = np.fromiter(holders[c], dtype=np.int64, count=len(holders[c]))
            eligible[held] = False
        users = np.nonzero(eligible)[0]
        if len(users) == 0:
            continue
        weights = contacts[users]
        if weights.sum() <= 0:
            weights = np.ones(len(users))
        carriers = weighted_sample_without_replacement(users, weights, min(copies, int((weights > 0).sum())), rng)
        if len(carriers):
            assignment[int(c)] = [int(v) for v in carriers]
    return assignment


def sample_offer(holder_items: Sequence[int], request_counts: Mapping[int, int], rng: np.random.Generator) -> Optional[int]:
    """One item of the holder, chosen with probability proportional to its request count (uniform if all 0)."""
    if len(holder_items) == 0:
        return None
    items = np.asarray(holder_items, dtype=np.int64)
    weights = np.array([request_counts.get(int(c), 0) for c in items], dtype=float)
    if weights.sum() <= 0:
        return int(items[rng.integers(len(items))])
    return int(rng.choice(items, p=weights / weights.sum()))


def popularity_based_select(request_counts: Mapping[int, Mapping[int, int]],
                            encounters: Sequence[Tuple[int, int]],
                            B_u: np.ndarray,
                            rng: np.random.Generator,
                            caches: Mapping[int, Sequence[int]]) -> List[Transfer]:
    """
    Play out popularity-driven pushes for a sequence of (holder, receiver) encounters.

    The holder offers one cached item the receiver lacks, chosen by its own
    request counts. A receiver with room accepts; a full receiver accepts
    only if the offered item's count (by the receiver's counts) exceeds its
    least requested item, which is then evicted.

    Returns:
        Accepted transfers in encounter order
    """
    working = {u: list(items) for u, items in caches.items()}
    transfers: List[Transfer] = []
    empty: Dict[int, int] = {}
    for holder, receiver in encounters:
        capacity = int(B_u[receiver])
        if capacity <= 0:
            continue
        receiver_items = working.setdefault(receiver, [])
        offerable = [c for c in working.get(holder, []) if c not in receiver_items]
        content = sample_offer(offerable, request_counts.get(holder, empty), rng)
        if content is None:
            continue
        counts = request_counts.get(receiver, empty)
        evicted = None
        if len(receiver_items) >= capacity:
            victim = min(receiver_items, key=lambda c: counts.get(c, 0))
            if counts.get(content, 0) <= counts.get(victim, 0):
                continue
            receiver_items.remove(victim)
            evicted = victim
        receiver_items.append(content)
        transfers.append(Transfer(holder, receiver, content, evicted))
    return transfers

# --- End Heuristic Building Blocks ---


# --- Objective and Oracle ---

def evaluate_objective(K: Union[np.ndarray, Mapping[int, Iterable[int]]], snapshot: InstanceSnapshot) -> ObjectiveReport:
    """
    Objective sum_c sum_u beta_u K[u][c] gain[u][c] with the violated constraints.

    Cap violations list users carrying more than B_u items; popularity
    violations list (content id, region) pairs where sum_u Q[u][r] K[u][c]
    beta_u exceeds A[c][r].
    """
    matrix = snapshot.as_matrix(K)
    weighted = matrix * snapshot.upload_capacity[:, None]
    objective = float((weighted * snapshot.gains()).sum())

    per_user = matrix.sum(axis=1)
    cap_violations = [int(u) for u in np.nonzero(per_user > snapshot.cache_capacity)[0]]

    load = weighted.T @ snapshot.Q
    over = np.argwhere(load > snapshot.A + _TOLERANCE)
    popularity_violations = [(int(snapshot.contents[c]), int(r)) for c, r in over]
    return ObjectiveReport(objective, cap_violations, popularity_violations)


@timed
def exact_optimize(snapshot: InstanceSnapshot, max_cells: int = ORACLE_MAX_CELLS) -> OptimalAssignment:
    """
    Optimal K by depth-first enumeration of the U x C cells in row-major order.

    Each cell tries 0 before 1 and the incumbent only changes on a strict
    improvement, so ties resolve to the lexicographically smallest K.
    Branches are cut on the cache capacity, on the regional popularity bound
    and when an optimistic bound cannot beat the incumbent.

    Raises:
        InstanceTooLargeError: If U * C exceeds `max_cells`
    """
    n_users, n_contents = snapshot.n_users, snapshot.n_contents
    cells = n_users * n_contents
    if cells > max_cells:
        raise InstanceTooLargeError(
            f"instance has {n_users}x{n_contents}={cells} cells, the exact optimiser enumerates at most "
            f"{max_cells}; use select_replicas / ProposedStrategy for larger instances"
        )

    beta = snapshot.upload_capacity
    values = beta[:, None] * snapshot.gains()
    contributions = beta[:, None] * snapshot.Q          # load added to A's row when u carries c
    capacity = snapshot.cache_capacity
    sorted_rows = [np.sort(values[u])[::-1] for u in range(n_users)]
    row_best = np.array([[sorted_rows[u][:k].sum() for k in range(n_contents + 1)] for u in range(n_users)])
    later_users = np.zeros(n_users + 1)
    for u in range(n_users - 1, -1, -1):
        later_users[u] = later_users[u + 1] + row_best[u][min(int(capacity[u]), n_contents)]

    K = np.zeros((n_users, n_contents), dtype=bool)
    load = np.zeros_like(snapshot.A)
    counts = np.zeros(n_users, dtype=np.int64)
    best = {'value': 0.0, 'K': K.copy()}
    visited = 0

    def optimistic(i: int) -> float:
        u, c = divmod(i, n_contents)
        room = max(0, int(capacity[u] - counts[u]))
        rest = np.sort(values[u, c:])[::-1][:room].sum() if room else 0.0
        return rest + later_users[u + 1]

    def search(i: int, current: float) -> None:
        nonlocal visited
        visited += 1
        if i == cells:
            if current > best['value'] + _TOLERANCE:
                best['value'] = current
                best['K'] = K.copy()
            return
        if current + optimistic(i) <= best['value'] + _TOLERANCE:
            return
        u, c = divmod(i, n_contents)
        search(i + 1, current)
        if values[u, c] <= 0 or counts[u] >= capacity[u]:
            return
        new_load = load[c] + contributions[u]
        if np.any(new_load > snapshot.A[c] + _TOLERANCE):
            return
        K[u, c] = True
        counts[u] += 1
        previous = load[c].copy()
        load[c] = new_load
        search(i + 1, current + values[u, c])
        load[c] = previous
        counts[u] -= 1
        K[u, c] = False

    search(0, 0.0)
    logger.debug(f"exact_optimize: {cells} cells, {visited} nodes, optimum {best['value']:.6f}")
    return OptimalAssignment(K=best['K'], objective=float(best['value']), nodes_visited=visited)


def heuristic_assignment(snapshot: InstanceSnapshot, rng: np.random.Generator) -> np.ndarray:
    """The replication heuristic applied to every user of a snapshot, starting from empty caches."""
    gains = snapshot.gains()
    K = np.zeros((snapshot.n_users, snapshot.n_contents), dtype=bool)
    items = np.arange(snapshot.n_contents)
    for u in range(snapshot.n_users):
        chosen = _select(items, gains[u], int(snapshot.cache_capacity[u]), rng, keep_zero_gain=False)
        K[u, chosen] = True
    return K


def optimality_ratio(snapshot: InstanceSnapshot, rng: np.random.Generator) -> float:
    """Heuristic objective over the exact optimum (1.0 when the optimum is 0)."""
    optimum = exact_optimize(snapshot)
    heuristic = evaluate_objective(heuristic_assignment(snapshot, rng), snapshot)
    if optimum.objective <= 0:
        return 1.0
    return heuristic.objective / optimum.objective

# --- End Objective and Oracle ---


# --- Strategies ---

@dataclass
class StrategyContext:
    """Read-only view of the engine state handed to a strategy at the start of a slot."""
    slot: int
    seed: int
    caches: Sequence[Sequence[int]]
    cache_capacity: np.ndarray
    upload_capacity: np.ndarray
    current_region: np.ndarray
    occupants: Mapping[int, Set[int]]
    holders: Mapping[int, Set[int]]
    popularity: Optional[PopularityTable] = None
    mobility: Optional[MobilityTable] = None
    contact_counts: Optional[np.ndarray] = None
    observed_requests: Mapping[int, Mapping[int, int]] = field(default_factory=dict)
    shared_last_slot: Sequence[int] = ()
    retain_zero_gain: bool = True
    social_candidates_only: bool = True
    movement_copies: int = 3
    popularity_offers: int = 1

    @property
    def n_users(self) -> int:
        return len(self.caches)

    def slot_rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.slot, self.n_users + stream])


class ReplicationStrategy(ABC):
    """Base class for replication strategies."""

    name: str = ""

    @abstractmethod
    def replicate(self, context: StrategyContext) -> ReplicationAssignment:
        """
        Decide the replicas for the slot.

        Args:
            context: Engine state at the start of the slot

        Returns:
            ReplicationAssignment with the users whose caches change
        """
        pass


class ProposedStrategy(ReplicationStrategy):
    """
    Propagation- and mobility-aware replication (gain-proportional sampling).

    Every (user, content) pair draws one uniform that it keeps across slots,
    so each slot's selection is a gain-proportional sample without
    replacement while a replica only moves when the gains reorder.
    """

    name = "proposed"

    def __init__(self):
        self._seed: Optional[int] = None
        self._uniforms: Dict[int, np.ndarray] = {}

    def content_uniforms(self, seed: int, contents: np.ndarray, n_users: int) -> np.ndarray:
        """U x C matrix of uniforms in (0, 1]; column c depends only on (seed, c)."""
        if seed != self._seed:
            self._seed, self._uniforms = seed, {}
        current: Dict[int, np.ndarray] = {}
        for c in contents:
            c = int(c)
            column = self._uniforms.get(c)
            if column is None or len(column) != n_users:
                column = 1.0 - np.random.default_rng([seed, c]).random(n_users)
            current[c] = column
        self._uniforms = current
        if not current:
            return np.zeros((n_users, 0))
        return np.column_stack([current[int(c)] for c in contents])

    @timed
    def replicate(self, context: StrategyContext) -> ReplicationAssignment:
        assignment = ReplicationAssignment(slot=context.slot)
        if context.popularity is None or context.mobility is None:
            raise ValueError("the proposed strategy needs popularity and mobility tables")
        popularity = context.popularity
        contents = popularity.contents
        if len(contents):
            gains = context.mobility.Q @ popularity.A.T
            if context.social_candidates_only:
                gains[:, ~((popularity.A - popularity.p) > 0).any(axis=1)] = 0.0
        else:
            gains = np.zeros((context.n_users, 0))

        uniforms = self.content_uniforms(context.seed, contents, context.n_users)
        picks = top_k_by_key(selection_keys(uniforms, gains), context.cache_capacity)

        for u in range(context.n_users):
            previous = list(context.caches[u])
            chosen = [int(contents[j]) for j in picks[u]]
            if not previous and not chosen:
                continue
            keep = set(chosen)
            room = int(context.cache_capacity[u]) - len(chosen)
            if context.retain_zero_gain and room > 0:
                # Unchosen items have zero gain here; the newest stay as filler.
                fillers = [c for c in previous if c not in keep]
                keep.update(fillers[max(0, len(fillers) - room):])
            held = set(previous)
            new_cache = [c for c in previous if c in keep]
            new_cache.extend(c for c in chosen if c not in held)
            if new_cache != previous:
                assignment.caches[u] = new_cache
        return assignment


class MovementBasedStrategy(ReplicationStrategy):
    """Contents shared in the previous slot are pushed to users with many distinct contacts."""

    name = "movement"

    @timed
    def replicate(self, context: StrategyContext) -> ReplicationAssignment:
        assignment = ReplicationAssignment(slot=context.slot)
        contacts = context.contact_counts if context.contact_counts is not None else np.zeros(context.n_users)
        carriers = movement_based_select(contacts, context.shared_last_slot, context.cache_capacity,
                                         context.slot_rng(), copies=context.movement_copies,
                                         holders=context.holders)
        for content, users in carriers.items():
            for u in users:
                cache = assignment.caches.get(u)
                if cache is None:
                    cache = assignment.caches[u] = list(context.caches[u])
                if content in cache:
                    continue
                while len(cache) >= context.cache_capacity[u]:
                    cache.pop(0)
                cache.append(content)
        return assignment


class PopularityBasedStrategy(ReplicationStrategy):
    """Holders push their most requested items to the users they meet."""

    name = "popularity"

    def encounters(self, context: StrategyContext, rng: np.random.Generator) -> List[Tuple[int, int]]:
        pairs: List[Tuple[int, int]] = []
        for holder in range(context.n_users):
            region = int(context.current_region[holder])
            if region < 0 or not context.caches[holder]:
                continue
            others = sorted(context.occupants.get(region, set()) - {holder})
            if not others:
                continue
            for _ in range(context.popularity_offers):
                pairs.append((holder, others[rng.integers(len(others))]))
        return pairs

    @timed
    def replicate(self, context: StrategyContext) -> ReplicationAssignment:
        assignment = ReplicationAssignment(slot=context.slot)
        rng = context.slot_rng()
        caches = {u: list(items) for u, items in enumerate(context.caches)}
        transfers = popularity_based_select(context.observed_requests, self.encounters(context, rng),
                                            context.cache_capacity, rng, caches)
        for transfer in transfers:
            cache = assignment.caches.setdefault(transfer.receiver, list(context.caches[transfer.receiver]))
            if transfer.evicted is not None:
                cache.remove(transfer.evicted)
            cache.append(transfer.content)
            assignment.sources[(transfer.receiver, transfer.content)] = transfer.holder
        return assignment


_STRATEGIES: Dict[str, Type[ReplicationStrategy]] = {
    ProposedStrategy.name: ProposedStrategy,
    MovementBasedStrategy.name: MovementBasedStrategy,
    PopularityBasedStrategy.name: PopularityBasedStrategy,
}


def get_strategy(name: str) -> ReplicationStrategy:
    """
    Strategy instance for a CLI id.

    Raises:
        UnknownOptionError: If the id is not one of proposed, movement, popularity
    """
    if name not in _STRATEGIES:
        raise UnknownOptionError("strategy", name, STRATEGY_IDS)
    return _STRATEGIES[name]()

# --- End Strategies ---
