"""
Users, regions, contents and the two trace streams.

Social traces carry share events (posts and reshares) and the friendship
graph; mobility traces carry region associations and the region table. Both
are line-oriented, comma-separated text:

    social:   U,<n_users>   E,<u>,<v>,<reshare_prob>   S,<time_s>,<user>,<content>,<parent|->,<root|->
    mobility: U,<n_users>   R,<region>,<x_m>,<y_m>     A,<time_s>,<user>,<region>,<duration_s>

Blank lines and lines starting with '#' are ignored. The optional `U` header
fixes the user id space; otherwise it is `max id + 1` over the users that
share or appear in the graph (social) or associate (mobility).
"""
# Standard library imports
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NewType, Optional, Sequence, Set, Tuple

# Third-party imports
import networkx as nx
import numpy as np

# Application-specific imports
from config.constants import MAPPING_SCHEMES, TRACE_ABSENT, TRACE_FIELD_SEPARATOR
from .errors import TraceParseError, TraceValidationError, UnknownOptionError

logger = logging.getLogger(__name__)

UserId = NewType('UserId', int)
RegionId = NewType('RegionId', int)
ContentId = NewType('ContentId', int)

_OVERLAP_TOLERANCE_S = 1e-9


# --- Records ---

@dataclass(frozen=True, order=True)
class ShareEvent:
    """A post (parent absent) or a reshare of `content` by `sharer` at `time` seconds."""
    time: float
    sharer: int
    content: int
    parent: Optional[int] = None
    root: Optional[int] = None

    @property
    def is_reshare(self) -> bool:
        return self.parent is not None


@dataclass(frozen=True, order=True)
class AssociationEvent:
    """`user` associated with an access point of `region` from `time` for `duration` seconds."""
    time: float
    user: int
    region: int
    duration: float

    @property
    def end(self) -> float:
        return self.time + self.duration


class SocialGraph:
    """
    Undirected friendship graph with a reshare probability on every edge.

    Wraps a `networkx.Graph` whose nodes are the dense user ids and whose
    edges carry the `reshare_prob` attribute.
    """

    def __init__(self, n_users: int = 0, graph: Optional[nx.Graph] = None):
        self.graph = graph if graph is not None else nx.Graph()
        self.graph.add_nodes_from(range(n_users))
        self._friend_arrays: Optional[List[np.ndarray]] = None

    @property
    def n_users(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def n_edges(self) -> int:
        return self.graph.number_of_edges()

    @property
    def average_degree(self) -> float:
        if self.n_users == 0:
            return 0.0
        return 2.0 * self.n_edges / self.n_users

    def add_edge(self, u: int, v: int, reshare_prob: float) -> None:
        self.graph.add_edge(u, v, reshare_prob=float(reshare_prob))
        self._friend_arrays = None

    def friends(self, u: int) -> Set[int]:
        if u not in self.graph:
            return set()
        return set(self.graph.neighbors(u))

    def is_friend(self, u: int, v: int) -> bool:
        return self.graph.has_edge(u, v)

    def reshare_prob(self, u: int, v: int) -> float:
        """Edge probability; 0 off-edges."""
        data = self.graph.get_edge_data(u, v)
        return 0.0 if data is None else data['reshare_prob']

    @property
    def adjacency(self) -> Dict[int, Set[int]]:
        return {u: set(self.graph.neighbors(u)) for u in self.graph.nodes}

    def edges(self) -> List[Tuple[int, int, float]]:
        """Edges as sorted (u, v, reshare_prob) triples with u < v."""
        return sorted((min(u, v), max(u, v), d['reshare_prob']) for u, v, d in self.graph.edges(data=True))

    def friend_arrays(self) -> List[np.ndarray]:
        """Per-user sorted friend id arrays, cached until the graph changes."""
        if self._friend_arrays is None:
            self._friend_arrays = [
                np.array(sorted(self.graph.neighbors(u)), dtype=np.int64) for u in range(self.n_users)
            ]
        return self._friend_arrays

    def adjacency_matrix(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix over users 0..n-1."""
        adj = np.zeros((self.n_users, self.n_users), dtype=bool)
        for u, v in self.graph.edges():
            adj[u, v] = adj[v, u] = True
        return adj

    def is_symmetric(self) -> bool:
        adj = self.adjacency_matrix()
        return bool(np.array_equal(adj, adj.T))

    def __repr__(self) -> str:
        return f"SocialGraph(n_users={self.n_users}, n_edges={self.n_edges}, avg_degree={self.average_degree:.2f})"


@dataclass
class RegionTable:
    """Region centre coordinates in metres; unknown coordinates are NaN."""
    coordinates: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def n_regions(self) -> int:
        return int(self.coordinates.shape[0])

    @classmethod
    def from_mapping(cls, coordinates: Dict[int, Tuple[float, float]], n_regions: Optional[int] = None) -> 'RegionTable':
        size = max([n_regions or 0] + [r + 1 for r in coordinates])
        table = np.full((size, 2), np.nan)
        for region, (x, y) in coordinates.items():
            table[region] = (x, y)
        return cls(table)

    def has_coordinates(self, region: int) -> bool:
        return 0 <= region < self.n_regions and not np.isnan(self.coordinates[region]).any()

    def distance(self, r: int, s: int) -> float:
        """Euclidean distance in metres between two region centres (NaN if unknown)."""
        if not (self.has_coordinates(r) and self.has_coordinates(s)):
            return math.nan
        return float(np.hypot(*(self.coordinates[r] - self.coordinates[s])))


@dataclass
class SocialTrace:
    events: List[ShareEvent]
    graph: SocialGraph
    n_users: int
    non_friend_reshares: int = 0

    @property
    def n_contents(self) -> int:
        return max((e.content for e in self.events), default=-1) + 1


@dataclass
class MobilityTrace:
    events: List[AssociationEvent]
    regions: RegionTable
    n_users: int

    @property
    def n_regions(self) -> int:
        return self.regions.n_regions

    def events_by_user(self) -> Dict[int, List[AssociationEvent]]:
        per_user: Dict[int, List[AssociationEvent]] = defaultdict(list)
        for event in self.events:
            per_user[event.user].append(event)
        return per_user


@dataclass(frozen=True)
class UserMapping:
    """Bijection from kept social users to kept mobility users."""
    scheme: str
    mapping: Dict[int, int]

    @property
    def inverse(self) -> Dict[int, int]:
        return {m: s for s, m in self.mapping.items()}

    @property
    def size(self) -> int:
        return len(self.mapping)

    def is_bijective(self) -> bool:
        return len(set(self.mapping.values())) == len(self.mapping)

# --- End Records ---


# --- Parsing ---

def _read_lines(path: str) -> Iterable[Tuple[int, List[str]]]:
    try:
        with open(path, 'r') as f:
            for line_number, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line or line.startswith('#'):
                    continue
                yield line_number, [part.strip() for part in line.split(TRACE_FIELD_SEPARATOR)]
    except FileNotFoundError:
        logger.error(f"Trace file not found: {path}")
        raise


def _expect_fields(fields: List[str], count: int, path: str, line_number: int) -> None:
    if len(fields) != count:
        raise TraceParseError(f"'{fields[0]}' record expects {count} fields, got {len(fields)}",
                              path=path, line_number=line_number)


def _as_int(token: str, name: str, path: str, line_number: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise TraceParseError(f"{name} must be an integer, got '{token}'", path=path, line_number=line_number)
    if value < 0:
        raise TraceParseError(f"{name} must be non-negative, got {value}", path=path, line_number=line_number)
    return value


def _as_optional_int(token: str, name: str, path: str, line_number: int) -> Optional[int]:
    if token == TRACE_ABSENT:
        return None
    return _as_int(token, name, path, line_number)


def _as_float(token: str, name: str, path: str, line_number: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise TraceParseError(f"{name} must be a number, got '{token}'", path=path, line_number=line_number)
    if not math.isfinite(value):
        raise TraceParseError(f"{name} must be finite, got '{token}'", path=path, line_number=line_number)
    return value


def parse_social_trace(path: str) -> SocialTrace:
    """
    Parse a social trace file.

    Args:
        path: Path to the trace file

    Returns:
        SocialTrace with events sorted by time and a symmetric graph

    Raises:
        TraceParseError: For a malformed line, naming the line number
        TraceValidationError: For an asymmetric edge or a reference to an unknown user
    """
    declared_users: Optional[int] = None
    edges: Dict[Tuple[int, int], float] = {}
    events: List[ShareEvent] = []

    for line_number, fields in _read_lines(path):
        kind = fields[0]
        if kind == 'U':
            _expect_fields(fields, 2, path, line_number)
            declared_users = _as_int(fields[1], 'user count', path, line_number)
        elif kind == 'E':
            _expect_fields(fields, 4, path, line_number)
            u = _as_int(fields[1], 'u', path, line_number)
            v = _as_int(fields[2], 'v', path, line_number)
            prob = _as_float(fields[3], 'reshare_prob', path, line_number)
            if u == v:
                raise TraceParseError(f"self edge on user {u}", path=path, line_number=line_number)
            if not 0.0 <= prob <= 1.0:
                raise TraceParseError(f"reshare_prob must be in [0, 1], got {prob}", path=path, line_number=line_number)
            key = (min(u, v), max(u, v))
            if key in edges and not math.isclose(edges[key], prob, rel_tol=0.0, abs_tol=1e-12):
                raise TraceValidationError(
                    f"{path}:{line_number}: asymmetric edge ({u}, {v}): reshare_prob {prob} "
                    f"differs from {edges[key]} given for the reverse direction"
                )
            edges[key] = prob
        elif kind == 'S':
            _expect_fields(fields, 6, path, line_number)
            time_s = _as_float(fields[1], 'time', path, line_number)
            if time_s < 0:
                raise TraceParseError(f"time must be non-negative, got {time_s}", path=path, line_number=line_number)
            sharer = _as_int(fields[2], 'user', path, line_number)
            content = _as_int(fields[3], 'content', path, line_number)
            parent = _as_optional_int(fields[4], 'parent', path, line_number)
            root = _as_optional_int(fields[5], 'root', path, line_number)
            if parent is None and root is not None and root != sharer:
                raise TraceParseError(f"original post by {sharer} names root {root}", path=path, line_number=line_number)
            if parent == sharer:
                raise TraceParseError(f"user {sharer} reshares from itself", path=path, line_number=line_number)
            events.append(ShareEvent(time_s, sharer, content, parent, root))
        else:
            raise TraceParseError(f"unknown social record type '{kind}'", path=path, line_number=line_number)

    referenced = {e.sharer for e in events} | {u for pair in edges for u in pair}
    if declared_users is not None:
        n_users = declared_users
        out_of_range = sorted(u for u in referenced if u >= n_users)
        if out_of_range:
            raise TraceValidationError(f"{path}: user {out_of_range[0]} outside declared user count {n_users}")
        known: Set[int] = set(range(n_users))
    else:
        n_users = max(referenced, default=-1) + 1
        known = referenced

    graph = SocialGraph(n_users)
    for (u, v), prob in sorted(edges.items()):
        graph.add_edge(u, v, prob)

    non_friend = 0
    for event in events:
        for name, ref in (('parent', event.parent), ('root', event.root)):
            if ref is not None and ref not in known:
                raise TraceValidationError(
                    f"{path}: share of content {event.content} by user {event.sharer} at {event.time} "
                    f"references unknown {name} user {ref}"
                )
        if event.is_reshare and not graph.is_friend(event.sharer, event.parent):
            non_friend += 1

    if non_friend:
        logger.warning(f"{path}: {non_friend} reshare(s) from a parent that is not a declared friend")

    events.sort(key=lambda e: (e.time, e.sharer, e.content))
    logger.info(f"Parsed social trace {path}: {len(events)} events, {graph}")
    return SocialTrace(events=events, graph=graph, n_users=n_users, non_friend_reshares=non_friend)


def validate_associations(events: Sequence[AssociationEvent], source: str = "mobility trace") -> None:
    """
    Check that every user's associations are non-overlapping.

    Raises:
        TraceValidationError: Naming the user and the overlapping times
    """
    last: Dict[int, AssociationEvent] = {}
    for event in sorted(events, key=lambda e: (e.user, e.time)):
        previous = last.get(event.user)
        if previous is not None and event.time < previous.end - _OVERLAP_TOLERANCE_S:
            raise TraceValidationError(
                f"{source}: overlapping associations for user {event.user}: "
                f"[{previous.time}, {previous.end}) in region {previous.region} and "
                f"[{event.time}, {event.end}) in region {event.region}"
            )
        last[event.user] = event


def parse_mobility_trace(path: str) -> MobilityTrace:
    """
    Parse a mobility trace file.

    Returns:
        MobilityTrace with events sorted by (time, user) and the region table

    Raises:
        TraceParseError: For a malformed line, naming the line number
        TraceValidationError: For overlapping associations or unknown regions
    """
    declared_users: Optional[int] = None
    coordinates: Dict[int, Tuple[float, float]] = {}
    events: List[AssociationEvent] = []

    for line_number, fields in _read_lines(path):
        kind = fields[0]
        if kind == 'U':
            _expect_fields(fields, 2, path, line_number)
            declared_users = _as_int(fields[1], 'user count', path, line_number)
        elif kind == 'R':
            _expect_fields(fields, 4, path, line_number)
            region = _as_int(fields[1], 'region', path, line_number)
            if region in coordinates:
                raise TraceParseError(f"region {region} defined twice", path=path, line_number=line_number)
            coordinates[region] = (_as_float(fields[2], 'x', path, line_number),
                                   _as_float(fields[3], 'y', path, line_number))
        elif kind == 'A':
            _expect_fields(fields, 5, path, line_number)
            time_s = _as_float(fields[1], 'time', path, line_number)
            user = _as_int(fields[2], 'user', path, line_number)
            region = _as_int(fields[3], 'region', path, line_number)
            duration = _as_float(fields[4], 'duration', path, line_number)
            if time_s < 0:
                raise TraceParseError(f"time must be non-negative, got {time_s}", path=path, line_number=line_number)
            if duration <= 0:
                raise TraceParseError(f"duration must be positive, got {duration}", path=path, line_number=line_number)
            events.append(AssociationEvent(time_s, user, region, duration))
        else:
            raise TraceParseError(f"unknown mobility record type '{kind}'", path=path, line_number=line_number)

    if coordinates:
        unknown = sorted({e.region for e in events} - set(coordinates))
        if unknown:
            raise TraceValidationError(f"{path}: association with undeclared region {unknown[0]}")

    n_users = max((e.user for e in events), default=-1) + 1
    if declared_users is not None:
        if n_users > declared_users:
            raise TraceValidationError(f"{path}: user {n_users - 1} outside declared user count {declared_users}")
        n_users = declared_users

    validate_associations(events, source=path)
    events.sort(key=lambda e: (e.time, e.user))
    n_regions = max((e.region for e in events), default=-1) + 1
    regions = RegionTable.from_mapping(coordinates, n_regions)
    logger.info(f"Parsed mobility trace {path}: {len(events)} associations, {n_users} users, {regions.n_regions} regions")
    return MobilityTrace(events=events, regions=regions, n_users=n_users)

# --- End Parsing ---


# --- Writing ---

def format_number(value: float) -> str:
    """Shortest text that parses back to the same float; integral values without a decimal point."""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _optional(value: Optional[int]) -> str:
    return TRACE_ABSENT if value is None else str(value)


def social_trace_lines(trace: SocialTrace) -> List[str]:
    """Canonical line form: header, sorted edges, events sorted by time then sharer."""
    sep = TRACE_FIELD_SEPARATOR
    lines = [f"U{sep}{trace.n_users}"]
    lines.extend(f"E{sep}{u}{sep}{v}{sep}{format_number(p)}" for u, v, p in trace.graph.edges())
    for e in sorted(trace.events, key=lambda e: (e.time, e.sharer, e.content)):
        lines.append(sep.join(['S', format_number(e.time), str(e.sharer), str(e.content),
                               _optional(e.parent), _optional(e.root)]))
    return lines


def mobility_trace_lines(trace: MobilityTrace) -> List[str]:
    sep = TRACE_FIELD_SEPARATOR
    lines = [f"U{sep}{trace.n_users}"]
    for region in range(trace.regions.n_regions):
        if trace.regions.has_coordinates(region):
            x, y = trace.regions.coordinates[region]
            lines.append(f"R{sep}{region}{sep}{format_number(x)}{sep}{format_number(y)}")
    for e in sorted(trace.events, key=lambda e: (e.time, e.user)):
        lines.append(sep.join(['A', format_number(e.time), str(e.user), str(e.region), format_number(e.duration)]))
    return lines


def write_social_trace(trace: SocialTrace, path: str) -> None:
    with open(path, 'w') as f:
        f.write("\n".join(social_trace_lines(trace)) + "\n")
    logger.info(f"Wrote social trace: {path} ({len(trace.events)} events)")


def write_mobility_trace(trace: MobilityTrace, path: str) -> None:
    with open(path, 'w') as f:
        f.write("\n".join(mobility_trace_lines(trace)) + "\n")
    logger.info(f"Wrote mobility trace: {path} ({len(trace.events)} associations)")

# --- End Writing ---


# --- Derived Quantities ---

def migration_pairs(events: Sequence[AssociationEvent]) -> List[Tuple[int, int]]:
    """Consecutive (r, s) region pairs per user in time order, self pairs included."""
    pairs: List[Tuple[int, int]] = []
    per_user: Dict[int, List[AssociationEvent]] = defaultdict(list)
    for event in events:
        per_user[event.user].append(event)
    for user in sorted(per_user):
        path = sorted(per_user[user], key=lambda e: e.time)
        pairs.extend((a.region, b.region) for a, b in zip(path, path[1:]))
    return pairs


def region_occupancy(events: Sequence[AssociationEvent], t: float) -> Dict[int, Set[int]]:
    """Users present in each region at time t (association start inclusive, end exclusive)."""
    occupancy: Dict[int, Set[int]] = defaultdict(set)
    for event in events:
        if event.time <= t < event.end:
            occupancy[event.region].add(event.user)
    return dict(occupancy)


def social_intensity(events: Sequence[ShareEvent], n_users: int) -> np.ndarray:
    """Posts plus reshares per user."""
    counts = np.zeros(n_users, dtype=np.int64)
    for event in events:
        if event.sharer < n_users:
            counts[event.sharer] += 1
    return counts


def mobility_intensity(events: Sequence[AssociationEvent], n_users: int) -> np.ndarray:
    """Association count per user."""
    counts = np.zeros(n_users, dtype=np.int64)
    for event in events:
        if event.user < n_users:
            counts[event.user] += 1
    return counts


def home_regions(events: Sequence[AssociationEvent], n_users: int) -> np.ndarray:
    """
    Most visited region per user (by association count, ties by dwell time then region id).

    Users without associations get -1.
    """
    visits: Dict[int, Dict[int, List[float]]] = defaultdict(lambda: defaultdict(lambda: [0, 0.0]))
    for event in events:
        stats = visits[event.user][event.region]
        stats[0] += 1
        stats[1] += event.duration
    homes = np.full(n_users, -1, dtype=np.int64)
    for user, per_region in visits.items():
        if user < n_users:
            homes[user] = min(per_region, key=lambda r: (-per_region[r][0], -per_region[r][1], r))
    return homes


def friend_distances(graph: SocialGraph, homes: np.ndarray, regions: RegionTable) -> Dict[Tuple[int, int], float]:
    """Distance in metres between the home regions of each pair of friends (u < v); unknown homes skipped."""
    distances: Dict[Tuple[int, int], float] = {}
    for u, v, _ in graph.edges():
        if u >= len(homes) or v >= len(homes) or homes[u] < 0 or homes[v] < 0:
            continue
        d = regions.distance(int(homes[u]), int(homes[v]))
        if not math.isnan(d):
            distances[(u, v)] = d
    return distances

# --- End Derived Quantities ---


# --- User Mapping ---

def _truncate(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if n == k:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def map_user_profiles(social_activity: np.ndarray,
                      mobility_activity: np.ndarray,
                      mobility_homes: np.ndarray,
                      scheme: str,
                      seed: int) -> UserMapping:
    """
    Map social users onto mobility users given per-user intensities.

    Args:
        social_activity: Posts plus reshares per social user
        mobility_activity: Association count per mobility user
        mobility_homes: Home region per mobility user (-1 if none)
        scheme: 'independent', 'social_rank' or 'social_mobility_rank'
        seed: Seed for truncation and random orderings

    Returns:
        UserMapping over min(n_social, n_mobility) users

    Raises:
        UnknownOptionError: If scheme is not recognised
    """
    if scheme not in MAPPING_SCHEMES:
        raise UnknownOptionError("mapping scheme", scheme, MAPPING_SCHEMES)

    social_activity = np.asarray(social_activity)
    mobility_activity = np.asarray(mobility_activity)
    mobility_homes = np.asarray(mobility_homes)
    n_social, n_mobility = len(social_activity), len(mobility_activity)
    k = min(n_social, n_mobility)
    rng = np.random.default_rng(seed)
    kept_social = _truncate(n_social, k, rng)
    kept_mobility = _truncate(n_mobility, k, rng)
    if n_social != n_mobility:
        logger.info(f"Truncated user populations to {k} (social {n_social}, mobility {n_mobility})")

    if scheme == "independent":
        social_order = kept_social
        mobility_order = kept_mobility[rng.permutation(k)]
    else:
        # Stable sort on negated intensity keeps ties in ascending id order.
        social_order = kept_social[np.argsort(-social_activity[kept_social], kind='stable')]
        if scheme == "social_mobility_rank":
            mobility_order = kept_mobility[np.argsort(-mobility_activity[kept_mobility], kind='stable')]
        else:
            groups: Dict[int, List[int]] = defaultdict(list)
            for user in kept_mobility:
                groups[int(mobility_homes[user])].append(int(user))
            group_keys = sorted(groups)
            ordered: List[int] = []
            for index in rng.permutation(len(group_keys)):
                members = np.array(groups[group_keys[index]])
                ordered.extend(int(m) for m in members[rng.permutation(len(members))])
            mobility_order = np.array(ordered, dtype=np.int64)

    mapping = {int(s): int(m) for s, m in zip(social_order, mobility_order)}
    return UserMapping(scheme=scheme, mapping=mapping)


def map_users(social_users: SocialTrace, mobility_users: MobilityTrace, scheme: str, seed: int) -> UserMapping:
    """Map the users of a social trace onto the users of a mobility trace under `scheme`."""
    return map_user_profiles(
        social_intensity(social_users.events, social_users.n_users),
        mobility_intensity(mobility_users.events, mobility_users.n_users),
        home_regions(mobility_users.events, mobility_users.n_users),
        scheme,
        seed,
    )


def _home_coordinates(mobility: MobilityTrace) -> np.ndarray:
    homes = home_regions(mobility.events, mobility.n_users)
    coordinates = np.asarray(mobility.regions.coordinates, dtype=float).reshape(-1, 2)
    xy = np.full((mobility.n_users, 2), np.nan)
    known = (homes >= 0) & (homes < len(coordinates))
    xy[known] = coordinates[homes[known]]
    return xy


def _mean_edge_distance(edges: np.ndarray, mobility_of_social: np.ndarray, home_xy: np.ndarray) -> float:
    if len(edges) == 0:
        return math.nan
    delta = home_xy[mobility_of_social[edges[:, 0]]] - home_xy[mobility_of_social[edges[:, 1]]]
    distances = np.hypot(delta[:, 0], delta[:, 1])
    return float(np.nanmean(distances)) if np.isfinite(distances).any() else math.nan


def mean_friend_distance(social: SocialTrace, mobility: MobilityTrace, mapping: UserMapping) -> float:
    """Average home distance in metres over friend pairs whose users are both mapped."""
    mobility_of_social = np.full(social.n_users, -1, dtype=np.int64)
    for s, m in mapping.mapping.items():
        mobility_of_social[s] = m
    edges = np.array([(u, v) for u, v, _ in social.graph.edges()
                      if mobility_of_social[u] >= 0 and mobility_of_social[v] >= 0], dtype=np.int64).reshape(-1, 2)
    return _mean_edge_distance(edges, mobility_of_social, _home_coordinates(mobility))


def map_users_for_distance(social: SocialTrace, mobility: MobilityTrace, target_m: float, seed: int,
                           iterations: int = 20) -> UserMapping:
    """
    Map users so that the average home distance between friends approaches `target_m`.

    Social users in breadth-first order over the friendship graph are laid
    onto mobility users ordered by home position. One knob reshuffles a
    growing share of that close layout towards a random mapping; past the
    random level it reshuffles an interleaved layout that separates
    consecutive users by half the area. The knob is bisected on the
    resulting average; targets outside the reachable range get the nearest end.

    Args:
        social: Social trace over its own user ids
        mobility: Mobility trace over its own user ids
        target_m: Desired average friend distance in metres
        seed: Seed for truncation and reshuffling
        iterations: Bisection steps

    Returns:
        UserMapping with scheme 'friend_distance'
    """
    rng = np.random.default_rng(seed)
    k = min(social.n_users, mobility.n_users)
    kept_social = _truncate(social.n_users, k, rng)
    kept_mobility = _truncate(mobility.n_users, k, rng)

    subgraph = social.graph.graph.subgraph(int(s) for s in kept_social)
    social_order: List[int] = []
    for component in sorted(nx.connected_components(subgraph), key=min):
        social_order.extend(nx.bfs_tree(subgraph, min(component)))
    social_order_arr = np.array(social_order, dtype=np.int64)

    home_xy = _home_coordinates(mobility)
    kept_xy = home_xy[kept_mobility]
    # Users without a home go last.
    unknown = np.isnan(kept_xy[:, 0])
    close = kept_mobility[np.lexsort((np.nan_to_num(kept_xy[:, 0]), np.nan_to_num(kept_xy[:, 1]), unknown))]
    half = (k + 1) // 2
    far = np.empty_like(close)
    far[0::2] = close[:half]
    far[1::2] = close[half:]
    shuffle_positions = rng.permutation(k)
    shuffle_targets = rng.permutation(k)

    edges = np.array([(u, v) for u, v in subgraph.edges()], dtype=np.int64).reshape(-1, 2)

    def layout(knob: float) -> np.ndarray:
        base, share = (close, knob) if knob <= 1.0 else (far, 2.0 - knob)
        order = base.copy()
        m = int(round(share * k))
        if m > 1:
            positions = np.sort(shuffle_positions[:m])
            order[positions] = base[positions][np.argsort(shuffle_targets[:m])]
        return order

    def average(knob: float) -> Tuple[float, np.ndarray]:
        order = layout(knob)
        mobility_of_social = np.full(social.n_users, -1, dtype=np.int64)
        mobility_of_social[social_order_arr] = order
        return _mean_edge_distance(edges, mobility_of_social, home_xy), order

    best_gap, best_order, best_distance = math.inf, close, math.nan
    low, high = 0.0, 2.0
    for knob in (low, high):
        distance, order = average(knob)
        if abs(distance - target_m) < best_gap:
            best_gap, best_order, best_distance = abs(distance - target_m), order, distance
    for _ in range(iterations):
        knob = 0.5 * (low + high)
        distance, order = average(knob)
        if math.isnan(distance):
            break
        if abs(distance - target_m) < best_gap:
            best_gap, best_order, best_distance = abs(distance - target_m), order, distance
        if distance < target_m:
            low = knob
        else:
            high = knob

    logger.info(f"Friend distance mapping: target {target_m:.0f} m, reached {best_distance:.0f} m")
    mapping = {int(s): int(m) for s, m in zip(social_order_arr, best_order)}
    return UserMapping(scheme="friend_distance", mapping=mapping)


def combine_traces(social: SocialTrace, mobility: MobilityTrace,
                   mapping: UserMapping) -> Tuple[SocialTrace, MobilityTrace]:
    """
    Relabel both traces onto dense simulated users 0..k-1.

    Simulated user i is the i-th kept social user in id order together with
    its mapped mobility user. Events and edges of unmapped users are dropped,
    as are reshares whose parent was dropped.
    """
    social_ids = sorted(mapping.mapping)
    sim_of_social = {s: i for i, s in enumerate(social_ids)}
    sim_of_mobility = {mapping.mapping[s]: i for i, s in enumerate(social_ids)}
    k = len(social_ids)

    graph = SocialGraph(k)
    for u, v, p in social.graph.edges():
        if u in sim_of_social and v in sim_of_social:
            graph.add_edge(sim_of_social[u], sim_of_social[v], p)

    share_events: List[ShareEvent] = []
    dropped = 0
    for e in social.events:
        if e.sharer not in sim_of_social or (e.parent is not None and e.parent not in sim_of_social):
            dropped += 1
            continue
        share_events.append(ShareEvent(
            e.time,
            sim_of_social[e.sharer],
            e.content,
            None if e.parent is None else sim_of_social[e.parent],
            sim_of_social.get(e.root) if e.root is not None else None,
        ))
    if dropped:
        logger.info(f"Dropped {dropped} share event(s) of users outside the mapping")

    non_friend = sum(1 for e in share_events if e.is_reshare and not graph.is_friend(e.sharer, e.parent))
    assoc_events = [AssociationEvent(e.time, sim_of_mobility[e.user], e.region, e.duration)
                    for e in mobility.events if e.user in sim_of_mobility]
    assoc_events.sort(key=lambda e: (e.time, e.user))

    return (SocialTrace(events=share_events, graph=graph, n_users=k, non_friend_reshares=non_friend),
            MobilityTrace(events=assoc_events, regions=mobility.regions, n_users=k))

# --- End User Mapping ---
