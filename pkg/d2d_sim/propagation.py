"""
Social-side model tables.

For each slot T the engine rebuilds, from history strictly before T:

* the influence index I[u][v]: share of u's items accepted by friend v over a window W,
* the regional preference P[u][r]: share of u's dwell time spent in region r over W',
* the inherent popularity p[c][r]: EWMA of requests for c in r,
* the social popularity A[c][r] = p[c][r] + alpha[c] * sum over sharers u of c
  and friends v of u of I[u][v] * P[v][r],
* alpha[c]: the fraction of viewers of c who had a friend share c before them.

The scalar functions read the nested-dict history directly and are the
reference forms; `PropagationModel.build_tables` computes the same tables for
all users and active contents with dense numpy arrays.
"""
# Standard library imports
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

# Third-party imports
import numpy as np

# Application-specific imports
from config.constants import EWMA_SMOOTHING
from .optimizations import timed
from .trace_model import SocialGraph

logger = logging.getLogger(__name__)

# Nested history forms: H[(u, v)][slot], G[u][slot], requests[(c, r)][slot], dwell[u][r][slot]
SlotCounts = Mapping[int, float]


def _window_sum(series: Optional[SlotCounts], start: int, stop: int, name: str) -> float:
    if not series:
        return 0.0
    total = 0.0
    for slot, count in series.items():
        if count < 0:
            raise ValueError(f"{name} counter is negative ({count}) at slot {slot}")
        if start <= slot < stop:
            total += count
    return total


def influence_index(H: Mapping[Tuple[int, int], SlotCounts], G: Mapping[int, SlotCounts],
                    u: int, v: int, T: int, W: int) -> float:
    """
    Items shared by u and accepted by v over slots [T-W, T-1], divided by items shared by u.

    Returns 0 when u shared nothing in the window.

    Raises:
        ValueError: If W < 1, T < W, or a counter is negative
    """
    if W < 1:
        raise ValueError(f"window W must be at least 1, got {W}")
    if T < W:
        raise ValueError(f"slot T ({T}) must not precede the window length W ({W})")
    accepted = _window_sum(H.get((u, v)), T - W, T, 'H')
    shared = _window_sum(G.get(u), T - W, T, 'G')
    if shared == 0:
        return 0.0
    return min(1.0, accepted / shared)


def regional_preference(durations: Mapping[int, Mapping[int, SlotCounts]], u: int, T: int, W: int) -> Dict[int, float]:
    """
    Preference row of user u: dwell share per region over slots [T-W, T-1].

    Args:
        durations: durations[u][r][slot] in seconds
        u: User id
        T: Current slot
        W: Window length W' in slots

    Returns:
        {region: share} summing to 1, or an empty dict without history
    """
    per_region = durations.get(u, {})
    dwell = {r: _window_sum(series, max(0, T - W), T, 'duration') for r, series in per_region.items()}
    dwell = {r: d for r, d in dwell.items() if d > 0}
    total = sum(dwell.values())
    if total <= 0:
        return {}
    return {r: d / total for r, d in sorted(dwell.items())}


def inherent_popularity(request_history: Mapping[Tuple[int, int], SlotCounts], c: int, r: int, T: int,
                        smoothing: float = EWMA_SMOOTHING) -> float:
    """
    EWMA of per-slot requests for content c in region r over slots before T.

    e_T = sum over t < T of smoothing * (1 - smoothing)^(T-1-t) * x_t, so a
    single request in slot T-1 gives `smoothing` and a constant rate k
    converges to k.
    """
    series = request_history.get((c, r))
    if not series:
        return 0.0
    value = 0.0
    for slot, count in series.items():
        if slot < T:
            value += smoothing * (1.0 - smoothing) ** (T - 1 - slot) * count
    return value


def social_popularity(p: Mapping[Tuple[int, int], float], alpha: Mapping[int, float],
                      I: Mapping[Tuple[int, int], float], P: Mapping[int, Mapping[int, float]],
                      sharers: Iterable[int], graph: SocialGraph, c: int, r: int, T: Optional[int] = None) -> float:
    """
    A[c][r] = p[c][r] + alpha[c] * sum over u in S(c), v in F_u of I[u][v] * P[v][r].

    A receiver reached through several sharers contributes once per sharer.
    `T` only labels the slot the tables belong to.
    """
    social = 0.0
    for u in set(sharers):
        for v in graph.friends(u):
            social += I.get((u, v), 0.0) * P.get(v, {}).get(r, 0.0)
    return p.get((c, r), 0.0) + alpha.get(c, 0.0) * social


# --- History ---

class HistoryCounters:
    """
    Per-slot history of shares, acceptances, requests and dwell times.

    Keeps the nested per-slot forms read by the scalar functions and dense
    window totals (H over W, dwell over W') for the vectorised table builders.
    Requests are also folded into a lazily decayed EWMA per content.
    """

    def __init__(self, n_users: int, n_regions: int,
                 influence_window: Optional[int] = None,
                 preference_window: Optional[int] = None,
                 smoothing: float = EWMA_SMOOTHING):
        self.n_users = n_users
        self.n_regions = n_regions
        self.influence_window = influence_window
        self.preference_window = preference_window
        self.smoothing = smoothing

        self.H: Dict[Tuple[int, int], Dict[int, int]] = defaultdict(lambda: defaultdict(int))
        self.G: Dict[int, Dict[int, int]] = defaultdict(lambda: defaultdict(int))
        self.requests: Dict[Tuple[int, int], Dict[int, int]] = defaultdict(lambda: defaultdict(int))
        self.dwell: Dict[int, Dict[int, Dict[int, float]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(float)))

        self.h_totals = np.zeros((n_users, n_users))
        self.g_totals = np.zeros(n_users)
        self.dwell_totals = np.zeros((n_users, n_regions))

        self._share_log: Dict[int, List[Tuple[int, int, int]]] = defaultdict(list)   # slot -> (kind, a, b)
        self._dwell_log: Dict[int, List[Tuple[int, int, float]]] = defaultdict(list)
        self._ewma: Dict[int, Tuple[np.ndarray, int]] = {}
        self._pending_requests: Dict[int, np.ndarray] = {}
        self._pending_slot: Optional[int] = None
        self.current_slot = 0

    # Recording, always for the current slot

    def record_share(self, u: int, slot: int) -> None:
        self.G[u][slot] += 1
        self.g_totals[u] += 1
        self._share_log[slot].append((0, u, -1))

    def record_acceptance(self, sharer: int, receiver: int, slot: int) -> None:
        self.H[(sharer, receiver)][slot] += 1
        self.h_totals[sharer, receiver] += 1
        self._share_log[slot].append((1, sharer, receiver))

    def record_request(self, c: int, r: int, slot: int) -> None:
        self.requests[(c, r)][slot] += 1
        if self._pending_slot is not None and self._pending_slot != slot:
            self._fold_pending()
        self._pending_slot = slot
        pending = self._pending_requests.get(c)
        if pending is None:
            pending = self._pending_requests[c] = np.zeros(self.n_regions)
        pending[r] += 1

    def record_dwell(self, u: int, r: int, slot: int, seconds: float) -> None:
        if seconds <= 0:
            return
        self.dwell[u][r][slot] += seconds
        self.dwell_totals[u, r] += seconds
        self._dwell_log[slot].append((u, r, seconds))

    def _fold_pending(self) -> None:
        slot = self._pending_slot
        for c, counts in self._pending_requests.items():
            value = self._decayed(c, slot)
            self._ewma[c] = ((1.0 - self.smoothing) * value + self.smoothing * counts, slot + 1)
        self._pending_requests = {}
        self._pending_slot = None

    def _decayed(self, c: int, T: int) -> np.ndarray:
        entry = self._ewma.get(c)
        if entry is None:
            return np.zeros(self.n_regions)
        value, as_of = entry
        return value * (1.0 - self.smoothing) ** max(0, T - as_of)

    def roll(self, T: int) -> None:
        """Close slots before T: fold requests into the EWMA and expire window entries."""
        if self._pending_slot is not None and self._pending_slot < T:
            self._fold_pending()
        if self.influence_window is not None:
            expired = T - 1 - self.influence_window
            for kind, a, b in self._share_log.pop(expired, []):
                if kind == 0:
                    self.g_totals[a] -= 1
                else:
                    self.h_totals[a, b] -= 1
        if self.preference_window is not None:
            expired = T - 1 - self.preference_window
            for u, r, seconds in self._dwell_log.pop(expired, []):
                self.dwell_totals[u, r] = max(0.0, self.dwell_totals[u, r] - seconds)
        self.current_slot = T

    def ewma_requests(self, contents: Sequence[int], T: int) -> np.ndarray:
        """Inherent popularity rows for `contents` at slot T (requests of slot T itself excluded)."""
        rows = np.zeros((len(contents), self.n_regions))
        for i, c in enumerate(contents):
            rows[i] = self._decayed(int(c), T)
        return rows


@dataclass
class CascadeHistory:
    """
    Sharers and viewers of every content, in share-time order.

    Viewers are resharers. A viewer is influenced when a friend posted or
    reshared the content strictly before the viewer's own reshare.
    """
    graph: SocialGraph
    sharers: Dict[int, Dict[int, float]] = field(default_factory=lambda: defaultdict(dict))
    viewers: Dict[int, int] = field(default_factory=lambda: defaultdict(int))
    influenced: Dict[int, int] = field(default_factory=lambda: defaultdict(int))
    last_share_slot: Dict[int, int] = field(default_factory=dict)

    def record_share(self, user: int, content: int, time_s: float, slot: int, is_reshare: bool) -> None:
        earlier = self.sharers[content]
        if is_reshare and user not in earlier:
            self.viewers[content] += 1
            if any(f in earlier and earlier[f] < time_s for f in self.graph.friends(user)):
                self.influenced[content] += 1
        earlier.setdefault(user, time_s)
        self.last_share_slot[content] = slot

    def sharer_set(self, content: int) -> Set[int]:
        return set(self.sharers.get(content, {}))

    def active_contents(self, T: int, window_slots: int) -> List[int]:
        """Contents shared in slots [T - window_slots, T - 1]."""
        return sorted(c for c, s in self.last_share_slot.items() if T - window_slots <= s < T)

    def pooled_alpha(self) -> float:
        total = sum(self.viewers.values())
        return sum(self.influenced.values()) / total if total else 0.0


def learn_alpha(cascade_history: CascadeHistory, c: int) -> float:
    """Fraction of viewers of c that were influenced; 0 without viewers."""
    viewers = cascade_history.viewers.get(c, 0)
    if viewers == 0:
        return 0.0
    return cascade_history.influenced.get(c, 0) / viewers

# --- End History ---


# --- Tables ---

@dataclass
class InfluenceTable:
    I: np.ndarray
    window: Optional[int]


@dataclass
class PreferenceTable:
    P: np.ndarray
    window: int

    def row(self, u: int) -> Dict[int, float]:
        """Nonzero entries of u's row; empty without history."""
        return {int(r): float(x) for r, x in enumerate(self.P[u]) if x > 0}

    def has_history(self) -> np.ndarray:
        return self.P.sum(axis=1) > 0


@dataclass
class PopularityTable:
    contents: np.ndarray
    A: np.ndarray
    p: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.index = {int(c): i for i, c in enumerate(self.contents)}

    @property
    def n_contents(self) -> int:
        return len(self.contents)

    def row(self, c: int) -> np.ndarray:
        i = self.index.get(int(c))
        if i is None:
            return np.zeros(self.A.shape[1])
        return self.A[i]


class PropagationModel:
    """
    Builds I, P and A for a slot from `HistoryCounters` and `CascadeHistory`.
    """

    def __init__(self, graph: SocialGraph, history: HistoryCounters, cascades: CascadeHistory,
                 alpha: object = "learned", preference_window: int = 2016):
        self.graph = graph
        self.history = history
        self.cascades = cascades
        self.alpha_mode = alpha
        self.preference_window = preference_window
        self._adjacency = graph.adjacency_matrix()

    def influence_table(self) -> InfluenceTable:
        g = self.history.g_totals
        with np.errstate(divide='ignore', invalid='ignore'):
            I = np.where(g[:, None] > 0, self.history.h_totals / g[:, None], 0.0)
        I = np.clip(I, 0.0, 1.0) * self._adjacency
        return InfluenceTable(I=I, window=self.history.influence_window)

    def preference_table(self) -> PreferenceTable:
        dwell = self.history.dwell_totals
        totals = dwell.sum(axis=1, keepdims=True)
        with np.errstate(divide='ignore', invalid='ignore'):
            P = np.where(totals > 0, dwell / totals, 0.0)
        return PreferenceTable(P=P, window=self.preference_window)

    def alpha_values(self, contents: Sequence[int]) -> np.ndarray:
        if self.alpha_mode != "learned":
            return np.full(len(contents), float(self.alpha_mode))
        pooled = self.cascades.pooled_alpha()
        values = np.empty(len(contents))
        for i, c in enumerate(contents):
            c = int(c)
            values[i] = learn_alpha(self.cascades, c) if self.cascades.viewers.get(c, 0) else pooled
        return values

    @timed
    def build_tables(self, T: int, active_contents: Sequence[int]) -> Tuple[InfluenceTable, PreferenceTable, PopularityTable]:
        """
        Tables for slot T over all users and the given active contents.

        The social term of content c is the sum of rows M[u] = (I @ P)[u] over
        the sharers u of c.
        """
        influence = self.influence_table()
        preference = self.preference_table()
        contents = np.asarray(sorted(active_contents), dtype=np.int64)

        M = influence.I @ preference.P
        social = np.zeros((len(contents), self.history.n_regions))
        rows: List[int] = []
        users: List[int] = []
        for i, c in enumerate(contents):
            sharer_ids = self.cascades.sharers.get(int(c), {})
            rows.extend([i] * len(sharer_ids))
            users.extend(sharer_ids)
        if rows:
            np.add.at(social, np.asarray(rows), M[np.asarray(users, dtype=np.int64)])

        p = self.history.ewma_requests(contents, T)
        alpha = self.alpha_values(contents)
        A = p + alpha[:, None] * social
        logger.debug(f"slot {T}: tables for {len(contents)} active contents, "
                     f"mean I over edges {influence.I.sum() / max(1, self._adjacency.sum()):.4f}, "
                     f"total A {A.sum():.3f}")
        return influence, preference, PopularityTable(contents=contents, A=A, p=p, alpha=alpha)

# --- End Tables ---
