"""
Synthetic social and mobility traces.

The generators reproduce the measured shapes the model relies on: Poisson
posting with per-user rates, power-law reshare probabilities on a social
graph with a configurable mean degree, zipf region popularity, power-law
region-pair affinities, exponential association durations around four
minutes, and a revisit-heavy preference for a handful of favoured regions.

Every generator draws from its own seeded stream, so the social trace does
not change when only mobility parameters change and vice versa.
"""
# Standard library imports
import heapq
import logging
import math
import os
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

# Third-party imports
import networkx as nx
import numpy as np
from scipy import stats

# Application-specific imports
from config.constants import (
    INDOOR_GRID_COLUMNS, MOBILITY_TRACE_FILE, OUTDOOR_AREA_SIDE_M, REGION_SIDE_M,
    SECONDS_PER_DAY, SOCIAL_TRACE_FILE
)
from utils.conversions import grid_cell_centre
from .errors import ConfigurationError
from .optimizations import timed
from .scenarios import SynthConfig
from .trace_model import (
    AssociationEvent, MobilityTrace, RegionTable, ShareEvent, SocialGraph, SocialTrace,
    write_mobility_trace, write_social_trace
)

logger = logging.getLogger(__name__)

# Independent random streams per generator.
_STREAM_EDGES = 1
_STREAM_PROPAGATION = 2
_STREAM_MOBILITY = 3

_MIN_ASSOCIATION_S = 1e-6


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def bounded_powerlaw(rng: np.random.Generator, exponent: float, upper: float, size) -> np.ndarray:
    """
    Samples with density proportional to x^-exponent on [1, upper], by inverse CDF.
    """
    u = rng.random(size)
    if math.isclose(exponent, 1.0):
        return upper ** u
    tail = 1.0 - upper ** (1.0 - exponent)
    return (1.0 - u * tail) ** (1.0 / (1.0 - exponent))


@timed
def gen_social_graph(cfg: SynthConfig) -> SocialGraph:
    """
    Random social graph with mean degree `avg_degree` and power-law reshare probabilities.

    The edge count is fixed to round(n * avg_degree / 2), so the mean degree
    is exact up to rounding. Edge probabilities are bounded power-law draws on
    [1, edge_prob_span] divided by edge_prob_span.

    Raises:
        ConfigurationError: If n_users < 2 or avg_degree >= n_users
    """
    n = cfg.n_users
    if n < 2:
        raise ConfigurationError(f"a social graph needs at least 2 users, got {n}")
    if cfg.avg_degree >= n:
        raise ConfigurationError(f"avg_degree ({cfg.avg_degree}) must be smaller than n_users ({n})")

    n_edges = int(round(n * cfg.avg_degree / 2.0))
    topology = nx.gnm_random_graph(n, n_edges, seed=cfg.seed)
    edges = sorted((min(u, v), max(u, v)) for u, v in topology.edges())

    rng = _rng(cfg.seed, _STREAM_EDGES)
    probs = bounded_powerlaw(rng, cfg.powerlaw_exponent_edges, cfg.edge_prob_span, len(edges)) / cfg.edge_prob_span

    graph = SocialGraph(n)
    for (u, v), p in zip(edges, probs):
        graph.add_edge(u, v, float(min(1.0, p)))
    logger.info(f"Generated social graph: {graph}")
    return graph


@timed
def gen_propagation(cfg: SynthConfig, graph: SocialGraph) -> List[ShareEvent]:
    """
    Posts and reshare cascades over the horizon.

    Each user posts Poisson(lambda_u) items per slot, with lambda_u fixed per
    user and uniform on the (intensity-scaled) rate range; post times are
    uniform within the slot and content ids follow post-time order. A share by
    u at t makes each friend v reshare with probability reshare_prob(u, v) at
    t + Exp(reshare_mean_latency_s). A user shares a content at most once
    (the earliest scheduled reshare wins); shares past the horizon are dropped.
    """
    rng = _rng(cfg.seed, _STREAM_PROPAGATION)
    n = graph.n_users
    slot = cfg.slot_length_s
    horizon = cfg.horizon_s
    low, high = cfg.effective_lambda_range

    rates = rng.uniform(low, high, size=n) if high > low else np.full(n, low)
    counts = rng.poisson(np.repeat(rates[:, None], cfg.horizon_slots, axis=1))

    posts: List[Tuple[float, int]] = []
    users, slots = np.nonzero(counts)
    for user, t_slot in zip(users, slots):
        k = int(counts[user, t_slot])
        for offset in rng.random(k):
            posts.append(((t_slot + offset) * slot, int(user)))
    posts.sort()

    queue: List[Tuple[float, int, int, int, int, int]] = []
    seq = 0
    for content, (t, user) in enumerate(posts):
        queue.append((t, seq, user, content, -1, -1))
        seq += 1
    heapq.heapify(queue)

    friends = graph.friend_arrays()
    friend_probs = [
        np.array([graph.reshare_prob(u, v) for v in friends[u]], dtype=float) for u in range(n)
    ]

    shared = set()
    events: List[ShareEvent] = []
    while queue:
        t, _, user, content, parent, root = heapq.heappop(queue)
        if (content, user) in shared:
            continue
        shared.add((content, user))
        if parent < 0:
            events.append(ShareEvent(t, user, content))
            root = user
        else:
            events.append(ShareEvent(t, user, content, parent, root))

        candidates = friends[user]
        if len(candidates) == 0:
            continue
        accepted = candidates[rng.random(len(candidates)) < friend_probs[user]]
        for friend in accepted:
            friend = int(friend)
            if (content, friend) in shared:
                continue
            t_reshare = t + rng.exponential(cfg.reshare_mean_latency_s)
            if t_reshare >= horizon:
                continue
            heapq.heappush(queue, (t_reshare, seq, friend, content, user, root))
            seq += 1

    n_reshares = sum(1 for e in events if e.is_reshare)
    logger.info(f"Generated {len(posts)} posts and {n_reshares} reshares over {cfg.horizon_slots} slots")
    return events


def region_layout(cfg: SynthConfig, rng: np.random.Generator) -> RegionTable:
    """
    Region centre coordinates for the configured scenario.

    Indoor regions fill a grid of 100 m cells row by row, 10 cells wide.
    Outdoor regions occupy distinct random 100 m cells of a 5x5 km area.
    """
    n = cfg.n_regions
    if cfg.scenario == "indoor":
        index = np.arange(n)
        x, y = grid_cell_centre(index % INDOOR_GRID_COLUMNS, index // INDOOR_GRID_COLUMNS)
    else:
        cells_per_side = int(OUTDOOR_AREA_SIDE_M // REGION_SIDE_M)
        if n > cells_per_side ** 2:
            raise ConfigurationError(f"outdoor area holds at most {cells_per_side ** 2} regions, got {n}")
        cells = rng.choice(cells_per_side ** 2, size=n, replace=False)
        x, y = grid_cell_centre(cells % cells_per_side, cells // cells_per_side)
    return RegionTable(np.column_stack([x, y]).astype(float))


def online_fraction(cfg: SynthConfig) -> float:
    """
    Fraction of time each user is associated, so that on average
    `crowdedness` users are present per region.

    Raises:
        ConfigurationError: If the target crowdedness cannot be reached
    """
    low, high = cfg.crowdedness_range
    target = cfg.target_crowdedness
    if not low <= target <= high:
        raise ConfigurationError(f"crowdedness {target} outside crowdedness_range [{low}, {high}]")
    fraction = target * cfg.n_regions / cfg.n_users
    if fraction > 1.0:
        raise ConfigurationError(
            f"infeasible crowdedness: {target} users per region over {cfg.n_regions} regions needs "
            f"{target * cfg.n_regions:.0f} concurrent users, but only {cfg.n_users} exist"
        )
    return fraction


class _RegionChain:
    """First-order region chain biased towards a user's favoured regions."""

    def __init__(self, cfg: SynthConfig, popularity: np.ndarray, affinity: np.ndarray,
                 favourites: np.ndarray, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.favourites = favourites
        self.global_cdf = np.cumsum(popularity)
        self.global_cdf /= self.global_cdf[-1]
        self.affinity = affinity

    def _draw(self, cdf: np.ndarray) -> int:
        return int(min(np.searchsorted(cdf, self.rng.random(), side='right'), len(cdf) - 1))

    def next_region(self, current: Optional[int]) -> int:
        u = self.rng.random()
        if current is not None and u < self.cfg.stay_prob:
            return current
        if u < self.cfg.stay_prob + self.cfg.explore_prob:
            return self._draw(self.global_cdf)
        if current is None:
            weights = np.ones(len(self.favourites))
        else:
            weights = self.affinity[current, self.favourites]
        cdf = np.cumsum(weights)
        return int(self.favourites[self._draw(cdf / cdf[-1])])


@timed
def gen_mobility(cfg: SynthConfig) -> MobilityTrace:
    """
    Region associations for every user over the horizon.

    Users alternate online sessions and offline gaps such that the mean
    number of present users per region matches the crowdedness target. While
    online, a user walks the region chain: stay with `stay_prob`, explore a
    region drawn by global popularity with `explore_prob`, otherwise move to
    one of its 3-8 favoured regions (drawn by popularity) weighted by the
    power-law affinity of the region pair. Association durations are
    exponential and split at slot boundaries.

    Raises:
        ConfigurationError: For fewer than 2 regions or an infeasible crowdedness
    """
    if cfg.n_regions < 2:
        raise ConfigurationError(f"mobility generation needs at least 2 regions, got {cfg.n_regions}")
    fraction = online_fraction(cfg)

    rng = _rng(cfg.seed, _STREAM_MOBILITY)
    regions = region_layout(cfg, rng)
    n_regions = cfg.n_regions

    ranks = rng.permutation(n_regions) + 1
    popularity = 1.0 / ranks.astype(float) ** cfg.zipf_exponent_regions
    popularity /= popularity.sum()
    affinity = bounded_powerlaw(rng, cfg.powerlaw_exponent_migration, cfg.edge_prob_span, (n_regions, n_regions))

    horizon = cfg.horizon_s
    slot = cfg.slot_length_s
    session_mean = cfg.session_mean_s
    offline_mean = session_mean * (1.0 - fraction) / fraction if fraction > 0 else math.inf
    low_fav, high_fav = cfg.favored_regions

    events: List[AssociationEvent] = []
    if fraction == 0:
        logger.warning("Crowdedness target is 0; no associations generated")
        return MobilityTrace(events=events, regions=regions, n_users=cfg.n_users)

    for user in range(cfg.n_users):
        k = min(int(rng.integers(low_fav, high_fav + 1)), n_regions)
        favourites = np.sort(rng.choice(n_regions, size=k, replace=False, p=popularity))
        chain = _RegionChain(cfg, popularity, affinity, favourites, rng)

        t = 0.0
        online = rng.random() < fraction
        region: Optional[int] = None
        while t < horizon:
            if not online:
                t += rng.exponential(offline_mean)
                online = True
                continue
            session_end = horizon if fraction >= 1.0 else min(horizon, t + rng.exponential(session_mean))
            while t < session_end:
                region = chain.next_region(region)
                end = min(session_end, t + rng.exponential(cfg.association_mean_s))
                while t < end:
                    boundary = (math.floor(t / slot) + 1) * slot
                    piece_end = min(end, boundary)
                    if piece_end - t > _MIN_ASSOCIATION_S:
                        events.append(AssociationEvent(t, user, region, piece_end - t))
                    t = piece_end
            online = False

    events.sort(key=lambda e: (e.time, e.user))
    logger.info(f"Generated {len(events)} associations for {cfg.n_users} users over {n_regions} regions "
                f"(online fraction {fraction:.3f})")
    return MobilityTrace(events=events, regions=regions, n_users=cfg.n_users)


def generate_traces(cfg: SynthConfig) -> Tuple[SocialTrace, MobilityTrace]:
    """Both synthetic traces for one configuration."""
    graph = gen_social_graph(cfg)
    events = gen_propagation(cfg, graph)
    social = SocialTrace(events=events, graph=graph, n_users=cfg.n_users)
    mobility = gen_mobility(cfg)
    return social, mobility


def write_traces(social: SocialTrace, mobility: MobilityTrace, out_dir: str) -> Tuple[str, str]:
    """Write both traces under `out_dir` using the standard file names."""
    os.makedirs(out_dir, exist_ok=True)
    social_path = os.path.join(out_dir, SOCIAL_TRACE_FILE)
    mobility_path = os.path.join(out_dir, MOBILITY_TRACE_FILE)
    write_social_trace(social, social_path)
    write_mobility_trace(mobility, mobility_path)
    return social_path, mobility_path


# --- Diagnostics ---

def zipf_exponent_fit(visit_counts: Sequence[float]) -> float:
    """
    Zipf exponent of rank-ordered counts by least squares on log-rank vs log-count.

    Raises:
        ValueError: If fewer than two nonzero counts are given
    """
    counts = np.sort(np.asarray(visit_counts, dtype=float))[::-1]
    counts = counts[counts > 0]
    if len(counts) < 2:
        raise ValueError("need at least two nonzero counts to fit a zipf exponent")
    ranks = np.arange(1, len(counts) + 1)
    fit = stats.linregress(np.log(ranks), np.log(counts))
    return float(-fit.slope)


def region_visit_counts(events: Sequence[AssociationEvent], n_regions: int) -> np.ndarray:
    """Visits per region; back-to-back associations in one region count as one visit."""
    counts = np.zeros(n_regions, dtype=np.int64)
    for _, region in _visits(events):
        counts[region] += 1
    return counts


def _visits(events: Sequence[AssociationEvent]) -> List[Tuple[float, int]]:
    per_user: Dict[int, List[AssociationEvent]] = defaultdict(list)
    for event in events:
        per_user[event.user].append(event)
    visits: List[Tuple[float, int]] = []
    for user in sorted(per_user):
        previous: Optional[AssociationEvent] = None
        for event in sorted(per_user[user], key=lambda e: e.time):
            contiguous = previous is not None and math.isclose(previous.end, event.time, abs_tol=1e-6)
            if not (contiguous and previous.region == event.region):
                visits.append((event.time, event.region))
            previous = event
    return visits


def revisit_fraction(events: Sequence[AssociationEvent], window_s: float = SECONDS_PER_DAY) -> float:
    """
    Fraction of users with at least two separate visits to one region within `window_s`.

    Users without associations are not counted.
    """
    per_user: Dict[int, List[AssociationEvent]] = defaultdict(list)
    for event in events:
        per_user[event.user].append(event)
    if not per_user:
        return 0.0

    revisiting = 0
    for user, user_events in per_user.items():
        last_visit: Dict[int, float] = {}
        for t, region in _visits(user_events):
            if region in last_visit and t - last_visit[region] <= window_s:
                revisiting += 1
                break
            last_visit[region] = t
    return revisiting / len(per_user)

# --- End Diagnostics ---
