import pytest
import itertools
import numpy as np

from d2d_sim.errors import InstanceTooLargeError, UnknownOptionError
from d2d_sim.mobility import MobilityTable
from d2d_sim.propagation import PopularityTable
from d2d_sim.strategies import (
    InstanceSnapshot, MovementBasedStrategy, PopularityBasedStrategy, ProposedStrategy, StrategyContext,
    Transfer, candidate_set, evaluate_objective, exact_optimize, get_strategy, heuristic_assignment,
    movement_based_select, optimality_ratio, popularity_based_select, replica_gain, sample_offer, select_replicas,
    selection_keys, top_k_by_key, weighted_sample_without_replacement
)

# --- Fixtures ---


def _popularity(contents, A):
    A = np.asarray(A, dtype=float)
    return PopularityTable(contents=np.asarray(contents, dtype=np.int64), A=A,
                           p=np.zeros_like(A), alpha=np.zeros(len(contents)))


def _context(caches, cache_capacity, **kwargs):
    n = len(caches)
    defaults = dict(
        slot=3,
        seed=1,
        caches=caches,
        cache_capacity=np.asarray(cache_capacity),
        upload_capacity=np.ones(n, dtype=np.int64),
        current_region=np.zeros(n, dtype=np.int64),
        occupants={0: set(range(n))},
        holders={},
    )
    defaults.update(kwargs)
    return StrategyContext(**defaults)


def _brute_force_optimum(snapshot):
    """Best objective over every feasible assignment."""
    best = 0.0
    cells = snapshot.n_users * snapshot.n_contents
    for bits in itertools.product([False, True], repeat=cells):
        K = np.array(bits).reshape(snapshot.n_users, snapshot.n_contents)
        report = evaluate_objective(K, snapshot)
        if report.feasible:
            best = max(best, report.objective)
    return best


@pytest.fixture
def two_region_tables():
    """User 0 stays in region 0, user 1 in region 1; content 10 is wanted in 0, content 11 in 1."""
    popularity = _popularity([10, 11], [[1.0, 0.0], [0.0, 1.0]])
    mobility = MobilityTable(Q=np.array([[1.0, 0.0], [0.0, 1.0]]), last_region=np.array([0, 1]))
    return popularity, mobility


# --- Test Cases Start Here ---

def test_candidate_set_and_gain():
    """Candidates are contents popular where the user may go; the gain is their overlap."""
    A = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    Q = np.array([[0.5, 0.5], [0.0, 1.0], [0.0, 0.0]])
    assert candidate_set(0, A, Q) == {0, 2}
    assert candidate_set(1, A, Q) == {2}
    assert candidate_set(2, A, Q) == set()
    assert replica_gain(0, 2, Q, A) == pytest.approx(1.0)
    assert replica_gain(1, 0, Q, A) == 0.0


def test_candidate_set_with_content_ids(two_region_tables):
    """Tables keyed by content id report ids, not row indices."""
    popularity, mobility = two_region_tables
    assert candidate_set(1, popularity, mobility) == {11}
    assert replica_gain(0, 10, mobility, popularity) == pytest.approx(1.0)
    assert replica_gain(0, 99, mobility, popularity) == 0.0


def test_weighted_sample_without_replacement():
    """Distinct items with positive weight only; all of them when k exceeds their number."""
    rng = np.random.default_rng(0)
    items = np.array([4, 5, 6, 7])
    weights = np.array([1.0, 0.0, 2.0, 3.0])
    chosen = weighted_sample_without_replacement(items, weights, 2, rng)
    assert len(chosen) == 2
    assert len(set(chosen)) == 2
    assert 5 not in chosen
    assert sorted(weighted_sample_without_replacement(items, weights, 10, rng)) == [4, 6, 7]
    assert len(weighted_sample_without_replacement(items, weights, 0, rng)) == 0


def test_top_k_by_key_respects_capacity_and_order():
    """Each row keeps its best finite keys, at most its capacity, best first."""
    keys = np.array([[-0.5, -np.inf, -0.1, -2.0],
                     [-np.inf, -np.inf, -np.inf, -0.3],
                     [-1.0, -0.2, -0.4, -0.8]])
    picks = top_k_by_key(keys, np.array([2, 3, 0]))
    assert list(picks[0]) == [2, 0]
    assert list(picks[1]) == [3]
    assert list(picks[2]) == []
    assert top_k_by_key(keys, np.zeros(3, dtype=np.int64))[0].size == 0


def test_selection_keys_exclude_zero_gain():
    """Zero gains get key -inf; positive gains give log(u) / gain."""
    keys = selection_keys(np.array([[0.5, 0.5]]), np.array([[2.0, 0.0]]))
    assert keys[0, 0] == pytest.approx(np.log(0.5) / 2.0)
    assert keys[0, 1] == -np.inf


def test_keyed_selection_follows_gain():
    """Over 10^5 users with gains (1, 3) and room for one item, the second is picked 75% of the time."""
    rng = np.random.default_rng(8)
    n = 100000
    uniforms = 1.0 - rng.random((n, 2))
    picks = top_k_by_key(selection_keys(uniforms, np.tile([1.0, 3.0], (n, 1))), np.ones(n, dtype=np.int64))
    second = sum(1 for row in picks if row[0] == 1)
    assert second / n == pytest.approx(0.75, abs=0.01)


def test_keyed_selection_is_scale_invariant():
    """Multiplying every gain by the same factor leaves the selection unchanged."""
    rng = np.random.default_rng(9)
    uniforms = 1.0 - rng.random((50, 6))
    gains = rng.uniform(0.0, 2.0, size=(50, 6))
    capacity = rng.integers(0, 4, size=50)
    base = top_k_by_key(selection_keys(uniforms, gains), capacity)
    scaled = top_k_by_key(selection_keys(uniforms, 7.5 * gains), capacity)
    assert all(list(a) == list(b) for a, b in zip(base, scaled))


@pytest.mark.slow
def test_select_replicas_follows_gain():
    """With room for one item, the item is chosen in proportion to its gain."""
    rng = np.random.default_rng(42)
    trials = 100000
    picks = sum(1 for _ in range(trials) if select_replicas(0, [], [1, 2], {1: 1.0, 2: 3.0}, 1, rng) == {2})
    assert picks / trials == pytest.approx(0.75, abs=0.01)


def test_select_replicas_capacity_and_filler():
    """Never more than B_u items; zero-gain items only fill leftover room when asked."""
    rng = np.random.default_rng(1)
    gains = {1: 2.0, 2: 0.0, 3: 1.0}
    assert select_replicas(0, [2], [1, 3], gains, 0, rng) == set()
    assert select_replicas(0, [2], [1, 3], gains, 3, rng) == {1, 3}
    assert select_replicas(0, [2], [1, 3], gains, 3, rng, keep_zero_gain=True) == {1, 2, 3}
    assert len(select_replicas(0, [2], [1, 3], gains, 1, rng, keep_zero_gain=True)) == 1


def test_evaluate_objective_and_violations():
    """The objective weighs gains by upload capacity; overloads are reported per (content, region)."""
    snapshot = InstanceSnapshot(Q=[[1.0, 0.0], [0.0, 1.0]], A=[[2.0, 0.0], [0.0, 1.0]],
                                cache_capacity=[1, 1], upload_capacity=[1, 1], contents=np.array([7, 8]))
    good = evaluate_objective({0: [7], 1: [8]}, snapshot)
    assert good.objective == pytest.approx(3.0)
    assert good.feasible

    bad = evaluate_objective({1: [7, 8]}, snapshot)
    assert bad.cap_violations == [1]
    assert bad.popularity_violations == [(7, 1)]
    assert not bad.feasible


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_exact_optimize_matches_brute_force(seed):
    """Branch and bound reaches the brute-force optimum and returns a feasible assignment."""
    snapshot = InstanceSnapshot.random(np.random.default_rng(seed), n_users=3, n_contents=3, n_regions=2)
    optimum = exact_optimize(snapshot)
    report = evaluate_objective(optimum.K, snapshot)
    assert report.feasible
    assert report.objective == pytest.approx(optimum.objective)
    assert optimum.objective == pytest.approx(_brute_force_optimum(snapshot))


def test_exact_optimize_breaks_ties_lexicographically():
    """Between equally good assignments the lexicographically smallest wins."""
    snapshot = InstanceSnapshot(Q=[[1.0]], A=[[1.0], [1.0]], cache_capacity=[1], upload_capacity=[1])
    optimum = exact_optimize(snapshot)
    np.testing.assert_array_equal(optimum.K, [[False, True]])
    assert optimum.objective == pytest.approx(1.0)


def test_exact_optimize_refuses_large_instances():
    """Instances beyond the cell limit are refused with a pointer to the heuristic."""
    snapshot = InstanceSnapshot.random(np.random.default_rng(0), n_users=5, n_contents=5, n_regions=2)
    with pytest.raises(InstanceTooLargeError, match="5x5=25 cells"):
        exact_optimize(snapshot)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_heuristic_never_beats_optimum_without_binding_bounds(seed):
    """When popularity bounds cannot bind, the heuristic objective lies in (0, optimum]."""
    rng = np.random.default_rng(seed)
    snapshot = InstanceSnapshot(Q=rng.dirichlet(np.ones(2), size=3), A=rng.uniform(10.0, 20.0, size=(3, 2)),
                                cache_capacity=[1, 2, 1], upload_capacity=[1, 2, 3])
    K = heuristic_assignment(snapshot, rng)
    assert evaluate_objective(K, snapshot).feasible
    ratio = optimality_ratio(snapshot, rng)
    assert 0.0 < ratio <= 1.0 + 1e-9


def test_proposed_strategy_places_content_where_users_go(two_region_tables):
    """Each user replicates the content wanted in the region it will visit."""
    popularity, mobility = two_region_tables
    context = _context([[], []], [1, 1], popularity=popularity, mobility=mobility)
    assignment = ProposedStrategy().replicate(context)
    assert assignment.slot == 3
    assert assignment.caches == {0: [10], 1: [11]}


def test_proposed_strategy_keeps_previous_order(two_region_tables):
    """Retained replicas keep their position; new ones are appended."""
    popularity, mobility = two_region_tables
    context = _context([[11], [11]], [2, 1], popularity=popularity, mobility=mobility)
    assignment = ProposedStrategy().replicate(context)
    assert assignment.caches[0] == [11, 10]
    assert 1 not in assignment.caches


def test_proposed_strategy_drops_zero_gain_without_filler(two_region_tables):
    """Zero-gain replicas are dropped when filler is disabled."""
    popularity, mobility = two_region_tables
    context = _context([[11], []], [2, 1], popularity=popularity, mobility=mobility, retain_zero_gain=False)
    assignment = ProposedStrategy().replicate(context)
    assert assignment.caches[0] == [10]


def test_proposed_strategy_needs_tables():
    """The proposed strategy cannot run without popularity and mobility tables."""
    with pytest.raises(ValueError, match="popularity and mobility"):
        ProposedStrategy().replicate(_context([[]], [1]))


def test_proposed_strategy_is_deterministic_per_seed():
    """The assignment is a function of the seed and the tables."""
    rng = np.random.default_rng(5)
    popularity = _popularity(np.arange(6), rng.uniform(0.0, 1.0, size=(6, 3)))
    mobility = MobilityTable(Q=rng.dirichlet(np.ones(3), size=4), last_region=np.zeros(4, dtype=np.int64))
    first = ProposedStrategy().replicate(_context([[] for _ in range(4)], [2] * 4, popularity=popularity, mobility=mobility))
    second = ProposedStrategy().replicate(_context([[] for _ in range(4)], [2] * 4, popularity=popularity, mobility=mobility))
    assert first.caches == second.caches
    assert all(len(items) == 2 for items in first.caches.values())


def test_proposed_strategy_keeps_replicas_across_slots():
    """With unchanged tables the next slot moves no replica."""
    rng = np.random.default_rng(6)
    popularity = _popularity(np.arange(30), rng.uniform(0.0, 1.0, size=(30, 3)))
    mobility = MobilityTable(Q=rng.dirichlet(np.ones(3), size=5), last_region=np.zeros(5, dtype=np.int64))
    strategy = ProposedStrategy()
    first = strategy.replicate(_context([[] for _ in range(5)], [4] * 5, popularity=popularity, mobility=mobility))
    caches = [first.caches[u] for u in range(5)]
    second = strategy.replicate(_context(caches, [4] * 5, slot=4, popularity=popularity, mobility=mobility))
    assert second.caches == {}


def test_proposed_strategy_skips_contents_without_social_signal(two_region_tables):
    """A content whose popularity is all inherent is not replicated unless asked for."""
    _, mobility = two_region_tables
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    p = np.array([[0.0, 0.0], [0.0, 1.0]])
    popularity = PopularityTable(contents=np.array([10, 11]), A=A, p=p, alpha=np.ones(2))
    filtered = ProposedStrategy().replicate(_context([[], []], [1, 1], popularity=popularity, mobility=mobility))
    assert filtered.caches == {0: [10]}
    unfiltered = ProposedStrategy().replicate(_context([[], []], [1, 1], popularity=popularity, mobility=mobility,
                                                       social_candidates_only=False))
    assert unfiltered.caches == {0: [10], 1: [11]}


def test_movement_select_prefers_contacts():
    """Carriers are drawn by contact index; holders and users without cache are skipped."""
    rng = np.random.default_rng(0)
    assert movement_based_select(np.array([0, 5, 0]), [7], np.array([1, 1, 1]), rng) == {7: [1]}

    fallback = movement_based_select(np.array([0, 5, 0]), [7], np.array([1, 1, 1]), rng, holders={7: {1}})
    assert len(fallback[7]) == 1
    assert fallback[7][0] in (0, 2)

    assert movement_based_select(np.array([1, 1]), [7], np.array([0, 0]), rng) == {}


def test_movement_strategy_evicts_oldest():
    """A full carrier drops its oldest replica for the new content."""
    context = _context([[], [3], []], [1, 1, 1], contact_counts=np.array([0, 5, 0]),
                       shared_last_slot=[7], movement_copies=1)
    assignment = MovementBasedStrategy().replicate(context)
    assert assignment.caches == {1: [7]}


def test_popularity_select_transfers():
    """Holders offer by request count; a full receiver swaps only for a more requested item."""
    rng = np.random.default_rng(0)
    transfers = popularity_based_select({0: {5: 0, 6: 10}}, [(0, 1)], np.array([2, 2]), rng, {0: [5, 6], 1: []})
    assert transfers == [Transfer(0, 1, 6, None)]

    counts = {0: {6: 1}, 1: {8: 3, 6: 5}}
    swap = popularity_based_select(counts, [(0, 1)], np.array([1, 1]), rng, {0: [6], 1: [8]})
    assert swap == [Transfer(0, 1, 6, 8)]

    counts = {0: {6: 1}, 1: {8: 3, 6: 2}}
    assert popularity_based_select(counts, [(0, 1)], np.array([1, 1]), rng, {0: [6], 1: [8]}) == []


def test_popularity_strategy_records_sources():
    """Accepted pushes name the holder as the replica source."""
    context = _context([[6], []], [1, 1], observed_requests={0: {6: 4}}, occupants={0: {0, 1}})
    assignment = PopularityBasedStrategy().replicate(context)
    assert assignment.caches == {1: [6]}
    assert assignment.sources == {(1, 6): 0}


def test_popularity_strategy_needs_co_located_users():
    """Nobody meets anybody in separate regions."""
    context = _context([[6], []], [1, 1], current_region=np.array([0, 1]), occupants={0: {0}, 1: {1}})
    assert PopularityBasedStrategy().replicate(context).caches == {}


@pytest.mark.parametrize("name, cls", [
    ("proposed", ProposedStrategy),
    ("movement", MovementBasedStrategy),
    ("popularity", PopularityBasedStrategy),
])
def test_get_strategy(name, cls):
    """Strategy ids map to their classes."""
    strategy = get_strategy(name)
    assert isinstance(strategy, cls)
    assert strategy.name == name


def test_get_strategy_unknown():
    """An unknown id is a usage error naming the valid ids."""
    with pytest.raises(UnknownOptionError, match="proposed, movement, popularity"):
        get_strategy("random")


@pytest.mark.slow
def test_movement_select_frequency_follows_contacts():
    """Contact indices (9, 1) pick the first user about 90% of the time."""
    rng = np.random.default_rng(11)
    trials = 100000
    picks = sum(1 for _ in range(trials) if movement_based_select(np.array([9, 1]), [7], np.array([1, 1]), rng)[7] == [0])
    assert picks / trials == pytest.approx(0.9, abs=0.01)


@pytest.mark.slow
def test_popularity_offer_frequency_follows_requests():
    """Request counts (8, 2) offer the first item about 80% of the time."""
    rng = np.random.default_rng(12)
    trials = 100000
    picks = sum(1 for _ in range(trials) if sample_offer([3, 4], {3: 8, 4: 2}, rng) == 3)
    assert picks / trials == pytest.approx(0.8, abs=0.01)
    assert sample_offer([], {3: 8}, rng) is None


@pytest.mark.slow
def test_oracle_dominates_random_feasible_assignments():
    """Over 100 small instances the optimum is feasible and no sampled feasible assignment beats it."""
    rng = np.random.default_rng(2024)
    ratios = []
    for _ in range(100):
        n_users, n_contents = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        snapshot = InstanceSnapshot.random(rng, n_users=n_users, n_contents=n_contents,
                                           n_regions=int(rng.integers(1, 4)))
        optimum = exact_optimize(snapshot)
        assert evaluate_objective(optimum.K, snapshot).feasible

        samples = rng.random((10000, n_users, n_contents)) < rng.uniform(0.1, 0.9)
        weighted = samples * snapshot.upload_capacity[None, :, None]
        objectives = (weighted * snapshot.gains()[None]).sum(axis=(1, 2))
        within_cache = (samples.sum(axis=2) <= snapshot.cache_capacity[None]).all(axis=1)
        load = np.einsum('kuc,ur->kcr', weighted, snapshot.Q)
        within_demand = (load <= snapshot.A[None] + 1e-12).all(axis=(1, 2))
        feasible = objectives[within_cache & within_demand]
        if len(feasible):
            assert feasible.max() <= optimum.objective + 1e-9

        heuristic = evaluate_objective(heuristic_assignment(snapshot, rng), snapshot)
        assert heuristic.cap_violations == []
        if optimum.objective > 0:
            ratios.append(heuristic.objective / optimum.objective)
    print(f"heuristic mean optimality ratio over {len(ratios)} instances: {np.mean(ratios):.3f}")


@pytest.mark.slow
@pytest.mark.parametrize("n_users, n_contents", [(4, 5), (5, 4), (4, 6), (6, 4), (3, 8), (2, 12)])
def test_oracle_dominates_on_larger_instances(n_users, n_contents):
    """Up to the enumeration limit the optimum stays feasible and beats sampled feasible assignments."""
    rng = np.random.default_rng(n_users * 100 + n_contents)
    for _ in range(3):
        snapshot = InstanceSnapshot.random(rng, n_users=n_users, n_contents=n_contents,
                                           n_regions=int(rng.integers(1, 4)))
        optimum = exact_optimize(snapshot)
        assert evaluate_objective(optimum.K, snapshot).feasible

        samples = rng.random((5000, n_users, n_contents)) < rng.uniform(0.1, 0.6)
        weighted = samples * snapshot.upload_capacity[None, :, None]
        objectives = (weighted * snapshot.gains()[None]).sum(axis=(1, 2))
        within_cache = (samples.sum(axis=2) <= snapshot.cache_capacity[None]).all(axis=1)
        load = np.einsum('kuc,ur->kcr', weighted, snapshot.Q)
        within_demand = (load <= snapshot.A[None] + 1e-12).all(axis=(1, 2))
        feasible = objectives[within_cache & within_demand]
        if len(feasible):
            assert feasible.max() <= optimum.objective + 1e-9

        heuristic = evaluate_objective(heuristic_assignment(snapshot, rng), snapshot)
        if heuristic.feasible:
            assert heuristic.objective <= optimum.objective + 1e-9
