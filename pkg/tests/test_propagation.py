import pytest
import numpy as np

from d2d_sim.propagation import (
    CascadeHistory, HistoryCounters, PropagationModel, inherent_popularity, influence_index, learn_alpha,
    regional_preference, social_popularity
)
from d2d_sim.trace_model import SocialGraph

# --- Fixtures ---


@pytest.fixture
def star_graph():
    """User 0 befriends users 1 and 2."""
    graph = SocialGraph(3)
    graph.add_edge(0, 1, 0.5)
    graph.add_edge(0, 2, 0.5)
    return graph


@pytest.fixture
def recorded_history(star_graph):
    """One slot of shares, acceptances, dwell and requests, rolled into slot 1."""
    history = HistoryCounters(3, 2)
    cascades = CascadeHistory(star_graph)
    history.record_share(0, 0)
    history.record_share(0, 0)
    history.record_acceptance(0, 1, 0)
    history.record_dwell(1, 0, 0, 100.0)
    history.record_dwell(2, 0, 0, 50.0)
    history.record_dwell(2, 1, 0, 50.0)
    history.record_request(5, 0, 0)
    history.record_request(5, 0, 0)
    cascades.record_share(0, 5, 1.0, 0, is_reshare=False)
    cascades.record_share(1, 5, 2.0, 0, is_reshare=True)
    history.roll(1)
    return history, cascades


# --- Test Cases Start Here ---

def test_influence_index_window():
    """Accepted over shared within [T-W, T-1]; 0 when nothing was shared."""
    H = {(0, 1): {3: 2}}
    G = {0: {3: 4, 5: 2}}
    assert influence_index(H, G, 0, 1, T=6, W=3) == pytest.approx(2 / 6)
    assert influence_index(H, G, 0, 1, T=6, W=1) == 0.0
    assert influence_index(H, G, 1, 0, T=6, W=3) == 0.0


@pytest.mark.parametrize("T, W, H, message", [
    (5, 0, {}, "at least 1"),
    (2, 3, {}, "must not precede"),
    (5, 2, {(0, 1): {4: -1}}, "negative"),
])
def test_influence_index_invalid_inputs(T, W, H, message):
    """Windows shorter than a slot, windows before the trace start and negative counters are errors."""
    with pytest.raises(ValueError, match=message):
        influence_index(H, {0: {4: 1}}, 0, 1, T=T, W=W)


def test_regional_preference_shares():
    """Dwell shares over the window sum to one; no history gives an empty row."""
    durations = {0: {1: {2: 60.0}, 2: {3: 180.0}, 3: {0: 500.0}}}
    assert regional_preference(durations, 0, T=4, W=2) == {1: pytest.approx(0.25), 2: pytest.approx(0.75)}
    assert regional_preference(durations, 1, T=4, W=2) == {}


def test_inherent_popularity_ewma():
    """One request in the previous slot gives the smoothing factor; a constant rate converges to itself."""
    assert inherent_popularity({(7, 0): {4: 1}}, 7, 0, T=5) == pytest.approx(0.5)
    assert inherent_popularity({(7, 0): {5: 1}}, 7, 0, T=5) == 0.0
    steady = {(7, 0): {t: 2 for t in range(100)}}
    assert inherent_popularity(steady, 7, 0, T=100) == pytest.approx(2.0)


def test_social_popularity_combines_terms(star_graph):
    """A = p + alpha * sum of I[u][v] * P[v][r] over sharers and their friends."""
    I = {(0, 1): 0.5, (0, 2): 1.0}
    P = {1: {0: 1.0}, 2: {0: 0.5, 1: 0.5}}
    p = {(7, 0): 0.2}
    alpha = {7: 0.5}
    assert social_popularity(p, alpha, I, P, [0], star_graph, 7, 0) == pytest.approx(0.7)
    assert social_popularity(p, alpha, I, P, [0], star_graph, 7, 1) == pytest.approx(0.25)
    assert social_popularity(p, {}, I, P, [0], star_graph, 7, 1) == 0.0


def test_alpha_counts_influenced_viewers():
    """A resharer is influenced when a friend shared before it."""
    graph = SocialGraph(4)
    graph.add_edge(0, 1, 0.5)
    graph.add_edge(1, 2, 0.5)
    cascades = CascadeHistory(graph)
    cascades.record_share(0, 9, 0.0, 0, is_reshare=False)
    cascades.record_share(1, 9, 10.0, 0, is_reshare=True)
    cascades.record_share(3, 9, 20.0, 0, is_reshare=True)
    assert cascades.viewers[9] == 2
    assert learn_alpha(cascades, 9) == pytest.approx(0.5)
    assert learn_alpha(cascades, 4) == 0.0
    assert cascades.sharer_set(9) == {0, 1, 3}


def test_active_contents_window(star_graph):
    """Contents are active for the given number of slots after their last share."""
    cascades = CascadeHistory(star_graph)
    cascades.record_share(0, 1, 0.0, 2, is_reshare=False)
    cascades.record_share(0, 2, 0.0, 5, is_reshare=False)
    assert cascades.active_contents(6, 2) == [2]
    assert cascades.active_contents(6, 4) == [1, 2]
    assert cascades.active_contents(5, 4) == [1]


def test_vectorised_tables_match_scalar_forms(star_graph, recorded_history):
    """Dense I, P and A agree with the nested-history reference functions."""
    history, cascades = recorded_history
    model = PropagationModel(star_graph, history, cascades, alpha="learned", preference_window=1)
    influence, preference, popularity = model.build_tables(1, [5])

    for u in range(3):
        for v in star_graph.friends(u):
            assert influence.I[u, v] == pytest.approx(influence_index(history.H, history.G, u, v, T=1, W=1))
        for r, share in regional_preference(history.dwell, u, T=1, W=1).items():
            assert preference.P[u, r] == pytest.approx(share)
    assert list(preference.has_history()) == [False, True, True]
    np.testing.assert_allclose(preference.P[preference.has_history()].sum(axis=1), 1.0, atol=1e-9)

    I = {(u, v): influence.I[u, v] for u in range(3) for v in range(3)}
    P = {u: preference.row(u) for u in range(3)}
    p = {(5, r): inherent_popularity(history.requests, 5, r, T=1) for r in range(2)}
    alpha = {5: learn_alpha(cascades, 5)}
    for r in range(2):
        expected = social_popularity(p, alpha, I, P, cascades.sharer_set(5), star_graph, 5, r)
        assert popularity.row(5)[r] == pytest.approx(expected)
    np.testing.assert_allclose(popularity.A, [[1.5, 0.0]])
    assert popularity.index == {5: 0}


def test_fixed_alpha(star_graph, recorded_history):
    """A fixed alpha replaces the learned one for every content."""
    history, cascades = recorded_history
    model = PropagationModel(star_graph, history, cascades, alpha=0.25)
    _, _, popularity = model.build_tables(1, [5, 8])
    np.testing.assert_allclose(popularity.alpha, [0.25, 0.25])
    np.testing.assert_allclose(popularity.row(8), [0.0, 0.0])
    np.testing.assert_allclose(popularity.row(99), [0.0, 0.0])


def test_unseen_content_uses_pooled_alpha(star_graph, recorded_history):
    """A content without viewers gets the alpha pooled over all contents."""
    history, cascades = recorded_history
    model = PropagationModel(star_graph, history, cascades)
    np.testing.assert_allclose(model.alpha_values([5, 8]), [1.0, cascades.pooled_alpha()])


def test_influence_window_expires_shares():
    """With a window of W slots, shares older than W slots drop out of the totals."""
    history = HistoryCounters(2, 1, influence_window=2)
    history.record_share(0, 0)
    history.record_acceptance(0, 1, 0)
    history.roll(1)
    history.roll(2)
    assert history.g_totals[0] == 1
    assert history.h_totals[0, 1] == 1
    history.roll(3)
    assert history.g_totals[0] == 0
    assert history.h_totals[0, 1] == 0


def test_preference_window_expires_dwell():
    """Dwell older than the preference window no longer counts."""
    history = HistoryCounters(1, 2, preference_window=1)
    history.record_dwell(0, 0, 0, 30.0)
    history.roll(1)
    history.record_dwell(0, 1, 1, 10.0)
    history.roll(2)
    np.testing.assert_allclose(history.dwell_totals[0], [0.0, 10.0])


def test_ewma_requests_decay_between_slots():
    """The lazily decayed EWMA matches the reference EWMA at any later slot."""
    history = HistoryCounters(1, 2)
    history.record_request(3, 1, 0)
    history.roll(1)
    np.testing.assert_allclose(history.ewma_requests([3], 1), [[0.0, 0.5]])
    history.roll(3)
    np.testing.assert_allclose(history.ewma_requests([3], 3), [[0.0, 0.125]])
    assert inherent_popularity(history.requests, 3, 1, T=3) == pytest.approx(0.125)


def test_requests_of_the_current_slot_are_excluded():
    """Requests recorded during slot T do not enter the tables of slot T."""
    history = HistoryCounters(1, 1)
    history.roll(4)
    history.record_request(2, 0, 4)
    np.testing.assert_allclose(history.ewma_requests([2], 4), [[0.0]])


@pytest.mark.slow
def test_social_popularity_is_monotone(star_graph):
    """Raising any of p, alpha, I or P never lowers the regional popularity."""
    rng = np.random.default_rng(3)
    for _ in range(1000):
        I = {(0, 1): rng.random(), (0, 2): rng.random()}
        P = {1: {0: rng.random()}, 2: {0: rng.random()}}
        p = {(7, 0): rng.random()}
        alpha = {7: rng.random()}
        before = social_popularity(p, alpha, I, P, [0], star_graph, 7, 0)

        bumped = [dict(p), dict(alpha), dict(I), {v: dict(row) for v, row in P.items()}]
        which = int(rng.integers(4))
        if which == 0:
            bumped[0][(7, 0)] += rng.random()
        elif which == 1:
            bumped[1][7] = min(1.0, bumped[1][7] + rng.random())
        elif which == 2:
            edge = (0, 1) if rng.random() < 0.5 else (0, 2)
            bumped[2][edge] = min(1.0, bumped[2][edge] + rng.random())
        else:
            v = 1 if rng.random() < 0.5 else 2
            bumped[3][v][0] = min(1.0, bumped[3][v][0] + rng.random())
        after = social_popularity(bumped[0], bumped[1], bumped[2], bumped[3], [0], star_graph, 7, 0)
        assert after >= before - 1e-12


def test_social_mass_matches_influence_over_sharers():
    """Total A minus total p equals alpha times the influence sharers exert on friends with dwell history."""
    rng = np.random.default_rng(8)
    n_users, n_regions = 12, 4
    graph = SocialGraph(n_users)
    for u in range(n_users):
        for v in range(u + 1, n_users):
            if rng.random() < 0.3:
                graph.add_edge(u, v, 0.5)
    history = HistoryCounters(n_users, n_regions)
    cascades = CascadeHistory(graph)
    contents = [3, 4, 9]
    for u in range(n_users):
        if rng.random() < 0.8:
            history.record_dwell(u, int(rng.integers(n_regions)), 0, float(rng.uniform(10, 100)))
    for c in contents:
        for u in rng.choice(n_users, size=3, replace=False):
            u = int(u)
            history.record_share(u, 0)
            cascades.record_share(u, c, float(rng.uniform(0, 10)), 0, is_reshare=bool(rng.random() < 0.5))
            for v in graph.friends(u):
                if rng.random() < 0.5:
                    history.record_acceptance(u, v, 0)
        history.record_request(c, int(rng.integers(n_regions)), 0)
    history.roll(1)

    model = PropagationModel(graph, history, cascades, alpha=0.4)
    influence, preference, popularity = model.build_tables(1, contents)
    with_history = preference.has_history().astype(float)
    expected = sum(popularity.alpha[i] * sum(influence.I[u] @ with_history for u in cascades.sharer_set(c))
                   for i, c in enumerate(popularity.contents))
    assert popularity.A.sum() - popularity.p.sum() == pytest.approx(expected)
    assert expected > 0
