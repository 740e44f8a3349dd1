import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_nash, ring_space, table_game
from ptzgame.game import (
    ActionSpace,
    EnumerationLimitError,
    GameDefinition,
    GameError,
    argmax_set,
    check_potential_identity,
    compute_D,
    enumerate_constrained_nash,
    load_game,
    marginal_utility,
    max_unilateral_gain,
    potential_deviation_exhaustive,
    random_marginal_game,
    save_game,
    scale_to_half_gain,
    validate_action_space,
)


def test_complete_space_is_valid():
    assert validate_action_space(ActionSpace.complete([3])) == []


def test_cardinality_violation_reported():
    sp = ActionSpace((3,), (({0, 1}, {0, 1, 2}, {1, 2}),))
    bad = validate_action_space(sp)
    card = [v for v in bad if v.item == "cardinality"]
    assert {v.actions for v in card} >= {(0,)}
    assert all(v.player == 0 for v in bad)


def test_symmetry_violation_reported():
    sp = ActionSpace((3,), (({0, 1, 2}, {1, 2, 0}, {2, 0}),))
    items = {v.item for v in validate_action_space(sp)}
    assert "symmetry" in items


def test_connectivity_violation_reported():
    # two separate triangles
    c = [frozenset({0, 1, 2})] * 3 + [frozenset({3, 4, 5})] * 3
    sp = ActionSpace((6,), (tuple(c),))
    assert "connectivity" in {v.item for v in validate_action_space(sp)}
    with pytest.raises(GameError):
        compute_D(sp)


def test_from_adjacency_adds_self():
    sp = ActionSpace.from_adjacency([[[1, 2], [0, 2], [0, 1]]])
    assert all(a in sp.feasible(0, a) for a in range(3))
    assert validate_action_space(sp) == []


def test_space_rejects_out_of_range():
    with pytest.raises(GameError):
        ActionSpace((2,), (({0, 5}, {0, 1}),))


def test_marginal_additive():
    W = lambda a: sum({0: 0.3, 1: 0.7}[i] for i, x in enumerate(a) if x is not None)  # noqa: E731
    assert marginal_utility(W, 0, (0, 0)) == pytest.approx(0.3)


def test_marginal_single_player():
    phi = {0: 2.0, 1: 5.0, None: 1.5}
    W = lambda a: phi[a[0]]  # noqa: E731
    assert marginal_utility(W, 0, (1,)) == 3.5


def test_marginal_max_rule_two_sensors():
    vals = {0: 0.5, 1: 0.3}
    W = lambda a: max([vals[i] for i, x in enumerate(a) if x is not None], default=0.0)  # noqa: E731
    assert marginal_utility(W, 0, (0, 0)) == pytest.approx(0.2)
    assert marginal_utility(W, 1, (0, 0)) == 0.0


@given(st.integers(0, 2**31 - 1), st.lists(st.integers(3, 5), min_size=1, max_size=3))
def test_potential_identity_property(seed, sizes):
    g = random_marginal_game(sizes, np.random.default_rng(seed))
    assert potential_deviation_exhaustive(g) <= 1e-12


def test_potential_identity_sampled(rng):
    g = random_marginal_game([4, 3, 5], rng)
    assert check_potential_identity(g, 1000, seed=1) <= 1e-12


def test_broken_utility_detected(rng):
    g0 = random_marginal_game([3, 3], rng)
    broken = GameDefinition(g0.space, lambda i, a: 0.0, g0.objective)
    dev = check_potential_identity(broken, 1000, seed=0)
    # oracle: largest |dW| over all unilateral deviations bounds the sampled one
    W = g0.objective_table
    worst = max(abs(W[b] - W[a]) for a in itertools.product(range(3), range(3)) for i in range(2)
                for b in [a[:i] + (x,) + a[i + 1 :] for x in range(3)])
    assert 0 < dev <= worst + 1e-15


def test_two_by_three_exhaustive_zero(rng):
    g = random_marginal_game([3, 3], rng)
    assert potential_deviation_exhaustive(g) == 0.0


def test_nash_contains_argmax(rng):
    for _ in range(20):
        sizes = list(rng.integers(3, 5, size=2))
        g = random_marginal_game(sizes, rng, ring_space(sizes))
        ne = enumerate_constrained_nash(g)
        assert argmax_set(g.objective_table) <= ne
        assert ne == brute_nash(g.utility_table, g.space)


def test_nash_constant_game():
    sp = ActionSpace.complete([3, 3])
    g = GameDefinition(sp, lambda i, a: 1.0, lambda a: 1.0)
    assert enumerate_constrained_nash(g) == set(sp.joint_actions())


def test_nash_coordination():
    pay = np.array([[2.0, 0.0], [0.0, 1.0]])
    g = GameDefinition(ActionSpace.complete([2, 2]), lambda i, a: pay[a], None)
    assert enumerate_constrained_nash(g) == {(0, 0), (1, 1)}


def test_nash_guard():
    sp = ActionSpace.complete([101] * 3)
    g = GameDefinition(sp, lambda i, a: 0.0, lambda a: 0.0)
    with pytest.raises(EnumerationLimitError):
        enumerate_constrained_nash(g)


def test_scale_example_two():
    # single player; W = (0, 2, 1) plus null 0: max gain U(1) - U(0) = 2
    g = table_game([0.0, 2.0, 1.0, 0.0])
    assert max_unilateral_gain(g) == 2.0
    g2, s = scale_to_half_gain(g)
    assert s == pytest.approx(0.245)
    assert max_unilateral_gain(g2) == pytest.approx(0.49)


def test_scale_noop_and_constant():
    g = table_game([0.1, 0.2, 0.3, 0.0])
    assert scale_to_half_gain(g)[1] == 1.0
    c = table_game([1.0, 1.0, 1.0, 1.0])
    g2, s = scale_to_half_gain(c)
    assert s == 1.0 and max_unilateral_gain(g2) == 0.0


@given(st.integers(0, 2**31 - 1))
def test_scale_preserves_argmax(seed):
    g = random_marginal_game([3, 4], np.random.default_rng(seed))
    g = table_game(np.asarray(g.table) * 5.0)
    g2, s = scale_to_half_gain(g)
    assert s < 1
    assert argmax_set(g2.objective_table) == argmax_set(g.objective_table)
    for i in range(2):
        assert argmax_set(g2.utility_table[..., i]) == argmax_set(g.utility_table[..., i])
    assert max_unilateral_gain(g2) <= 0.49 + 1e-12


def bfs_diameter(cons):
    best = 0
    for s in range(len(cons)):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in cons[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        best = max(best, max(dist.values()))
    return best


def test_D_complete():
    assert compute_D(ActionSpace.complete([4, 3]))[0] == 1


def test_D_path_with_hub():
    # path 0-1-2-3, hub 4 adjacent to everything pads |C| to >= 3
    adj = {0: {1, 4}, 1: {0, 2, 4}, 2: {1, 3, 4}, 3: {2, 4}, 4: {0, 1, 2, 3}}
    sp = ActionSpace.from_adjacency([[sorted(adj[a]) for a in range(5)]])
    D, per = compute_D(sp)
    assert D == per[0] == bfs_diameter([adj[a] | {a} for a in range(5)]) == 2


def test_D_ring_matches_bfs():
    for m in (3, 5, 8):
        sp = ring_space([m])
        assert compute_D(sp)[0] == bfs_diameter(sp.constraints[0])


def test_single_action_invalid():
    sp = ActionSpace.complete([1])
    assert any(v.item == "cardinality" for v in validate_action_space(sp))


@given(st.integers(0, 2**31 - 1), st.integers(5, 9))
def test_D_monotone_under_added_edges(seed, m):
    rng = np.random.default_rng(seed)
    sp = ring_space([m])
    cons = [set(c) for c in sp.constraints[0]]
    u, v = rng.choice(m, 2, replace=False)
    cons[u].add(int(v))
    cons[v].add(int(u))
    sp2 = ActionSpace((m,), (tuple(frozenset(c) for c in cons),))
    assert compute_D(sp2)[0] <= compute_D(sp)[0]


def test_save_load_roundtrip(tmp_path, rng):
    g = random_marginal_game([3, 4], rng, ring_space([3, 4]))
    p = tmp_path / "g.json"
    save_game(g, p)
    h = load_game(p)
    assert h.space == g.space
    np.testing.assert_array_equal(h.utility_table, g.utility_table)
