import numpy as np
import pytest

from latentzero.envs import BoardConfig, BoardGame
from latentzero.mcts import (MinMaxStats, SearchConfig, SearchNode, backup,
                             run_search, sample_action, select_child, tree_nodes)
from latentzero.networks import NetworkBundle, NetworkConfig


def make_bundle(seed=0, b=3):
    cfg = NetworkConfig(mode="board", input_planes=4, height=b, width=b,
                        num_actions=b * b, hidden_channels=8, num_blocks=1)
    return NetworkBundle(cfg, seed=seed)


def fresh_game(b=3):
    return BoardGame(BoardConfig(size=b, connect=3))


def test_single_simulation_policy_is_priors_over_legal():
    bundle = make_bundle()
    game = fresh_game()
    cfg = SearchConfig(num_simulations=1, add_noise=False)
    res = run_search(game.encode(), game.legal_actions(), bundle, cfg,
                     np.random.default_rng(0))
    # fresh nets have zero-init heads -> uniform priors -> uniform policy
    assert np.allclose(res.policy, np.full(9, 1 / 9), atol=1e-6)


def test_tree_node_count_is_simulations_plus_one():
    bundle = make_bundle()
    game = fresh_game()
    for sims in (1, 5, 16, 40):
        cfg = SearchConfig(num_simulations=sims, add_noise=False)
        res = run_search(game.encode(), game.legal_actions(), bundle, cfg,
                         np.random.default_rng(0))
        assert len(tree_nodes(res.root)) == sims + 1


def test_visit_conservation():
    bundle = make_bundle(seed=2)
    game = fresh_game()
    cfg = SearchConfig(num_simulations=37, add_noise=True)
    res = run_search(game.encode(), game.legal_actions(), bundle, cfg,
                     np.random.default_rng(3))
    root = res.root
    assert root.visit_count == sum(c.visit_count for c in root.children.values()) + 1


def test_illegal_root_actions_masked():
    bundle = make_bundle(seed=1)
    game = fresh_game()
    game.apply(4)
    legal = game.legal_actions()
    cfg = SearchConfig(num_simulations=20, add_noise=False)
    res = run_search(game.encode(), legal, bundle, cfg, np.random.default_rng(0))
    assert res.policy[4] == 0.0
    assert 4 not in res.root.children
    # deeper nodes expand the full action space, including cell 4
    some_child = next(c for c in res.root.children.values() if c.expanded())
    assert set(some_child.children) == set(range(9))


def test_select_child_prefers_fewer_visits_on_equal_q():
    cfg = SearchConfig(num_simulations=1)
    stats = MinMaxStats()
    node = SearchNode(1.0)
    node.hidden = object()
    node.visit_count = 10
    node.value_sum = 5.0
    for a, visits in ((0, 5), (1, 2)):
        child = SearchNode(0.5, action=a, parent=node, depth=1)
        child.visit_count = visits
        child.value_sum = 0.5 * visits  # equal Q
        node.children[a] = child
        stats.update(-child.q())
    assert select_child(node, cfg, stats) == 1


def test_select_child_prior_drives_unvisited():
    cfg = SearchConfig(num_simulations=1)
    stats = MinMaxStats()
    node = SearchNode(1.0)
    node.hidden = object()
    node.visit_count = 1
    node.children[0] = SearchNode(0.7, action=0, parent=node, depth=1)
    node.children[1] = SearchNode(0.3, action=1, parent=node, depth=1)
    assert select_child(node, cfg, stats) == 0


def test_select_child_exploitation_dominates_with_many_visits():
    cfg = SearchConfig(num_simulations=1, c1=0.1)
    stats = MinMaxStats()
    node = SearchNode(1.0)
    node.hidden = object()
    node.visit_count = 2000
    for a, q in ((0, 0.9), (1, 0.1)):
        child = SearchNode(0.5, action=a, parent=node, depth=1)
        child.visit_count = 1000
        child.value_sum = -q * 1000  # parent view is -child.q()
        node.children[a] = child
        stats.update(q)
    assert select_child(node, cfg, stats) == 0


def test_backup_mean_of_one_and_two():
    cfg = SearchConfig(num_simulations=1)
    stats = MinMaxStats()
    root = SearchNode(1.0)
    backup([root], 0.7, cfg, stats)
    assert root.q() == pytest.approx(0.7)
    backup([root], -0.7, cfg, stats)
    assert root.q() == pytest.approx(0.0)


def test_backup_sign_alternation_two_player():
    cfg = SearchConfig(num_simulations=1, two_player=True)
    stats = MinMaxStats()
    root = SearchNode(1.0)
    child = SearchNode(0.5, action=0, parent=root, depth=1)
    root.children[0] = child
    backup([root, child], 1.0, cfg, stats)
    assert child.q() == pytest.approx(1.0)   # leaf perspective
    assert root.q() == pytest.approx(-1.0)   # flipped at the parent


def test_backup_discounted_single_player():
    cfg = SearchConfig(num_simulations=1, two_player=False, discount=0.5)
    stats = MinMaxStats()
    root = SearchNode(1.0)
    child = SearchNode(0.5, action=0, parent=root, depth=1)
    child.reward = 1.0
    root.children[0] = child
    backup([root, child], 0.8, cfg, stats)
    assert child.q() == pytest.approx(0.8)
    assert root.q() == pytest.approx(1.0 + 0.5 * 0.8)


def test_policy_normalization_invariance_of_argmax():
    """Shifting/scaling all child Q values while renormalizing leaves the
    pUCT argmax unchanged."""
    rng = np.random.default_rng(0)
    for trial in range(20):
        cfg = SearchConfig(num_simulations=1)
        node = SearchNode(1.0)
        node.hidden = object()
        node.visit_count = 50
        qs = rng.uniform(-1, 1, 4)
        visits = rng.integers(1, 20, 4)
        priors = rng.dirichlet(np.ones(4))
        scale_c, shift = 3.7, 0.9

        stats1, stats2 = MinMaxStats(), MinMaxStats()
        n1 = SearchNode(1.0)
        n1.hidden = object()
        n1.visit_count = int(visits.sum()) + 1
        n2 = SearchNode(1.0)
        n2.hidden = object()
        n2.visit_count = n1.visit_count
        n1.value_sum = 0.1 * n1.visit_count
        n2.value_sum = (0.1 * scale_c + shift) * n2.visit_count
        for a in range(4):
            c1 = SearchNode(float(priors[a]), action=a, parent=n1, depth=1)
            c1.visit_count = int(visits[a])
            c1.value_sum = -qs[a] * visits[a]
            n1.children[a] = c1
            stats1.update(qs[a])
            c2 = SearchNode(float(priors[a]), action=a, parent=n2, depth=1)
            c2.visit_count = int(visits[a])
            c2.value_sum = -(qs[a] * scale_c + shift) * visits[a]
            n2.children[a] = c2
            stats2.update(qs[a] * scale_c + shift)
        assert select_child(n1, cfg, stats1) == select_child(n2, cfg, stats2)


def test_sample_action_one_hot():
    rng = np.random.default_rng(0)
    pi = np.array([0.0, 1.0, 0.0])
    assert all(sample_action(pi, 1.0, rng) == 1 for _ in range(20))


def test_sample_action_temperature_zero_argmax():
    rng = np.random.default_rng(0)
    assert sample_action(np.array([0.4, 0.6]), 0.0, rng) == 1


def test_sample_action_empirical_frequencies():
    rng = np.random.default_rng(12345)
    pi = np.array([0.25, 0.75])
    n = 100_000
    draws = np.array([sample_action(pi, 1.0, rng) for _ in range(n)])
    freq = draws.mean()
    assert abs(freq - 0.75) < 0.01  # ~6 sigma for a binomial at n=1e5


def test_sample_action_empty_policy_rejected():
    with pytest.raises(ValueError):
        sample_action(np.zeros(3), 1.0, np.random.default_rng(0))


def test_search_deterministic_given_rng():
    bundle = make_bundle(seed=5)
    game = fresh_game()
    cfg = SearchConfig(num_simulations=25, add_noise=True)
    r1 = run_search(game.encode(), game.legal_actions(), bundle, cfg,
                    np.random.default_rng(77))
    r2 = run_search(game.encode(), game.legal_actions(), bundle, cfg,
                    np.random.default_rng(77))
    assert np.array_equal(r1.policy, r2.policy)
    assert r1.root_value == r2.root_value
