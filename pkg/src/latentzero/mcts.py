"""Latent-space MCTS: root from the representation network, expansion
through dynamics/prediction, prior-weighted UCT child selection.

The tree never consults the real environment; beyond-terminal and
validity flags are attached afterwards by the analysis pipeline, which
replays each node's action path in the true game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .networks import HiddenState, NetworkBundle


@dataclass
class SearchConfig:
    num_simulations: int = 16
    c1: float = 1.25
    c2: float = 19652.0
    dirichlet_alpha: float = 0.3
    noise_fraction: float = 0.25
    add_noise: bool = True
    temperature: float = 1.0
    discount: float = 1.0
    two_player: bool = True
    # Optional fixed normalizer bounds; None tracks observed Q values.
    q_bounds: tuple | None = None

    def __post_init__(self):
        if self.num_simulations < 1:
            raise ValueError("num_simulations must be >= 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("pUCT constants must be positive")


class MinMaxStats:
    """Running min/max normalizer for Q values inside one tree."""

    def __init__(self, bounds=None):
        if bounds is not None:
            self.minimum, self.maximum = bounds
        else:
            self.minimum, self.maximum = math.inf, -math.inf

    def update(self, value):
        self.minimum = min(self.minimum, value)
        self.maximum = max(self.maximum, value)

    def normalize(self, value):
        if self.maximum > self.minimum:
            return (value - self.minimum) / (self.maximum - self.minimum)
        return value


class SearchNode:
    __slots__ = ("prior", "action", "parent", "depth", "visit_count", "value_sum",
                 "reward", "hidden", "children", "beyond_terminal", "valid")

    def __init__(self, prior, action=None, parent=None, depth=0):
        self.prior = prior
        self.action = action
        self.parent = parent
        self.depth = depth
        self.visit_count = 0
        self.value_sum = 0.0
        self.reward = 0.0
        self.hidden: HiddenState | None = None
        self.children: dict[int, SearchNode] = {}
        # analysis annotations (filled by env replay, not by the search)
        self.beyond_terminal = False
        self.valid = True

    def expanded(self):
        return self.hidden is not None

    def q(self):
        """Mean value from the perspective of the player to move here."""
        return self.value_sum / self.visit_count if self.visit_count else 0.0

    def walk(self):
        yield self
        for child in self.children.values():
            if child.expanded():
                yield from child.walk()


@dataclass
class SearchResult:
    policy: np.ndarray
    root_value: float
    root: SearchNode
    config: SearchConfig = field(repr=False, default=None)


def _child_q_parent_view(node, child, cfg):
    if cfg.two_player:
        return -child.q()
    return child.reward + cfg.discount * child.q()


def select_child(node, cfg, stats):
    """pUCT argmax over children; ties break to the lowest action index."""
    sqrt_n = math.sqrt(node.visit_count)
    pb_c = cfg.c1 + math.log((node.visit_count + cfg.c2 + 1.0) / cfg.c2)
    best_action, best_score = None, -math.inf
    for action in sorted(node.children):
        child = node.children[action]
        if child.visit_count > 0:
            q = stats.normalize(_child_q_parent_view(node, child, cfg))
        else:
            q = stats.normalize(node.q())
        score = q + child.prior * sqrt_n / (1 + child.visit_count) * pb_c
        if score > best_score:
            best_action, best_score = action, score
    return best_action


def backup(path, leaf_value, cfg, stats):
    """Add one playout: walk leaf -> root flipping (board) or
    discounting through predicted rewards (pixel)."""
    value = leaf_value
    for node in reversed(path):
        node.value_sum += value
        node.visit_count += 1
        if node.parent is not None:
            stats.update(_child_q_parent_view(node.parent, node, cfg))
        else:
            stats.update(node.q())
        if cfg.two_player:
            value = -value
        else:
            value = node.reward + cfg.discount * value


def run_search(observation, legal_actions, bundle: NetworkBundle, cfg: SearchConfig,
               rng=None) -> SearchResult:
    """Build a tree from `observation` and return the visit-count policy.

    Root children exist only for legal actions (their prior mass is
    renormalized); deeper nodes expand the full action space, so the
    tree may contain invalid and beyond-terminal latents by design.
    """
    num_actions = bundle.config.num_actions
    legal = sorted(int(a) for a in legal_actions)
    if not legal:
        raise ValueError("run_search needs at least one legal action")
    if rng is None:
        rng = np.random.default_rng()

    stats = MinMaxStats(cfg.q_bounds)
    root = SearchNode(1.0)
    root.hidden = bundle.represent(observation)
    policy, value = bundle.predict(root.hidden)

    priors = np.zeros(num_actions)
    priors[legal] = policy[legal]
    total = priors.sum()
    priors = priors / total if total > 0 else np.where(
        np.isin(np.arange(num_actions), legal), 1.0 / len(legal), 0.0)
    if cfg.add_noise and len(legal) > 1:
        noise = rng.dirichlet([cfg.dirichlet_alpha] * len(legal))
        priors[legal] = (1 - cfg.noise_fraction) * priors[legal] + cfg.noise_fraction * noise
    for a in legal:
        root.children[a] = SearchNode(float(priors[a]), action=a, parent=root, depth=1)
    backup([root], value, cfg, stats)

    for _ in range(cfg.num_simulations):
        node = root
        path = [root]
        while node.expanded():
            action = select_child(node, cfg, stats)
            node = node.children[action]
            path.append(node)
        parent = path[-2]
        reward, hidden = bundle.dynamics(parent.hidden, node.action)
        node.hidden = hidden
        node.reward = reward
        child_policy, child_value = bundle.predict(node.hidden)
        for a in range(num_actions):
            node.children[a] = SearchNode(float(child_policy[a]), action=a,
                                          parent=node, depth=node.depth + 1)
        backup(path, child_value, cfg, stats)

    pi = np.zeros(num_actions)
    if cfg.num_simulations == 1:
        # A single simulation carries no comparative visit information.
        pi[legal] = priors[legal] / priors[legal].sum()
    else:
        counts = np.array([root.children[a].visit_count for a in legal], dtype=np.float64)
        if cfg.temperature < 1e-4:
            pi[legal[int(np.argmax(counts))]] = 1.0
        else:
            shaped = counts ** (1.0 / cfg.temperature)
            pi[legal] = shaped / shaped.sum()
    return SearchResult(pi, root.q(), root, cfg)


def sample_action(pi, temperature, rng):
    """Draw an action from a search policy; temperature 0 is argmax."""
    pi = np.asarray(pi, dtype=np.float64)
    if pi.size == 0 or pi.sum() <= 0:
        raise ValueError("empty search policy")
    if temperature < 1e-4:
        return int(np.argmax(pi))
    shaped = pi ** (1.0 / temperature)
    shaped /= shaped.sum()
    return int(rng.choice(pi.size, p=shaped))


def tree_nodes(root):
    """All expanded nodes in DFS order (root first)."""
    return list(root.walk())
