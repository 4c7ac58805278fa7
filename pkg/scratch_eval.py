"""Shared scratch evaluator for tuning runs."""
import sys

import numpy as np

from latentzero.envs import BoardGame
from latentzero.mcts import SearchConfig, run_search

sys.path.insert(0, "tests")
from oracles import immediate_wins  # noqa: E402


def evaluate(bundle, env_cfg, n_random=60, n_oneply=40):
    losses = wins = draws = 0
    rng = np.random.default_rng(123)
    scfg = SearchConfig(num_simulations=50, add_noise=False, temperature=0.0)
    for g in range(n_random):
        game = BoardGame(env_cfg)
        model_is_black = g % 2 == 0
        while not game.terminal:
            black_turn = game.to_play == 1
            if black_turn == model_is_black:
                res = run_search(game.encode(), game.legal_actions(), bundle, scfg, rng)
                a = int(np.argmax(res.policy))
            else:
                a = int(rng.choice(game.legal_actions()))
            game.apply(a)
        z = game.outcome if model_is_black else -game.outcome
        if z > 0:
            wins += 1
        elif z < 0:
            losses += 1
        else:
            draws += 1
    rng2 = np.random.default_rng(55)
    scfg2 = SearchConfig(num_simulations=400, add_noise=False, temperature=0.0)
    hits = total = 0
    while total < n_oneply:
        game = BoardGame(env_cfg)
        depth = int(rng2.integers(2, 7))
        ok = True
        for _ in range(depth):
            if game.terminal:
                ok = False
                break
            game.apply(int(rng2.choice(game.legal_actions())))
        if not ok or game.terminal:
            continue
        wins_now = immediate_wins(game)
        if not wins_now:
            continue
        res = run_search(game.encode(), game.legal_actions(), bundle, scfg2, rng2)
        if int(np.argmax(res.policy)) in wins_now:
            hits += 1
        total += 1
    return wins, draws, losses, hits, total
