import numpy as np
import pytest

from latentzero.envs import (BLACK, WHITE, BoardConfig, BoardGame, MiniBreakout,
                             PixelConfig)
from latentzero.errors import ConfigError, IllegalMoveError

from .oracles import minimax_value


def test_empty_gomoku_has_full_action_set():
    game = BoardGame(BoardConfig(size=7, connect=5))
    assert len(game.legal_actions()) == 49


def test_tictactoe_reset():
    game = BoardGame(BoardConfig(size=3, connect=3))
    assert len(game.legal_actions()) == 9


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        BoardConfig(size=3, connect=5)


def test_five_in_a_row_wins():
    game = BoardGame(BoardConfig(size=7, connect=5))
    # black plays row 0, white row 6
    for i in range(4):
        game.apply(i)          # black
        game.apply(42 + i)     # white
    _, terminal, z = game.apply(4)
    assert terminal and z == 1


def test_tictactoe_optimal_play_is_draw():
    game = BoardGame(BoardConfig(size=3, connect=3))
    assert minimax_value(game) == 0


def test_draw_on_full_board():
    game = BoardGame(BoardConfig(size=3, connect=3))
    for a in [0, 1, 2, 5, 3, 6, 4, 8, 7]:  # ends X O X / X X O / O X O
        _, terminal, z = game.apply(a)
    assert terminal and z == 0


def test_occupied_cell_rejected():
    game = BoardGame(BoardConfig(size=3, connect=3))
    game.apply(4)
    with pytest.raises(IllegalMoveError):
        game.apply(4)


def test_move_after_terminal_rejected():
    game = BoardGame(BoardConfig(size=3, connect=3))
    for a in [0, 3, 1, 4, 2]:  # black wins top row
        game.apply(a)
    assert game.terminal and game.outcome == 1
    with pytest.raises(IllegalMoveError):
        game.apply(5)


def test_full_board_has_no_actions():
    game = BoardGame(BoardConfig(size=3, connect=3))
    for a in [0, 1, 2, 5, 3, 6, 4, 8, 7]:
        game.apply(a)
    assert game.legal_actions() == []


def test_encoding_empty_board_black_to_play():
    game = BoardGame(BoardConfig(size=3, connect=3))
    obs = game.encode()
    assert obs.shape == (4, 3, 3)
    assert not obs[0].any() and not obs[1].any()
    assert obs[2].all() and not obs[3].any()


def test_encoding_perspective_flip():
    game = BoardGame(BoardConfig(size=3, connect=3))
    game.apply(4)  # black centre; white to play
    obs = game.encode()
    assert obs[0].sum() == 0          # white owns nothing
    assert obs[1].sum() == 1 and obs[1][1, 1] == 1
    assert not obs[2].any() and obs[3].all()


def test_rule_soundness_vs_line_scanner_oracle():
    """Play random games and cross-check terminal/winner with a brute
    scan over every length-k window."""
    cfg = BoardConfig(size=3, connect=3)
    rng = np.random.default_rng(0)

    def scan_winner(board, k):
        b = board.shape[0]
        for r in range(b):
            for c in range(b):
                for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                    rr, cc = r + dr * (k - 1), c + dc * (k - 1)
                    if not (0 <= rr < b and 0 <= cc < b):
                        continue
                    line = [board[r + i * dr, c + i * dc] for i in range(k)]
                    if line[0] != 0 and all(v == line[0] for v in line):
                        return int(line[0])
        return 0

    for _ in range(200):
        game = BoardGame(cfg)
        while not game.terminal:
            a = int(rng.choice(game.legal_actions()))
            game.apply(a)
            winner = scan_winner(game.board, cfg.connect)
            if winner:
                assert game.terminal and game.outcome == winner
                break
        else:
            assert scan_winner(game.board, cfg.connect) == game.outcome == 0


def test_board_replay_roundtrip():
    cfg = BoardConfig(size=3, connect=3)
    game = BoardGame(cfg)
    rng = np.random.default_rng(5)
    while not game.terminal:
        game.apply(int(rng.choice(game.legal_actions())))
    replayed = BoardGame.replay(cfg, game.history)
    assert np.array_equal(replayed.board, game.board)
    assert replayed.outcome == game.outcome


# ---------------------------------------------------------------------------
# MiniBreakout


def test_breakout_reset_deterministic():
    cfg = PixelConfig()
    a = MiniBreakout(cfg, seed=11)
    b = MiniBreakout(cfg, seed=11)
    assert np.array_equal(a.render(), b.render())
    assert (a.ball_x, a.ball_vx) == (b.ball_x, b.ball_vx)


def test_breakout_three_actions_always():
    env = MiniBreakout(PixelConfig(), seed=0)
    assert env.legal_actions() == [0, 1, 2]
    env.apply(1)
    assert env.legal_actions() == [0, 1, 2]


def test_breakout_brick_hit_gives_reward():
    env = MiniBreakout(PixelConfig(), seed=3)
    total = 0.0
    rng = np.random.default_rng(1)
    while not env.terminal and env.frame < 200:
        u, _, _ = env.apply(int(rng.integers(3)))
        total += u
        if u:
            break
    assert total >= 1.0
    assert env.score == int(total)
    assert env.bricks.sum() == 3 * env.config.width - env.score


def test_breakout_frame_stack_planes():
    env = MiniBreakout(PixelConfig(frame_stack=4), seed=0)
    obs = env.encode()
    assert obs.shape == (16, 32, 32)
    # newest action plane encodes action/|A|
    env.apply(2)
    obs = env.encode()
    assert np.allclose(obs[-1], 2 / 3)


def test_breakout_ball_never_escapes_without_life_loss():
    cfg = PixelConfig(frame_cap=200)
    rng = np.random.default_rng(42)
    for ep in range(200):
        env = MiniBreakout(cfg, seed=ep)
        while not env.terminal:
            env.apply(int(rng.integers(3)))
            assert 0 <= env.ball_x < cfg.width
            assert 0 <= env.ball_y < cfg.height
        assert env.lives == 0 or env.frame >= cfg.frame_cap or not env.bricks.any()


def test_breakout_replay_roundtrip():
    cfg = PixelConfig(frame_cap=100)
    env = MiniBreakout(cfg, seed=9)
    rng = np.random.default_rng(2)
    while not env.terminal:
        env.apply(int(rng.integers(3)))
    re = MiniBreakout.replay(cfg, 9, env.history)
    assert re.score == env.score and re.frame == env.frame
    assert np.array_equal(re.encode(), env.encode())
