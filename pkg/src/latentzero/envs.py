"""Desk-scale environments: k-in-a-row board games and MiniBreakout.

Board observations are four binary planes from the side-to-move
perspective (own stones, opponent stones, black-to-play indicator,
white-to-play indicator). Pixel observations stack the last F rendered
RGB frames, each paired with one constant action plane valued
action_id / num_actions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IllegalMoveError

BLACK, WHITE = 1, -1


@dataclass(frozen=True)
class BoardConfig:
    size: int = 7
    connect: int = 5

    def __post_init__(self):
        if self.connect > self.size or self.size < 2 or self.connect < 2:
            raise ConfigError(f"invalid board config: size={self.size} connect={self.connect}")

    @property
    def num_actions(self):
        return self.size * self.size

    @property
    def obs_planes(self):
        return 4


class BoardGame:
    """Mutable k-in-a-row game; Black moves first, outcome z is from
    Black's perspective (+1 Black wins, -1 White wins, 0 draw)."""

    def __init__(self, config: BoardConfig):
        self.config = config
        b = config.size
        self.board = np.zeros((b, b), dtype=np.int8)
        self.to_play = BLACK
        self.history = []
        self.terminal = False
        self.outcome = 0

    def copy(self):
        other = BoardGame.__new__(BoardGame)
        other.config = self.config
        other.board = self.board.copy()
        other.to_play = self.to_play
        other.history = list(self.history)
        other.terminal = self.terminal
        other.outcome = self.outcome
        return other

    def legal_actions(self):
        if self.terminal:
            return []
        flat = self.board.reshape(-1)
        return [int(a) for a in np.flatnonzero(flat == 0)]

    def is_legal(self, action):
        if self.terminal or not 0 <= action < self.config.num_actions:
            return False
        b = self.config.size
        return self.board[action // b, action % b] == 0

    def apply(self, action):
        """Place a stone. Returns (observed reward, terminal, outcome or None)."""
        if self.terminal:
            raise IllegalMoveError("game already ended")
        b = self.config.size
        if not 0 <= action < b * b:
            raise IllegalMoveError(f"action {action} out of range")
        r, c = divmod(action, b)
        if self.board[r, c] != 0:
            raise IllegalMoveError(f"cell ({r},{c}) occupied")
        self.board[r, c] = self.to_play
        self.history.append(action)
        if self._wins(r, c):
            self.terminal = True
            self.outcome = int(self.to_play)
        elif len(self.history) == b * b:
            self.terminal = True
            self.outcome = 0
        self.to_play = -self.to_play
        return 0.0, self.terminal, (self.outcome if self.terminal else None)

    def _wins(self, r, c):
        k = self.config.connect
        b = self.config.size
        color = self.board[r, c]
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            run = 1
            for sgn in (1, -1):
                rr, cc = r + sgn * dr, c + sgn * dc
                while 0 <= rr < b and 0 <= cc < b and self.board[rr, cc] == color:
                    run += 1
                    rr += sgn * dr
                    cc += sgn * dc
            if run >= k:
                return True
        return False

    def encode(self):
        """(4, b, b) planes from the side-to-move perspective."""
        own = (self.board == self.to_play).astype(np.float32)
        opp = (self.board == -self.to_play).astype(np.float32)
        b = self.config.size
        black = np.full((b, b), 1.0 if self.to_play == BLACK else 0.0, dtype=np.float32)
        white = np.full((b, b), 1.0 if self.to_play == WHITE else 0.0, dtype=np.float32)
        return np.stack([own, opp, black, white])

    @staticmethod
    def replay(config: BoardConfig, actions):
        game = BoardGame(config)
        for a in actions:
            game.apply(a)
        return game


@dataclass(frozen=True)
class PixelConfig:
    height: int = 32
    width: int = 32
    brick_rows: int = 3
    paddle_width: int = 5
    frame_stack: int = 4
    frame_cap: int = 500
    lives: int = 1

    def __post_init__(self):
        if self.height < 8 or self.width < 8 or self.height % 4 or self.width % 4:
            raise ConfigError("pixel grid must be >= 8 and divisible by 4")
        if self.paddle_width >= self.width or self.brick_rows >= self.height // 2:
            raise ConfigError("paddle/bricks do not fit the grid")

    @property
    def num_actions(self):
        return 3  # left, stay, right

    @property
    def obs_planes(self):
        return self.frame_stack * 4


BRICK_TOP = 2  # rows of headroom above the brick field


class MiniBreakout:
    """Single-life brick breaker on a small cell grid.

    The ball moves one cell per frame with unit diagonal velocity; the
    observed reward is the number of bricks destroyed that frame.
    """

    def __init__(self, config: PixelConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.seed = seed
        h, w = config.height, config.width
        self.bricks = np.zeros((h, w), dtype=bool)
        self.bricks[BRICK_TOP : BRICK_TOP + config.brick_rows, :] = True
        self.paddle_x = w // 2  # centre cell of the paddle
        self.ball_x = int(rng.integers(w // 4, 3 * w // 4))
        self.ball_y = h - 4
        self.ball_vx = int(rng.choice([-1, 1]))
        self.ball_vy = -1
        self.frame = 0
        self.score = 0
        self.lives = config.lives
        self.terminal = False
        self._frames = deque(maxlen=config.frame_stack)
        self._actions = deque(maxlen=config.frame_stack)
        self._frames.append(self.render())
        self._actions.append(0)
        self.history = []

    def copy(self):
        other = MiniBreakout.__new__(MiniBreakout)
        other.config = self.config
        other.seed = self.seed
        other.bricks = self.bricks.copy()
        for attr in ("paddle_x", "ball_x", "ball_y", "ball_vx", "ball_vy",
                     "frame", "score", "lives", "terminal"):
            setattr(other, attr, getattr(self, attr))
        other._frames = deque(self._frames, maxlen=self.config.frame_stack)
        other._actions = deque(self._actions, maxlen=self.config.frame_stack)
        other.history = list(self.history)
        return other

    def legal_actions(self):
        return [] if self.terminal else [0, 1, 2]

    def is_legal(self, action):
        return not self.terminal and action in (0, 1, 2)

    def render(self):
        """Current screen as (3, H, W) RGB in [0, 1]."""
        cfg = self.config
        img = np.zeros((3, cfg.height, cfg.width), dtype=np.float32)
        rows, cols = np.nonzero(self.bricks)
        if rows.size:
            shade = 1.0 - (rows - BRICK_TOP) * 0.25
            img[0, rows, cols] = shade  # brick field in reds
            img[1, rows, cols] = 0.25
        half = cfg.paddle_width // 2
        px = np.clip(np.arange(self.paddle_x - half, self.paddle_x + half + 1), 0, cfg.width - 1)
        img[2, cfg.height - 1, px] = 1.0  # paddle in blue
        if not self.terminal:
            img[:, self.ball_y, self.ball_x] = 1.0  # ball in white
        return img

    def apply(self, action):
        """Advance one frame. Returns (observed reward, terminal, score or None)."""
        if self.terminal:
            raise IllegalMoveError("episode already ended")
        if action not in (0, 1, 2):
            raise IllegalMoveError(f"invalid action {action}")
        cfg = self.config
        h, w = cfg.height, cfg.width
        half = cfg.paddle_width // 2

        self.paddle_x = int(np.clip(self.paddle_x + (action - 1), half, w - 1 - half))

        reward = 0
        nx = self.ball_x + self.ball_vx
        ny = self.ball_y + self.ball_vy
        if nx < 0 or nx >= w:
            self.ball_vx = -self.ball_vx
            nx = self.ball_x + self.ball_vx
        if ny < 0:
            self.ball_vy = -self.ball_vy
            ny = self.ball_y + self.ball_vy
        if 0 <= ny < h and self.bricks[ny, nx]:
            self.bricks[ny, nx] = False
            reward += 1
            self.score += 1
            self.ball_vy = -self.ball_vy
            ny = self.ball_y + self.ball_vy
            if 0 <= ny < h and self.bricks[ny, nx]:
                self.bricks[ny, nx] = False
                reward += 1
                self.score += 1
                ny = self.ball_y
        if ny >= h - 1:
            if abs(nx - self.paddle_x) <= half:
                self.ball_vy = -1
                ny = h - 2
                if nx == self.paddle_x - half:
                    self.ball_vx = -1
                elif nx == self.paddle_x + half:
                    self.ball_vx = 1
            else:
                self.lives -= 1
        self.ball_x, self.ball_y = nx, min(ny, h - 1)

        self.frame += 1
        self.history.append(action)
        if self.lives <= 0 or self.frame >= cfg.frame_cap or not self.bricks.any():
            self.terminal = True
        self._frames.append(self.render())
        self._actions.append(action)
        return float(reward), self.terminal, (float(self.score) if self.terminal else None)

    def encode(self):
        """(F*4, H, W): per stacked frame 3 RGB planes + 1 action plane,
        zero-padded before the episode start."""
        cfg = self.config
        planes = []
        frames = list(self._frames)
        actions = list(self._actions)
        pad = cfg.frame_stack - len(frames)
        for _ in range(pad):
            planes.append(np.zeros((4, cfg.height, cfg.width), dtype=np.float32))
        for frame, act in zip(frames, actions):
            aplane = np.full((1, cfg.height, cfg.width), act / cfg.num_actions, dtype=np.float32)
            planes.append(np.concatenate([frame, aplane]))
        return np.concatenate(planes)

    @staticmethod
    def replay(config: PixelConfig, seed, actions):
        env = MiniBreakout(config, seed)
        for a in actions:
            env.apply(a)
        return env


def make_env(env_cfg, seed=0):
    if isinstance(env_cfg, BoardConfig):
        return BoardGame(env_cfg)
    if isinstance(env_cfg, PixelConfig):
        return MiniBreakout(env_cfg, seed)
    raise ConfigError(f"unknown environment config {type(env_cfg).__name__}")


def replay_env(env_cfg, seed, actions):
    if isinstance(env_cfg, BoardConfig):
        return BoardGame.replay(env_cfg, actions)
    return MiniBreakout.replay(env_cfg, seed, actions)
