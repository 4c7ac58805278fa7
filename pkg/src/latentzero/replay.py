"""Trajectories, game-record files, and the replay buffer.

A game record stores only what cannot be recomputed (actions, rewards,
search policies, root values, outcome, seed); observations are rebuilt
by replaying the environment on load, which also guarantees the stored
moves were legal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import BoardConfig, PixelConfig, make_env
from .errors import ArtifactError

RECORD_MAGIC = "latentzero-game 1"


@dataclass
class Trajectory:
    env_cfg: object
    seed: int
    network_version: int
    iteration: int
    observations: list = field(default_factory=list)   # length T+1
    actions: list = field(default_factory=list)        # length T
    rewards: list = field(default_factory=list)        # u_{t+1}, length T
    policies: list = field(default_factory=list)       # length T
    root_values: list = field(default_factory=list)    # length T
    outcome: float = 0.0

    def __len__(self):
        return len(self.actions)

    @property
    def mode(self):
        return "board" if isinstance(self.env_cfg, BoardConfig) else "pixel"

    def current_frame(self, t):
        """RGB planes of the newest frame inside the stacked observation
        (the decoder's pixel-mode target)."""
        f = self.env_cfg.frame_stack
        return self.observations[t][(f - 1) * 4 : (f - 1) * 4 + 3]

    def decoder_target(self, t):
        return self.observations[t] if self.mode == "board" else self.current_frame(t)


def write_record(traj: Trajectory, path):
    lines = [RECORD_MAGIC]
    if traj.mode == "board":
        lines += [f"env = board",
                  f"size = {traj.env_cfg.size}",
                  f"connect = {traj.env_cfg.connect}"]
    else:
        c = traj.env_cfg
        lines += [f"env = pixel",
                  f"height = {c.height}", f"width = {c.width}",
                  f"brick_rows = {c.brick_rows}", f"paddle_width = {c.paddle_width}",
                  f"frame_stack = {c.frame_stack}", f"frame_cap = {c.frame_cap}",
                  f"lives = {c.lives}"]
    lines += [f"seed = {traj.seed}",
              f"network_version = {traj.network_version}",
              f"iteration = {traj.iteration}",
              "moves:"]
    for a, u, v, pi in zip(traj.actions, traj.rewards, traj.root_values, traj.policies):
        pis = ",".join(f"{p:.8g}" for p in pi)
        lines.append(f"{a} {u:.8g} {v:.8g} {pis}")
    lines.append(f"outcome = {traj.outcome:.8g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_record(path) -> Trajectory:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != RECORD_MAGIC:
        raise ArtifactError(f"{path}: not a game record")
    header = {}
    i = 1
    while i < len(lines) and lines[i] != "moves:":
        k, _, v = lines[i].partition("=")
        header[k.strip()] = v.strip()
        i += 1
    if i == len(lines):
        raise ArtifactError(f"{path}: missing moves section")
    i += 1
    if header.get("env") == "board":
        env_cfg = BoardConfig(size=int(header["size"]), connect=int(header["connect"]))
    elif header.get("env") == "pixel":
        env_cfg = PixelConfig(height=int(header["height"]), width=int(header["width"]),
                              brick_rows=int(header["brick_rows"]),
                              paddle_width=int(header["paddle_width"]),
                              frame_stack=int(header["frame_stack"]),
                              frame_cap=int(header["frame_cap"]),
                              lives=int(header["lives"]))
    else:
        raise ArtifactError(f"{path}: unknown env {header.get('env')!r}")

    traj = Trajectory(env_cfg=env_cfg, seed=int(header["seed"]),
                      network_version=int(header["network_version"]),
                      iteration=int(header.get("iteration", -1)))
    outcome = None
    for line in lines[i:]:
        if not line.strip():
            continue
        if line.startswith("outcome"):
            outcome = float(line.partition("=")[2])
            continue
        parts = line.split(" ")
        traj.actions.append(int(parts[0]))
        traj.rewards.append(float(parts[1]))
        traj.root_values.append(float(parts[2]))
        traj.policies.append(np.array([float(x) for x in parts[3].split(",")], dtype=np.float32))
    if outcome is None:
        raise ArtifactError(f"{path}: missing outcome line")
    traj.outcome = outcome

    env = make_env(env_cfg, traj.seed)
    traj.observations.append(env.encode())
    for a in traj.actions:
        env.apply(a)
        traj.observations.append(env.encode())
    return traj


# ---------------------------------------------------------------------------


class ReplayBuffer:
    """Ring buffer over trajectories.

    Board mode: capacity counted in games, positions sampled uniformly.
    Pixel mode: capacity counted in frames, positions sampled by priority
    p^alpha with importance weights (N*P)^-beta normalized by the max.
    """

    def __init__(self, mode, capacity, priority_alpha=1.0, priority_beta=0.4):
        self.mode = mode
        self.capacity = capacity
        self.alpha = priority_alpha
        self.beta = priority_beta
        self.trajectories = []
        self.priorities = []  # per-trajectory float arrays (pixel mode)

    def __len__(self):
        return len(self.trajectories)

    @property
    def num_positions(self):
        return sum(len(t) for t in self.trajectories)

    def add(self, traj: Trajectory, priorities=None):
        self.trajectories.append(traj)
        if self.mode == "pixel":
            if priorities is None:
                priorities = np.ones(len(traj), dtype=np.float64)
            self.priorities.append(np.asarray(priorities, dtype=np.float64))
        self._evict()

    def _evict(self):
        if self.mode == "board":
            while len(self.trajectories) > self.capacity:
                self.trajectories.pop(0)
        else:
            while self.num_positions > self.capacity and len(self.trajectories) > 1:
                self.trajectories.pop(0)
                self.priorities.pop(0)

    def sample(self, batch_size, rng):
        """Returns (list of (traj_idx, t), weights array)."""
        if not self.trajectories:
            raise ValueError("empty replay buffer")
        lengths = np.array([len(t) for t in self.trajectories])
        total = int(lengths.sum())
        if self.mode == "board":
            flat = rng.integers(0, total, size=batch_size)
            picks = self._unflatten(flat, lengths)
            return picks, np.ones(batch_size, dtype=np.float64)
        prios = np.concatenate(self.priorities)
        scaled = prios**self.alpha
        probs = scaled / scaled.sum()
        flat = rng.choice(total, size=batch_size, p=probs)
        picks = self._unflatten(flat, lengths)
        weights = (total * probs[flat]) ** (-self.beta)
        weights /= weights.max()
        return picks, weights

    @staticmethod
    def _unflatten(flat_idx, lengths):
        bounds = np.cumsum(lengths)
        out = []
        for f in flat_idx:
            ti = int(np.searchsorted(bounds, f, side="right"))
            start = 0 if ti == 0 else int(bounds[ti - 1])
            out.append((ti, int(f - start)))
        return out

    def update_priorities(self, picks, new_priorities, floor=1e-3):
        if self.mode != "pixel":
            return
        for (ti, t), p in zip(picks, new_priorities):
            self.priorities[ti][t] = max(float(p), floor)

    def get(self, pick):
        ti, t = pick
        return self.trajectories[ti], t
