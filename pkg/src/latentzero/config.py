"""Line-oriented `key = value` run configuration.

Every tunable of every module lives here under one flat namespace;
unknown keys are hard errors. A handful of defaults depend on the
environment mode (board vs pixel) and are resolved after parsing.
"""

from __future__ import annotations

import hashlib

from .envs import BoardConfig, PixelConfig
from .errors import ConfigError
from .mcts import SearchConfig
from .networks import NetworkConfig

MODE = object()  # sentinel: default depends on env_mode


def _bool(s):
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    return [int(x) for x in s.split(",") if x.strip()]


# key -> (parser, default)  [default MODE -> see _MODE_DEFAULTS]
SCHEMA = {
    # environment
    "env_mode": (str, "board"),
    "board_size": (int, 7),
    "board_connect": (int, 5),
    "pixel_height": (int, 32),
    "pixel_width": (int, 32),
    "brick_rows": (int, 3),
    "paddle_width": (int, 5),
    "frame_stack": (int, 4),
    "frame_cap": (int, 500),
    "lives": (int, 1),
    # networks
    "hidden_channels": (int, 32),
    "num_blocks": (int, MODE),
    "value_hidden": (int, 64),
    # search
    "num_simulations": (int, MODE),
    "c1": (float, 1.25),
    "c2": (float, 19652.0),
    "dirichlet_alpha": (float, MODE),
    "noise_fraction": (float, 0.25),
    "root_noise": (_bool, True),
    "temperature_hot_fraction": (float, 0.3),
    # training
    "iterations": (int, 300),
    "games_per_iteration": (int, 20),
    "steps_per_iteration": (int, 200),
    "batch_size": (int, 64),
    "lr": (float, 0.1),
    "momentum": (float, 0.9),
    "weight_decay": (float, 0.0001),
    "unroll_steps": (int, 5),
    "replay_capacity": (int, MODE),
    "discount": (float, 0.997),
    "nstep": (int, 5),
    "priority_alpha": (float, 1.0),
    "priority_beta": (float, 0.4),
    "lambda_d": (float, MODE),
    "lambda_c": (float, MODE),
    "l2_coefficient": (float, 0.0),
    "decoder_grad_clip": (float, MODE),
    "seed": (int, 0),
    "workers": (int, 1),
    # analysis
    "recent_fraction": (float, 0.1),
    "early_fraction": (float, 0.1),
    "analysis_games": (int, 200),
    "analysis_simulations": (int, MODE),
    "eval_games": (int, 200),
    "eval_simulations": (int, 400),
    "anchor_simulations": (int, 400),
    "opening_temperature_moves": (int, 2),
    "sweep_simulations": (_int_list, [16, 50, 100, 400]),
    "sweep_games": (int, 20),
    "fig9_simulations": (_int_list, [16, 50, 1600]),
    "fig9_max_k": (int, 20),
    "fig10_max_k": (int, 100),
    "fig11_windows": (_int_list, [1, 15, 30]),
    "render_figures": (_bool, True),
    # bandit lab
    "bandit_arms": (int, 5),
    "bandit_gap": (float, 0.1),
    "bandit_noise": (str, "growing_zero_mean"),
    "bandit_b0": (float, 0.05),
    "bandit_growth": (float, 0.02),
    "bandit_bmax": (float, 0.5),
    "bandit_bias": (float, 0.2),
    "bandit_horizon": (int, 10000),
    "bandit_replications": (int, 1000),
}

_MODE_DEFAULTS = {
    "board": {
        "num_blocks": 3,
        "num_simulations": 16,
        "dirichlet_alpha": 0.3,
        "replay_capacity": 40_000,     # games
        "lambda_d": 1.0,
        "lambda_c": 0.0,
        "decoder_grad_clip": 0.0,
        "analysis_simulations": 16,
    },
    "pixel": {
        "num_blocks": 2,
        "num_simulations": 18,
        "dirichlet_alpha": 0.25,
        "replay_capacity": 1_000_000,  # frames
        "lambda_d": 25.0,
        "lambda_c": 1.0,
        "decoder_grad_clip": 0.001,
        "analysis_simulations": 18,
    },
}


class RunConfig:
    def __init__(self, values):
        self._values = values
        for k, v in values.items():
            setattr(self, k, v)

    # -- derived configs ---------------------------------------------------

    def env_config(self):
        if self.env_mode == "board":
            return BoardConfig(size=self.board_size, connect=self.board_connect)
        return PixelConfig(height=self.pixel_height, width=self.pixel_width,
                           brick_rows=self.brick_rows, paddle_width=self.paddle_width,
                           frame_stack=self.frame_stack, frame_cap=self.frame_cap,
                           lives=self.lives)

    def network_config(self):
        env = self.env_config()
        if self.env_mode == "board":
            return NetworkConfig(mode="board", input_planes=env.obs_planes,
                                 height=env.size, width=env.size,
                                 num_actions=env.num_actions,
                                 hidden_channels=self.hidden_channels,
                                 num_blocks=self.num_blocks,
                                 value_hidden=self.value_hidden)
        return NetworkConfig(mode="pixel", input_planes=env.obs_planes,
                             height=env.height, width=env.width,
                             num_actions=env.num_actions,
                             hidden_channels=self.hidden_channels,
                             num_blocks=self.num_blocks,
                             value_hidden=self.value_hidden)

    def search_config(self, simulations=None, add_noise=None):
        return SearchConfig(
            num_simulations=self.num_simulations if simulations is None else simulations,
            c1=self.c1, c2=self.c2,
            dirichlet_alpha=self.dirichlet_alpha,
            noise_fraction=self.noise_fraction,
            add_noise=self.root_noise if add_noise is None else add_noise,
            discount=self.discount if self.env_mode == "pixel" else 1.0,
            two_player=self.env_mode == "board",
        )

    def env_text(self):
        if self.env_mode == "board":
            keys = ("env_mode", "board_size", "board_connect")
        else:
            keys = ("env_mode", "pixel_height", "pixel_width", "brick_rows",
                    "paddle_width", "frame_stack", "frame_cap", "lives")
        return "\n".join(f"{k} = {self._values[k]}" for k in keys)

    def effective_text(self):
        lines = []
        for k in SCHEMA:
            v = self._values[k]
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.effective_text().encode()).hexdigest()

    def override(self, **kwargs):
        values = dict(self._values)
        for k, v in kwargs.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key '{k}'")
            values[k] = v
        return RunConfig(values)


def parse_config_text(text, overrides=None) -> RunConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        parser, _ = SCHEMA[key]
        try:
            raw[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc

    if overrides:
        for k, v in overrides.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key '{k}'")
            raw[k] = v

    mode = raw.get("env_mode", SCHEMA["env_mode"][1])
    if mode not in _MODE_DEFAULTS:
        raise ConfigError(f"env_mode must be board or pixel, got '{mode}'")
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            values[key] = raw[key]
        elif default is MODE:
            values[key] = _MODE_DEFAULTS[mode][key]
        else:
            values[key] = default

    cfg = RunConfig(values)
    cfg.env_config()      # validates geometry
    cfg.network_config()
    if cfg.unroll_steps < 1 or cfg.batch_size < 1 or cfg.iterations < 0:
        raise ConfigError("unroll_steps/batch_size/iterations out of range")
    return cfg


def load_config(path, overrides=None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, overrides)


def default_config(**overrides) -> RunConfig:
    return parse_config_text("", overrides)
