"""Latent-state measurement suite: unrolling errors, beyond-terminal
statistics, N-step mean value errors, search-tree decoding, simulation
sweeps, and Elo evaluation.

Values reported for board games are mapped to Black's perspective where
noted (network outputs are side-to-move). All aggregate outputs are CSV;
decoded observations are binary PPM images.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .envs import BoardConfig, make_env, replay_env
from .mcts import SearchConfig, run_search, sample_action, tree_nodes
from .networks import NetworkBundle
from .pca import pca_project
from .ppm import render_observation, write_ppm
from .replay import Trajectory, read_record
from .training import play_game

EPS_LOG = 1e-12


def fmt(x):
    return f"{x:.10g}"


# ---------------------------------------------------------------------------
# forward helpers (no-grad, batched over a trajectory)


def _rep_latents(bundle, observations):
    with ad.no_grad():
        lat = bundle.represent_batch(np.stack(observations).astype(np.float32))
    return lat.data


def _policy_value(bundle, latents):
    with ad.no_grad():
        logits, v = bundle.predict_batch(ad.Tensor(latents))
        probs = ad.softmax(logits)
    return probs.data, v.data[:, 0]


def _decode(bundle, latents):
    with ad.no_grad():
        out = bundle.decode_batch(ad.Tensor(latents))
    return out.data


def _dyn_step(bundle, latents, actions):
    with ad.no_grad():
        r, nxt = bundle.dynamics_batch(ad.Tensor(latents), actions)
    return (None if r is None else r.data[:, 0]), nxt.data


def unrolled_latents(bundle, traj: Trajectory, start, steps):
    """Latents s^(1..steps) unrolled from h(o_start) with the recorded actions."""
    lat = _rep_latents(bundle, [traj.observations[start]])
    out = []
    for j in range(steps):
        _, lat = _dyn_step(bundle, lat, [traj.actions[start + j]])
        out.append(lat[0])
    return out


# ---------------------------------------------------------------------------
# unrolling-error suite


@dataclass
class ErrorTable:
    """Per-time-step means of the five unrolling errors for one k-mode."""

    k_mode: str
    pixel: bool
    sums: dict = field(default_factory=dict)    # t -> [l_o, l_s, l_p, l_v, l_r, cos]
    counts: dict = field(default_factory=dict)  # t -> n

    def add(self, t, l_o, l_s=0.0, l_p=0.0, l_v=0.0, l_r=0.0, cos=1.0):
        row = self.sums.setdefault(t, [0.0] * 6)
        for i, v in enumerate((l_o, l_s, l_p, l_v, l_r, cos)):
            row[i] += v
        self.counts[t] = self.counts.get(t, 0) + 1

    def rows(self):
        for t in sorted(self.sums):
            n = self.counts[t]
            yield (t, *(s / n for s in self.sums[t]), n)

    def mean(self, column):
        idx = {"l_o": 0, "l_s": 1, "l_p": 2, "l_v": 3, "l_r": 4, "cos": 5}[column]
        total = sum(self.sums[t][idx] for t in self.sums)
        n = sum(self.counts.values())
        return total / n if n else math.nan

    def write_csv(self, path):
        header = "t,l_o,l_s,l_p,l_v,l_r,cos_raw,samples"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t, l_o, l_s, l_p, l_v, l_r, cos, n in self.rows():
                fh.write(f"{t},{fmt(l_o)},{fmt(l_s)},{fmt(l_p)},{fmt(l_v)},"
                         f"{fmt(l_r)},{fmt(cos)},{n}\n")


def _metric_row(obs_target, dec, lat_unrolled, lat_rep, p_unrolled, p_rep,
                v_unrolled, v_rep, r_unrolled=None, u_true=None):
    l_o = float(np.mean((dec - obs_target) ** 2))
    na = np.linalg.norm(lat_unrolled)
    nb = np.linalg.norm(lat_rep)
    cos = float(np.dot(lat_unrolled.ravel(), lat_rep.ravel()) / max(na * nb, EPS_LOG))
    l_s = 1.0 - cos
    l_p = float(-(p_rep * np.log(np.maximum(p_unrolled, EPS_LOG))).sum())
    l_v = float((v_unrolled - v_rep) ** 2)
    l_r = 0.0
    if r_unrolled is not None and u_true is not None:
        l_r = float((r_unrolled - u_true) ** 2)
    return l_o, l_s, l_p, l_v, l_r, cos


def unroll_error_suite(bundle: NetworkBundle, trajectories, k_mode) -> ErrorTable:
    """k_mode "t": unroll from the initial state; "5": from five steps
    earlier; "0": representation-only (only the observation error is
    meaningful, the self-compared columns are zero by construction)."""
    if k_mode not in ("t", "5", "0", 5, 0):
        raise ValueError(f"k_mode must be 't', 5, or 0, got {k_mode!r}")
    k_mode = str(k_mode)
    pixel = bundle.config.mode == "pixel"
    table = ErrorTable(k_mode, pixel)

    for traj in trajectories:
        n_pos = len(traj) + 1
        window = 5 if k_mode == "5" else None
        if window is not None and len(traj) < window:
            raise ValueError(f"trajectory shorter than k={window}")
        rep = _rep_latents(bundle, traj.observations)
        p_rep, v_rep = _policy_value(bundle, rep)
        dec_targets = np.stack([traj.decoder_target(t) for t in range(n_pos)])

        if k_mode == "0":
            dec = _decode(bundle, rep)
            for t in range(n_pos):
                l_o = float(np.mean((dec[t] - dec_targets[t]) ** 2))
                table.add(t, l_o)
            continue

        if k_mode == "t":
            lat = rep[0:1].copy()
            for t in range(1, n_pos):
                r_pred, lat = _dyn_step(bundle, lat, [traj.actions[t - 1]])
                dec = _decode(bundle, lat)[0]
                p_u, v_u = _policy_value(bundle, lat)
                table.add(t, *_metric_row(
                    dec_targets[t], dec, lat[0], rep[t], p_u[0], p_rep[t],
                    v_u[0], v_rep[t],
                    None if r_pred is None else r_pred[0],
                    traj.rewards[t - 1] if pixel else None))
        else:  # k_mode == "5": batched over all anchors t-5
            starts = np.arange(0, n_pos - 5)
            lat = rep[starts].copy()
            for j in range(5):
                acts = [traj.actions[s + j] for s in starts]
                r_pred, lat = _dyn_step(bundle, lat, acts)
            p_u, v_u = _policy_value(bundle, lat)
            dec = _decode(bundle, lat)
            for i, s in enumerate(starts):
                t = s + 5
                table.add(t, *_metric_row(
                    dec_targets[t], dec[i], lat[i], rep[t], p_u[i], p_rep[t],
                    v_u[i], v_rep[t],
                    None if r_pred is None else r_pred[i],
                    traj.rewards[t - 1] if pixel else None))
    return table


def write_error_suite_csv(bundle, trajectories, path):
    """One merged CSV over the three unroll modes (k = 0, 5, t); cells
    are blank where a mode has no sample at that time step. Trajectories
    shorter than 5 steps only contribute to the k=0 and k=t columns."""
    long_enough = [t for t in trajectories if len(t) >= 5]
    tables = {
        "0": unroll_error_suite(bundle, trajectories, "0"),
        "5": unroll_error_suite(bundle, long_enough, "5") if long_enough
             else ErrorTable("5", bundle.config.mode == "pixel"),
        "t": unroll_error_suite(bundle, trajectories, "t"),
    }
    pixel = bundle.config.mode == "pixel"
    metrics = ["l_o", "l_s", "l_p", "l_v", "l_r", "cos"]
    cols = ["t"]
    for mode in ("0", "5", "t"):
        use = ["l_o"] if mode == "0" else metrics
        cols += [f"{m}_k{mode}" for m in use]
        cols.append(f"samples_k{mode}")
    all_t = sorted(set().union(*(tab.sums.keys() for tab in tables.values())))
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t in all_t:
            row = [str(t)]
            for mode in ("0", "5", "t"):
                tab = tables[mode]
                use = ["l_o"] if mode == "0" else metrics
                if t in tab.sums:
                    n = tab.counts[t]
                    vals = [s / n for s in tab.sums[t]]
                    named = dict(zip(metrics, vals))
                    row += [fmt(named[m]) for m in use]
                    row.append(str(n))
                else:
                    row += [""] * len(use) + ["0"]
            fh.write(",".join(row) + "\n")
    return tables


# ---------------------------------------------------------------------------
# trajectory sets


@dataclass
class TrajectorySet:
    recent: list
    early: list


def load_tagged_trajectories(games_dir, recent_fraction=0.1, early_fraction=0.1):
    """Read recorded games and tag them by source iteration range."""
    iters = sorted(d for d in os.listdir(games_dir) if d.startswith("iter_"))
    if not iters:
        raise ValueError(f"no game records under {games_dir}")
    n = len(iters)
    early_n = max(1, int(math.ceil(early_fraction * n)))
    recent_n = max(1, int(math.ceil(recent_fraction * n)))
    early_dirs, recent_dirs = iters[:early_n], iters[n - recent_n:]

    def read_dirs(dirs):
        out = []
        for d in dirs:
            full = os.path.join(games_dir, d)
            for name in sorted(os.listdir(full)):
                if name.endswith(".txt"):
                    out.append(read_record(os.path.join(full, name)))
        return out

    return TrajectorySet(recent=read_dirs(recent_dirs), early=read_dirs(early_dirs))


def generate_trajectories(bundle, env_cfg, search_cfg, games, master_seed, min_length=0):
    """Fresh self-play trajectories from a bundle (analysis on demand)."""
    out = []
    g = 0
    attempts = 0
    while len(out) < games and attempts < games * 50:
        seed = int(np.random.SeedSequence([master_seed, 0xA11, attempts]).generate_state(1)[0])
        traj = play_game(bundle, env_cfg, search_cfg, seed, iteration=-1)
        attempts += 1
        if len(traj) >= min_length:
            out.append(traj)
            g += 1
    if len(out) < games:
        raise ValueError(f"could not generate {games} trajectories of length >= {min_length}")
    return out


# ---------------------------------------------------------------------------
# search-tree annotation & beyond-terminal statistics


def annotate_tree(root, env_at_root):
    """Attach validity and beyond-terminal flags by replaying each node's
    action path in the real environment. A node is beyond-terminal iff
    its path passes a terminal state strictly before reaching the node;
    a node reached by an illegal move (and its subtree) is invalid but
    not beyond-terminal unless a terminal was passed first."""
    root.valid = True
    root.beyond_terminal = False
    stack = [(root, env_at_root)]
    while stack:
        node, env = stack.pop()
        for child in node.children.values():
            if not child.expanded():
                continue
            if env is None:  # replay already broken by an illegal move
                child.valid = False
                child.beyond_terminal = node.beyond_terminal
                stack.append((child, None))
            elif env.terminal:
                child.valid = False
                child.beyond_terminal = True
                stack.append((child, None))
            elif not env.is_legal(child.action):
                child.valid = False
                child.beyond_terminal = False
                stack.append((child, None))
            else:
                child_env = env.copy()
                child_env.apply(child.action)
                child.valid = node.valid
                child.beyond_terminal = False
                stack.append((child, child_env))
    return root


def beyond_terminal_proportion(root):
    nodes = tree_nodes(root)[1:]  # exclude the root from the denominator
    if not nodes:
        return 0.0
    return sum(1 for n in nodes if n.beyond_terminal) / len(nodes)


def beyond_terminal_stats(bundle, trajectories, simulations, ks=None,
                          search_cfg=None, seed=0):
    """Fig-9-style table: for games with terminal step T, search at T-k
    and measure the fraction of (non-root) tree nodes flagged
    beyond-terminal via exact env replay.

    Games shorter than max(ks) are skipped (returned as a count).
    Returns (rows, skipped) with rows (simulations, k, proportion, games).
    """
    ks = list(ks) if ks is not None else list(range(1, 21))
    need = max(ks)
    base = search_cfg or SearchConfig(add_noise=False)
    sums = {(s, k): 0.0 for s in simulations for k in ks}
    counts = {(s, k): 0 for s in simulations for k in ks}
    skipped = 0
    rng = np.random.default_rng(seed)
    for traj in trajectories:
        t_term = len(traj)
        if t_term < need:
            skipped += 1
            continue
        for k in ks:
            env = replay_env(traj.env_cfg, traj.seed, traj.actions[: t_term - k])
            obs = env.encode()
            legal = env.legal_actions()
            for s in simulations:
                cfg_s = SearchConfig(num_simulations=s, c1=base.c1, c2=base.c2,
                                     dirichlet_alpha=base.dirichlet_alpha,
                                     noise_fraction=base.noise_fraction,
                                     add_noise=False, temperature=1.0,
                                     discount=base.discount, two_player=base.two_player)
                res = run_search(obs, legal, bundle, cfg_s, rng)
                annotate_tree(res.root, env)
                sums[(s, k)] += beyond_terminal_proportion(res.root)
                counts[(s, k)] += 1
    rows = [(s, k, (sums[(s, k)] / counts[(s, k)]) if counts[(s, k)] else 0.0,
             counts[(s, k)])
            for s in simulations for k in ks]
    return rows, skipped


def beyond_terminal_value_error(bundle, trajectories, max_k=100):
    """Fig-10-style curve: unroll each game's full action sequence from
    h(o_0) to the latent terminal, keep unrolling with the argmax of the
    unrolled policy, and report MSE between the (Black-perspective)
    value and the outcome z per step beyond the terminal.

    Returns rows (k, mse, stderr, games).
    """
    per_game = []  # list of arrays (max_k,)
    for traj in trajectories:
        t_term = len(traj)
        lat = _rep_latents(bundle, [traj.observations[0]])
        for j in range(t_term):
            _, lat = _dyn_step(bundle, lat, [traj.actions[j]])
        errs = np.empty(max_k)
        for k in range(1, max_k + 1):
            p_u, _ = _policy_value(bundle, lat)
            action = int(np.argmax(p_u[0]))
            _, lat = _dyn_step(bundle, lat, [action])
            _, v_u = _policy_value(bundle, lat)
            v = float(v_u[0])
            if bundle.config.mode == "board":
                # beyond-terminal latents represent the frozen terminal
                # position, so the Black-perspective conversion uses the
                # terminal parity for every k
                v_black = v if t_term % 2 == 0 else -v
            else:
                v_black = v
            errs[k - 1] = (v_black - traj.outcome) ** 2
        per_game.append(errs)
    stacked = np.stack(per_game)
    mses = stacked.mean(axis=0)
    stderr = stacked.std(axis=0, ddof=1) / math.sqrt(len(per_game)) if len(per_game) > 1 \
        else np.zeros(max_k)
    return [(k + 1, float(mses[k]), float(stderr[k]), len(per_game)) for k in range(max_k)]


# ---------------------------------------------------------------------------
# N-step mean value error


def nstep_mean_value_error(bundle, trajectories, windows=(1, 15, 30)):
    """Fig-11-style rows (t, N, mse, stderr, samples).

    For each t >= 1 the window of unrolled values v^(n) at positions
    t+n-1 (n = 1..N, truncated at the trajectory tail) is unrolled from
    h(o_{t-1}); its mean is compared against the mean of the
    representation-network values at the same positions.
    """
    acc = {}  # (t, N) -> list of squared errors
    for traj in trajectories:
        n_pos = len(traj) + 1
        rep = _rep_latents(bundle, traj.observations)
        _, v_rep = _policy_value(bundle, rep)
        max_n = max(windows)
        for t in range(1, n_pos):
            avail = n_pos - t  # positions t .. n_pos-1
            span = min(max_n, avail)
            lat = rep[t - 1 : t].copy()
            v_unrolled = np.empty(span)
            for n in range(1, span + 1):
                _, lat = _dyn_step(bundle, lat, [traj.actions[t + n - 2]])
                _, v_u = _policy_value(bundle, lat)
                v_unrolled[n - 1] = v_u[0]
            for window in windows:
                w = min(window, span)
                if w < 1:
                    continue
                mean_rep = float(v_rep[t : t + w].mean())
                mean_unr = float(v_unrolled[:w].mean())
                acc.setdefault((t, window), []).append((mean_unr - mean_rep) ** 2)
    rows = []
    for (t, window), errs in sorted(acc.items()):
        arr = np.array(errs)
        stderr = arr.std(ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
        rows.append((t, window, float(arr.mean()), float(stderr), len(arr)))
    return rows


# ---------------------------------------------------------------------------
# tree decoding / export


def export_tree(root, bundle, env_at_root, out_dir, base_name="tree", cell=12):
    """Write one PPM per expanded node plus a text table and a DOT graph.

    Node values are reported from Black's perspective in board mode.
    """
    os.makedirs(out_dir, exist_ok=True)
    annotate_tree(root, env_at_root)
    nodes = tree_nodes(root)
    ids = {id(n): i for i, n in enumerate(nodes)}
    mode = bundle.config.mode
    root_black = getattr(env_at_root, "to_play", 1) == 1

    table_path = os.path.join(out_dir, f"{base_name}.txt")
    dot_path = os.path.join(out_dir, f"{base_name}.dot")
    records = []
    with open(table_path, "w") as fh:
        fh.write("id,parent,action,n,q,reward,prior,depth,beyond_terminal,valid,"
                 "v_black,image\n")
        for node in nodes:
            nid = ids[id(node)]
            parent = ids[id(node.parent)] if node.parent is not None else -1
            action = -1 if node.action is None else node.action
            _, v = bundle.predict(node.hidden)
            if mode == "board":
                node_black = root_black == (node.depth % 2 == 0)
                v_black = v if node_black else -v
            else:
                node_black = True
                v_black = v
            img_name = f"{base_name}_node_{nid:04d}.ppm"
            dec = bundle.decode(node.hidden)
            write_ppm(os.path.join(out_dir, img_name),
                      render_observation(dec, mode, black_to_play=node_black, cell=cell))
            fh.write(f"{nid},{parent},{action},{node.visit_count},{fmt(node.q())},"
                     f"{fmt(node.reward)},{fmt(node.prior)},{node.depth},"
                     f"{int(node.beyond_terminal)},{int(node.valid)},{fmt(v_black)},"
                     f"{img_name}\n")
            records.append((nid, parent, action, node))
    with open(dot_path, "w") as fh:
        fh.write("digraph search_tree {\n  node [shape=box];\n")
        for nid, parent, action, node in records:
            style = "solid" if node.valid else "dashed"
            color = "red" if node.beyond_terminal else "black"
            fh.write(f'  n{nid} [label="#{nid} n={node.visit_count} '
                     f'q={node.q():.2f}" style={style} color={color}];\n')
            if parent >= 0:
                fh.write(f"  n{parent} -> n{nid} [label=\"{action}\"];\n")
        fh.write("}\n")
    return table_path, dot_path, len(nodes)


# ---------------------------------------------------------------------------
# match play, Elo, simulation sweep


class SearchAgent:
    def __init__(self, bundle, simulations, base_cfg=None, opening_moves=0):
        self.bundle = bundle
        self.cfg = base_cfg or SearchConfig(add_noise=False)
        self.simulations = simulations
        self.opening_moves = opening_moves

    def act(self, env, move_index, rng):
        temp = 1.0 if move_index < self.opening_moves else 0.0
        cfg = SearchConfig(num_simulations=self.simulations, c1=self.cfg.c1,
                           c2=self.cfg.c2, dirichlet_alpha=self.cfg.dirichlet_alpha,
                           noise_fraction=self.cfg.noise_fraction, add_noise=False,
                           temperature=temp, discount=self.cfg.discount,
                           two_player=self.cfg.two_player)
        result = run_search(env.encode(), env.legal_actions(), self.bundle, cfg, rng)
        return sample_action(result.policy, 1.0 if temp else 0.0, rng)


class RandomAgent:
    def act(self, env, move_index, rng):
        return int(rng.choice(env.legal_actions()))


def play_board_match(agent_a, agent_b, env_cfg, n_games, seed=0):
    """Alternating-color match; returns (wins_a, draws, losses_a, records).

    Game i gives Black to agent A when i is even.
    """
    wins = draws = losses = 0
    records = []
    for g in range(n_games):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE10, g]))
        env = make_env(env_cfg, seed=g)
        a_is_black = g % 2 == 0
        move = 0
        while not env.terminal:
            black_turn = env.to_play == 1
            agent = agent_a if black_turn == a_is_black else agent_b
            env.apply(agent.act(env, move, rng))
            move += 1
        z = env.outcome if a_is_black else -env.outcome
        if z > 0:
            wins += 1
        elif z < 0:
            losses += 1
        else:
            draws += 1
        records.append({"game": g, "a_is_black": a_is_black,
                        "actions": list(env.history), "outcome": env.outcome})
    return wins, draws, losses, records


def elo_from_score(score_rate, n_games):
    """1000 + 400*log10(w/(1-w)) with w clamped to [1/(2n), 1-1/(2n)]."""
    if n_games <= 0:
        raise ValueError("n_games must be positive")
    lo = 1.0 / (2 * n_games)
    w = min(max(score_rate, lo), 1.0 - lo)
    return 1000.0 + 400.0 * math.log10(w / (1.0 - w))


@dataclass
class EloReport:
    elo: float
    wins: int
    draws: int
    losses: int
    n_games: int
    records: list

    @property
    def score_rate(self):
        return (self.wins + 0.5 * self.draws) / self.n_games


def elo_eval(bundle_a, bundle_b, env_cfg, n_games=200, simulations=400,
             seed=0, opening_moves=2) -> EloReport:
    """Rate bundle A against anchor B (anchored at 1000 Elo)."""
    ga = (bundle_a.config.mode, bundle_a.config.height, bundle_a.config.width,
          bundle_a.config.num_actions, bundle_a.config.input_planes)
    gb = (bundle_b.config.mode, bundle_b.config.height, bundle_b.config.width,
          bundle_b.config.num_actions, bundle_b.config.input_planes)
    if ga != gb:
        raise ValueError(f"bundles play different games: {ga} vs {gb}")
    agent_a = SearchAgent(bundle_a, simulations, opening_moves=opening_moves)
    agent_b = SearchAgent(bundle_b, simulations, opening_moves=opening_moves)
    w, d, l, records = play_board_match(agent_a, agent_b, env_cfg, n_games, seed)
    report = EloReport(0.0, w, d, l, n_games, records)
    report.elo = elo_from_score(report.score_rate, n_games)
    return report


def pixel_mean_return(bundle, env_cfg, simulations, n_games, seed=0):
    total = 0.0
    for g in range(n_games):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E7, g]))
        env = make_env(env_cfg, seed=g)
        agent = SearchAgent(bundle, simulations,
                            base_cfg=SearchConfig(add_noise=False, two_player=False,
                                                  discount=0.997))
        move = 0
        while not env.terminal:
            env.apply(agent.act(env, move, rng))
            move += 1
        total += env.score
    return total / n_games


def sim_sweep(bundle, env_cfg, simulations_list, games_per_point, anchor=400,
              seed=0, opening_moves=2):
    """Fig-12-style rows (simulations, performance_pct, raw, games).

    Board mode: Elo against the same bundle at the anchor count, scaled
    so the anchor is exactly 100%. Pixel mode: mean return relative to
    the anchor count's mean return.
    """
    if anchor not in simulations_list:
        simulations_list = list(simulations_list) + [anchor]
    rows = []
    if isinstance(env_cfg, BoardConfig):
        for s in sorted(simulations_list):
            if s == anchor:
                rows.append((s, 100.0, 1000.0, games_per_point))
                continue
            agent_a = SearchAgent(bundle, s, opening_moves=opening_moves)
            agent_b = SearchAgent(bundle, anchor, opening_moves=opening_moves)
            w, d, l, _ = play_board_match(agent_a, agent_b, env_cfg, games_per_point, seed)
            elo = elo_from_score((w + 0.5 * d) / games_per_point, games_per_point)
            rows.append((s, 100.0 * elo / 1000.0, elo, games_per_point))
    else:
        anchor_return = pixel_mean_return(bundle, env_cfg, anchor, games_per_point, seed)
        if anchor_return == 0:
            raise ValueError("anchor performance is zero; cannot normalize")
        for s in sorted(simulations_list):
            ret = anchor_return if s == anchor else \
                pixel_mean_return(bundle, env_cfg, s, games_per_point, seed)
            rows.append((s, 100.0 * ret / anchor_return, ret, games_per_point))
    return rows


# ---------------------------------------------------------------------------
# csv writers


def write_rows_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def pca_csv(bundle, trajectories, path, max_trajectories=10):
    """Project true and decoded observation variants into a shared basis
    fit on the true observations; rows are tagged Start/End per
    trajectory boundary."""
    obs_all, dec0_all, dec5_all, dect_all, tags = [], [], [], [], []
    for traj in trajectories[:max_trajectories]:
        n_pos = len(traj) + 1
        rep = _rep_latents(bundle, traj.observations)
        dec0 = _decode(bundle, rep)
        lat_t = rep[0:1].copy()
        dect = [dec0[0]]
        for t in range(1, n_pos):
            _, lat_t = _dyn_step(bundle, lat_t, [traj.actions[t - 1]])
            dect.append(_decode(bundle, lat_t)[0])
        dec5 = []
        for t in range(n_pos):
            s = max(0, t - 5)
            if t == s:
                dec5.append(dec0[t])
            else:
                lat = rep[s : s + 1].copy()
                for j in range(s, t):
                    _, lat = _dyn_step(bundle, lat, [traj.actions[j]])
                dec5.append(_decode(bundle, lat)[0])
        targets = [traj.decoder_target(t) for t in range(n_pos)]
        obs_all += targets
        dec0_all += list(dec0)
        dec5_all += dec5
        dect_all += dect
        tags += [(t, n_pos) for t in range(n_pos)]

    basis, coords = pca_project(np.stack(obs_all), {
        "decoded_k0": np.stack(dec0_all),
        "decoded_k5": np.stack(dec5_all),
        "decoded_kt": np.stack(dect_all),
    })
    with open(path, "w") as fh:
        fh.write("variant,index,t,pc1,pc2,marker\n")
        for variant, pts in coords.items():
            for i, (x, y) in enumerate(pts):
                t, n_pos = tags[i]
                marker = "Start" if t == 0 else ("End" if t == n_pos - 1 else "")
                fh.write(f"{variant},{i},{t},{fmt(float(x))},{fmt(float(y))},{marker}\n")
    return basis
