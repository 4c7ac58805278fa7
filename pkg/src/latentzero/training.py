"""Self-play plus optimization: unroll targets, the joint loss, and the
iteration loop that alternates game generation with SGD and publishes a
checkpoint per iteration.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .envs import BoardConfig, make_env
from .mcts import SearchConfig, run_search, sample_action
from .networks import NetworkBundle, save_bundle
from .replay import ReplayBuffer, Trajectory, write_record

LOSS_CSV_HEADER = "step,iteration,total,policy,value,reward,l2,decoder,consistency"


def compute_value_target(traj: Trajectory, t, mode, gamma=0.997, nstep=5):
    """Board: outcome from the side to move at t (Black moves at even t).
    Absorbing positions past the end freeze the terminal position's
    target, consistent with the frozen observation target. Pixel: n-step
    discounted return bootstrapped from the stored search root value,
    0 past the end."""
    if mode == "board":
        z = traj.outcome
        t = min(t, len(traj))
        return z if t % 2 == 0 else -z
    length = len(traj)
    if t >= length:
        return 0.0
    total = 0.0
    for i in range(1, nstep + 1):
        idx = t + i - 1
        if idx >= length:
            return total
        total += gamma ** (i - 1) * traj.rewards[idx]
    boot_t = t + nstep
    if boot_t < length:
        total += gamma**nstep * traj.root_values[boot_t]
    return total


def initial_priorities(traj: Trajectory, gamma, nstep):
    """|stored root value - n-step return| per position."""
    return np.array(
        [abs(traj.root_values[t] - compute_value_target(traj, t, "pixel", gamma, nstep))
         for t in range(len(traj))], dtype=np.float64) + 1e-3


@dataclass
class Batch:
    obs0: np.ndarray          # (B, C, H, W)
    actions: np.ndarray       # (B, K) unroll actions
    target_pi: np.ndarray     # (B, K+1, A)
    target_v: np.ndarray      # (B, K+1, 1)
    target_r: np.ndarray      # (B, K, 1), zeros in board mode
    target_obs: np.ndarray    # (B, K+1, c_dec, H, W)
    obs_k: np.ndarray         # (B, K+1, C, H, W) true observations per step
    weights: np.ndarray       # (B,)
    picks: list


def make_batch(buffer: ReplayBuffer, batch_size, unroll_steps, num_actions, rng,
               gamma=0.997, nstep=5) -> Batch:
    picks, weights = buffer.sample(batch_size, rng)
    k_total = unroll_steps
    first, _ = buffer.get(picks[0])
    mode = first.mode
    obs_shape = first.observations[0].shape
    dec_shape = first.decoder_target(0).shape

    obs0 = np.empty((batch_size,) + obs_shape, dtype=np.float32)
    actions = np.empty((batch_size, k_total), dtype=np.int64)
    target_pi = np.empty((batch_size, k_total + 1, num_actions), dtype=np.float32)
    target_v = np.empty((batch_size, k_total + 1, 1), dtype=np.float32)
    target_r = np.zeros((batch_size, k_total, 1), dtype=np.float32)
    target_obs = np.empty((batch_size, k_total + 1) + dec_shape, dtype=np.float32)
    obs_k = np.empty((batch_size, k_total + 1) + obs_shape, dtype=np.float32)

    uniform = np.full(num_actions, 1.0 / num_actions, dtype=np.float32)
    for i, pick in enumerate(picks):
        traj, t = buffer.get(pick)
        length = len(traj)
        obs0[i] = traj.observations[t]
        for k in range(k_total + 1):
            tk = t + k
            # Absorbing convention past the end: uniform policy, parity-
            # extended outcome (board) / 0 (pixel), last observation held.
            target_pi[i, k] = traj.policies[tk] if tk < length else uniform
            target_v[i, k, 0] = compute_value_target(traj, tk, mode, gamma, nstep)
            held = min(tk, length)
            target_obs[i, k] = traj.decoder_target(held)
            obs_k[i, k] = traj.observations[held]
            if k < k_total:
                if tk < length:
                    actions[i, k] = traj.actions[tk]
                    target_r[i, k, 0] = traj.rewards[tk]
                else:
                    actions[i, k] = rng.integers(num_actions)
    return Batch(obs0, actions, target_pi, target_v, target_r, target_obs,
                 obs_k, weights, picks)


@dataclass
class LossBreakdown:
    """Raw (unscaled) per-step terms; `total` applies the coefficients."""

    policy: list
    value: list
    reward: list
    decoder: list
    consistency: list
    l2: float
    total: float
    v0_errors: np.ndarray = None

    def sums(self):
        return (sum(self.policy), sum(self.value), sum(self.reward),
                self.l2, sum(self.decoder), sum(self.consistency))


def unroll_loss(bundle: NetworkBundle, batch: Batch, lambda_d=1.0, lambda_c=0.0,
                c_l2=0.0, weights=None):
    """Joint loss over a K-step unroll.

    Policy terms are cross-entropy and value/reward/reconstruction terms
    are MSE, summed over unroll step; the consistency terms start at
    step 1 and the reconstruction terms at step 0. Returns the scalar
    loss tensor plus the per-term breakdown.
    """
    k_total = batch.actions.shape[1]
    mode = bundle.config.mode
    if weights is None:
        weights = batch.weights
    w = None if weights is None or np.all(weights == 1.0) else weights

    lp, lv, lr, ld, lc = [], [], [], [], []
    terms = []
    latent = bundle.represent_batch(batch.obs0)
    v0_errors = None
    for k in range(k_total + 1):
        logits, v = bundle.predict_batch(latent)
        p_term = ad.cross_entropy_logits(logits, batch.target_pi[:, k], weights=w)
        v_term = ad.mse(v, batch.target_v[:, k], weights=w)
        lp.append(p_term)
        lv.append(v_term)
        terms += [p_term, v_term]
        if k == 0:
            v0_errors = np.abs(v.data[:, 0] - batch.target_v[:, 0, 0])
        if lambda_d != 0.0:
            d_term = ad.mse(bundle.decode_batch(latent), batch.target_obs[:, k], weights=w)
            ld.append(d_term)
            terms.append(ad.scale(d_term, lambda_d))
        if lambda_c != 0.0 and k >= 1:
            with ad.no_grad():
                target_latent = bundle.represent_batch(batch.obs_k[:, k])
            c_term = bundle.consistency_batch(ad.Tensor(target_latent.data), latent, weights=w)
            lc.append(c_term)
            terms.append(ad.scale(c_term, lambda_c))
        if k < k_total:
            r_pred, latent = bundle.dynamics_batch(latent, batch.actions[:, k])
            if mode == "pixel":
                r_term = ad.mse(r_pred, batch.target_r[:, k], weights=w)
                lr.append(r_term)
                terms.append(r_term)

    l2_val = 0.0
    if c_l2 != 0.0:
        reg = None
        for p in bundle.params.values():
            sq = ad.sum_squares(p)
            reg = sq if reg is None else ad.add(reg, sq)
        reg = ad.scale(reg, c_l2)
        l2_val = float(reg.data)
        terms.append(reg)

    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)

    breakdown = LossBreakdown(
        policy=[float(t.data) for t in lp],
        value=[float(t.data) for t in lv],
        reward=[float(t.data) for t in lr],
        decoder=[float(t.data) for t in ld],
        consistency=[float(t.data) for t in lc],
        l2=l2_val,
        total=float(total.data),
        v0_errors=v0_errors,
    )
    return total, breakdown


# ---------------------------------------------------------------------------
# self-play


def temperature_for_move(move_index, max_moves, hot_fraction=0.3):
    """1.0 for the opening fraction of the game, then effectively 0."""
    return 1.0 if move_index < hot_fraction * max_moves else 0.0


def play_game(bundle: NetworkBundle, env_cfg, search_cfg: SearchConfig, seed,
              iteration=-1, hot_fraction=0.3) -> Trajectory:
    env = make_env(env_cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E1F]))
    traj = Trajectory(env_cfg=env_cfg, seed=seed, network_version=bundle.step,
                      iteration=iteration)
    max_moves = env_cfg.size**2 if isinstance(env_cfg, BoardConfig) else env_cfg.frame_cap
    traj.observations.append(env.encode())
    move = 0
    while not env.terminal:
        temp = temperature_for_move(move, max_moves, hot_fraction)
        cfg = replace(search_cfg, temperature=temp)
        result = run_search(env.encode(), env.legal_actions(), bundle, cfg, rng)
        action = sample_action(result.policy, 1.0, rng)
        u, terminal, z = env.apply(action)
        traj.actions.append(action)
        traj.rewards.append(u)
        traj.policies.append(result.policy.astype(np.float32))
        traj.root_values.append(result.root_value)
        traj.observations.append(env.encode())
        move += 1
        if terminal:
            traj.outcome = float(z)
    return traj


def self_play_iteration(bundle, env_cfg, search_cfg, games, master_seed, iteration,
                        workers=1, hot_fraction=0.3):
    """Play `games` independent games. Seeds are preassigned per game and
    results collected in index order, so the record set is identical for
    any worker count."""
    seeds = [int(np.random.SeedSequence([master_seed, iteration, g]).generate_state(1)[0])
             for g in range(games)]

    def one(seed):
        return play_game(bundle, env_cfg, search_cfg, seed, iteration, hot_fraction)

    if workers <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, seeds))


# ---------------------------------------------------------------------------
# full training loop


def decoder_params(bundle):
    return {k: p for k, p in bundle.params.items() if k.startswith("d.")}


def train_run(cfg, out_dir, progress=None):
    """Alternate self-play and optimization per `cfg` (a RunConfig).

    Writes games/iter_XXX/*.txt, loss.csv, and checkpoints/ckpt_XXXX.lzc
    under out_dir; returns the final bundle and checkpoint paths.
    """
    env_cfg = cfg.env_config()
    net_cfg = cfg.network_config()
    search_cfg = cfg.search_config()
    bundle = NetworkBundle(net_cfg, seed=cfg.seed, env_text=cfg.env_text())
    buffer = ReplayBuffer("board" if cfg.env_mode == "board" else "pixel",
                          cfg.replay_capacity,
                          priority_alpha=cfg.priority_alpha,
                          priority_beta=cfg.priority_beta)
    opt = ad.OptimizerState(lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    opt_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0B7A]))

    ckpt_dir = os.path.join(out_dir, "checkpoints")
    games_dir = os.path.join(out_dir, "games")
    os.makedirs(ckpt_dir, exist_ok=True)
    os.makedirs(games_dir, exist_ok=True)
    checkpoints = []
    step = 0

    with open(os.path.join(out_dir, "loss.csv"), "w") as loss_fh:
        loss_fh.write(LOSS_CSV_HEADER + "\n")
        for iteration in range(1, cfg.iterations + 1):
            trajs = self_play_iteration(bundle, env_cfg, search_cfg,
                                        cfg.games_per_iteration, cfg.seed,
                                        iteration, workers=cfg.workers,
                                        hot_fraction=cfg.temperature_hot_fraction)
            iter_dir = os.path.join(games_dir, f"iter_{iteration:03d}")
            os.makedirs(iter_dir, exist_ok=True)
            for gi, traj in enumerate(trajs):
                write_record(traj, os.path.join(iter_dir, f"game_{gi:03d}.txt"))
                prios = None
                if cfg.env_mode == "pixel":
                    prios = initial_priorities(traj, cfg.discount, cfg.nstep)
                buffer.add(traj, prios)

            for _ in range(cfg.steps_per_iteration):
                batch = make_batch(buffer, cfg.batch_size, cfg.unroll_steps,
                                   net_cfg.num_actions, opt_rng,
                                   gamma=cfg.discount, nstep=cfg.nstep)
                loss, breakdown = unroll_loss(bundle, batch,
                                              lambda_d=cfg.lambda_d,
                                              lambda_c=cfg.lambda_c,
                                              c_l2=cfg.l2_coefficient)
                ad.zero_grad(bundle.params)
                ad.backward(loss)
                if cfg.decoder_grad_clip > 0:
                    ad.clip_grad_value(decoder_params(bundle), cfg.decoder_grad_clip)
                ad.sgd_step(bundle.params, opt)
                buffer.update_priorities(batch.picks, breakdown.v0_errors)
                step += 1
                bundle.step = step
                pol, val, rew, l2v, dec, cons = breakdown.sums()
                loss_fh.write(f"{step},{iteration},{breakdown.total:.8g},{pol:.8g},"
                              f"{val:.8g},{rew:.8g},{l2v:.8g},{dec:.8g},{cons:.8g}\n")
            loss_fh.flush()

            ckpt_path = os.path.join(ckpt_dir, f"ckpt_{iteration:04d}.lzc")
            save_bundle(bundle, ckpt_path)
            checkpoints.append(ckpt_path)
            if progress is not None:
                progress(iteration, bundle, trajs)

    return bundle, checkpoints
