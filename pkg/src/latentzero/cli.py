"""Command-line surface: train, selfplay, analyze, bandit, eval.

Every command echoes its effective configuration into the output
directory, writes a manifest listing all produced files, and (by
default) renders a PNG next to each CSV it emits. Exit codes: 0 ok,
2 configuration problem, 3 non-finite numerics, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import analysis as an
from . import bandit as bd
from . import figures
from .config import default_config, load_config
from .envs import BoardConfig
from .errors import ArtifactError, ConfigError, LatentZeroError, NumericError
from .manifest import write_manifest
from .mcts import run_search
from .networks import load_bundle
from .replay import write_record
from .training import self_play_iteration, train_run


def _resolve_out(args):
    out = os.environ.get("LATENTZERO_OUT") or args.out or "runs/latest"
    os.makedirs(out, exist_ok=True)
    return out


def _load_cfg(args, env_text=None, **overrides):
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if args.config:
        return load_config(args.config, overrides)
    if env_text:
        # no config file: adopt the checkpoint's environment block
        from .config import parse_config_text

        return parse_config_text(env_text, overrides)
    return default_config(**overrides)


def _echo_config(cfg, out_dir):
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.effective_text())


def _check_env_matches(cfg, bundle):
    if cfg.env_text() != bundle.env_text:
        raise ArtifactError(
            "checkpoint was trained on a different environment:\n"
            f"run config:\n{cfg.env_text()}\ncheckpoint:\n{bundle.env_text}")


def _render(path, enabled):
    if enabled and path and path.endswith(".csv"):
        figures.render_for(path)


def cmd_train(args):
    cfg = _load_cfg(args)
    out_dir = _resolve_out(args)
    _echo_config(cfg, out_dir)
    phases = {}
    t0 = time.time()
    bundle, checkpoints = train_run(cfg, out_dir)
    phases["train"] = time.time() - t0
    _render(os.path.join(out_dir, "loss.csv"), cfg.render_figures)
    write_manifest(out_dir, cfg.config_hash(), checkpoints, phases)
    print(f"trained {cfg.iterations} iterations ({bundle.step} steps) -> {out_dir}")
    return 0


def cmd_selfplay(args):
    bundle = load_bundle(args.checkpoint)
    cfg = _load_cfg(args, env_text=bundle.env_text)
    _check_env_matches(cfg, bundle)
    out_dir = _resolve_out(args)
    _echo_config(cfg, out_dir)
    t0 = time.time()
    trajs = self_play_iteration(bundle, cfg.env_config(), cfg.search_config(),
                                args.games, cfg.seed, iteration=0,
                                workers=cfg.workers)
    games_dir = os.path.join(out_dir, "games", "iter_000")
    os.makedirs(games_dir, exist_ok=True)
    for gi, traj in enumerate(trajs):
        write_record(traj, os.path.join(games_dir, f"game_{gi:03d}.txt"))
    write_manifest(out_dir, cfg.config_hash(), [], {"selfplay": time.time() - t0})
    print(f"wrote {len(trajs)} games -> {games_dir}")
    return 0


def _analysis_trajectories(cfg, bundle, run_dir, min_length=0):
    """Recorded games when the checkpoint belongs to a run directory,
    fresh self-play otherwise."""
    games_dir = os.path.join(run_dir, "games") if run_dir else None
    if games_dir and os.path.isdir(games_dir):
        tagged = an.load_tagged_trajectories(games_dir, cfg.recent_fraction,
                                             cfg.early_fraction)
        return tagged
    scfg = cfg.search_config(simulations=cfg.analysis_simulations)
    recent = an.generate_trajectories(bundle, cfg.env_config(), scfg,
                                      cfg.analysis_games, cfg.seed,
                                      min_length=min_length)
    return an.TrajectorySet(recent=recent, early=[])


def cmd_analyze(args):
    bundle = load_bundle(args.checkpoint)
    cfg = _load_cfg(args, env_text=bundle.env_text)
    _check_env_matches(cfg, bundle)
    out_dir = _resolve_out(args)
    _echo_config(cfg, out_dir)
    run_dir = os.path.dirname(os.path.dirname(os.path.abspath(args.checkpoint)))
    ana_dir = os.path.join(out_dir, "analysis")
    os.makedirs(ana_dir, exist_ok=True)
    t0 = time.time()
    produced = []

    which = args.which
    if which == "errors":
        tagged = _analysis_trajectories(cfg, bundle, run_dir)
        recent_path = os.path.join(ana_dir, "errors_recent.csv")
        an.write_error_suite_csv(bundle, tagged.recent, recent_path)
        produced.append(recent_path)
        early_path = os.path.join(ana_dir, "errors_early.csv")
        an.write_error_suite_csv(bundle, tagged.early or tagged.recent, early_path)
        produced.append(early_path)
    elif which == "pca":
        tagged = _analysis_trajectories(cfg, bundle, run_dir)
        path = os.path.join(ana_dir, "pca.csv")
        an.pca_csv(bundle, tagged.recent, path)
        produced.append(path)
    elif which == "fig9":
        tagged = _analysis_trajectories(cfg, bundle, run_dir)
        rows, skipped = an.beyond_terminal_stats(
            bundle, tagged.recent, cfg.fig9_simulations,
            ks=range(1, cfg.fig9_max_k + 1), seed=cfg.seed)
        path = os.path.join(ana_dir, "fig9.csv")
        an.write_rows_csv(path, "simulations,k,proportion,games", rows)
        produced.append(path)
        if skipped:
            print(f"note: {skipped} games shorter than {cfg.fig9_max_k} steps skipped")
    elif which == "fig10":
        tagged = _analysis_trajectories(cfg, bundle, run_dir)
        rows = an.beyond_terminal_value_error(bundle, tagged.recent, cfg.fig10_max_k)
        path = os.path.join(ana_dir, "fig10.csv")
        an.write_rows_csv(path, "k,mse,stderr,games", rows)
        produced.append(path)
    elif which == "fig11":
        tagged = _analysis_trajectories(cfg, bundle, run_dir)
        rows = an.nstep_mean_value_error(bundle, tagged.recent, tuple(cfg.fig11_windows))
        path = os.path.join(ana_dir, "fig11.csv")
        an.write_rows_csv(path, "t,N,mse,stderr,samples", rows)
        produced.append(path)
    elif which == "fig12":
        env_cfg = cfg.env_config()
        rows = an.sim_sweep(bundle, env_cfg, cfg.sweep_simulations, cfg.sweep_games,
                            anchor=cfg.anchor_simulations, seed=cfg.seed,
                            opening_moves=cfg.opening_temperature_moves)
        path = os.path.join(ana_dir, "fig12.csv")
        an.write_rows_csv(path, "simulations,performance_pct,raw,games", rows)
        produced.append(path)
    elif which == "tree":
        tagged = _analysis_trajectories(cfg, bundle, run_dir, min_length=2)
        traj = max(tagged.recent, key=len)
        mid = max(0, len(traj) - 3)
        env = an.replay_env(traj.env_cfg, traj.seed, traj.actions[:mid])
        res = run_search(env.encode(), env.legal_actions(), bundle,
                         cfg.search_config(simulations=cfg.analysis_simulations,
                                           add_noise=False),
                         np.random.default_rng(cfg.seed))
        tree_dir = os.path.join(ana_dir, "tree")
        table, dot, count = an.export_tree(res.root, bundle, env, tree_dir)
        produced += [table, dot]
        print(f"exported {count} nodes -> {tree_dir}")
    else:
        raise ConfigError(f"unknown analysis '{which}'")

    for path in produced:
        _render(path, cfg.render_figures)
    write_manifest(out_dir, cfg.config_hash(), [], {f"analyze_{which}": time.time() - t0})
    print(f"analysis '{which}' -> {ana_dir}")
    return 0


def cmd_bandit(args):
    cfg = _load_cfg(args)
    out_dir = _resolve_out(args)
    _echo_config(cfg, out_dir)
    t0 = time.time()
    noise = bd.NoiseModel(kind=cfg.bandit_noise, b0=cfg.bandit_b0,
                          growth=cfg.bandit_growth, bmax=cfg.bandit_bmax,
                          bias=cfg.bandit_bias)
    spec = bd.BanditSpec(arms=cfg.bandit_arms, gap=cfg.bandit_gap, noise=noise,
                         horizon=cfg.bandit_horizon,
                         replications=cfg.bandit_replications)
    fail_rows = bd.failure_rate(spec, seed=cfg.seed)
    fail_path = os.path.join(out_dir, "bandit_failure_rate.csv")
    an.write_rows_csv(fail_path, "T,failure_rate,stderr,replications", fail_rows)
    err_rows = bd.mean_error_curve(spec, seed=cfg.seed)
    err_path = os.path.join(out_dir, "bandit_mean_error.csv")
    an.write_rows_csv(err_path, "arm,plays,mean_abs_error,samples", err_rows)
    for path in (fail_path, err_path):
        _render(path, cfg.render_figures)
    write_manifest(out_dir, cfg.config_hash(), [], {"bandit": time.time() - t0})
    print(f"bandit lab ({cfg.bandit_noise}) -> {out_dir}")
    return 0


def cmd_eval(args):
    t0 = time.time()
    bundle_a = load_bundle(args.checkpoint_a)
    bundle_b = load_bundle(args.checkpoint_b)
    if bundle_a.env_text != bundle_b.env_text:
        raise ArtifactError("checkpoints were trained on different environments")
    cfg = _load_cfg(args, env_text=bundle_a.env_text)
    _check_env_matches(cfg, bundle_a)
    out_dir = _resolve_out(args)
    _echo_config(cfg, out_dir)
    if not isinstance(cfg.env_config(), BoardConfig):
        raise ConfigError("eval rates board checkpoints only")
    n_games = args.games or cfg.eval_games
    sims = args.sims or cfg.eval_simulations
    report = an.elo_eval(bundle_a, bundle_b, cfg.env_config(), n_games=n_games,
                         simulations=sims, seed=cfg.seed,
                         opening_moves=cfg.opening_temperature_moves)
    black_games = sum(1 for r in report.records if r["a_is_black"])
    lines = [
        f"elo_a = {report.elo:.2f}",
        "elo_b = 1000.00 (anchor)",
        f"wins = {report.wins}",
        f"draws = {report.draws}",
        f"losses = {report.losses}",
        f"score_rate = {report.score_rate:.4f}",
        f"games = {report.n_games}",
        f"a_black_games = {black_games}",
        f"a_white_games = {report.n_games - black_games}",
        f"simulations = {sims}",
    ]
    report_path = os.path.join(out_dir, "elo_report.txt")
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    games_path = os.path.join(out_dir, "eval_games.csv")
    with open(games_path, "w") as fh:
        fh.write("game,a_is_black,outcome,actions\n")
        for r in report.records:
            acts = " ".join(str(a) for a in r["actions"])
            fh.write(f"{r['game']},{int(r['a_is_black'])},{r['outcome']},{acts}\n")
    write_manifest(out_dir, cfg.config_hash(), [], {"eval": time.time() - t0})
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="latentzero")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output directory (LATENTZERO_OUT overrides)")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p_train = sub.add_parser("train", help="self-play + optimization run")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sp = sub.add_parser("selfplay", help="generate games from a checkpoint")
    common(p_sp, checkpoint=True)
    p_sp.add_argument("--games", type=int, default=20)
    p_sp.set_defaults(func=cmd_selfplay)

    p_an = sub.add_parser("analyze", help="latent-state analyses")
    common(p_an, checkpoint=True)
    p_an.add_argument("--which", required=True,
                      choices=["errors", "pca", "fig9", "fig10", "fig11", "fig12", "tree"])
    p_an.set_defaults(func=cmd_analyze)

    p_bd = sub.add_parser("bandit", help="UCT-under-noise bench")
    common(p_bd)
    p_bd.set_defaults(func=cmd_bandit)

    p_ev = sub.add_parser("eval", help="Elo of checkpoint A vs anchored B")
    p_ev.add_argument("--config", help="key = value config file")
    p_ev.add_argument("--out")
    p_ev.add_argument("--seed", type=int)
    p_ev.add_argument("--checkpoint-a", required=True)
    p_ev.add_argument("--checkpoint-b", required=True)
    p_ev.add_argument("--games", type=int)
    p_ev.add_argument("--sims", type=int)
    p_ev.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 4
    except LatentZeroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
