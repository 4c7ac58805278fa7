"""Self-contained tuning run: tic-tac-toe desk config."""
import sys
import time

sys.path.insert(0, "tests")
sys.path.insert(0, ".")

from latentzero.config import default_config
from latentzero.training import train_run
from scratch_eval import evaluate

OUT = sys.argv[1] if len(sys.argv) > 1 else "/tmp/ttt_run4"

cfg = default_config(
    env_mode="board", board_size=3, board_connect=3,
    hidden_channels=24, num_blocks=2, num_simulations=40,
    iterations=30, games_per_iteration=40, steps_per_iteration=300,
    batch_size=64, lr=0.01, replay_capacity=3000,
    workers=1, seed=7,
)


def main():
    t0 = time.time()
    print("MARKER: clean run, out =", OUT, flush=True)

    def progress(iteration, bundle, trajs):
        if iteration % 5 == 0:
            w, d, l, hits, total = evaluate(bundle, cfg.env_config())
            print(f"[{time.time()-t0:7.1f}s] iter {iteration}: vs-random W/D/L = {w}/{d}/{l} "
                  f"(non-loss {100*(w+d)/60:.0f}%), 1-ply-win {hits}/{total}", flush=True)

    train_run(cfg, OUT, progress=progress)
    print(f"total {time.time()-t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
