"""UCT on K-armed bandits where every playout is a noisy value estimate.

Each play of arm i at its t-th selection returns X_{i,t} = mu_i +
delta_{i,t}. The noise models concretize the two working assumptions:
per-sample error magnitude may grow with the selection count (standing
in for unroll depth), while the running mean error per arm shrinks as
long as the noise stays centered. The "growing_biased" model violates
the second property on purpose (suboptimal arms get a constant boost),
and "shrinking_mean" decays its per-sample bias instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

NOISE_KINDS = ("zero", "growing_zero_mean", "growing_biased", "shrinking_mean")


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "growing_zero_mean"
    b0: float = 0.05       # base magnitude of the uniform noise component
    growth: float = 0.02   # per-selection growth rate of the magnitude
    bmax: float = 0.5      # magnitude cap
    bias: float = 0.2      # constant (or decaying) mean shift

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise model '{self.kind}' (choose from {NOISE_KINDS})")

    def bound(self, t):
        """Uniform-noise half-width at selection count t (1-based)."""
        if self.kind == "zero":
            return np.zeros_like(np.asarray(t, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "shrinking_mean":
            return np.full_like(t, self.b0)
        return np.minimum(self.b0 * (1.0 + self.growth * t), self.bmax)

    def sample(self, t, suboptimal, rng):
        """delta_{i,t} for arms with selection counts t (vectorized).

        `suboptimal` marks arms other than the best; only those receive
        the deliberate bias in the growing_biased model.
        """
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(t)
        b = self.bound(t)
        noise = rng.uniform(-1.0, 1.0, size=t.shape) * b
        if self.kind == "growing_biased":
            return noise + np.where(suboptimal, self.bias, 0.0)
        if self.kind == "shrinking_mean":
            return noise + self.bias / (1.0 + self.growth * t)
        return noise


@dataclass(frozen=True)
class BanditSpec:
    arms: int = 5
    gap: float = 0.1            # spacing between consecutive arm means
    noise: NoiseModel = field(default_factory=NoiseModel)
    horizon: int = 10_000
    replications: int = 1000

    def __post_init__(self):
        if self.horizon < self.arms:
            raise ConfigError("horizon must be at least the number of arms")
        if self.gap <= 0:
            raise ConfigError("arm means must have a unique maximum (gap > 0)")

    @property
    def means(self):
        """Arm means in [0, 1], arm 0 strictly best."""
        mu = 1.0 - self.gap * np.arange(self.arms)
        return np.clip(mu, 0.0, 1.0)

    @property
    def best_arm(self):
        return 0


def ucb_scores(means, counts, total):
    return means + np.sqrt(2.0 * np.log(total) / counts)


@dataclass
class UctTrace:
    selections: np.ndarray        # (T,) arm played each step
    counts: np.ndarray            # (K,) final play counts
    empirical_means: np.ndarray   # (K,) final X-bar
    deltas: np.ndarray            # (K,) final mean error X-bar - mu
    samples: list                 # per-arm list of X values
    noise: list                   # per-arm list of delta values
    final_arm: int


def run_uct(spec: BanditSpec, rng) -> UctTrace:
    """Single UCT run with a full trace (unplayed arms first, then the
    standard sqrt(2 ln n / n_i) bonus; ties go to the lowest index)."""
    k = spec.arms
    mu = spec.means
    subopt = np.arange(k) != spec.best_arm
    counts = np.zeros(k, dtype=np.int64)
    sums = np.zeros(k)
    samples = [[] for _ in range(k)]
    noise = [[] for _ in range(k)]
    selections = np.empty(spec.horizon, dtype=np.int64)

    for step in range(spec.horizon):
        if step < k:
            arm = step
        else:
            arm = int(np.argmax(ucb_scores(sums / counts, counts, step)))
        t_sel = counts[arm] + 1
        delta = float(spec.noise.sample(np.array([t_sel]), np.array([subopt[arm]]), rng)[0])
        x = mu[arm] + delta
        counts[arm] += 1
        sums[arm] += x
        samples[arm].append(x)
        noise[arm].append(delta)
        selections[step] = arm

    means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return UctTrace(selections=selections, counts=counts, empirical_means=means,
                    deltas=means - mu, samples=samples, noise=noise,
                    final_arm=int(selections[-1]))


def log_spaced_horizons(horizon, points=9, start=100):
    """Unique integer horizons on a log grid from `start` to `horizon`."""
    start = min(start, horizon)
    grid = np.unique(np.round(np.logspace(math.log10(start), math.log10(horizon),
                                          points)).astype(int))
    return [int(h) for h in grid if h >= 1]


def _vector_uct(spec: BanditSpec, replications, horizons, rng, collect_mean_error=False):
    """All replications stepped in lockstep (vectorized over the
    replication axis). Returns failure indicators per horizon and,
    optionally, |mean error| curves per (arm, play count)."""
    k, r = spec.arms, replications
    mu = spec.means
    subopt = np.arange(k) != spec.best_arm
    counts = np.zeros((r, k), dtype=np.int64)
    sums = np.zeros((r, k))
    dsums = np.zeros((r, k))
    horizon_set = set(horizons)
    fail = {}
    rows = np.arange(r)

    if collect_mean_error:
        err_sum = np.zeros((k, spec.horizon + 1))
        err_cnt = np.zeros((k, spec.horizon + 1), dtype=np.int64)

    for step in range(max(horizons)):
        if step < k:
            arms = np.full(r, step)
        else:
            with np.errstate(divide="ignore"):
                scores = (sums / counts) + np.sqrt(2.0 * np.log(step) / counts)
            arms = np.argmax(scores, axis=1)
        t_sel = counts[rows, arms] + 1
        deltas = spec.noise.sample(t_sel, subopt[arms], rng)
        counts[rows, arms] += 1
        sums[rows, arms] += mu[arms] + deltas
        dsums[rows, arms] += deltas
        if collect_mean_error:
            mean_err = np.abs(dsums[rows, arms] / counts[rows, arms])
            np.add.at(err_sum, (arms, t_sel), mean_err)
            np.add.at(err_cnt, (arms, t_sel), 1)
        if (step + 1) in horizon_set:
            fail[step + 1] = (arms != spec.best_arm).astype(np.float64)

    if collect_mean_error:
        return fail, (err_sum, err_cnt)
    return fail, None


def failure_rate(spec: BanditSpec, horizons=None, seed=0):
    """Monte-Carlo Pr[I_T != I*] at log-spaced horizons.

    Returns rows (T, failure_probability, binomial_stderr, replications).
    """
    if spec.replications < 100:
        raise ConfigError("need at least 100 replications")
    horizons = horizons or log_spaced_horizons(spec.horizon)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA0D]))
    fail, _ = _vector_uct(spec, spec.replications, horizons, rng)
    rows = []
    for t in horizons:
        p = float(fail[t].mean())
        stderr = math.sqrt(p * (1.0 - p) / spec.replications)
        rows.append((t, p, stderr, spec.replications))
    return rows


def mean_error_curve(spec: BanditSpec, seed=0, max_plays=None):
    """E|Delta_i| as a function of the number of plays of each arm.

    Returns rows (arm, plays, mean_abs_error, samples)."""
    if spec.replications < 100:
        raise ConfigError("need at least 100 replications")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xEC0E]))
    _, collected = _vector_uct(spec, spec.replications, [spec.horizon], rng,
                               collect_mean_error=True)
    err_sum, err_cnt = collected
    rows = []
    cap = max_plays or spec.horizon
    for arm in range(spec.arms):
        for n in range(1, cap + 1):
            if err_cnt[arm, n] == 0:
                continue
            rows.append((arm, n, float(err_sum[arm, n] / err_cnt[arm, n]),
                         int(err_cnt[arm, n])))
    return rows


def decomposition_residual(trace: UctTrace, spec: BanditSpec):
    """max_i |(X-bar_i - mu_i) - mean(delta_i)| -- zero in exact arithmetic."""
    worst = 0.0
    for i in range(spec.arms):
        if not trace.samples[i]:
            continue
        xbar = float(np.mean(trace.samples[i]))
        dbar = float(np.mean(trace.noise[i]))
        worst = max(worst, abs((xbar - spec.means[i]) - dbar))
    return worst
