"""Episode runner and the metrics computed from its logs."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .env import (EnvironmentInstance, action_features, draw_noise, episode_streams,
                  generate_instance, oracle_quantities, realize_weights, sample_round_context)
from .linalg import NumericalError, init_state
from .policy import (ALWAYS_CONSERVATIVE, C2UCB, CCCONUCB, FRESH, History, PolicyConfig,
                     apply_feedback, step)
from .reward import A0, RewardFunction, base_action, evaluate

KNOWN = "ccconucb_known"
UNKNOWN = "ccconucb_unknown"
POLICIES = {
    KNOWN: CCCONUCB,
    UNKNOWN: CCCONUCB,
    "c2ucb": C2UCB,
    "conservative": ALWAYS_CONSERVATIVE,
}


class EpisodeAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.2
    lam: float | None = None  # defaults to the instance's L
    S: float | None = None  # defaults to the instance's S
    delta: float = 0.1
    recompute_mode: str = FRESH
    refresh_every: int = 1000
    radius_scale: float = 1.0
    probe_every: int | None = None  # None: every round up to T = 10^4, else every 50th


@dataclass
class EpisodeTrace:
    """Per-round quantities the probes need; index 0 is the initial state."""

    log_det: np.ndarray
    n: np.ndarray
    d: np.ndarray
    norm_sum: np.ndarray  # sum over played rows of ||x||^2 in V_t^-1, NaN when not probed
    coverage_slack: np.ndarray  # per round t >= 1, +inf when not probed
    probe_every: int


@dataclass
class RunLog:
    meta: dict
    actions: list
    conservative: np.ndarray
    weights: list
    expected: np.ndarray
    optimal: np.ndarray
    psi: np.ndarray
    threshold: np.ndarray
    # unknown-mu0 rounds with d_{t-1} >= (1 - alpha) t, where psi is not a valid lower bound
    outside_regime: np.ndarray
    trace: EpisodeTrace | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return len(self.expected)

    def records(self):
        for i in range(self.T):
            yield {
                "t": i + 1,
                "action": self.actions[i].to_json(),
                "was_conservative": bool(self.conservative[i]),
                "weights": [float(w) for w in self.weights[i]],
                "expected": float(self.expected[i]),
                "optimal": float(self.optimal[i]),
                "psi": float(self.psi[i]),
                "threshold": float(self.threshold[i]),
                "outside_regime": bool(self.outside_regime[i]),
            }

    def to_ndjson(self) -> str:
        lines = [json.dumps({"meta": self.meta}, sort_keys=True)]
        lines.extend(json.dumps(r, sort_keys=True) for r in self.records())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_ndjson(cls, text: str) -> RunLog:
        lines = text.splitlines()
        meta = json.loads(lines[0])["meta"]
        recs = [json.loads(line) for line in lines[1:]]
        actions = [A0 if r["action"] == "A0" else base_action(r["action"]) for r in recs]
        return cls(
            meta=meta, actions=actions,
            conservative=np.array([r["was_conservative"] for r in recs], dtype=bool),
            weights=[np.array(r["weights"]) for r in recs],
            expected=np.array([r["expected"] for r in recs]),
            optimal=np.array([r["optimal"] for r in recs]),
            psi=np.array([r["psi"] for r in recs]),
            threshold=np.array([r["threshold"] for r in recs]),
            outside_regime=np.array([r["outside_regime"] for r in recs], dtype=bool),
        )


def _policy_config(instance: EnvironmentInstance, policy: str, cfg: RunConfig) -> PolicyConfig:
    return PolicyConfig(alpha=cfg.alpha, K=instance.config.K, reward_function=instance.config.reward,
                        mu0=instance.mu0_true if policy in (KNOWN, "c2ucb") else None,
                        recompute_mode=cfg.recompute_mode)


def run_episode(instance: EnvironmentInstance, policy: str, cfg: RunConfig, T: int,
                episode_seed: int, *, probes: bool = True) -> RunLog:
    """Play ``policy`` for T rounds on ``instance``.

    C2UCB audits psi against the true mu0; only the CCConUCB policies act on it.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {sorted(POLICIES)}")
    if T < 1:
        raise ValueError("T must be >= 1")
    kind = POLICIES[policy]
    gen = instance.config
    f = gen.reward
    d, K, L = gen.d, gen.K, instance.L
    lam = cfg.lam if cfg.lam is not None else L
    S = cfg.S if cfg.S is not None else gen.S
    probe_every = cfg.probe_every or (1 if T <= 10**4 else 50)
    pcfg = _policy_config(instance, policy, cfg)
    state = init_state(d, lam, S, cfg.delta, L=L, radius_scale=cfg.radius_scale,
                       refresh_every=cfg.refresh_every)
    hist = History(d, capacity=min(T * K, 4096) + 1)
    ctx_rng, noise_rng = episode_streams(instance, episode_seed)
    theta = instance.theta_star
    a0_wstar = instance.conservative_weights
    mu0 = instance.mu0_true

    actions, weights = [], []
    conservative = np.zeros(T, dtype=bool)
    expected, optimal = np.empty(T), np.empty(T)
    psi, threshold = np.empty(T), np.empty(T)
    log_det = np.empty(T + 1)
    n_tr = np.zeros(T + 1, dtype=np.int64)
    d_tr = np.zeros(T + 1, dtype=np.int64)
    norm_sum = np.full(T + 1, np.nan)
    cov = np.full(T, np.inf)
    outside = np.zeros(T, dtype=bool)
    log_det[0] = state.log_det_V
    norm_sum[0] = 0.0

    wstar_rows = np.empty(hist._X.shape[0])
    cached_norm, cached_slack, stale = 0.0, math.inf, False

    try:
        for i in range(T):
            t = i + 1
            ctx = sample_round_context(instance, t, ctx_rng)
            noise = draw_noise(instance, noise_rng)
            wstar = ctx.base_features @ theta
            _, best_val, _ = oracle_quantities(instance, ctx, f, wstar)
            dec = step(kind, state, hist, ctx, pcfg)
            act = dec.action
            w = realize_weights(instance, ctx, act, noise=noise)
            played_wstar = a0_wstar if act.is_conservative else wstar[list(act.arms)]
            probe_now = probes and kind != ALWAYS_CONSERVATIVE and t % probe_every == 0
            if dec.ingest:
                X = action_features(ctx, act)
                if probe_now:
                    _, s_now = kernels.scan_rows(np.ascontiguousarray(X), played_wstar,
                                                 state.theta_hat, state.Vinv, state.H)
                    cov[i] = s_now
                start = hist.n_rows
                apply_feedback(state, hist, dec, ctx, w, inplace=True)
                if hist.n_rows > len(wstar_rows):
                    wstar_rows = np.concatenate([wstar_rows, np.empty(len(hist._X) - len(wstar_rows))])
                wstar_rows[start:hist.n_rows] = played_wstar
                stale = True
            else:
                apply_feedback(state, hist, dec, ctx, w, inplace=True)
                if stale and probes and kind == CCCONUCB:
                    # the conservative-round bound needs the norm sum at every A0 round
                    probe_now = True
            if probe_now:
                if stale:
                    cached_norm, cached_slack = kernels.scan_rows(
                        hist.features, wstar_rows[:hist.n_rows], state.theta_hat, state.Vinv, state.H)
                    stale = False
                norm_sum[t] = cached_norm
                cov[i] = min(cov[i], cached_slack)
            elif not stale:
                norm_sum[t] = cached_norm

            actions.append(act)
            weights.append(w)
            conservative[i] = dec.was_conservative
            expected[i] = mu0 if act.is_conservative else evaluate(f, played_wstar)
            optimal[i] = max(best_val, mu0)
            psi[i], threshold[i] = dec.psi, dec.threshold
            outside[i] = dec.outside_lower_bound_regime
            log_det[t] = state.log_det_V
            n_tr[t], d_tr[t] = hist.n, hist.conservative_count
    except NumericalError as exc:
        raise EpisodeAborted(f"{policy} seed={episode_seed} aborted at round {t}: {exc}") from exc

    meta = {
        "policy": policy,
        "instance_seed": instance.seed,
        "episode_seed": int(episode_seed),
        "T": T,
        "mu0": mu0,
        "outside_regime_rounds": int(np.count_nonzero(outside)),
        "config": {
            "alpha": cfg.alpha, "lambda": lam, "S": S, "delta": cfg.delta,
            "recompute_mode": cfg.recompute_mode, "radius_scale": cfg.radius_scale,
            "M": gen.M, "d": d, "K": K, "L": L, "reward": f.to_json(),
            "noise": asdict(gen.noise), "conservative_ranks": list(gen.conservative_ranks),
        },
    }
    trace = EpisodeTrace(log_det, n_tr, d_tr, norm_sum, cov, probe_every)
    return RunLog(meta, actions, conservative, weights, expected, optimal, psi, threshold, outside, trace)


def _episode_job(args):
    gen_cfg, instance_seed, policy, cfg, T, episode_seed, probes = args
    instance = generate_instance(gen_cfg, instance_seed)
    return run_episode(instance, policy, cfg, T, episode_seed, probes=probes)


def iter_many(jobs, workers: int = 1):
    """Yield RunLogs for (gen_cfg, instance_seed, policy, cfg, T, episode_seed, probes) jobs.

    Results arrive in job order regardless of ``workers``.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        for j in jobs:
            yield _episode_job(j)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_episode_job, jobs, chunksize=max(1, len(jobs) // (4 * workers)))


def run_many(jobs, workers: int = 1) -> list[RunLog]:
    return list(iter_many(jobs, workers))


# -- metrics ---------------------------------------------------------------

def pseudo_regret(log: RunLog) -> np.ndarray:
    return np.cumsum(log.optimal - log.expected)


def constraint_violations(log: RunLog, alpha: float, mu0_true: float, *, realized: bool = False) -> int:
    """Rounds where cumulative reward falls below (1 - alpha) t mu0.

    ``realized`` counts against the observed rewards instead of the
    expected ones.
    """
    if realized:
        f = RewardFunction(**log.meta["config"]["reward"])
        per_round = np.array([evaluate(f, w) for w in log.weights])
    else:
        per_round = log.expected
    t = np.arange(1, log.T + 1)
    return int(np.count_nonzero(np.cumsum(per_round) < (1.0 - alpha) * t * mu0_true))


def selection_counts(log: RunLog) -> tuple[int, int]:
    d_T = int(np.count_nonzero(log.conservative))
    return log.T - d_T, d_T


def endurance_time(ccc_log: RunLog, conservative_log: RunLog) -> int | None:
    """First round at which the learner's cumulative expected reward strictly leads."""
    if ccc_log.T != conservative_log.T:
        raise ValueError("logs cover different horizons")
    ahead = np.cumsum(ccc_log.expected) > np.cumsum(conservative_log.expected)
    idx = np.flatnonzero(ahead)
    return int(idx[0]) + 1 if idx.size else None


def _config_key(log: RunLog) -> str:
    return json.dumps({"policy": log.meta["policy"], "T": log.T, "config": log.meta["config"]}, sort_keys=True)


@dataclass
class RegretSummary:
    policy: str
    mean_avg_regret: np.ndarray
    std_avg_regret: np.ndarray
    n_runs: int

    def csv_rows(self, every: int = 1):
        T = len(self.mean_avg_regret)
        for i in range(0, T, every):
            yield (i + 1, float(self.mean_avg_regret[i]), float(self.std_avg_regret[i]), self.policy)
        if (T - 1) % every:
            yield (T, float(self.mean_avg_regret[-1]), float(self.std_avg_regret[-1]), self.policy)


CSV_HEADER = ("t", "mean_avg_regret", "std_avg_regret", "policy")


def aggregate(logs: list[RunLog]) -> RegretSummary:
    """Mean and (population) std of r_t / t across runs sharing one config."""
    if not logs:
        raise ValueError("nothing to aggregate")
    key = _config_key(logs[0])
    if any(_config_key(g) != key for g in logs[1:]):
        raise ValueError("aggregate needs logs from a single policy and config")
    return summarize_curves(logs[0].meta["policy"], [average_regret(g) for g in logs])


def average_regret(log: RunLog) -> np.ndarray:
    return pseudo_regret(log) / np.arange(1, log.T + 1)


def summarize_curves(label: str, curves) -> RegretSummary:
    """Mean and population std of equal-length r_t / t curves."""
    curves = np.stack(curves)
    return RegretSummary(label, curves.mean(axis=0), curves.std(axis=0), len(curves))


def write_csv(path, summaries: list[RegretSummary], every: int = 1) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for s in summaries:
            for t, m, sd, p in s.csv_rows(every):
                fh.write(f"{t},{m!r},{sd!r},{p}\n")
