"""Seeded synthetic linear-reward environments.

Random streams are derived from ``numpy.random.SeedSequence`` keyed by
(instance seed, episode seed, purpose), so contexts and noise are shared
across policies run on the same episode seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .reward import A0, ActionSet, RewardFunction, argmax_super_arm, evaluate

MAX_DRAWS = 10**6

_INSTANCE_STREAM = 0
_CONTEXT_STREAM = 1
_NOISE_STREAM = 2


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"  # or "uniform"
    scale: float = 1.0  # sigma for gaussian, half-width for uniform

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        # both laws are 1-sub-Gaussian only for scale <= 1
        if not 0 <= self.scale <= 1:
            raise ValueError(f"noise scale must lie in [0, 1], got {self.scale}")


@dataclass(frozen=True)
class GenConfig:
    M: int = 20
    d: int = 5
    K: int = 2
    S: float = 3.0
    L: float | None = None  # defaults to d * max(|low|, |high|)^2
    n_conservative: int | None = None  # defaults to K
    feature_low: float = -1.0
    feature_high: float = 1.0
    conservative_ranks: tuple[int, int] = (8, 9)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    reward: RewardFunction = field(default_factory=RewardFunction)
    theta_star: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("M", "d", "K"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.feature_low < self.feature_high:
            raise ValueError("feature_low must be < feature_high")
        hi, lo = self.conservative_ranks
        if not 1 <= hi <= lo <= self.M:
            raise ValueError(f"conservative_ranks {self.conservative_ranks} must satisfy 1 <= upper <= lower <= M")
        if self.n_conservative is not None and not 1 <= self.n_conservative <= self.K:
            raise ValueError("n_conservative must lie in [1, K]")
        if self.theta_star is not None and len(self.theta_star) != self.d:
            raise ValueError("theta_star has the wrong dimension")

    @property
    def feature_bound(self) -> float:
        if self.L is not None:
            return float(self.L)
        return self.d * max(abs(self.feature_low), abs(self.feature_high)) ** 2

    @property
    def conservative_size(self) -> int:
        return self.n_conservative or self.K


@dataclass(frozen=True)
class RoundContext:
    t: int
    base_features: np.ndarray
    conservative_features: np.ndarray


@dataclass
class EnvironmentInstance:
    config: GenConfig
    seed: int
    theta_star: np.ndarray
    conservative_features: np.ndarray
    reference_weights: np.ndarray
    mu0_true: float

    @property
    def L(self) -> float:
        return self.config.feature_bound

    @property
    def conservative_weights(self) -> np.ndarray:
        return self.conservative_features @ self.theta_star

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["conservative_ranks"] = list(self.config.conservative_ranks)
        return json.dumps({
            "seed": self.seed,
            "config": cfg,
            "theta_star": self.theta_star.tolist(),
            "conservative_features": self.conservative_features.tolist(),
            "reference_weights": self.reference_weights.tolist(),
            "mu0_true": self.mu0_true,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> EnvironmentInstance:
        doc = json.loads(text)
        cfg = dict(doc["config"])
        cfg["noise"] = NoiseSpec(**cfg["noise"])
        cfg["reward"] = RewardFunction(**cfg["reward"])
        cfg["conservative_ranks"] = tuple(cfg["conservative_ranks"])
        if cfg["theta_star"] is not None:
            cfg["theta_star"] = tuple(cfg["theta_star"])
        return cls(
            config=GenConfig(**cfg), seed=doc["seed"],
            theta_star=np.array(doc["theta_star"]),
            conservative_features=np.array(doc["conservative_features"]),
            reference_weights=np.array(doc["reference_weights"]),
            mu0_true=doc["mu0_true"],
        )


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([k & (2**64 - 1) for k in key])))


def episode_streams(instance: EnvironmentInstance, episode_seed: int):
    """Independent (context, noise) generators for one episode."""
    return (_rng(instance.seed, episode_seed, _CONTEXT_STREAM),
            _rng(instance.seed, episode_seed, _NOISE_STREAM))


def _draw_features(cfg: GenConfig, theta: np.ndarray, n: int, rng: np.random.Generator,
                   lo: float = 0.0, hi: float = math.inf) -> np.ndarray:
    """Rejection-sample n features with norm^2 <= L and lo <= theta.x <= hi."""
    L = cfg.feature_bound
    out = np.empty((n, cfg.d))
    todo = np.arange(n)
    draws = 0
    while todo.size:
        batch = max(todo.size, 64)
        cand = rng.uniform(cfg.feature_low, cfg.feature_high, size=(batch, cfg.d))
        draws += batch
        w = cand @ theta
        ok = (np.einsum("ij,ij->i", cand, cand) <= L) & (w >= lo) & (w <= hi)
        good = cand[ok][: todo.size]
        out[todo[: len(good)]] = good
        todo = todo[len(good):]
        if todo.size and draws >= MAX_DRAWS:
            raise SamplingError(
                f"rejection sampling exceeded {MAX_DRAWS} draws (target weight range [{lo}, {hi}]); "
                "widen the feature law or the conservative rank bracket"
            )
    return out


def generate_instance(gen_cfg: GenConfig, seed: int) -> EnvironmentInstance:
    rng = _rng(seed, _INSTANCE_STREAM)
    if gen_cfg.theta_star is not None:
        theta = np.asarray(gen_cfg.theta_star, dtype=np.float64)
    else:
        theta = rng.standard_normal(gen_cfg.d)
    norm = float(np.linalg.norm(theta))
    if norm > gen_cfg.S:
        theta = theta * (gen_cfg.S / norm)
    reference = np.sort(_draw_features(gen_cfg, theta, gen_cfg.M, rng) @ theta)[::-1]
    upper_rank, lower_rank = gen_cfg.conservative_ranks
    hi, lo = reference[upper_rank - 1], reference[lower_rank - 1]
    cons = _draw_features(gen_cfg, theta, gen_cfg.conservative_size, rng, lo=lo, hi=hi)
    mu0 = evaluate(gen_cfg.reward, cons @ theta)
    return EnvironmentInstance(gen_cfg, int(seed), theta, cons, reference, mu0)


def sample_round_context(instance: EnvironmentInstance, t: int, rng: np.random.Generator) -> RoundContext:
    X = _draw_features(instance.config, instance.theta_star, instance.config.M, rng)
    return RoundContext(t, X, instance.conservative_features)


def expected_weights(instance: EnvironmentInstance, ctx: RoundContext) -> np.ndarray:
    return ctx.base_features @ instance.theta_star


def draw_noise(instance: EnvironmentInstance, rng: np.random.Generator) -> np.ndarray:
    """One noise value for every base arm followed by every conservative arm."""
    n = instance.config.M + len(instance.conservative_features)
    spec = instance.config.noise
    if spec.kind == "gaussian":
        return spec.scale * rng.standard_normal(n)
    return rng.uniform(-spec.scale, spec.scale, size=n)


def action_features(ctx: RoundContext, action: ActionSet) -> np.ndarray:
    if action.is_conservative:
        return ctx.conservative_features
    return ctx.base_features[list(action.arms)]


def realize_weights(instance: EnvironmentInstance, ctx: RoundContext, action: ActionSet,
                    rng: np.random.Generator | None = None, noise: np.ndarray | None = None) -> np.ndarray:
    """Observed weights of the played arms.

    Noise for every arm is drawn each call (or passed in), so the stream
    advances identically whatever action is played.
    """
    if noise is None:
        noise = draw_noise(instance, rng)
    M = instance.config.M
    mean = action_features(ctx, action) @ instance.theta_star
    eps = noise[M:] if action.is_conservative else noise[list(action.arms)]
    return mean + eps


def oracle_quantities(instance: EnvironmentInstance, ctx: RoundContext,
                      f: RewardFunction | None = None, wstar: np.ndarray | None = None):
    """(best action over base sets and A0, its expected reward, gap to mu0)."""
    f = f or instance.config.reward
    if wstar is None:
        wstar = expected_weights(instance, ctx)
    best = argmax_super_arm(f, wstar, instance.config.K)
    value = evaluate(f, wstar[list(best.arms)])
    if instance.mu0_true > value:
        return A0, instance.mu0_true, 0.0
    return best, value, value - instance.mu0_true
