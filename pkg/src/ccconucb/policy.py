"""Decision rules: CCConUCB (known / unknown mu0), C2UCB and always-conservative.

``step`` never mutates its inputs. The caller plays ``Decision.action`` and,
when ``Decision.ingest`` is true, passes the observed weights to
``apply_feedback``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .env import RoundContext, action_features
from .linalg import RidgeState, batch_bounds
from .reward import A0, ActionSet, RewardFunction, argmax_super_arm, evaluate

CCCONUCB = "ccconucb"
C2UCB = "c2ucb"
ALWAYS_CONSERVATIVE = "conservative"
POLICY_KINDS = (CCCONUCB, C2UCB, ALWAYS_CONSERVATIVE)

FRESH = "fresh"
STATIC = "static"


@dataclass(frozen=True)
class PolicyConfig:
    alpha: float
    K: int
    reward_function: RewardFunction = RewardFunction()
    mu0: float | None = None
    recompute_mode: str = FRESH

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.mu0 is not None and self.mu0 < 0:
            raise ValueError("mu0 must be non-negative")
        if self.recompute_mode not in (FRESH, STATIC):
            raise ValueError(f"unknown recompute_mode {self.recompute_mode!r}")

    @property
    def known(self) -> bool:
        return self.mu0 is not None


class History:
    """Optimistic rounds N_t with the features of their played arms, plus d_t.

    Features are kept in one growing row buffer; group g spans rows
    ``offsets[g]:offsets[g + 1]``.
    """

    def __init__(self, d: int, capacity: int = 256):
        self.d = d
        self._X = np.empty((capacity, d))
        self._offsets = np.zeros(capacity + 1, dtype=np.int64)
        self._static = np.empty(capacity)
        self._is_a0 = np.zeros(capacity, dtype=bool)
        self.rounds: list[int] = []
        self.actions: list[ActionSet] = []
        self.n = 0
        self.conservative_count = 0
        self.t = 0

    @property
    def n_rows(self) -> int:
        return int(self._offsets[self.n])

    @property
    def features(self) -> np.ndarray:
        return self._X[: self.n_rows]

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets[: self.n + 1]

    @property
    def static_values(self) -> np.ndarray:
        return self._static[: self.n]

    @property
    def is_a0(self) -> np.ndarray:
        return self._is_a0[: self.n]

    def copy(self) -> History:
        h = History.__new__(History)
        h.__dict__.update(self.__dict__)
        for name in ("_X", "_offsets", "_static", "_is_a0", "rounds", "actions"):
            setattr(h, name, getattr(self, name).copy())
        return h

    def add_optimistic(self, t: int, action: ActionSet, X: np.ndarray, static_value: float) -> None:
        rows = len(X)
        start = self.n_rows
        if start + rows > len(self._X):
            self._X = np.concatenate([self._X, np.empty((max(len(self._X), rows), self.d))])
        if self.n + 1 >= len(self._static):
            grow = len(self._static)
            self._offsets = np.concatenate([self._offsets, np.zeros(grow, dtype=np.int64)])
            self._static = np.concatenate([self._static, np.empty(grow)])
            self._is_a0 = np.concatenate([self._is_a0, np.zeros(grow, dtype=bool)])
        self._X[start:start + rows] = X
        self._static[self.n] = static_value
        self._is_a0[self.n] = action.is_conservative
        self.n += 1
        self._offsets[self.n] = start + rows
        self.rounds.append(t)
        self.actions.append(action)
        self.t = t

    def add_conservative(self, t: int) -> None:
        self.conservative_count += 1
        self.t = t


@dataclass
class Decision:
    action: ActionSet
    was_conservative: bool
    psi: float
    threshold: float
    candidate_B: ActionSet
    ingest: bool
    static_value: float = 0.0
    # d_{t-1} >= (1 - alpha) t: the unknown-mu0 lower bound is not valid here
    outside_lower_bound_regime: bool = False


@dataclass
class _RoundBounds:
    upper: np.ndarray
    lower: np.ndarray
    a0_upper: float
    a0_lower: float
    best_base: ActionSet
    best_base_value: float


def _round_bounds(state: RidgeState, ctx: RoundContext, cfg: PolicyConfig) -> _RoundBounds:
    if ctx.base_features.shape[1] != state.d:
        raise ValueError(f"context dimension {ctx.base_features.shape[1]} != state dimension {state.d}")
    f = cfg.reward_function
    upper, lower = batch_bounds(state, ctx.base_features)
    if cfg.known:
        a0_upper = a0_lower = cfg.mu0
    else:
        cu, cl = batch_bounds(state, ctx.conservative_features)
        a0_upper, a0_lower = evaluate(f, cu), evaluate(f, cl)
    best = argmax_super_arm(f, upper, cfg.K)
    return _RoundBounds(upper, lower, a0_upper, a0_lower, best, evaluate(f, upper[list(best.arms)]))


def _pick_candidate(b: _RoundBounds) -> ActionSet:
    # A0 only when strictly better; ties go to the base super arm
    return A0 if b.a0_upper > b.best_base_value else b.best_base


def select_candidate(state: RidgeState, ctx: RoundContext, cfg: PolicyConfig) -> ActionSet:
    return _pick_candidate(_round_bounds(state, ctx, cfg))


def past_lower_sum(history: History, state: RidgeState, cfg: PolicyConfig, a0_value: float | None = None) -> float:
    """Sum over n in N_{t-1} of f(A_n, L_{t,n}) (Fresh) or f(A_n, L_{n,n}) (Static).

    ``a0_value`` replaces the recomputed value of groups that played A0
    (the known mu0); with None they are recomputed from their features.
    """
    if history.n == 0:
        return 0.0
    if cfg.recompute_mode == STATIC:
        return math.fsum(history.static_values)
    f = cfg.reward_function
    mask = history.is_a0.view(np.uint8) if a0_value is not None else np.zeros(history.n, dtype=np.uint8)
    return kernels.group_lower_total(history.features, history.offsets, mask,
                                     0.0 if a0_value is None else float(a0_value),
                                     state.theta_hat, state.Vinv, state.H, f.kernel_code, f.scale)


def _current_lower(b: _RoundBounds, B: ActionSet, cfg: PolicyConfig) -> float:
    if B.is_conservative:
        return b.a0_lower
    return evaluate(cfg.reward_function, b.lower[list(B.arms)])


def _check(history: History, state: RidgeState, b: _RoundBounds, B: ActionSet, cfg: PolicyConfig):
    t = history.t + 1
    past = past_lower_sum(history, state, cfg, cfg.mu0 if cfg.known else None)
    base_value = cfg.mu0 if cfg.known else b.a0_upper
    psi = past + _current_lower(b, B, cfg) + history.conservative_count * base_value
    threshold = (1.0 - cfg.alpha) * t * base_value
    return psi, threshold, psi >= threshold


def constraint_check_known(history: History, state: RidgeState, B_t: ActionSet,
                           ctx: RoundContext, cfg: PolicyConfig):
    """(psi, threshold, pass) for the known-mu0 rule."""
    if not cfg.known:
        raise ValueError("constraint_check_known needs cfg.mu0")
    return _check(history, state, _round_bounds(state, ctx, cfg), B_t, cfg)


def constraint_check_unknown(history: History, state: RidgeState, B_t: ActionSet,
                             ctx: RoundContext, cfg: PolicyConfig):
    """(lhs, threshold, pass) with mu0 replaced by the A0 upper bound on both sides."""
    if cfg.known:
        raise ValueError("constraint_check_unknown expects cfg.mu0 to be None")
    return _check(history, state, _round_bounds(state, ctx, cfg), B_t, cfg)


def step(policy_kind: str, state: RidgeState, history: History, ctx: RoundContext,
         cfg: PolicyConfig) -> Decision:
    if policy_kind == ALWAYS_CONSERVATIVE:
        return Decision(A0, True, 0.0, 0.0, A0, ingest=False)
    if policy_kind not in (CCCONUCB, C2UCB):
        raise ValueError(f"unknown policy kind {policy_kind!r}")
    b = _round_bounds(state, ctx, cfg)
    t = history.t + 1
    outside = (not cfg.known) and history.conservative_count >= (1.0 - cfg.alpha) * t
    if policy_kind == C2UCB:
        B = b.best_base
        psi, threshold, _ = _check(history, state, b, B, cfg)
        return Decision(B, False, psi, threshold, B, ingest=True,
                        static_value=_current_lower(b, B, cfg), outside_lower_bound_regime=outside)
    B = _pick_candidate(b)
    psi, threshold, ok = _check(history, state, b, B, cfg)
    if ok:
        return Decision(B, False, psi, threshold, B, ingest=True,
                        static_value=_current_lower(b, B, cfg), outside_lower_bound_regime=outside)
    return Decision(A0, True, psi, threshold, B, ingest=False, outside_lower_bound_regime=outside)


def apply_feedback(state: RidgeState, history: History, decision: Decision, ctx: RoundContext,
                   weights: np.ndarray | None = None, *, inplace: bool = False):
    """Fold the outcome of ``decision`` into (state, history).

    Conservative rounds only bump d_t. Returns the updated pair; with
    ``inplace`` the given objects are mutated and returned.
    """
    if not inplace:
        state, history = state.copy(), history.copy()
    t = history.t + 1
    if not decision.ingest:
        history.add_conservative(t)
        return state, history
    X = action_features(ctx, decision.action)
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(X):
        raise ValueError("need one observed weight per played arm")
    for x, wi in zip(X, w):
        state.ingest(x, float(wi))
    history.add_optimistic(t, decision.action, X, decision.static_value)
    return state, history
