"""Super-arm reward functions and the combinatorial argmax oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

LINEAR_SUM = "linear_sum"
SATURATING_CONCAVE = "saturating_concave"
_KERNEL_CODES = {LINEAR_SUM: kernels.LINEAR_SUM, SATURATING_CONCAVE: kernels.SATURATING}

CONSERVATIVE = "conservative"
BASE = "base"


@dataclass(frozen=True)
class ActionSet:
    kind: str
    arms: tuple[int, ...] = ()

    @property
    def is_conservative(self) -> bool:
        return self.kind == CONSERVATIVE

    def to_json(self):
        return "A0" if self.is_conservative else list(self.arms)


A0 = ActionSet(CONSERVATIVE, ())


def base_action(arms, K: int | None = None, M: int | None = None) -> ActionSet:
    ids = tuple(sorted(int(a) for a in arms))
    if not ids:
        raise ValueError("a base action needs at least one arm")
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate arm ids in {ids}")
    if K is not None and len(ids) > K:
        raise ValueError(f"{len(ids)} arms exceed K={K}")
    if M is not None and (ids[0] < 0 or ids[-1] >= M):
        raise ValueError(f"arm ids {ids} outside [0, {M})")
    return ActionSet(BASE, ids)


@dataclass(frozen=True)
class RewardFunction:
    """A reward f(A, w) = g(sum of w over A) with g non-decreasing.

    ``linear_sum`` uses g(s) = s; ``saturating_concave`` uses
    g(s) = c (1 - exp(-s / c)), which is 1-Lipschitz for s >= 0.
    """

    kind: str = LINEAR_SUM
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KERNEL_CODES:
            raise ValueError(f"unknown reward function {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def kernel_code(self) -> int:
        return _KERNEL_CODES[self.kind]

    def outer(self, s: float) -> float:
        if self.kind == SATURATING_CONCAVE:
            return self.scale * -math.expm1(-s / self.scale)
        return s

    def to_json(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


def evaluate(f: RewardFunction, weights) -> float:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError("reward of an empty weight vector is undefined")
    return f.outer(math.fsum(w))


def lipschitz_constant(f: RewardFunction, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.sqrt(k)


def argmax_super_arm(f: RewardFunction, ucb_values, K: int) -> ActionSet:
    """Best base super arm under ``f``.

    Both shipped rewards are monotone in the coordinate sum, so the top
    arms with positive value (at most K, at least one) are exact. Ties go
    to the lowest arm id.
    """
    u = np.asarray(ucb_values, dtype=np.float64)
    if u.size == 0:
        raise ValueError("no base arms")
    if K <= 0:
        raise ValueError("K must be positive")
    if not np.isfinite(u).all():
        raise ValueError("non-finite UCB values")
    # stable sort on -u keeps lower ids first among equal values
    order = np.argsort(-u, kind="stable")
    k = min(K, int(np.count_nonzero(u > 0)))
    return ActionSet(BASE, tuple(sorted(int(i) for i in order[:max(k, 1)])))


def brute_force_argmax(f: RewardFunction, ucb_values, K: int) -> ActionSet:
    """Exhaustive search over all non-empty subsets of size <= K."""
    u = np.asarray(ucb_values, dtype=np.float64)
    M = u.size
    if M == 0:
        raise ValueError("no base arms")
    if M > 20:
        raise ValueError(f"brute force limited to M <= 20, got {M}")
    best, best_val = None, -math.inf
    for k in range(1, min(K, M) + 1):
        for combo in itertools.combinations(range(M), k):
            val = evaluate(f, u[list(combo)])
            if val > best_val or (val == best_val and combo < best):
                best, best_val = combo, val
    return ActionSet(BASE, best)
