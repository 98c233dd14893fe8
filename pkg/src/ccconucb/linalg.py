"""Ridge-regression sufficient statistics and confidence bounds.

The design matrix inverse is maintained with Sherman-Morrison updates and
refreshed from scratch every ``refresh_every`` ingests.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class NumericalError(RuntimeError):
    """Raised when the regression state picks up a NaN or infinity."""


@dataclass
class WeightBound:
    lower: float
    upper: float
    center: float
    halfwidth: float


@dataclass
class RidgeState:
    d: int
    lam: float
    S: float
    delta: float
    V: np.ndarray
    Vinv: np.ndarray
    Y: np.ndarray
    theta_hat: np.ndarray
    log_det_V: float
    H: float
    radius_scale: float = 1.0
    refresh_every: int = 1000
    n_ingested: int = field(default=0)

    def copy(self) -> RidgeState:
        return RidgeState(
            self.d, self.lam, self.S, self.delta,
            self.V.copy(), self.Vinv.copy(), self.Y.copy(), self.theta_hat.copy(),
            self.log_det_V, self.H, self.radius_scale, self.refresh_every, self.n_ingested,
        )

    def ingest(self, x: np.ndarray, w: float) -> None:
        """Add one observation (x, w) in place and recompute the radius."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"feature has shape {x.shape}, expected ({self.d},)")
        if not (np.isfinite(x).all() and math.isfinite(w)):
            raise NumericalError("non-finite observation")
        denom = kernels.ridge_update(self.V, self.Vinv, self.Y, self.theta_hat, x, float(w))
        self.log_det_V += math.log(denom)
        self.n_ingested += 1
        if self.refresh_every and self.n_ingested % self.refresh_every == 0:
            self.refresh()
        if not (math.isfinite(self.log_det_V) and np.isfinite(self.theta_hat).all()):
            self._check_finite()
            raise NumericalError("non-finite value in ridge state")
        self.H = confidence_radius(self.log_det_V, self.d, self.lam, self.S, self.delta) * self.radius_scale

    def refresh(self) -> None:
        """Recompute Vinv, theta_hat and log det V directly from V and Y."""
        self.Vinv = np.linalg.inv(self.V)
        self.Vinv = 0.5 * (self.Vinv + self.Vinv.T)
        self.theta_hat = np.linalg.solve(self.V, self.Y)
        sign, logdet = np.linalg.slogdet(self.V)
        if sign <= 0:
            raise NumericalError("design matrix lost positive definiteness")
        self.log_det_V = float(logdet)

    def _check_finite(self) -> None:
        if not (np.isfinite(self.V).all() and np.isfinite(self.Y).all()
                and np.isfinite(self.theta_hat).all()):
            raise NumericalError("non-finite value in ridge state")


def confidence_radius(log_det_V: float, d: int, lam: float, S: float, delta: float) -> float:
    """sqrt(lam) S + sqrt(log(det V / (lam^d delta^2)))."""
    inner = log_det_V - d * math.log(lam) - 2.0 * math.log(delta)
    return math.sqrt(lam) * S + math.sqrt(max(inner, 0.0))


def radius_upper_bound(t: int, d: int, K: int, L: float, lam: float, S: float, delta: float) -> float:
    """Closed-form radius C_t that dominates H_t via the determinant bound."""
    return math.sqrt(lam) * S + math.sqrt(
        2.0 * math.log(1.0 / delta) + d * math.log1p(K * L * t / (lam * d))
    )


def init_state(d: int, lam: float, S: float, delta: float, *, L: float | None = None,
               radius_scale: float = 1.0, refresh_every: int = 1000) -> RidgeState:
    if not isinstance(d, (int, np.integer)) or d <= 0:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam!r}")
    if not S > 0:
        raise ValueError(f"S must be > 0, got {S!r}")
    # delta = 1 is allowed: the log term vanishes and the radius is sqrt(lam) S
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    if L is not None and lam < L:
        warnings.warn(f"lambda={lam} < L={L}: the regret guarantees assume lambda >= L", stacklevel=2)
    log_det = d * math.log(lam)
    return RidgeState(
        d=int(d), lam=float(lam), S=float(S), delta=float(delta),
        V=lam * np.eye(d), Vinv=np.eye(d) / lam, Y=np.zeros(d), theta_hat=np.zeros(d),
        log_det_V=log_det, H=confidence_radius(log_det, d, lam, S, delta) * radius_scale,
        radius_scale=radius_scale, refresh_every=refresh_every,
    )


def ingest_observation(state: RidgeState, x, w: float) -> RidgeState:
    """Return a new state with (x, w) added; ``state`` is left untouched."""
    new = state.copy()
    new.ingest(np.asarray(x, dtype=np.float64), float(w))
    return new


def _as_feature(state: RidgeState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != state.d:
        raise ValueError(f"feature has dimension {x.shape[0]}, expected {state.d}")
    return x


def mahalanobis_norm(state: RidgeState, x) -> float:
    x = _as_feature(state, x)
    return math.sqrt(max(float(x @ state.Vinv @ x), 0.0))


def weight_bounds(state: RidgeState, x) -> WeightBound:
    x = _as_feature(state, x)
    center = float(state.theta_hat @ x)
    half = state.H * mahalanobis_norm(state, x)
    return WeightBound(lower=max(0.0, center - half), upper=center + half, center=center, halfwidth=half)


def batch_bounds(state: RidgeState, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (upper, clamped lower) for every row of X."""
    center, half = kernels.arm_bounds(np.ascontiguousarray(X, dtype=np.float64),
                                      state.theta_hat, state.Vinv, state.H)
    return center + half, np.maximum(center - half, 0.0)
