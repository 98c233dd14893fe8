"""Runtime checks of the analytic inequalities on recorded episodes.

Each probe reports the largest amount by which its inequality was
exceeded; a probe passes when that stays within its tolerance.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import radius_upper_bound
from .reward import RewardFunction, lipschitz_constant

SLACK = 1e-9


@dataclass
class ProbeResult:
    name: str
    rounds_checked: int
    max_violation: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class ProbeReport:
    results: list[ProbeResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, result: ProbeResult) -> None:
        self.results.append(result)

    def extend(self, other: ProbeReport) -> None:
        self.results.extend(other.results)

    def to_json(self) -> dict:
        return {"passed": self.passed, "results": [asdict(r) for r in self.results]}


def _result(name, violations, tol=SLACK, strict=False, **details) -> ProbeResult:
    v = np.asarray(violations, dtype=np.float64)
    worst = float(v.max()) if v.size else -math.inf
    ok = worst < tol if strict else worst <= tol
    return ProbeResult(name, int(v.size), worst, tol, bool(ok), details)


def _params(log):
    c = log.meta["config"]
    return c["d"], c["K"], c["L"], c["lambda"], c["S"], c["delta"]


def determinant_bound_rhs(n, d, K, L, lam):
    """d log(lam + n K L / d), the cap on log det V after n optimistic rounds."""
    return d * np.log(lam + np.asarray(n) * K * L / d)


def probe_determinant_bound(log) -> ProbeResult:
    """log det V_t <= d log(lam + n_t K L / d) at every round, t = 0 included."""
    d, K, L, lam, _, _ = _params(log)
    tr = log.trace
    gap = determinant_bound_rhs(tr.n, d, K, L, lam) - tr.log_det
    return _result("determinant_bound", -gap, min_gap=float(gap.min()), final_gap=float(gap[-1]))


def norm_sum_bound_small(n, d, K, L, lam):
    """N [1 - (lam / (lam + n K L / d))^(d / N)] with N = n K; zero when n = 0."""
    n = np.asarray(n, dtype=np.float64)
    N = n * K
    with np.errstate(divide="ignore", invalid="ignore"):
        a = lam / (lam + N * L / d)
        out = N * -np.expm1((d / N) * np.log(a))
    return np.where(N > 0, out, 0.0)


def norm_sum_bound_large(n, d, K, L, lam):
    """n K L d / (lam d + n K L)."""
    nKL = np.asarray(n, dtype=np.float64) * K * L
    return nKL * d / (lam * d + nKL)


def probe_norm_sums(log) -> ProbeResult:
    """Sum of ||x||^2_{V_t^-1} over played rows stays under both closed-form bounds.

    Also records how often the first bound is the tighter one exactly when
    n_t K <= d.
    """
    d, K, L, lam, _, _ = _params(log)
    tr = log.trace
    idx = np.flatnonzero(np.isfinite(tr.norm_sum))
    n = tr.n[idx]
    s = tr.norm_sum[idx]
    b4 = norm_sum_bound_small(n, d, K, L, lam)
    b5 = norm_sum_bound_large(n, d, K, L, lam)
    small_tighter = b4 < b5
    rule = n * K <= d
    live = n > 0
    agree = float(np.mean(small_tighter[live] == rule[live])) if live.any() else 1.0
    crossover = None
    flips = np.flatnonzero(live & ~small_tighter)
    if flips.size:
        crossover = int(n[flips[0]] * K)
    return _result("norm_sum_bound", s - np.minimum(b4, b5),
                   rule_of_thumb_agreement=agree, first_nK_where_large_bound_tighter=crossover,
                   min_slack=float((np.minimum(b4, b5) - s).min()) if s.size else None)


def conservative_round_terms(log, delta_min: float | None = None):
    """Left and right sides of the conservative-round count bound.

    For every round t that played A0, with everything measured before the
    round (d_{t-1}, n_{t-1}, V_{t-1}, C_{t-1}):

        d_{t-1} < ([1 - (1 + n) alpha] mu0 - n gap_min) / (alpha mu0)
                  + 2 P C sqrt(n * sum ||x||^2_{V^-1}) / (alpha mu0)

    ``delta_min`` defaults to the smallest per-round gap f(A*_t) - mu0 in
    the episode. Rounds whose pre-round norm sum was not recorded are
    skipped. Returns (rounds, lhs, rhs, stated_lhs, stated_rhs) where the
    ``stated`` pair counts round t itself and uses C_t.
    """
    d, K, L, lam, S, delta = _params(log)
    alpha = log.meta["config"]["alpha"]
    mu0 = log.meta["mu0"]
    f = RewardFunction(**log.meta["config"]["reward"])
    P = lipschitz_constant(f, K)
    tr = log.trace
    if delta_min is None:
        delta_min = float(np.min(log.optimal - mu0))
    rounds = np.flatnonzero(log.conservative) + 1
    rounds = rounds[np.isfinite(tr.norm_sum[rounds - 1])]
    n = tr.n[rounds - 1].astype(np.float64)
    dprev = tr.d[rounds - 1].astype(np.float64)
    ns = tr.norm_sum[rounds - 1]
    am = alpha * mu0

    def rhs(n, C):
        return (((1.0 - (1.0 + n) * alpha) * mu0 - n * delta_min) / am
                + 2.0 * P * C * np.sqrt(np.maximum(n * ns, 0.0)) / am)

    C_prev = np.array([radius_upper_bound(t - 1, d, K, L, lam, S, delta) for t in rounds])
    C_now = np.array([radius_upper_bound(t, d, K, L, lam, S, delta) for t in rounds])
    return rounds, dprev, rhs(n, C_prev), dprev + 1.0, rhs(n, C_now)


def probe_conservative_rounds(log, delta_min: float | None = None) -> ProbeResult:
    """Count of A0 rounds before each A0 round stays strictly under its bound."""
    rounds, lhs, rhs, s_lhs, s_rhs = conservative_round_terms(log, delta_min)
    stated_fail = int(np.count_nonzero(s_lhs >= s_rhs + SLACK))
    return _result("conservative_round_bound", lhs - rhs, strict=True,
                   min_margin=float((rhs - lhs).min()) if rounds.size else None,
                   stated_form_failures=stated_fail)


def coverage_failed(log) -> bool:
    """True if some probed round saw a played arm's mean outside its interval."""
    return bool(np.any(log.trace.coverage_slack < 0.0))


def probe_confidence_coverage(failed, delta: float, min_episodes: int = 100) -> ProbeResult:
    """Fraction of episodes with any interval miss, against delta + 2 sd.

    ``failed`` holds one flag per episode, e.g. ``[coverage_failed(g) for g in logs]``.
    """
    failed = [bool(x) for x in failed]
    R = len(failed)
    if R < min_episodes:
        raise ValueError(f"coverage needs at least {min_episodes} episodes, got {R}")
    failures = sum(failed)
    frac = failures / R
    tol = delta + 2.0 * math.sqrt(delta * (1.0 - delta) / R)
    return ProbeResult("confidence_coverage", R, frac, tol, frac <= tol,
                       {"failures": failures, "episodes": R, "delta": delta})


def episode_probes(log, *, conservative_rounds: bool | None = None) -> ProbeReport:
    """Per-episode probes appropriate to the policy that produced ``log``."""
    report = ProbeReport()
    policy = log.meta["policy"]
    if policy == "conservative":
        return report
    report.add(probe_determinant_bound(log))
    report.add(probe_norm_sums(log))
    if conservative_rounds is None:
        conservative_rounds = policy == "ccconucb_known"
    if conservative_rounds:
        report.add(probe_conservative_rounds(log))
    return report
