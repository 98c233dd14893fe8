import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ccconucb.env import GenConfig, generate_instance
from ccconucb.harness import KNOWN, RunConfig, run_episode
from ccconucb.linalg import init_state
from ccconucb.probes import (conservative_round_terms, determinant_bound_rhs, episode_probes,
                             norm_sum_bound_large, norm_sum_bound_small, probe_confidence_coverage,
                             probe_conservative_rounds, probe_determinant_bound)


def test_determinant_bound_equality_at_start():
    assert determinant_bound_rhs(0, 5, 2, 5.0, 5.0) == pytest.approx(5 * math.log(5.0))


@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_norm_sum_identity_and_bounds(d, K, seed):
    # sum over ingested rows of ||x||^2 in V^-1 equals d - lam tr(V^-1)
    rng = np.random.default_rng(seed)
    L = float(d)
    lam = L
    s = init_state(d, lam, 1.0, 0.1)
    X = rng.uniform(-1, 1, size=(int(rng.integers(1, 40)) * K, d))
    for x in X:
        s.ingest(x, 0.0)
    total = float(np.einsum("ij,jk,ik->", X, s.Vinv, X))
    assert total == pytest.approx(d - lam * np.trace(s.Vinv), abs=1e-9)
    n = len(X) // K
    bound = min(norm_sum_bound_small(n, d, K, L, lam), norm_sum_bound_large(n, d, K, L, lam))
    assert total <= bound + 1e-9
    assert s.log_det_V <= determinant_bound_rhs(n, d, K, L, lam) + 1e-9


def test_small_bound_tighter_below_dimension():
    d, K, L, lam = 10, 2, 10.0, 10.0
    for n in range(1, 5):
        assert norm_sum_bound_small(n, d, K, L, lam) < norm_sum_bound_large(n, d, K, L, lam)
    assert norm_sum_bound_small(0, d, K, L, lam) == 0.0


@pytest.fixture(scope="module")
def known_log():
    return run_episode(generate_instance(GenConfig(), 0), KNOWN, RunConfig(alpha=0.2), 500, 0)


def test_episode_probes_pass(known_log):
    rep = episode_probes(known_log)
    assert rep.passed
    assert {r.name for r in rep.results} == {"determinant_bound", "norm_sum_bound", "conservative_round_bound"}
    assert probe_determinant_bound(known_log).details["min_gap"] >= 0


def test_conservative_bound_first_round(known_log):
    rounds, lhs, rhs, _, _ = conservative_round_terms(known_log)
    assert rounds[0] == 1 and lhs[0] == 0
    assert rhs[0] == pytest.approx((1 - 0.2) / 0.2)


def test_conservative_probe_reports_failure(known_log):
    # an absurd gap makes the right-hand side negative
    res = probe_conservative_rounds(known_log, delta_min=1e6)
    assert not res.passed and res.max_violation > 0


def test_coverage_tolerance():
    res = probe_confidence_coverage([False] * 90 + [True] * 10, 0.1)
    assert res.passed and res.tolerance == pytest.approx(0.1 + 2 * math.sqrt(0.09 / 100))
    assert not probe_confidence_coverage([True] * 30 + [False] * 70, 0.1).passed
    with pytest.raises(ValueError):
        probe_confidence_coverage([False] * 10, 0.1)


def test_conservative_policy_has_no_probes():
    log = run_episode(generate_instance(GenConfig(), 0), "conservative", RunConfig(), 20, 0)
    assert episode_probes(log).results == []
