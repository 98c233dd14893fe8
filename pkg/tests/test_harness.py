import math

import numpy as np
import pytest

from ccconucb.env import GenConfig, generate_instance
from ccconucb.harness import (KNOWN, UNKNOWN, RunConfig, RunLog, aggregate, constraint_violations,
                              endurance_time, pseudo_regret, run_episode, run_many, selection_counts,
                              write_csv)

GEN = GenConfig()


@pytest.fixture(scope="module")
def inst():
    return generate_instance(GEN, 2)


@pytest.fixture(scope="module")
def logs(inst):
    return {p: run_episode(inst, p, RunConfig(), 600, 9) for p in (KNOWN, UNKNOWN, "c2ucb", "conservative")}


def test_conservative_baseline(logs, inst):
    log = logs["conservative"]
    assert log.conservative.all()
    r = pseudo_regret(log)
    np.testing.assert_allclose(np.diff(r, prepend=0.0), log.optimal - inst.mu0_true, atol=1e-12)
    assert selection_counts(log) == (0, log.T)
    for a in (0.01, 0.5, 0.99):
        assert constraint_violations(log, a, inst.mu0_true) == 0


def test_c2ucb_never_conservative(logs):
    assert selection_counts(logs["c2ucb"]) == (600, 0)


def test_counts_partition(logs):
    for log in logs.values():
        n, d = selection_counts(log)
        assert n + d == log.T == 600
        assert log.trace.n[-1] == n and log.trace.d[-1] == d


def test_regret_non_negative_and_non_decreasing(logs):
    for log in logs.values():
        r = pseudo_regret(log)
        assert (np.diff(r) >= -1e-12).all() and r[0] >= -1e-12


def test_regret_recomputes_from_records(logs):
    for log in logs.values():
        back = RunLog.from_ndjson(log.to_ndjson())
        total = math.fsum(r["optimal"] - r["expected"] for r in log.records())
        assert pseudo_regret(back)[-1] == pytest.approx(total, abs=1e-10)
        assert pseudo_regret(back)[-1] == pytest.approx(pseudo_regret(log)[-1], abs=1e-10)


def test_single_round_known_is_conservative(inst):
    log = run_episode(inst, KNOWN, RunConfig(), 1, 0)
    assert log.T == 1 and log.conservative[0]


def test_ndjson_layout(logs):
    lines = logs[KNOWN].to_ndjson().splitlines()
    assert len(lines) == 601
    assert '"meta"' in lines[0] and lines[1].startswith('{"action"')


def test_endurance_examples(logs):
    base = logs["conservative"]
    assert endurance_time(base, base) is None
    fake = RunLog.from_ndjson(base.to_ndjson())
    fake.expected = base.expected.copy()
    fake.expected[0] += 1.0
    assert endurance_time(fake, base) == 1
    short = RunLog.from_ndjson(base.to_ndjson())
    short.expected = short.expected[:10]
    with pytest.raises(ValueError):
        endurance_time(short, base)


def test_realized_violations_option(logs, inst):
    log = logs["c2ucb"]
    assert constraint_violations(log, 0.2, inst.mu0_true, realized=True) >= 0


def test_bad_inputs(inst):
    with pytest.raises(ValueError):
        run_episode(inst, "random", RunConfig(), 10, 0)
    with pytest.raises(ValueError):
        run_episode(inst, KNOWN, RunConfig(), 0, 0)


def test_run_many_order_and_workers():
    jobs = [(GEN, s, KNOWN, RunConfig(), 80, s, False) for s in range(3)]
    one = [g.to_ndjson() for g in run_many(jobs, 1)]
    two = [g.to_ndjson() for g in run_many(jobs, 2)]
    assert one == two
    assert [g.meta["episode_seed"] for g in run_many(jobs, 1)] == [0, 1, 2]


def test_aggregate_and_csv(tmp_path, inst):
    logs = [run_episode(inst, "c2ucb", RunConfig(), 50, s, probes=False) for s in range(3)]
    s = aggregate(logs)
    curves = np.stack([pseudo_regret(g) / np.arange(1, 51) for g in logs])
    np.testing.assert_allclose(s.mean_avg_regret, curves.mean(0))
    np.testing.assert_allclose(s.std_avg_regret, curves.std(0))
    write_csv(tmp_path / "r.csv", [s], every=20)
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "t,mean_avg_regret,std_avg_regret,policy"
    assert [int(r.split(",")[0]) for r in rows[1:]] == [1, 21, 41, 50]
    with pytest.raises(ValueError):
        aggregate([logs[0], run_episode(inst, KNOWN, RunConfig(), 50, 0, probes=False)])


def test_common_random_numbers_across_policies(logs):
    # one episode seed gives every policy the same contexts, hence the same optimal rewards
    np.testing.assert_array_equal(logs[KNOWN].optimal, logs["c2ucb"].optimal)


def test_outside_regime_flags(logs):
    alpha = RunConfig().alpha
    for policy, log in logs.items():
        assert log.meta["outside_regime_rounds"] == int(log.outside_regime.sum())
        back = RunLog.from_ndjson(log.to_ndjson())
        np.testing.assert_array_equal(back.outside_regime, log.outside_regime)
        if policy == UNKNOWN:
            d_prev = np.concatenate([[0], np.cumsum(log.conservative)[:-1]])
            t = np.arange(1, log.T + 1)
            np.testing.assert_array_equal(log.outside_regime, d_prev >= (1 - alpha) * t)
