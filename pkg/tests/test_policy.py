import numpy as np
import pytest

from ccconucb.env import GenConfig, RoundContext, episode_streams, generate_instance, sample_round_context
from ccconucb.linalg import init_state
from ccconucb.policy import (ALWAYS_CONSERVATIVE, C2UCB, CCCONUCB, STATIC, Decision, History, PolicyConfig,
                             apply_feedback, constraint_check_known, constraint_check_unknown,
                             select_candidate, step)
from ccconucb.reward import A0, base_action


def exact_state(d=1):
    """A state whose bounds collapse to theta_hat . x (zero radius)."""
    s = init_state(d, 1.0, 1.0, 0.5, radius_scale=0.0)
    s.theta_hat = np.ones(d)
    return s


def ctx_from(values, conservative=(1.0,)):
    return RoundContext(1, np.array(values, dtype=float).reshape(-1, 1),
                        np.array(conservative, dtype=float).reshape(-1, 1))


def hand_history():
    """Round 1 played one arm with lower bound 2.0; round 2 was conservative."""
    h = History(1)
    h.add_optimistic(1, base_action([0]), np.array([[2.0]]), 2.0)
    h.add_conservative(2)
    return h


def test_candidate_prefers_a0_when_mu0_dominates():
    s = init_state(2, 1.0, 1.0, 0.1)
    ctx = RoundContext(1, np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), np.array([[0.0, 1.0]]))
    cap = s.H * np.sqrt(2 * 2 / 1.0)
    assert select_candidate(s, ctx, PolicyConfig(0.2, 2, mu0=cap + 1)).is_conservative


def test_candidate_base_on_zero_mu0():
    s = init_state(2, 1.0, 1.0, 0.1)
    ctx = RoundContext(1, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    assert not select_candidate(s, ctx, PolicyConfig(0.2, 1, mu0=0.0)).is_conservative


def test_candidate_compares_best_base_against_mu0():
    ctx = ctx_from([5.0, 1.0, 3.0])
    assert select_candidate(exact_state(), ctx, PolicyConfig(0.2, 2, mu0=7.0)).arms == (0, 2)
    assert select_candidate(exact_state(), ctx, PolicyConfig(0.2, 2, mu0=8.0)).arms == (0, 2)  # tie -> base
    assert select_candidate(exact_state(), ctx, PolicyConfig(0.2, 2, mu0=8.5)).is_conservative


def test_first_round_uninformative_fails_check():
    s = init_state(2, 1.0, 1.0, 0.1)
    ctx = RoundContext(1, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.5, 0.5]]))
    cfg = PolicyConfig(0.2, 1, mu0=1.0)
    psi, thr, ok = constraint_check_known(History(2), s, base_action([0]), ctx, cfg)
    assert (psi, thr, ok) == (0.0, pytest.approx(0.8), False)
    dec = step(CCCONUCB, s, History(2), ctx, cfg)
    assert dec.action == A0 and dec.was_conservative and not dec.ingest


def test_all_lower_bounds_at_mu0_pass():
    mu0 = 1.5
    h = History(1)
    h.add_optimistic(1, base_action([0]), np.array([[mu0]]), mu0)
    h.add_conservative(2)
    h.add_optimistic(3, base_action([0]), np.array([[mu0]]), mu0)
    for alpha in (0.01, 0.5, 0.99):
        psi, thr, ok = constraint_check_known(h, exact_state(), base_action([0]), ctx_from([mu0]),
                                              PolicyConfig(alpha, 1, mu0=mu0))
        assert psi == pytest.approx(4 * mu0) and ok


def test_known_check_hand_arithmetic():
    psi, thr, ok = constraint_check_known(hand_history(), exact_state(), base_action([0]), ctx_from([0.1]),
                                          PolicyConfig(0.5, 1, mu0=1.0))
    assert psi == pytest.approx(3.1) and thr == pytest.approx(1.5) and ok


def test_unknown_check_hand_arithmetic():
    psi, thr, ok = constraint_check_unknown(hand_history(), exact_state(), base_action([0]),
                                            ctx_from([0.1], conservative=[1.2]), PolicyConfig(0.5, 1))
    assert psi == pytest.approx(3.3) and thr == pytest.approx(1.8) and ok


def test_unknown_first_round_fails():
    s = init_state(2, 1.0, 1.0, 0.1)
    ctx = RoundContext(1, np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    psi, thr, ok = constraint_check_unknown(History(2), s, base_action([0]), ctx, PolicyConfig(0.2, 1))
    assert psi == 0.0 and thr > 0 and not ok


def test_unknown_near_one_alpha_goes_optimistic_early():
    # lower bound 0.5 per round against 0.01 * t * 1.0
    ctx = ctx_from([0.5], conservative=[1.0])
    dec = step(CCCONUCB, exact_state(), History(1), ctx, PolicyConfig(0.99, 1))
    assert not dec.was_conservative


def test_static_mode_uses_stored_values():
    h = History(1)
    h.add_optimistic(1, base_action([0]), np.array([[2.0]]), 0.25)
    cfg = PolicyConfig(0.5, 1, mu0=1.0, recompute_mode=STATIC)
    psi, _, _ = constraint_check_known(h, exact_state(), base_action([0]), ctx_from([0.0]), cfg)
    assert psi == pytest.approx(0.25)


def test_known_mode_counts_past_a0_groups_at_mu0():
    h = History(1)
    h.add_optimistic(1, A0, np.array([[5.0]]), 0.0)
    psi, _, _ = constraint_check_known(h, exact_state(), base_action([0]), ctx_from([0.0]),
                                       PolicyConfig(0.5, 1, mu0=1.0))
    assert psi == pytest.approx(1.0)
    psi_u, _, _ = constraint_check_unknown(h, exact_state(), base_action([0]), ctx_from([0.0]),
                                           PolicyConfig(0.5, 1))
    assert psi_u == pytest.approx(5.0)


def test_always_conservative():
    dec = step(ALWAYS_CONSERVATIVE, exact_state(), History(1), ctx_from([9.0]), PolicyConfig(0.2, 1, mu0=0.1))
    assert dec.action == A0 and dec.was_conservative


def test_unknown_policy_kind():
    with pytest.raises(ValueError):
        step("greedy", exact_state(), History(1), ctx_from([1.0]), PolicyConfig(0.2, 1))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        step(CCCONUCB, init_state(3, 1.0, 1.0, 0.1), History(3), ctx_from([1.0]), PolicyConfig(0.2, 1, mu0=1.0))


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
def test_alpha_domain(alpha):
    with pytest.raises(ValueError):
        PolicyConfig(alpha, 1)


def test_step_does_not_mutate_and_feedback_partition():
    inst = generate_instance(GenConfig(), 3)
    ctx_rng, noise_rng = episode_streams(inst, 0)
    cfg = PolicyConfig(0.2, 2, mu0=inst.mu0_true)
    s, h = init_state(5, inst.L, 3.0, 0.1), History(5)
    for t in range(1, 200):
        ctx = sample_round_context(inst, t, ctx_rng)
        V0, Y0, n0 = s.V.copy(), s.Y.copy(), h.n
        dec = step(CCCONUCB, s, h, ctx, cfg)
        np.testing.assert_array_equal(s.V, V0)
        w = ctx.base_features[list(dec.action.arms)] @ inst.theta_star if dec.ingest else None
        s2, h2 = apply_feedback(s, h, dec, ctx, w)
        assert h.n == n0  # copy semantics
        if dec.was_conservative:
            assert np.array_equal(s2.V, V0) and np.array_equal(s2.Y, Y0)
        s, h = s2, h2
        assert h.n + h.conservative_count == t


def test_c2ucb_matches_candidate_in_lockstep():
    inst = generate_instance(GenConfig(), 5)
    ctx_rng, noise_rng = episode_streams(inst, 1)
    known = PolicyConfig(0.2, 2, mu0=inst.mu0_true)
    sa, ha = init_state(5, inst.L, 3.0, 0.1), History(5)
    sb, hb = init_state(5, inst.L, 3.0, 0.1), History(5)
    compared = 0
    for t in range(1, 400):
        ctx = sample_round_context(inst, t, ctx_rng)
        da = step(CCCONUCB, sa, ha, ctx, known)
        db = step(C2UCB, sb, hb, ctx, known)
        if da.was_conservative:
            if ha.n > 0:
                break
            # before any optimistic play both states are still the prior
            apply_feedback(sa, ha, da, ctx, inplace=True)
            continue
        assert db.action == da.candidate_B
        w = ctx.base_features[list(da.action.arms)] @ inst.theta_star + noise_rng.normal(size=len(da.action.arms))
        apply_feedback(sa, ha, da, ctx, w, inplace=True)
        apply_feedback(sb, hb, db, ctx, w, inplace=True)
        compared += 1
    assert compared > 0


def test_feedback_needs_one_weight_per_arm():
    dec = Decision(base_action([0]), False, 0.0, 0.0, base_action([0]), ingest=True)
    with pytest.raises(ValueError):
        apply_feedback(exact_state(), History(1), dec, ctx_from([1.0]), [1.0, 2.0])
