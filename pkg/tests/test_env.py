import numpy as np
import pytest

from ccconucb.env import (GenConfig, NoiseSpec, EnvironmentInstance, SamplingError, action_features,
                          episode_streams, expected_weights, generate_instance, oracle_quantities,
                          realize_weights, sample_round_context)
from ccconucb.reward import A0, LINEAR_SUM, RewardFunction, base_action, brute_force_argmax, evaluate


def test_instance_is_deterministic():
    a, b = generate_instance(GenConfig(), 4), generate_instance(GenConfig(), 4)
    assert a.to_json() == b.to_json()
    assert generate_instance(GenConfig(), 5).to_json() != a.to_json()


def test_instance_json_round_trip():
    inst = generate_instance(GenConfig(M=12, d=3, K=3), 2)
    back = EnvironmentInstance.from_json(inst.to_json())
    assert back.to_json() == inst.to_json()


def test_scaled_shape():
    inst = generate_instance(GenConfig(M=100, d=10, K=2), 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    assert ctx.base_features.shape == (100, 10)
    assert len(inst.conservative_features) <= 2
    assert np.linalg.norm(inst.theta_star) <= 3.0 + 1e-12


def test_nonnegative_law_needs_no_rejection():
    cfg = GenConfig(M=10, d=1, K=1, feature_low=0.0, feature_high=1.0, theta_star=(1.0,))
    inst = generate_instance(cfg, 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    np.testing.assert_array_equal(expected_weights(inst, ctx), ctx.base_features[:, 0])


def test_sampled_features_satisfy_constraints():
    inst = generate_instance(GenConfig(), 1)
    rng = episode_streams(inst, 0)[0]
    X = np.concatenate([sample_round_context(inst, t, rng).base_features for t in range(5000)])
    assert len(X) == 10**5
    assert (X @ inst.theta_star >= 0).all()
    assert (np.einsum("ij,ij->i", X, X) <= inst.L).all()


def test_same_rng_state_gives_same_context():
    inst = generate_instance(GenConfig(), 1)
    r1, r2 = episode_streams(inst, 3)[0], episode_streams(inst, 3)[0]
    np.testing.assert_array_equal(sample_round_context(inst, 1, r1).base_features,
                                  sample_round_context(inst, 1, r2).base_features)


def test_conservative_weights_sit_in_rank_bracket():
    inst = generate_instance(GenConfig(), 7)
    w = inst.conservative_weights
    assert (w <= inst.reference_weights[7]).all() and (w >= inst.reference_weights[8]).all()
    assert inst.mu0_true == evaluate(inst.config.reward, w)


def test_impossible_bracket_raises():
    # ranks (1, 1) demand an exact weight match, which continuous draws never hit
    cfg = GenConfig(M=20, d=5, K=2, conservative_ranks=(1, 1), theta_star=(0.0, 0.0, 0.0, 0.0, 1e-9))
    with pytest.raises(SamplingError):
        generate_instance(cfg, 0)


def test_noiseless_weights_are_exact():
    cfg = GenConfig(noise=NoiseSpec("uniform", 0.0))
    inst = generate_instance(cfg, 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    a = base_action([1, 4])
    np.testing.assert_array_equal(realize_weights(inst, ctx, a, np.random.default_rng(0)),
                                  expected_weights(inst, ctx)[[1, 4]])
    np.testing.assert_array_equal(realize_weights(inst, ctx, A0, np.random.default_rng(0)),
                                  inst.conservative_weights)


def test_gaussian_noise_mean():
    inst = generate_instance(GenConfig(), 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    rng = np.random.default_rng(1)
    a = base_action([3])
    draws = np.array([realize_weights(inst, ctx, a, rng)[0] for _ in range(10**5)])
    assert abs(draws.mean() - expected_weights(inst, ctx)[3]) < 3 / np.sqrt(10**5)


def test_noise_scale_domain():
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", 1.5)


def test_oracle_matches_brute_force_and_baseline():
    for seed in range(20):
        inst = generate_instance(GenConfig(M=12, d=4, K=3), seed)
        ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
        best, value, gap = oracle_quantities(inst, ctx)
        w = expected_weights(inst, ctx)
        brute = evaluate(inst.config.reward, w[list(brute_force_argmax(inst.config.reward, w, 3).arms)])
        assert value == max(brute, inst.mu0_true)
        assert gap == pytest.approx(max(value - inst.mu0_true, 0.0))
        assert best.is_conservative == (inst.mu0_true > brute)


def test_oracle_zero_weights_gap_zero():
    cfg = GenConfig(M=10, d=1, K=1, feature_low=0.0, feature_high=1.0, theta_star=(0.0,),
                    reward=RewardFunction(LINEAR_SUM))
    inst = generate_instance(cfg, 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    assert inst.mu0_true == 0.0
    assert oracle_quantities(inst, ctx)[2] == 0.0


def test_action_features_selects_rows():
    inst = generate_instance(GenConfig(), 0)
    ctx = sample_round_context(inst, 1, episode_streams(inst, 0)[0])
    np.testing.assert_array_equal(action_features(ctx, base_action([2, 5])), ctx.base_features[[2, 5]])
    assert action_features(ctx, A0) is inst.conservative_features
