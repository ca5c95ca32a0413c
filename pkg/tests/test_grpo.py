import numpy as np
import pytest

from restoragent.bandit import bandit_from_images, bandit_single_task
from restoragent.core import RestorationTask
from restoragent.errors import DegeneratePolicy, LengthMismatch
from restoragent.fixtures import hazy_scene
from restoragent.grpo import (
    NUM_TASKS,
    AdvantageVector,
    GrpoConfig,
    PolicyParams,
    RewardGroup,
    ToyBanditEnv,
    advantages,
    clipped_term,
    final_loss,
    group_loss,
    kl_estimate,
    l_clip,
    policy_grad,
    ratio,
    train_toy_policy,
)


def test_advantages_alternating():
    advs = advantages(RewardGroup((1, 0, 1, 0)))
    for got, want in zip(advs.values, (1, -1, 1, -1)):
        assert got == pytest.approx(want, abs=1e-6)


def test_advantages_degenerate_all_ones():
    assert advantages(RewardGroup((1, 1, 1, 1))).values == (0.0, 0.0, 0.0, 0.0)


def test_advantages_single_success():
    # mean 0.25, population std sqrt(3)/4
    advs = advantages(RewardGroup((1, 0, 0, 0)))
    std = np.sqrt(3) / 4
    assert advs.values[0] == pytest.approx(0.75 / std, rel=1e-6)
    assert advs.values[0] == pytest.approx(1.7320508, abs=1e-4)
    for v in advs.values[1:]:
        assert v == pytest.approx(-0.25 / std, rel=1e-6)
        assert v == pytest.approx(-0.5773502, abs=1e-4)


def test_advantages_normalization_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 20))
        rewards = tuple(int(b) for b in rng.integers(0, 2, n))
        if len(set(rewards)) < 2:
            continue
        advs = np.array(advantages(RewardGroup(rewards)).values)
        assert abs(advs.mean()) < 1e-9
        assert abs(advs.std() - 1.0) < 2e-8 / np.std(rewards) + 1e-7


def test_advantages_duplication_consistent():
    base = (1, 0, 0, 1, 0)
    a1 = advantages(RewardGroup(base)).values
    a2 = advantages(RewardGroup(base + base)).values
    assert sorted(set(np.round(a1, 12))) == sorted(set(np.round(a2, 12)))


def test_ratio():
    assert ratio(0.3, 0.3) == 1.0
    assert ratio(0.6, 0.3) == pytest.approx(2.0)
    with pytest.raises(DegeneratePolicy):
        ratio(0.5, 1e-13)


def test_clipped_term_hand_cases():
    assert clipped_term(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_term(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    for adv in (-2.0, 0.0, 3.5):
        assert clipped_term(1.0, adv, 0.2) == pytest.approx(adv)


def test_clipped_term_pessimism():
    rng = np.random.default_rng(1)
    for _ in range(200):
        rho = float(rng.uniform(0.01, 3.0))
        adv = float(rng.normal())
        eps = float(rng.uniform(0.05, 0.5))
        assert clipped_term(rho, adv, eps) <= rho * adv + 1e-12


def test_l_clip():
    advs = AdvantageVector(values=(1.0, -1.0))
    assert l_clip([1.5, 0.5], advs, 0.2) == pytest.approx((1.2 - 0.8) / 2)
    zero = AdvantageVector(values=(0.0, 0.0, 0.0))
    assert l_clip([0.4, 1.0, 2.5], zero, 0.2) == 0.0
    with pytest.raises(LengthMismatch):
        l_clip([1.0], advs, 0.2)


def test_l_clip_identity_ratios():
    advs = advantages(RewardGroup((1, 0, 1, 0)))
    assert l_clip([1.0] * 4, advs, 0.2) == pytest.approx(np.mean(advs.values), abs=1e-12)


def test_kl_estimate_values():
    assert kl_estimate(0.3, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert kl_estimate(0.6, 0.3) == pytest.approx(2 - np.log(2) - 1, abs=1e-9)
    assert kl_estimate(0.6, 0.3) == pytest.approx(0.306853, abs=1e-6)
    assert kl_estimate(0.3, 0.6) == pytest.approx(0.5 - np.log(0.5) - 1, abs=1e-9)
    assert kl_estimate(0.3, 0.6) == pytest.approx(0.193147, abs=1e-6)


def test_kl_nonnegative_log_grid():
    for r in np.logspace(-6, 6, 121):
        val = kl_estimate(r * 0.1 / (1 + r * 0.1), 0.1 / (1 + r * 0.1))
        # direct evaluation at ratio r
        val = r - np.log(r) - 1.0
        assert val >= -1e-12
        if abs(r - 1.0) > 1e-9:
            assert val > 0.0


def test_final_loss():
    assert final_loss(0.2, 0.0, 0.04) == pytest.approx(-0.2)
    assert final_loss(0.0, 0.306853, 0.04) == pytest.approx(0.0122741, abs=1e-7)
    assert final_loss(0.7, 123.0, 0.0) == pytest.approx(-0.7)


def random_instance(rng, num_features=4):
    weights = rng.normal(scale=0.5, size=(num_features, NUM_TASKS))
    params = PolicyParams(
        weights=weights.copy(),
        old_weights=weights + rng.normal(scale=0.1, size=weights.shape),
        ref_weights=rng.normal(scale=0.5, size=weights.shape),
    )
    features = rng.normal(size=num_features)
    n = int(rng.integers(2, 10))
    actions = [int(a) for a in rng.integers(0, NUM_TASKS, n)]
    rewards = tuple(int(b) for b in rng.integers(0, 2, n))
    advs = advantages(RewardGroup(rewards))
    return params, features, actions, advs


def finite_difference_grad(params, features, actions, advs, config, h=1e-5):
    grad = np.zeros_like(params.weights)
    for i in range(params.weights.shape[0]):
        for j in range(params.weights.shape[1]):
            wp = params.weights.copy()
            wp[i, j] += h
            wm = params.weights.copy()
            wm[i, j] -= h
            fp = group_loss(wp, params, features, actions, advs, config)
            fm = group_loss(wm, params, features, actions, advs, config)
            grad[i, j] = (fp - fm) / (2 * h)
    return grad


def test_gradient_zero_at_flat_point():
    params = PolicyParams(weights=np.zeros((3, NUM_TASKS)))
    advs = AdvantageVector(values=(0.0, 0.0))
    grad = policy_grad(params, np.ones(3), [0, 1], advs, GrpoConfig())
    assert np.allclose(grad, 0.0, atol=1e-15)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    config = GrpoConfig()
    checked = 0
    while checked < 100:
        params, features, actions, advs = random_instance(rng)
        analytic = policy_grad(params, features, actions, advs, config)
        # skip instances sitting exactly on the clip kink
        kink = False
        pi = params.probs(features)
        pi_old = params.probs(features, "old")
        for a in actions:
            rho = pi[a] / pi_old[a]
            if min(abs(rho - (1 - config.eps_clip)), abs(rho - (1 + config.eps_clip))) < 1e-4:
                kink = True
        if kink:
            continue
        numeric = finite_difference_grad(params, features, actions, advs, config)
        scale = max(np.max(np.abs(numeric)), 1e-8)
        assert np.max(np.abs(analytic - numeric)) / scale < 1e-4
        checked += 1


def test_gradient_unclipped_single_sample_symbolic():
    # beta=0, one action in a 2-feature toy, rho inside the clip band:
    # gradient must equal -A * rho * dlogpi(a)
    config = GrpoConfig(beta=0.0)
    weights = np.zeros((2, NUM_TASKS))
    params = PolicyParams(weights=weights)
    features = np.array([1.0, 2.0])
    action = 3
    adv = 0.7
    advs = AdvantageVector(values=(adv, adv))  # duplicate to satisfy n >= 2
    grad = policy_grad(params, features, [action, action], advs, config)
    pi = params.probs(features)
    dlogpi = np.outer(features, -pi)
    dlogpi[:, action] += features
    expected = -adv * 1.0 * dlogpi  # rho = 1 at theta == theta_old
    assert np.allclose(grad, expected, atol=1e-12)


def test_train_single_hazy_state():
    env = bandit_single_task([(hazy_scene(), RestorationTask.Dehaze)])
    result = train_toy_policy(env, GrpoConfig(), seed=0)
    probs = result.params.probs(env.features[0])
    assert len(result.mean_rewards) == 200
    # starts uniform over the 7 tasks
    assert 1 / NUM_TASKS == pytest.approx(0.1429, abs=1e-4)
    assert result.expected_rewards[0] == pytest.approx(1 / NUM_TASKS, abs=1e-9)
    assert probs[int(RestorationTask.Dehaze)] > 0.9


def test_train_reproducible():
    env = bandit_single_task([(hazy_scene(), RestorationTask.Dehaze)])
    r1 = train_toy_policy(env, GrpoConfig(iterations=50), seed=123)
    r2 = train_toy_policy(env, GrpoConfig(iterations=50), seed=123)
    assert np.array_equal(r1.params.weights, r2.params.weights)
    assert r1.mean_rewards == r2.mean_rewards


def test_all_reward_one_env_keeps_weights():
    env = ToyBanditEnv(
        features=np.array([[1.0, 0.5]]),
        reward_table=np.ones((1, NUM_TASKS), dtype=np.int64),
    )
    result = train_toy_policy(env, GrpoConfig(iterations=10), seed=0)
    # zero advantages every group; KL pull is zero since theta == theta_ref
    assert np.allclose(result.params.weights, 0.0, atol=1e-15)
    assert result.mean_rewards == [1.0] * 10


def test_bandit_from_images_shapes():
    env = bandit_from_images([hazy_scene()])
    assert env.features.shape == (1, 8)
    assert env.reward_table.shape == (1, NUM_TASKS)
    assert env.reward_table[0, int(RestorationTask.Dehaze)] == 1
