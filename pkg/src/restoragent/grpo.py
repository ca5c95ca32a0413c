"""Group-relative policy optimization for a toy categorical task policy.

Group sampling, reward normalization, the clipped surrogate with a KL
penalty against a frozen reference policy, its exact analytic gradient,
and a small bandit training loop that exercises all of it end-to-end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RestorationTask
from .errors import DegeneratePolicy, LengthMismatch, ShapeMismatch

NUM_TASKS = len(RestorationTask)
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class RewardGroup:
    rewards: tuple  # binary 0|1 entries

    def __post_init__(self):
        rewards = tuple(int(r) for r in self.rewards)
        if len(rewards) < 2:
            raise ValueError("group size must be >= 2")
        if any(r not in (0, 1) for r in rewards):
            raise ValueError("rewards must be binary")
        object.__setattr__(self, "rewards", rewards)

    @property
    def n(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class AdvantageVector:
    values: tuple
    eps_num: float = 1e-8


@dataclass
class GrpoConfig:
    eps_clip: float = 0.2
    beta: float = 0.04
    eps_num: float = 1e-8
    n: int = 8
    learning_rate: float = 0.05
    iterations: int = 200

    def __post_init__(self):
        if not 0.0 < self.eps_clip < 1.0:
            raise ValueError("eps_clip must be in (0, 1)")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")


def advantages(group: RewardGroup, eps_num: float = 1e-8) -> AdvantageVector:
    """Normalize rewards within the group: (r_i - mean) / (popstd + eps)."""
    r = np.asarray(group.rewards, dtype=np.float64)
    a = (r - r.mean()) / (r.std() + eps_num)
    return AdvantageVector(values=tuple(a.tolist()), eps_num=eps_num)


def ratio(p_new: float, p_old: float) -> float:
    """Probability ratio of the current to the sampling policy."""
    if p_old <= PROB_FLOOR:
        raise DegeneratePolicy(f"p_old {p_old} at or below floor {PROB_FLOOR}")
    return p_new / p_old


def clipped_term(rho: float, adv: float, eps_clip: float) -> float:
    """min(rho*A, clip(rho, 1-eps, 1+eps)*A) — the pessimistic surrogate."""
    clipped = min(max(rho, 1.0 - eps_clip), 1.0 + eps_clip)
    return min(rho * adv, clipped * adv)


def l_clip(rhos, advs: AdvantageVector, eps_clip: float) -> float:
    """Group mean of the clipped surrogate terms."""
    if len(rhos) != len(advs.values):
        raise LengthMismatch(f"{len(rhos)} ratios vs {len(advs.values)} advantages")
    return float(
        np.mean([clipped_term(r, a, eps_clip) for r, a in zip(rhos, advs.values)])
    )


def kl_estimate(p_ref: float, p_theta: float) -> float:
    """Unbiased nonnegative estimator r - log r - 1 with r = p_ref/p_theta."""
    if p_ref <= PROB_FLOOR or p_theta <= PROB_FLOOR:
        raise DegeneratePolicy("probability at or below floor")
    r = p_ref / p_theta
    return r - np.log(r) - 1.0


def final_loss(l_clip_value: float, kl_mean: float, beta: float) -> float:
    """-L_clip + beta * KL: minimized by gradient descent."""
    return -l_clip_value + beta * kl_mean


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class PolicyParams:
    """Linear-softmax policy over the 7 task codes.

    logits = features @ weights; snapshots hold the sampling policy
    (old) and the frozen reference policy (ref).
    """

    weights: np.ndarray  # (num_features, NUM_TASKS)
    old_weights: np.ndarray = field(default=None)
    ref_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != NUM_TASKS:
            raise ShapeMismatch(f"weights shape {self.weights.shape}")
        if self.old_weights is None:
            self.old_weights = self.weights.copy()
        if self.ref_weights is None:
            self.ref_weights = self.weights.copy()

    def probs(self, features: np.ndarray, which: str = "current") -> np.ndarray:
        w = {"current": self.weights, "old": self.old_weights, "ref": self.ref_weights}[which]
        return softmax(np.asarray(features, dtype=np.float64) @ w)

    def refresh_old(self):
        self.old_weights = self.weights.copy()


def group_loss(
    weights: np.ndarray,
    params: PolicyParams,
    features: np.ndarray,
    actions,
    advs: AdvantageVector,
    config: GrpoConfig,
) -> float:
    """Full scalar loss at the given weights (old/ref held fixed)."""
    features = np.asarray(features, dtype=np.float64)
    pi = softmax(features @ weights)
    pi_old = params.probs(features, "old")
    pi_ref = params.probs(features, "ref")
    rhos = [ratio(pi[a], pi_old[a]) for a in actions]
    lc = l_clip(rhos, advs, config.eps_clip)
    kl = float(np.mean([kl_estimate(pi_ref[a], pi[a]) for a in actions]))
    return final_loss(lc, kl, config.beta)


def policy_grad(
    params: PolicyParams,
    features: np.ndarray,
    actions,
    advs: AdvantageVector,
    config: GrpoConfig,
) -> np.ndarray:
    """Exact gradient of group_loss w.r.t. the current weights.

    old and ref policies are constants; at the clip the gradient flows
    through the unclipped branch only when it attains the min.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (params.weights.shape[0],):
        raise ShapeMismatch(f"features shape {features.shape}")
    if len(actions) != len(advs.values):
        raise LengthMismatch(f"{len(actions)} actions vs {len(advs.values)} advantages")
    n = len(actions)
    pi = params.probs(features, "current")
    pi_old = params.probs(features, "old")
    pi_ref = params.probs(features, "ref")
    grad = np.zeros_like(params.weights)
    for a, adv in zip(actions, advs.values):
        a = int(a)
        rho = ratio(pi[a], pi_old[a])
        clipped = min(max(rho, 1.0 - config.eps_clip), 1.0 + config.eps_clip)
        # d log pi(a) / d weights = f outer (onehot(a) - pi)
        dlogpi = np.outer(features, -pi)
        dlogpi[:, a] += features
        if rho * adv <= clipped * adv:
            # surrogate contributes -(1/n) * adv * rho * dlogpi
            grad -= (adv * rho / n) * dlogpi
        r = pi_ref[a] / pi[a]
        # d kl / d weights = (1 - p_ref/p_theta) * dlogpi
        grad += (config.beta / n) * (1.0 - r) * dlogpi
    return grad


@dataclass
class ToyBanditEnv:
    """States are quality-vector-shaped feature rows; reward is a lookup
    table action -> {0, 1} per state (precomputed from the reward rule on
    synthetic fixtures)."""

    features: np.ndarray  # (num_states, num_features)
    reward_table: np.ndarray  # (num_states, NUM_TASKS) of 0|1

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.reward_table = np.atleast_2d(np.asarray(self.reward_table, dtype=np.int64))
        if self.reward_table.shape != (self.features.shape[0], NUM_TASKS):
            raise ShapeMismatch(
                f"reward_table shape {self.reward_table.shape} for "
                f"{self.features.shape[0]} states"
            )


@dataclass
class TrainResult:
    params: PolicyParams
    mean_rewards: list  # sampled group mean per iteration
    expected_rewards: list  # success probability under the sampling policy
    losses: list


def train_toy_policy(env: ToyBanditEnv, config: GrpoConfig, seed: int = 0) -> TrainResult:
    """Iterate group sampling + one gradient step per iteration.

    theta_old is refreshed every iteration; theta_ref stays frozen at
    initialization. Bit-reproducible for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    num_features = env.features.shape[1]
    params = PolicyParams(weights=np.zeros((num_features, NUM_TASKS)))
    mean_rewards = []
    expected_rewards = []
    losses = []
    for _ in range(config.iterations):
        grad = np.zeros_like(params.weights)
        loss_acc = 0.0
        reward_acc = 0.0
        expected_acc = 0.0
        for s in range(env.features.shape[0]):
            f = env.features[s]
            pi_old = params.probs(f, "old")
            expected_acc += float(pi_old @ env.reward_table[s])
            actions = rng.choice(NUM_TASKS, size=config.n, p=pi_old)
            rewards = RewardGroup(tuple(env.reward_table[s, a] for a in actions))
            advs = advantages(rewards, config.eps_num)
            grad += policy_grad(params, f, actions, advs, config)
            loss_acc += group_loss(params.weights, params, f, actions, advs, config)
            reward_acc += np.mean(rewards.rewards)
        num_states = env.features.shape[0]
        params.weights = params.weights - config.learning_rate * (grad / num_states)
        params.refresh_old()
        mean_rewards.append(reward_acc / num_states)
        expected_rewards.append(expected_acc / num_states)
        losses.append(loss_acc / num_states)
    return TrainResult(
        params=params,
        mean_rewards=mean_rewards,
        expected_rewards=expected_rewards,
        losses=losses,
    )
