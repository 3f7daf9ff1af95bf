"""Clipped-surrogate PPO with generalized advantage estimation.

Gradients are computed by hand through the policy's MLPs; a finite-
difference oracle in the test suite pins their correctness.  Updates
abort with :class:`~mhp.errors.NonFiniteGradient` rather than writing
non-finite parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradient
from .nets import Adam, flatten
from .policy import LOG_2PI, SplitPolicy


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 10.0


@dataclass
class Trajectory:
    """One agent's rollout of a single episode, in decision-step order."""

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def __len__(self):
        return len(self.obs)

    def finished(self) -> bool:
        return len(self.rewards) == len(self.obs)


def compute_gae(rewards, values, gamma: float, lam: float):
    """Episode-local advantages and returns (no bootstrap past the horizon)."""
    T = len(rewards)
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + np.asarray(values)


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def build_batch(trajectories: list[Trajectory], cfg: PPOConfig) -> Batch:
    """Concatenate episodes, GAE per episode, then normalize advantages."""
    if not trajectories or not all(t.finished() and len(t) for t in trajectories):
        raise ValueError("need nonempty, finished trajectories")
    obs, acts, logps, advs, rets = [], [], [], [], []
    for traj in trajectories:
        rewards = np.asarray(traj.rewards, dtype=np.float64)
        if not np.isfinite(rewards).all():
            raise ValueError("trajectory rewards must be finite")
        adv, ret = compute_gae(rewards, np.asarray(traj.values), cfg.gamma, cfg.gae_lambda)
        obs.append(np.asarray(traj.obs))
        acts.append(np.asarray(traj.actions))
        logps.append(np.asarray(traj.log_probs))
        advs.append(adv)
        rets.append(ret)
    advantages = np.concatenate(advs)
    mu, sigma = advantages.mean(), advantages.std()
    advantages = (advantages - mu) / (sigma + 1e-8)
    return Batch(
        obs=np.concatenate(obs),
        actions=np.concatenate(acts),
        log_probs_old=np.concatenate(logps),
        advantages=advantages,
        returns=np.concatenate(rets),
    )


def ppo_loss_and_grads(policy: SplitPolicy, batch: Batch, cfg: PPOConfig):
    """Total PPO loss plus gradients for actor, log-std, and critic.

    Loss = clipped surrogate + value MSE - entropy bonus, averaged over
    the batch.
    """
    B = batch.obs.shape[0]
    adv = batch.advantages

    mu, actor_cache = policy.actor.forward(batch.obs)
    std = np.exp(policy.log_std)
    u = (batch.actions - mu) / std
    log_probs = -0.5 * (u**2).sum(axis=1) - policy.log_std.sum() - 0.5 * policy.n_actions * LOG_2PI
    ratio = np.exp(log_probs - batch.log_probs_old)

    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    entropy = policy.entropy()

    value, critic_cache = policy.critic.forward(batch.obs)
    value = value[:, 0]
    verr = value - batch.returns
    value_loss = float((verr**2).mean())

    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(policy_loss)/d(log_prob): only where the unclipped branch is active.
    unclipped = surr1 <= surr2
    dlogp = np.where(unclipped, -adv * ratio, 0.0) / B
    dmu = dlogp[:, None] * (u / std)            # dlogp/dmu = u/std
    dlogstd_rows = dlogp[:, None] * (u**2 - 1.0)  # dlogp/dlogstd = u^2 - 1
    grad_log_std = dlogstd_rows.sum(axis=0) - cfg.entropy_coef * np.ones(policy.n_actions)
    actor_gw, actor_gb = policy.actor.backward(actor_cache, dmu)

    dvalue = (2.0 * cfg.value_coef / B) * verr
    critic_gw, critic_gb = policy.critic.backward(critic_cache, dvalue[:, None])

    actor_grads = actor_gw + actor_gb
    critic_grads = critic_gw + critic_gb
    stats = {
        "loss": float(total),
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float((~unclipped).mean()),
    }
    return total, actor_grads, grad_log_std, critic_grads, stats


def _clip_by_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads)))
    if norm > max_norm > 0:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return grads


class PPOUpdater:
    """Owns the optimizers for one policy; applies minibatched updates."""

    def __init__(self, policy: SplitPolicy, cfg: PPOConfig):
        self.policy = policy
        self.cfg = cfg
        self.actor_opt = Adam(lr=cfg.lr)
        self.critic_opt = Adam(lr=cfg.lr)

    def update(self, trajectories: list[Trajectory], rng: np.random.Generator) -> dict:
        cfg = self.cfg
        batch = build_batch(trajectories, cfg)
        n = batch.obs.shape[0]
        stats = {}
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                idx = order[lo : lo + cfg.minibatch]
                mini = Batch(
                    obs=batch.obs[idx],
                    actions=batch.actions[idx],
                    log_probs_old=batch.log_probs_old[idx],
                    advantages=batch.advantages[idx],
                    returns=batch.returns[idx],
                )
                _, actor_grads, g_log_std, critic_grads, stats = ppo_loss_and_grads(
                    self.policy, mini, cfg
                )
                all_grads = actor_grads + [g_log_std] + critic_grads
                if not all(np.isfinite(g).all() for g in all_grads):
                    raise NonFiniteGradient(
                        f"non-finite gradient in minibatch of {len(idx)} steps "
                        f"(adv range {mini.advantages.min():.3g}..{mini.advantages.max():.3g})"
                    )
                a_params = self.policy.actor.get_params() + [self.policy.log_std]
                a_grads = _clip_by_norm(actor_grads + [g_log_std], cfg.max_grad_norm)
                new_a = self.actor_opt.step(a_params, a_grads)
                self.policy.actor.set_params(new_a[:-1])
                self.policy.log_std = new_a[-1]
                self.policy.clamp_log_std()
                c_grads = _clip_by_norm(critic_grads, cfg.max_grad_norm)
                self.policy.critic.set_params(
                    self.critic_opt.step(self.policy.critic.get_params(), c_grads)
                )
        if not self.policy.params_finite():
            raise NonFiniteGradient("policy parameters became non-finite after update")
        return stats


def ppo_update(policy, trajectories, cfg, rng, updater=None):
    """One PPO update over collected trajectories; returns the updated policy."""
    updater = updater or PPOUpdater(policy, cfg)
    updater.update(trajectories, rng)
    return policy


def flat_params(policy: SplitPolicy) -> np.ndarray:
    return flatten(policy.actor.get_params() + [policy.log_std] + policy.critic.get_params())
