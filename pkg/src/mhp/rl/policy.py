"""Actor-critic policy over cycle splits for one intersection.

The actor emits the mean of a diagonal Gaussian in unconstrained action
space; sampled vectors are pushed through the softmax-with-floors map to
the split simplex, so log-probabilities stay analytic in the
unconstrained space.
"""

from __future__ import annotations

import numpy as np

from .nets import MLP

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_STD_MIN = -3.0
LOG_STD_MAX = 0.5


class RunningScale:
    """Per-entry RMS estimate used to condition observations.

    Updated only by the trainer between iterations so rollouts within an
    iteration all see the same frozen scale.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0.0
        self.sumsq = np.zeros(dim)

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        self.count += batch.shape[0]
        self.sumsq += (batch**2).sum(axis=0)

    @property
    def scale(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.dim)
        return np.maximum(np.sqrt(self.sumsq / self.count), 1.0)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=np.float64) / self.scale


class SplitPolicy:
    """Gaussian actor plus value critic, both small tanh MLPs.

    The critic may take extra inputs the actor does not see (episode
    progress by default): returns in a demand-profile episode depend
    strongly on time-to-go, and a time-blind value baseline biases the
    advantages.
    """

    def __init__(self, obs_dim: int, n_actions: int, hidden=(64, 64), seed: int = 0,
                 init_log_std: float = -0.7, critic_extra: int = 1):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.critic_extra = critic_extra
        self.actor = MLP(obs_dim, hidden, n_actions, rng, out_scale=0.01)
        self.log_std = np.full(n_actions, float(init_log_std))
        self.critic = MLP(obs_dim + critic_extra, hidden, 1, rng)
        self.obs_scale = RunningScale(obs_dim)

    # -- distribution ------------------------------------------------------

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return self.actor(np.atleast_2d(obs))[0]

    def sample_action(self, obs: np.ndarray, rng: np.random.Generator):
        mu = self.mean_action(obs)
        std = np.exp(self.log_std)
        z = mu + std * rng.standard_normal(self.n_actions)
        return z, self.log_prob(obs, z)

    def log_prob(self, obs: np.ndarray, z: np.ndarray) -> float:
        mu = self.mean_action(obs)
        std = np.exp(self.log_std)
        u = (np.asarray(z) - mu) / std
        return float(-0.5 * (u @ u) - self.log_std.sum() - 0.5 * self.n_actions * LOG_2PI)

    def value(self, obs: np.ndarray) -> float:
        return float(self.critic(np.atleast_2d(obs))[0, 0])

    def entropy(self) -> float:
        return float(self.log_std.sum() + 0.5 * self.n_actions * (1.0 + LOG_2PI))

    # -- bookkeeping ---------------------------------------------------------

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def params_finite(self) -> bool:
        arrays = self.actor.get_params() + [self.log_std] + self.critic.get_params()
        return all(np.isfinite(a).all() for a in arrays)

    def copy(self) -> "SplitPolicy":
        clone = object.__new__(SplitPolicy)
        clone.obs_dim = self.obs_dim
        clone.n_actions = self.n_actions
        clone.actor = self.actor.copy()
        clone.log_std = self.log_std.copy()
        clone.critic = self.critic.copy()
        clone.obs_scale = RunningScale(self.obs_dim)
        clone.obs_scale.count = self.obs_scale.count
        clone.obs_scale.sumsq = self.obs_scale.sumsq.copy()
        return clone
