"""Per-intersection actor-critic agents trained with PPO on pressure observations."""

from .agent import action_to_splits, compute_reward, make_observation  # noqa: F401
from .nets import MLP, Adam  # noqa: F401
from .policy import RunningScale, SplitPolicy  # noqa: F401
from .ppo import PPOConfig, Trajectory, compute_gae, ppo_update  # noqa: F401
from .train import RLController, TrainConfig, load_policies, save_policies, train  # noqa: F401
