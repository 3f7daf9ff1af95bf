"""Training loop: decentralized agents, shared episodes, PPO updates.

One agent per controlled intersection, trained concurrently inside the
same episodes.  Evaluation episodes run the deterministic policy mean on
fixed seeds; the best-by-evaluation-TTS parameter set is checkpointed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..controllers import Controller
from ..mesosim import MetricsLog, run_episode
from ..scenario import Scenario
from .agent import action_to_splits, compute_reward, make_observation
from .policy import RunningScale, SplitPolicy
from .ppo import PPOConfig, PPOUpdater, Trajectory

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    hop: int = 1
    reward_mode: str = "potential"  # or "pressure" (myopic ablation)
    iterations: int = 40
    episodes_per_iter: int = 6
    seed: int = 0
    eval_seeds: tuple[int, ...] = (9001, 9002)
    eval_every: int = 1
    hidden: tuple[int, ...] = (64, 64)
    reward_scale: float = 500.0
    potential_h_start: int = 0
    stacked_obs: bool = False
    ppo: PPOConfig = field(default_factory=PPOConfig)


class RLController(Controller):
    """Drives every controlled intersection from its own split policy.

    In training mode actions are sampled and (observation, action,
    log-prob, value, reward) tuples are recorded per agent; in
    evaluation mode the policy mean is used and only episode rewards are
    tracked.
    """

    decision_mode = "cycle"

    def __init__(
        self,
        policies: dict[str, SplitPolicy],
        hop: int,
        reward_mode: str = "potential",
        reward_scale: float = 500.0,
        potential_h_start: int = 0,
        stacked_obs: bool = False,
        sample: bool = False,
        rng: np.random.Generator | None = None,
    ):
        self.policies = policies
        self.hop = hop
        self.reward_mode = reward_mode
        self.reward_scale = reward_scale
        self.h_start = potential_h_start
        self.stacked_obs = stacked_obs
        self.sample = sample
        self.rng = rng or np.random.default_rng(0)
        self.trajectories: dict[str, Trajectory] = {}
        self.episode_reward = 0.0

    def begin_episode(self, sim) -> None:
        self.trajectories = {name: Trajectory() for name in self.policies}
        self.episode_reward = 0.0
        self._links = {
            spec.name: tuple(l for ph in spec.phases for l in ph.incoming)
            for spec in sim.scenario.intersections
        }

    def _reward(self, sim, name) -> float:
        snapshot = sim.measure_queues()
        raw = compute_reward(
            sim.tm, snapshot, self._links[name], self.hop,
            mode=self.reward_mode, h_start=self.h_start,
        )
        return raw / self.reward_scale

    def decide(self, sim, t_s, due):
        snapshot = sim.measure_queues()
        decisions = {}
        for name in due:
            if name not in self.policies:
                continue
            policy = self.policies[name]
            traj = self.trajectories[name]
            if len(traj) > len(traj.rewards):  # close the previous cycle
                r = self._reward(sim, name)
                traj.rewards.append(r)
                self.episode_reward += r
            spec = sim.intersection(name)
            obs_raw = make_observation(sim.tm, snapshot, spec.phases, self.hop, self.stacked_obs)
            obs = policy.obs_scale.normalize(obs_raw)
            if self.sample:
                z, logp = policy.sample_action(obs, self.rng)
                traj.obs.append(obs)
                traj.actions.append(z)
                traj.log_probs.append(logp)
                traj.values.append(policy.value(obs))
            else:
                z = policy.mean_action(obs)
                traj.obs.append(obs)  # length drives the end-of-cycle reward bookkeeping
                traj.actions.append(z)
                traj.log_probs.append(0.0)
                traj.values.append(0.0)
            decisions[name] = action_to_splits(z, spec)
        return decisions

    def end_episode(self, sim) -> None:
        for name, traj in self.trajectories.items():
            if len(traj) > len(traj.rewards):
                r = self._reward(sim, name)
                traj.rewards.append(r)
                self.episode_reward += r


@dataclass
class TrainResult:
    policies: dict[str, SplitPolicy]          # best by evaluation TTS
    final_policies: dict[str, SplitPolicy]
    curve: list[dict]
    best_eval_tts: float
    config: TrainConfig
    scenario_name: str


def _episode_seed(base: int, iteration: int, episode: int) -> int:
    ss = np.random.SeedSequence(entropy=(base, iteration, episode))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % np.iinfo(np.int64).max)


def evaluate_policies(
    scenario: Scenario,
    policies: dict[str, SplitPolicy],
    cfg: TrainConfig,
    seeds,
) -> list[tuple[int, float, MetricsLog]]:
    """Deterministic-policy episodes; returns (seed, episode_reward, log) rows."""
    rows = []
    for seed in seeds:
        ctrl = RLController(
            policies, cfg.hop, cfg.reward_mode, cfg.reward_scale,
            cfg.potential_h_start, cfg.stacked_obs, sample=False,
        )
        log = run_episode(scenario, ctrl, seed=int(seed))
        rows.append((int(seed), ctrl.episode_reward, log))
    return rows


def train(scenario: Scenario, cfg: TrainConfig, out_dir: str | Path | None = None,
          progress: bool = False) -> TrainResult:
    """Train one agent per intersection; checkpoint the best evaluation TTS."""
    agent_names = [spec.name for spec in scenario.intersections]
    policies: dict[str, SplitPolicy] = {}
    updaters: dict[str, PPOUpdater] = {}
    for k, name in enumerate(agent_names):
        spec = scenario.intersection(name)
        n_phases = len(spec.phases)
        obs_dim = n_phases * (cfg.hop + 1) if cfg.stacked_obs else n_phases
        policy = SplitPolicy(obs_dim, n_phases, hidden=cfg.hidden, seed=_episode_seed(cfg.seed, 999_331, k))
        policies[name] = policy
        updaters[name] = PPOUpdater(policy, cfg.ppo)

    update_rng = np.random.default_rng(np.random.SeedSequence(entropy=(cfg.seed, 7_777)))
    curve: list[dict] = []
    best_tts = float("inf")
    best = {n: p.copy() for n, p in policies.items()}

    for it in range(cfg.iterations):
        collected: dict[str, list[Trajectory]] = {name: [] for name in agent_names}
        raw_obs: dict[str, list[np.ndarray]] = {name: [] for name in agent_names}
        ep_rewards = []
        for ep in range(cfg.episodes_per_iter):
            ep_seed = _episode_seed(cfg.seed, it, ep)
            ctrl = RLController(
                policies, cfg.hop, cfg.reward_mode, cfg.reward_scale,
                cfg.potential_h_start, cfg.stacked_obs, sample=True,
                rng=np.random.default_rng(np.random.SeedSequence(entropy=(cfg.seed, it, ep, 13))),
            )
            run_episode(scenario, ctrl, seed=ep_seed)
            ep_rewards.append(ctrl.episode_reward)
            for name in agent_names:
                traj = ctrl.trajectories[name]
                collected[name].append(traj)
                scale = policies[name].obs_scale.scale
                raw_obs[name].extend(np.asarray(o) * scale for o in traj.obs)

        for name in agent_names:
            updaters[name].update(collected[name], update_rng)
            policies[name].obs_scale.update(np.asarray(raw_obs[name]))

        row = {"iteration": it, "mean_reward": float(np.mean(ep_rewards)), "eval_tts_h": None}
        if it % cfg.eval_every == 0 or it == cfg.iterations - 1:
            evals = evaluate_policies(scenario, policies, cfg, cfg.eval_seeds)
            tts = float(np.mean([log.tts_h for _, _, log in evals]))
            row["eval_tts_h"] = tts
            if tts < best_tts:
                best_tts = tts
                best = {n: p.copy() for n, p in policies.items()}
        curve.append(row)
        if progress:
            shown = f"{row['eval_tts_h']:.1f}" if row["eval_tts_h"] is not None else "-"
            print(f"[{scenario.name} hop={cfg.hop}] iter {it:3d} "
                  f"reward {row['mean_reward']:9.2f} eval TTS {shown}")

    result = TrainResult(
        policies=best,
        final_policies=policies,
        curve=curve,
        best_eval_tts=best_tts,
        config=cfg,
        scenario_name=scenario.name,
    )
    if out_dir is not None:
        save_policies(result, out_dir)
    return result


# -- checkpoint format: flat npz arrays plus a json config sidecar ----------


def save_policies(result: TrainResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = {}
    meta_agents = {}
    for name, policy in result.policies.items():
        prefix = f"agent__{name}__"
        for k, arr in enumerate(policy.actor.get_params()):
            arrays[f"{prefix}actor_{k}"] = arr
        for k, arr in enumerate(policy.critic.get_params()):
            arrays[f"{prefix}critic_{k}"] = arr
        arrays[f"{prefix}log_std"] = policy.log_std
        arrays[f"{prefix}obs_sumsq"] = policy.obs_scale.sumsq
        arrays[f"{prefix}obs_count"] = np.array([policy.obs_scale.count])
        meta_agents[name] = {
            "obs_dim": policy.obs_dim,
            "n_actions": policy.n_actions,
            "hidden": list(result.config.hidden),
            "n_actor_params": len(policy.actor.get_params()),
            "n_critic_params": len(policy.critic.get_params()),
        }
    np.savez(out / "policies.npz", **arrays)
    meta = {
        "version": CHECKPOINT_VERSION,
        "scenario": result.scenario_name,
        "hop": result.config.hop,
        "reward_mode": result.config.reward_mode,
        "reward_scale": result.config.reward_scale,
        "potential_h_start": result.config.potential_h_start,
        "stacked_obs": result.config.stacked_obs,
        "best_eval_tts_h": result.best_eval_tts,
        "agents": meta_agents,
    }
    (out / "policy_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    with open(out / "learning_curve.csv", "w") as fh:
        fh.write("iteration,mean_reward,eval_tts_h\n")
        for row in result.curve:
            tts = "" if row["eval_tts_h"] is None else f"{row['eval_tts_h']:.6f}"
            fh.write(f"{row['iteration']},{row['mean_reward']:.6f},{tts}\n")
    return out


def load_policies(ckpt_dir: str | Path) -> tuple[dict[str, SplitPolicy], dict]:
    ckpt_dir = Path(ckpt_dir)
    meta = json.loads((ckpt_dir / "policy_meta.json").read_text())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    data = np.load(ckpt_dir / "policies.npz")
    policies = {}
    for name, am in meta["agents"].items():
        policy = SplitPolicy(am["obs_dim"], am["n_actions"], hidden=tuple(am["hidden"]), seed=0)
        prefix = f"agent__{name}__"
        policy.actor.set_params([data[f"{prefix}actor_{k}"] for k in range(am["n_actor_params"])])
        policy.critic.set_params([data[f"{prefix}critic_{k}"] for k in range(am["n_critic_params"])])
        policy.log_std = data[f"{prefix}log_std"].copy()
        policy.obs_scale = RunningScale(am["obs_dim"])
        policy.obs_scale.sumsq = data[f"{prefix}obs_sumsq"].copy()
        policy.obs_scale.count = float(data[f"{prefix}obs_count"][0])
        policies[name] = policy
    return policies, meta


def controller_from_checkpoint(ckpt_dir: str | Path) -> RLController:
    policies, meta = load_policies(ckpt_dir)
    return RLController(
        policies,
        hop=meta["hop"],
        reward_mode=meta["reward_mode"],
        reward_scale=meta["reward_scale"],
        potential_h_start=meta["potential_h_start"],
        stacked_obs=meta["stacked_obs"],
        sample=False,
    )
