"""Multi-agent DDPG with one centralized critic and per-agent actors.

The critic input is ``[obs_0, ..., obs_{N-1}, act_0, ..., act_{N-1}]``. Actors
only ever see their own observation, so execution is decentralized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env as world_env
from .ddpg import (ACTION_DIM, Batch, DdpgHyper, ReplayBuffer, actor_update, bootstrap_targets,
                   critic_update, make_actor, make_critic, policy_action, require_filled)
from .nn import (AdamState, MlpParams, adam_from_dict, adam_to_dict, mlp_forward, params_from_dict,
                 params_to_dict, soft_update)
from .seeding import derive_seed


@dataclass
class MaddpgSystem:
    n_agents: int
    obs_len: int
    actors: list[MlpParams]
    target_actors: list[MlpParams]
    critic: MlpParams
    target_critic: MlpParams
    actor_opts: list[AdamState]
    critic_opt: AdamState
    hyper: DdpgHyper = field(default_factory=DdpgHyper)
    noise_sigma: float = 0.2

    def __post_init__(self):
        if len(self.actors) != self.n_agents or len(self.target_actors) != self.n_agents:
            raise ValueError("need exactly one actor per agent")
        for a in self.actors:
            if a.input_size != self.obs_len or a.output_size != ACTION_DIM:
                raise ValueError("actor shape does not match obs_len/action size")
        width = self.n_agents * (self.obs_len + ACTION_DIM)
        if self.critic.input_size != width or self.target_critic.input_size != width:
            raise ValueError(f"critic input must be n_agents*(obs_len+act_len) = {width}, "
                             f"got {self.critic.input_size}")

    @classmethod
    def create(cls, n_agents: int, obs_len: int, hyper: DdpgHyper | None = None,
               seed: int = 0) -> "MaddpgSystem":
        hyper = hyper or DdpgHyper()
        actors = [make_actor(obs_len, hyper, derive_seed(seed, i)) for i in range(n_agents)]
        critic = make_critic(n_agents * (obs_len + ACTION_DIM), hyper, derive_seed(seed, n_agents))
        return cls(n_agents, obs_len, actors, [a.copy() for a in actors], critic, critic.copy(),
                   [AdamState.for_params(a, hyper.actor_lr) for a in actors],
                   AdamState.for_params(critic, hyper.critic_lr), hyper, hyper.noise_sigma)

    @property
    def joint_obs_len(self) -> int:
        return self.n_agents * self.obs_len

    def make_buffer(self) -> ReplayBuffer:
        return ReplayBuffer(self.hyper.buffer_capacity, self.joint_obs_len,
                            self.n_agents * ACTION_DIM)

    def obs_slice(self, i: int) -> slice:
        return slice(i * self.obs_len, (i + 1) * self.obs_len)

    def decay_noise(self):
        h = self.hyper
        self.noise_sigma = max(h.noise_floor, self.noise_sigma * h.noise_decay)

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "obs_len": self.obs_len,
            "actors": [params_to_dict(a) for a in self.actors],
            "target_actors": [params_to_dict(a) for a in self.target_actors],
            "critic": params_to_dict(self.critic),
            "target_critic": params_to_dict(self.target_critic),
            "actor_opts": [adam_to_dict(o) for o in self.actor_opts],
            "critic_opt": adam_to_dict(self.critic_opt),
            "hyper": self.hyper.to_dict(),
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaddpgSystem":
        return cls(int(d["n_agents"]), int(d["obs_len"]),
                   [params_from_dict(a) for a in d["actors"]],
                   [params_from_dict(a) for a in d["target_actors"]],
                   params_from_dict(d["critic"]), params_from_dict(d["target_critic"]),
                   [adam_from_dict(o) for o in d["actor_opts"]], adam_from_dict(d["critic_opt"]),
                   DdpgHyper(**d["hyper"]), float(d["noise_sigma"]))


def select_joint_actions(system: MaddpgSystem, observations, explore: bool = False,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-agent actions, shape (n_agents, 2); agent i reads observation i only."""
    if len(observations) != system.n_agents:
        raise ValueError(f"expected {system.n_agents} observations, got {len(observations)}")
    return np.stack([policy_action(actor, obs, explore, system.noise_sigma, rng)
                     for actor, obs in zip(system.actors, observations)])


def joint_td_target(system: MaddpgSystem, batch: Batch) -> np.ndarray:
    next_actions = [mlp_forward(system.target_actors[i], batch.next_obs[:, system.obs_slice(i)])[0]
                    for i in range(system.n_agents)]
    x = np.concatenate([batch.next_obs, *next_actions], axis=1)
    next_q = mlp_forward(system.target_critic, x)[0]
    return bootstrap_targets(batch, system.hyper.gamma, next_q[:, 0])


def train_on_batch(system: MaddpgSystem, batch: Batch) -> dict:
    h = system.hyper
    y = joint_td_target(system, batch)
    system.critic, system.critic_opt, critic_loss = critic_update(
        system.critic, system.critic_opt, np.concatenate([batch.obs, batch.action], axis=1), y)
    objectives = []
    for i in range(system.n_agents):
        # own action regenerated, peers' actions replayed from the buffer
        system.actors[i], system.actor_opts[i], obj = actor_update(
            system.actors[i], system.actor_opts[i], system.critic,
            batch.obs[:, system.obs_slice(i)], batch.obs,
            slice(i * ACTION_DIM, (i + 1) * ACTION_DIM), batch.action)
        objectives.append(obj)
    system.target_actors = [soft_update(t, a, h.tau)
                            for t, a in zip(system.target_actors, system.actors)]
    system.target_critic = soft_update(system.target_critic, system.critic, h.tau)
    return {"critic_loss": critic_loss, "actor_objectives": objectives}


def maddpg_train_step(system: MaddpgSystem, buffer: ReplayBuffer,
                      rng: np.random.Generator) -> dict:
    require_filled(buffer, system.hyper.batch_size)
    return train_on_batch(system, buffer.sample(system.hyper.batch_size, rng))


def run_policy_episode(policy, config: world_env.WorldConfig, seed: int, on_step=None) -> dict:
    """One episode where ``policy(observations)`` returns the joint action array.

    ``on_step(world, actions, result)`` is called after each step.
    """
    world, obs = world_env.reset(config, seed)
    total = 0.0
    coord = 0.0
    while not world.done:
        actions = policy(obs)
        world, result = world_env.step(world, actions)
        total += result.reward
        coord += result.info["coordination"]
        obs = result.observations
        if on_step is not None:
            on_step(world, actions, result)
    return {"return": total, "collected": world.collected_count,
            "collisions": world.collision_count + world.wall_hit_count,
            "steps": world.step_index, "coordination": coord / world.step_index}


def run_greedy_episode(actors, config: world_env.WorldConfig, seed: int, on_step=None) -> dict:
    """One noise-free episode of per-agent actors."""
    def policy(obs):
        return np.stack([policy_action(a, o, False, 0.0, None) for a, o in zip(actors, obs)])
    return run_policy_episode(policy, config, seed, on_step)


def check_dimensions(actors, config: world_env.WorldConfig):
    if len(actors) != config.n_agents:
        raise ValueError(f"{len(actors)} actors for {config.n_agents} agents")
    for a in actors:
        if a.input_size != config.obs_len:
            raise ValueError(f"actor expects {a.input_size}-dim observations, "
                             f"world produces {config.obs_len}")


def evaluate_decentralized(system: MaddpgSystem, env_config: world_env.WorldConfig,
                           episodes: int, seed: int) -> dict:
    """Greedy rollouts; episode k uses world seed ``derive_seed(seed, k)``."""
    return evaluate_actors(system.actors, env_config, episodes, seed)


def _summarize(rows, per_episode: bool) -> dict:
    summary = {
        "mean_return": float(np.mean([r["return"] for r in rows])),
        "mean_collected": float(np.mean([r["collected"] for r in rows])),
        "mean_collisions": float(np.mean([r["collisions"] for r in rows])),
        "mean_steps": float(np.mean([r["steps"] for r in rows])),
    }
    if per_episode:
        summary["episodes"] = rows
    return summary


def evaluate_actors(actors, env_config: world_env.WorldConfig, episodes: int, seed: int,
                    per_episode: bool = False) -> dict:
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    check_dimensions(actors, env_config)
    rows = [run_greedy_episode(actors, env_config, derive_seed(seed, k)) for k in range(episodes)]
    return _summarize(rows, per_episode)


def evaluate_random_policy(env_config: world_env.WorldConfig, episodes: int, seed: int,
                           per_episode: bool = False) -> dict:
    """Baseline: every propeller command drawn uniformly from [-1, 1] each step.

    Uses the same world seeds as :func:`evaluate_actors`, so the two are
    directly comparable on one seed suite.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    shape = (env_config.n_agents, ACTION_DIM)
    rows = []
    for k in range(episodes):
        rng = np.random.default_rng(derive_seed(seed, k, 1))
        rows.append(run_policy_episode(lambda obs: rng.uniform(-1.0, 1.0, size=shape),
                                       env_config, derive_seed(seed, k)))
    return _summarize(rows, per_episode)
