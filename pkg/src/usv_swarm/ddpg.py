"""Single-agent DDPG: deterministic actor, Q critic, target copies, replay, Gaussian exploration."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .nn import (AdamState, MlpParams, adam_from_dict, adam_step, adam_to_dict, mlp_backward,
                 mlp_forward, mlp_init, params_from_dict, params_to_dict, soft_update)
from .seeding import derive_seed

ACTION_DIM = 2


class NumericalError(FloatingPointError):
    """A loss or gradient became non-finite during training."""


@dataclass
class DdpgHyper:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 128
    buffer_capacity: int = 100_000
    warmup: int | None = None          # transitions before training starts; None -> 10 * batch
    noise_sigma: float = 0.2
    noise_decay: float = 0.9995        # per episode
    noise_floor: float = 0.02
    noise_corr: float = 0.0            # AR(1) coefficient between consecutive noise draws
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (128, 128)
    updates_per_step: int = 1
    action_repeat: int = 1             # environment steps each training decision is held for

    def __post_init__(self):
        self.actor_hidden = tuple(int(n) for n in self.actor_hidden)
        self.critic_hidden = tuple(int(n) for n in self.critic_hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < 1 or self.updates_per_step < 0:
            raise ValueError("batch_size and buffer_capacity must be positive")
        if self.noise_sigma < 0 or self.noise_floor < 0 or not 0 < self.noise_decay <= 1:
            raise ValueError("invalid exploration noise settings")
        if self.action_repeat < 1:
            raise ValueError("action_repeat must be at least 1")
        if not 0.0 <= self.noise_corr < 1.0:
            raise ValueError("noise_corr must lie in [0, 1)")

    @property
    def warmup_size(self) -> int:
        return 10 * self.batch_size if self.warmup is None else self.warmup

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["actor_hidden"] = list(self.actor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d


@dataclass
class Transition:
    """One replay record. For a swarm the vectors are per-agent blocks concatenated
    in agent order and ``reward`` is the shared team reward."""
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


JointTransition = Transition


@dataclass
class Batch:
    obs: np.ndarray        # (B, obs_dim)
    action: np.ndarray     # (B, act_dim)
    reward: np.ndarray     # (B,)
    next_obs: np.ndarray   # (B, obs_dim)
    done: np.ndarray       # (B,) float 0/1


class ReplayBuffer:
    """Fixed-capacity ring of transitions; once full the oldest record is overwritten."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def store(self, t: Transition):
        if not np.isfinite(t.reward):
            raise ValueError("transition reward must be finite")
        i = self.cursor
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = 1.0 if t.done else 0.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Storage slots from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def get(self, i: int) -> Transition:
        return Transition(self.obs[i].copy(), self.action[i].copy(), float(self.reward[i]),
                          self.next_obs[i].copy(), bool(self.done[i]))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement; any non-empty buffer can fill any batch."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx],
                     self.next_obs[idx], self.done[idx])

    def state_arrays(self) -> dict:
        return {"obs": self.obs[:self.size], "action": self.action[:self.size],
                "reward": self.reward[:self.size], "next_obs": self.next_obs[:self.size],
                "done": self.done[:self.size], "cursor": np.array(self.cursor)}

    @classmethod
    def from_arrays(cls, capacity: int, arrays) -> "ReplayBuffer":
        obs = np.asarray(arrays["obs"])
        buf = cls(capacity, obs.shape[1], np.asarray(arrays["action"]).shape[1])
        n = len(obs)
        for name in ("obs", "action", "reward", "next_obs", "done"):
            getattr(buf, name)[:n] = arrays[name]
        buf.size = n
        buf.cursor = int(arrays["cursor"])
        return buf


def make_actor(obs_dim: int, hyper: DdpgHyper, seed: int) -> MlpParams:
    return mlp_init([obs_dim, *hyper.actor_hidden, ACTION_DIM], "relu", "tanh", seed)


def make_critic(in_dim: int, hyper: DdpgHyper, seed: int) -> MlpParams:
    return mlp_init([in_dim, *hyper.critic_hidden, 1], "relu", "identity", seed)


@dataclass
class DdpgAgent:
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    actor_opt: AdamState
    critic_opt: AdamState
    hyper: DdpgHyper = field(default_factory=DdpgHyper)
    noise_sigma: float = 0.2

    @classmethod
    def create(cls, obs_dim: int, hyper: DdpgHyper | None = None, seed: int = 0) -> "DdpgAgent":
        hyper = hyper or DdpgHyper()
        actor = make_actor(obs_dim, hyper, derive_seed(seed, 0))
        critic = make_critic(obs_dim + ACTION_DIM, hyper, derive_seed(seed, 1))
        return cls(actor, critic, actor.copy(), critic.copy(),
                   AdamState.for_params(actor, hyper.actor_lr),
                   AdamState.for_params(critic, hyper.critic_lr),
                   hyper, hyper.noise_sigma)

    @property
    def obs_dim(self) -> int:
        return self.actor.input_size

    def decay_noise(self):
        h = self.hyper
        self.noise_sigma = max(h.noise_floor, self.noise_sigma * h.noise_decay)

    def to_dict(self) -> dict:
        return {
            "actor": params_to_dict(self.actor),
            "critic": params_to_dict(self.critic),
            "target_actor": params_to_dict(self.target_actor),
            "target_critic": params_to_dict(self.target_critic),
            "actor_opt": adam_to_dict(self.actor_opt),
            "critic_opt": adam_to_dict(self.critic_opt),
            "hyper": self.hyper.to_dict(),
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DdpgAgent":
        return cls(params_from_dict(d["actor"]), params_from_dict(d["critic"]),
                   params_from_dict(d["target_actor"]), params_from_dict(d["target_critic"]),
                   adam_from_dict(d["actor_opt"]), adam_from_dict(d["critic_opt"]),
                   DdpgHyper(**d["hyper"]), float(d["noise_sigma"]))


def policy_action(actor: MlpParams, obs, explore: bool, sigma: float,
                  rng: np.random.Generator | None) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (actor.input_size,):
        raise ValueError(f"observation length {obs.shape} != actor input {actor.input_size}")
    action = mlp_forward(actor, obs[None, :])[0][0]
    if explore:
        action = action + rng.normal(0.0, sigma, size=action.shape)
    return np.clip(action, -1.0, 1.0)


def correlated_noise(prev: np.ndarray | None, sigma: float, corr: float,
                     rng: np.random.Generator, shape) -> np.ndarray:
    """Next draw of a Gaussian AR(1) process whose stationary std is ``sigma``.

    Heavy hulls low-pass the commands, so independent per-step noise barely
    moves the vessel; correlated noise holds a perturbation long enough to
    change its course. ``prev=None`` starts from the stationary distribution.
    """
    fresh = rng.normal(0.0, sigma, size=shape)
    if prev is None:
        return fresh
    return corr * prev + np.sqrt(1.0 - corr * corr) * fresh


def select_action(agent: DdpgAgent, obs, explore: bool = False,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    return policy_action(agent.actor, obs, explore, agent.noise_sigma, rng)


def store(buffer: ReplayBuffer, t: Transition):
    buffer.store(t)


def sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch_size, rng)


# -- update kernels shared with the multi-agent trainer ----------------------

def bootstrap_targets(batch: Batch, gamma: float, next_q: np.ndarray) -> np.ndarray:
    return batch.reward + gamma * (1.0 - batch.done) * next_q


def critic_update(critic: MlpParams, opt: AdamState, x: np.ndarray, y: np.ndarray):
    """One Adam step on mean squared TD error; returns (critic, opt, loss)."""
    q, cache = mlp_forward(critic, x)
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericalError(f"critic loss is {loss}")
    grad_out = (2.0 / len(y)) * err[:, None]
    grads, _ = mlp_backward(critic, cache, grad_out)
    critic, opt = adam_step(critic, grads, opt)
    return critic, opt, loss


def actor_update(actor: MlpParams, opt: AdamState, critic: MlpParams, obs: np.ndarray,
                 critic_prefix: np.ndarray, action_slot: slice, critic_actions: np.ndarray):
    """One Adam step raising mean Q with respect to the actor only.

    The critic sees ``[critic_prefix, critic_actions]`` with the columns in
    ``action_slot`` of ``critic_actions`` replaced by the actor's own output.
    Returns (actor, opt, mean Q before the step).
    """
    a, actor_cache = mlp_forward(actor, obs)
    acts = critic_actions.copy()
    acts[:, action_slot] = a
    x = np.concatenate([critic_prefix, acts], axis=1)
    q, critic_cache = mlp_forward(critic, x)
    objective = float(np.mean(q))
    if not np.isfinite(objective):
        raise NumericalError(f"actor objective is {objective}")
    # minimize -mean(Q); critic parameter gradients are discarded
    grad_q = np.full_like(q, -1.0 / len(q))
    _, grad_x = mlp_backward(critic, critic_cache, grad_q)
    offset = critic_prefix.shape[1]
    grad_a = grad_x[:, offset + action_slot.start: offset + action_slot.stop]
    grads, _ = mlp_backward(actor, actor_cache, grad_a)
    actor, opt = adam_step(actor, grads, opt)
    return actor, opt, objective


def td_target(agent: DdpgAgent, batch: Batch) -> np.ndarray:
    next_a = mlp_forward(agent.target_actor, batch.next_obs)[0]
    next_q = mlp_forward(agent.target_critic, np.concatenate([batch.next_obs, next_a], axis=1))[0]
    return bootstrap_targets(batch, agent.hyper.gamma, next_q[:, 0])


def train_on_batch(agent: DdpgAgent, batch: Batch) -> dict:
    h = agent.hyper
    y = td_target(agent, batch)
    agent.critic, agent.critic_opt, critic_loss = critic_update(
        agent.critic, agent.critic_opt, np.concatenate([batch.obs, batch.action], axis=1), y)
    agent.actor, agent.actor_opt, objective = actor_update(
        agent.actor, agent.actor_opt, agent.critic, batch.obs, batch.obs,
        slice(0, ACTION_DIM), batch.action)
    agent.target_actor = soft_update(agent.target_actor, agent.actor, h.tau)
    agent.target_critic = soft_update(agent.target_critic, agent.critic, h.tau)
    return {"critic_loss": critic_loss, "actor_objective": objective}


def require_filled(buffer: ReplayBuffer, batch_size: int):
    if len(buffer) < batch_size:
        raise ValueError(f"buffer holds {len(buffer)} transitions, need {batch_size}")


def train_step(agent: DdpgAgent, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
    """Critic step, then actor step through the updated critic, then soft target updates."""
    require_filled(buffer, agent.hyper.batch_size)
    return train_on_batch(agent, buffer.sample(agent.hyper.batch_size, rng))
