"""Episode loop, metrics files and resumable training state."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from . import ddpg, maddpg
from . import env as world_env
from .checkpoint import learner_actors, load_checkpoint, load_replay, save_checkpoint
from .config import RunConfig, config_from_dict, save_config, to_dict
from .ddpg import DdpgAgent, ReplayBuffer, Transition
from .maddpg import MaddpgSystem
from .seeding import KEY_EPISODE, KEY_EVAL, KEY_NETWORKS, KEY_TRAIN_RNG, derive_seed, make_rng, \
    rng_from_state, rng_state

log = logging.getLogger(__name__)

METRICS_HEADER = ["episode", "steps", "return", "collected", "collisions",
                  "mean_pairwise_distance", "wall_clock_s"]
EVAL_HEADER = ["episode", "mean_return", "mean_collected", "mean_collisions", "mean_steps"]
DIAG_HEADER = ["episode", "mean_coordination", "critic_loss", "actor_objective", "noise_sigma",
               "buffer_size"]


def build_learner(config: RunConfig):
    seed = derive_seed(config.master_seed, KEY_NETWORKS)
    obs_len = config.world.obs_len
    if config.algorithm == "ddpg_single":
        return DdpgAgent.create(obs_len, config.agent, seed)
    return MaddpgSystem.create(config.world.n_agents, obs_len, config.agent, seed)


def episode_seed(config: RunConfig, episode: int) -> int:
    return derive_seed(config.master_seed, KEY_EPISODE, episode)


def eval_suite_seed(config: RunConfig) -> int:
    return derive_seed(config.training.eval_seed, KEY_EVAL)


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _append_row(path: Path, header, row):
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(header)
        writer.writerow([_fmt(v) for v in row])


class Trainer:
    """Owns the learner, the replay buffer, the training RNG and the episode counter."""

    def __init__(self, config: RunConfig, learner=None, buffer: ReplayBuffer | None = None,
                 rng: np.random.Generator | None = None, episode: int = 0):
        self.config = config
        self.learner = learner if learner is not None else build_learner(config)
        if buffer is None:
            width = config.world.n_agents
            buffer = ReplayBuffer(config.agent.buffer_capacity, width * config.world.obs_len,
                                  width * ddpg.ACTION_DIM)
        self.buffer = buffer
        self.rng = rng if rng is not None else make_rng(config.master_seed, KEY_TRAIN_RNG)
        self.episode = episode
        self.last_losses = {"critic_loss": float("nan"), "actor_objective": float("nan")}
        self._noise = None

    @property
    def single(self) -> bool:
        return isinstance(self.learner, DdpgAgent)

    @property
    def actors(self):
        return learner_actors(self.learner)

    def act(self, observations, explore: bool) -> np.ndarray:
        corr = self.config.agent.noise_corr
        if explore and corr > 0.0:
            greedy = self.act(observations, explore=False)
            self._noise = ddpg.correlated_noise(self._noise, self.learner.noise_sigma, corr,
                                                self.rng, greedy.shape)
            return np.clip(greedy + self._noise, -1.0, 1.0)
        if self.single:
            return ddpg.select_action(self.learner, observations[0], explore, self.rng)[None, :]
        return maddpg.select_joint_actions(self.learner, observations, explore, self.rng)

    def update(self):
        if self.single:
            out = ddpg.train_step(self.learner, self.buffer, self.rng)
        else:
            out = maddpg.maddpg_train_step(self.learner, self.buffer, self.rng)
            out = {"critic_loss": out["critic_loss"],
                   "actor_objective": float(np.mean(out["actor_objectives"]))}
        self.last_losses = out

    def run_episode(self) -> dict:
        """One exploratory training episode; returns the metrics row fields."""
        cfg = self.config
        hyper = cfg.agent
        world, obs = world_env.reset(cfg.world, episode_seed(cfg, self.episode))
        self._noise = None
        total, dist_sum, coord_sum = 0.0, 0.0, 0.0
        while not world.done:
            actions = self.act(obs, explore=True)
            reward = 0.0
            for _ in range(hyper.action_repeat):
                world, result = world_env.step(world, actions)
                reward += result.reward
                dists = result.info["pairwise_distances"]
                dist_sum += float(np.mean(dists)) if dists else 0.0
                coord_sum += result.info["coordination"]
                if world.done:
                    break
            total += reward
            # hitting max_steps is a time limit, not a terminal state: keep bootstrapping
            terminal = not world.trash_active.any()
            self.buffer.store(Transition(np.concatenate(obs), actions.ravel(), reward,
                                         np.concatenate(result.observations), terminal))
            obs = result.observations
            if len(self.buffer) >= max(hyper.warmup_size, hyper.batch_size):
                for _ in range(hyper.updates_per_step):
                    self.update()
        self.learner.decay_noise()
        self.episode += 1
        steps = world.step_index
        return {
            "episode": self.episode,
            "steps": steps,
            "return": total,
            "collected": world.collected_count,
            "collisions": world.collision_count + world.wall_hit_count,
            "mean_pairwise_distance": dist_sum / steps,
            # simulated seconds, so metrics files stay byte-reproducible
            "wall_clock_s": steps * cfg.world.dt,
            "mean_coordination": coord_sum / steps,
        }

    def evaluate(self, episodes: int | None = None) -> dict:
        cfg = self.config
        n = cfg.training.eval_episodes if episodes is None else episodes
        return maddpg.evaluate_actors(self.actors, cfg.world, n, eval_suite_seed(cfg))

    def meta(self) -> dict:
        return {
            "episode": self.episode,
            "master_seed": self.config.master_seed,
            "config": to_dict(self.config),
            "train_rng": rng_state(self.rng),
        }

    def save(self, path, with_buffer: bool = True):
        save_checkpoint(self.learner, self.meta(), path, self.buffer if with_buffer else None)

    @classmethod
    def resume(cls, path, config: RunConfig | None = None) -> "Trainer":
        learner, doc = load_checkpoint(path)
        saved = config_from_dict(doc["config"])
        config = config or saved
        buffer = load_replay(path, doc)
        if buffer is None:
            raise ValueError(f"checkpoint {path} has no replay buffer; cannot resume training")
        return cls(config, learner, buffer, rng_from_state(doc["train_rng"]), int(doc["episode"]))


def train(config: RunConfig, out_dir=None, trainer: Trainer | None = None, progress=None) -> Trainer:
    """Run (or continue) training until ``config.training.episodes`` episodes are done."""
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.resolved.json")
    trainer = trainer or Trainer(config)
    tc = config.training
    ckpt_dir = out / "checkpoints"
    while trainer.episode < tc.episodes:
        try:
            row = trainer.run_episode()
        except FloatingPointError as exc:
            (out / "diagnostics.json").write_text(json.dumps({
                "episode": trainer.episode + 1, "error": str(exc),
                "buffer_size": len(trainer.buffer),
                "last_losses": trainer.last_losses}, indent=2))
            raise
        _append_row(out / "metrics.csv", METRICS_HEADER, [row[k] for k in METRICS_HEADER])
        _append_row(out / "diagnostics.csv", DIAG_HEADER,
                    [row["episode"], row["mean_coordination"],
                     trainer.last_losses["critic_loss"], trainer.last_losses["actor_objective"],
                     trainer.learner.noise_sigma, len(trainer.buffer)])
        ep = trainer.episode
        if ep % tc.eval_every == 0:
            summary = trainer.evaluate()
            _append_row(out / "eval.csv", EVAL_HEADER, [ep] + [summary[k] for k in EVAL_HEADER[1:]])
        if ep % tc.checkpoint_every == 0:
            ckpt_dir.mkdir(exist_ok=True)
            trainer.save(ckpt_dir / f"ep_{ep:06d}.json", with_buffer=False)
        if progress is not None:
            progress(row)
    trainer.save(out / "checkpoint.json")
    return trainer
