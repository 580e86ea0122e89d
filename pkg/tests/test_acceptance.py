"""End-to-end acceptance checks. Each test records one PASS/FAIL line (see conftest)."""
import csv
import json
import time

import numpy as np
import pytest

from usv_swarm import ddpg, maddpg
from usv_swarm import env as E
from usv_swarm.bus import run_bus_episode
from usv_swarm.checkpoint import learner_actors, load_checkpoint
from usv_swarm.cli import main
from usv_swarm.config import config_from_dict
from usv_swarm.ddpg import DdpgAgent, DdpgHyper, ReplayBuffer, Transition
from usv_swarm.maddpg import (MaddpgSystem, evaluate_actors, evaluate_random_policy,
                              run_greedy_episode, select_joint_actions)
from usv_swarm.nn import AdamState, finite_diff_check, mlp_init
from usv_swarm.oracles import scalar_reward, scalar_td_targets
from usv_swarm.rewards import RewardWeights, compute_reward
from usv_swarm.training import train

from synthetic import lidar_oracle, random_scene, smooth_point


def test_gradient_oracle(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        n_layers = int(rng.integers(2, 5))
        sizes = [int(w) for w in rng.integers(1, 33, size=n_layers + 1)]
        hidden = str(rng.choice(["relu", "tanh"]))
        output = str(rng.choice(["identity", "tanh"]))
        net, x = smooth_point(mlp_init(sizes, hidden, output, seed=k), rng, int(rng.integers(1, 5)))
        worst = max(worst, finite_diff_check(net, x, output_grad=rng.normal(size=(len(x), sizes[-1]))))
    elapsed = time.perf_counter() - start
    verdict("gradient oracle", worst < 1e-6 and elapsed < 30,
            f"max rel err {worst:.2e} over 100 nets in {elapsed:.1f} s (limits 1e-6, 30 s)")


def test_batched_scalar_equivalence(verdict):
    rng = np.random.default_rng(7)
    worst_td = 0.0
    worst_r = 0.0
    for k in range(1000):
        obs_dim = int(rng.integers(1, 12))
        hyper = DdpgHyper(gamma=float(rng.uniform(0, 0.999)),
                          actor_hidden=(int(rng.integers(1, 10)),),
                          critic_hidden=(int(rng.integers(1, 10)), int(rng.integers(1, 10))))
        agent = DdpgAgent.create(obs_dim, hyper, seed=k)
        agent.target_actor = agent.target_actor.with_flat(rng.normal(size=agent.target_actor.flat.shape))
        agent.target_critic = agent.target_critic.with_flat(rng.normal(size=agent.target_critic.flat.shape))
        b = int(rng.integers(1, 9))
        batch = ddpg.Batch(rng.normal(size=(b, obs_dim)), rng.uniform(-1, 1, (b, 2)),
                           rng.normal(scale=5, size=b), rng.normal(size=(b, obs_dim)),
                           (rng.random(b) < 0.3).astype(float))
        got = ddpg.td_target(agent, batch)
        want = scalar_td_targets(agent.target_actor, agent.target_critic, batch.reward,
                                 batch.next_obs, batch.done, hyper.gamma)
        worst_td = max(worst_td, float(np.max(np.abs(got - want))))

        w = RewardWeights(*rng.uniform(0, 3, size=4), *rng.uniform(0, 10, size=3))
        pts = rng.uniform(0, 40, size=(int(rng.integers(1, 6)), 2))
        nc, nk = int(rng.integers(0, 6)), int(rng.integers(0, 6))
        d_max = float(rng.uniform(1, 60))
        worst_r = max(worst_r, abs(compute_reward(nc, nk, pts, w, d_max)
                                   - scalar_reward(nc, nk, pts, w, d_max)))
    verdict("batched/scalar equivalence", worst_td < 1e-12 and worst_r < 1e-12,
            f"td_target max diff {worst_td:.1e}, reward max diff {worst_r:.1e} on 1000 cases (limit 1e-12)")


def test_lidar_oracle(verdict):
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    worst = 0.0
    beams = 0
    for _ in range(1000):
        _, world = random_scene(rng, max_range=(3.0, 20.0))
        i = int(rng.integers(len(world.vessels)))
        got = E.lidar_scan(world, i)
        worst = max(worst, float(np.max(np.abs(got - lidar_oracle(world, i)))))
        beams += len(got)
    elapsed = time.perf_counter() - start
    verdict("lidar oracle", worst < 1e-3 and elapsed < 60,
            f"max |exact - marching| {worst * 1000:.3f} mm over 1000 scenes ({beams} beams) "
            f"in {elapsed:.1f} s (limits 1 mm, 60 s)")


def _env_buffer(obs_len, n=600, seed=0):
    """Transitions collected from the real world with random actions."""
    cfg = E.WorldConfig(arena_width=20.0, arena_height=20.0, n_agents=1, n_trash=3, max_steps=200)
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(10_000, obs_len, 2)
    world, obs = E.reset(cfg, seed)
    while len(buf) < n:
        a = rng.uniform(-1, 1, size=(1, 2))
        world, res = E.step(world, a)
        buf.store(Transition(obs[0], a[0], res.reward, res.observations[0],
                             not world.trash_active.any()))
        obs = res.observations
        if world.done:
            world, obs = E.reset(cfg, int(rng.integers(1 << 31)))
    return buf


def test_reduction(verdict):
    hyper = DdpgHyper(batch_size=32)
    obs_len = E.WorldConfig().obs_len
    system = MaddpgSystem.create(1, obs_len, hyper, seed=5)
    agent = DdpgAgent(system.actors[0].copy(), system.critic.copy(),
                      system.target_actors[0].copy(), system.target_critic.copy(),
                      AdamState.for_params(system.actors[0], hyper.actor_lr),
                      AdamState.for_params(system.critic, hyper.critic_lr), hyper)
    buf = _env_buffer(obs_len)
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    for _ in range(100):
        maddpg.maddpg_train_step(system, buf, r1)
        ddpg.train_step(agent, buf, r2)
    pairs = [(system.actors[0], agent.actor), (system.critic, agent.critic),
             (system.target_actors[0], agent.target_actor),
             (system.target_critic, agent.target_critic)]
    diff = max(float(np.max(np.abs(a.flat - b.flat))) for a, b in pairs)
    verdict("reduction n_agents=1", diff <= 1e-12,
            f"max parameter difference {diff:.1e} after 100 steps (limit 1e-12)")


def test_decentralization(verdict):
    obs_len = E.WorldConfig().obs_len
    system = MaddpgSystem.create(3, obs_len, DdpgHyper(), seed=8)
    rng = np.random.default_rng(1)
    violations = 0
    for _ in range(1000):
        obs = [rng.uniform(-1, 1, obs_len) for _ in range(3)]
        base = select_joint_actions(system, obs)
        i = int(rng.integers(3))
        obs[i] = obs[i] + rng.normal(scale=float(rng.choice([1e-9, 1e-3, 1.0, 100.0])), size=obs_len)
        moved = select_joint_actions(system, obs)
        violations += sum(not np.array_equal(base[j], moved[j]) for j in range(3) if j != i)
    verdict("decentralization", violations == 0,
            f"{violations} peer-action changes in 1000 perturbation trials")


def _tiny_run(episodes):
    return {
        "algorithm": "maddpg",
        "master_seed": 17,
        "world": {"arena_width": 14.0, "arena_height": 14.0, "n_agents": 2, "n_trash": 3,
                  "lidar_beams": 8, "max_steps": 60},
        "agent": {"batch_size": 16, "warmup": 64, "actor_hidden": [16], "critic_hidden": [16]},
        "training": {"episodes": episodes, "eval_every": 50, "eval_episodes": 2,
                     "checkpoint_every": 1000},
    }


def _cli_train(tmp_path, doc, name, *extra):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / name
    assert main(["train", str(cfg), "--out", str(out), *extra]) == 0
    return out


def test_determinism(tmp_path, verdict):
    a = _cli_train(tmp_path, _tiny_run(200), "a")
    b = _cli_train(tmp_path, _tiny_run(200), "b")
    ma, mb = (a / "metrics.csv").read_bytes(), (b / "metrics.csv").read_bytes()
    rows = ma.count(b"\n") - 1
    verdict("determinism", ma == mb and rows == 200,
            f"two 200-episode runs, metrics.csv byte-identical: {ma == mb} ({rows} rows)")


def test_resume_equivalence(tmp_path, verdict):
    straight = _cli_train(tmp_path, _tiny_run(100), "straight")
    split = _cli_train(tmp_path, _tiny_run(50), "split")
    _cli_train(tmp_path, _tiny_run(100), "split", "--resume", str(split / "checkpoint.json"))
    rows_a = (straight / "metrics.csv").read_text().splitlines()[51:101]
    rows_b = (split / "metrics.csv").read_text().splitlines()[51:101]
    same = rows_a == rows_b and len(rows_a) == 50
    verdict("resume equivalence", same,
            f"rows 51-100 byte-identical after 50 + save/load + 50: {same}")


def test_bus_equivalence(verdict):
    cfg = E.WorldConfig()
    system = MaddpgSystem.create(3, cfg.obs_len, DdpgHyper(), seed=21)
    mismatched = 0
    steps = 0
    for k in range(10):
        direct = []
        run_greedy_episode(system.actors, cfg, k, on_step=lambda w, a, r: direct.append(a))
        out = run_bus_episode(system.actors, cfg, k, queue_capacity=64)
        steps += len(direct)
        if len(direct) != len(out["actions"]):
            mismatched += 1
            continue
        mismatched += sum(not np.array_equal(a, b) for a, b in zip(direct, out["actions"]))
    verdict("bus equivalence", mismatched == 0,
            f"{mismatched} differing joint actions over 10 episodes ({steps} steps)")


# -- learning checks ---------------------------------------------------------
#
# Each run trains through the same `train` entry point as the CLI and evaluates
# every 100 episodes on a validation suite (training.eval_seed). The periodic
# checkpoint with the best validation return, the quantity training maximises,
# is then scored on a separate 20-episode acceptance suite that neither
# training nor selection sees. The random baseline runs on that same suite.

ACCEPTANCE_SEED = 90210
SUITE = 20


def _bootstrap_ci(values, seed=0, resamples=10_000, level=0.95):
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    means = values[rng.integers(len(values), size=(resamples, len(values)))].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def _train_select(tmp_path, doc, name):
    """Train, then return (config, best actors, validation row, minutes)."""
    config = config_from_dict(doc)
    start = time.perf_counter()
    train(config, tmp_path / name)
    minutes = (time.perf_counter() - start) / 60.0
    with (tmp_path / name / "eval.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    # highest validation return; later checkpoints win ties
    best = max(rows, key=lambda r: (float(r["mean_return"]), int(r["episode"])))
    ckpt = tmp_path / name / "checkpoints" / f"ep_{int(best['episode']):06d}.json"
    learner, _ = load_checkpoint(ckpt)
    return config, learner_actors(learner), best, minutes


def _fmt_ci(ci):
    return f"[{ci[0]:.2f}, {ci[1]:.2f}]"


# Decisions are held for 10 physics steps (1 s) during training; see README.
LEARNING_AGENT = {"gamma": 0.95, "action_repeat": 10, "noise_sigma": 0.5, "noise_corr": 0.7,
                  "noise_decay": 0.998, "noise_floor": 0.1, "warmup": 2000}

SINGLE_RUN = {
    "algorithm": "ddpg_single",
    "master_seed": 0,
    # a short-range, dense lidar makes trash stand out against open water;
    # the lighter collision weight keeps wall bumps from teaching the boat to idle
    "world": {"arena_width": 20.0, "arena_height": 20.0, "n_agents": 1, "n_trash": 1,
              "lidar_beams": 64, "lidar_max_range": 8.0, "reward_weights": {"w2": 0.1}},
    "agent": {**LEARNING_AGENT, "updates_per_step": 2, "actor_hidden": [128, 128]},
    "training": {"episodes": 2000, "eval_every": 100, "eval_episodes": 20,
                 "checkpoint_every": 100, "eval_seed": 1},
}


@pytest.mark.slow
def test_learning_single_agent(tmp_path, verdict):
    config, actors, best, minutes = _train_select(tmp_path, SINGLE_RUN, "single")
    trained = evaluate_actors(actors, config.world, SUITE, ACCEPTANCE_SEED)
    baseline = evaluate_random_policy(config.world, SUITE, ACCEPTANCE_SEED)
    verdict("learning, single agent", trained["mean_collected"] >= 0.9,
            f"greedy mean collected {trained['mean_collected']:.2f} on {SUITE} acceptance episodes "
            f"(target 0.9; random baseline {baseline['mean_collected']:.2f}; checkpoint from "
            f"episode {best['episode']}, validation {float(best['mean_collected']):.2f}; "
            f"trained in {minutes:.1f} min)")


SWARM_RUN = {
    "algorithm": "maddpg",
    "master_seed": 5,
    "world": {"arena_width": 40.0, "arena_height": 40.0, "n_agents": 3, "n_trash": 6},
    "agent": LEARNING_AGENT,
    "training": {"episodes": 2000, "eval_every": 100, "eval_episodes": 20,
                 "checkpoint_every": 100, "eval_seed": 1},
}


@pytest.mark.slow
def test_learning_swarm(tmp_path, verdict):
    config, actors, best, minutes = _train_select(tmp_path, SWARM_RUN, "swarm")
    trained = evaluate_actors(actors, config.world, SUITE, ACCEPTANCE_SEED, per_episode=True)
    baseline = evaluate_random_policy(config.world, SUITE, ACCEPTANCE_SEED, per_episode=True)
    ci_t = _bootstrap_ci([r["collected"] for r in trained["episodes"]], seed=1)
    ci_b = _bootstrap_ci([r["collected"] for r in baseline["episodes"]], seed=2)
    return_ok = trained["mean_return"] >= 2.0 * baseline["mean_return"]
    collected_ok = trained["mean_collected"] > baseline["mean_collected"] and ci_t[0] > ci_b[1]
    verdict("learning, swarm", return_ok and collected_ok,
            f"mean return {trained['mean_return']:.1f} vs random {baseline['mean_return']:.1f} "
            f"(needs >= 2x: {return_ok}); mean collected {trained['mean_collected']:.2f} "
            f"95% CI {_fmt_ci(ci_t)} vs random {baseline['mean_collected']:.2f} {_fmt_ci(ci_b)} "
            f"(separated: {collected_ok}); checkpoint from episode {best['episode']}; "
            f"trained in {minutes:.1f} min")


def _shaping_run(w4):
    doc = json.loads(json.dumps(SWARM_RUN))
    doc["world"]["reward_weights"] = {"w4": w4}
    doc["training"] = {"episodes": 150, "eval_every": 1000, "checkpoint_every": 1000}
    return doc


@pytest.mark.slow
def test_reward_shaping_response(tmp_path, verdict):
    means = {}
    for w4 in (0.0, 1.0):
        out = tmp_path / f"w4_{w4}"
        config = config_from_dict(_shaping_run(w4))
        train(config, out)
        with (out / "diagnostics.csv").open() as fh:
            coord = [float(r["mean_coordination"]) for r in csv.DictReader(fh)]
        tail = coord[-max(1, len(coord) // 10):]
        means[w4] = float(np.mean(tail))
    verdict("reward-shaping response", means[1.0] > means[0.0],
            f"mean coordination over the last 10% of episodes: w4=0 -> {means[0.0]:.3f}, "
            f"w4=1 -> {means[1.0]:.3f} (same seeds, retrained)")
