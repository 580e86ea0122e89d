import numpy as np
import pytest

from usv_swarm import ddpg, env as E, maddpg
from usv_swarm.ddpg import DdpgAgent, DdpgHyper, ReplayBuffer, Transition
from usv_swarm.maddpg import MaddpgSystem, evaluate_actors, select_joint_actions
from usv_swarm.nn import AdamState, mlp_forward, mlp_init

from synthetic import bowl_critic

HYPER = DdpgHyper(batch_size=16, actor_hidden=(12,), critic_hidden=(16, 8))


def joint_buffer(n_agents, obs_len, size=64, seed=0):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(1000, n_agents * obs_len, 2 * n_agents)
    for _ in range(size):
        buf.store(Transition(rng.normal(size=n_agents * obs_len), rng.uniform(-1, 1, 2 * n_agents),
                             float(rng.normal()), rng.normal(size=n_agents * obs_len),
                             bool(rng.random() < 0.05)))
    return buf


def test_construction_invariants():
    s = MaddpgSystem.create(3, 7, HYPER, seed=1)
    assert len(s.actors) == 3 and s.critic.input_size == 3 * (7 + 2)
    for a, t in zip(s.actors, s.target_actors):
        assert np.array_equal(a.flat, t.flat)
    assert np.array_equal(s.critic.flat, s.target_critic.flat)
    # agents start from different weights
    assert not np.array_equal(s.actors[0].flat, s.actors[1].flat)


def test_critic_width_is_validated():
    s = MaddpgSystem.create(2, 5, HYPER)
    wrong = mlp_init([2 * 5 + 3, 4, 1], seed=0)
    with pytest.raises(ValueError, match="critic input"):
        MaddpgSystem(2, 5, s.actors, s.target_actors, wrong, wrong, s.actor_opts, s.critic_opt, HYPER)
    with pytest.raises(ValueError):
        MaddpgSystem(2, 5, s.actors[:1], s.target_actors, s.critic, s.target_critic,
                     s.actor_opts, s.critic_opt, HYPER)


def test_decentralized_execution():
    s = MaddpgSystem.create(3, 6, HYPER, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        obs = [rng.normal(size=6) for _ in range(3)]
        base = select_joint_actions(s, obs)
        i = int(rng.integers(3))
        obs[i] = obs[i] + rng.normal(scale=10.0, size=6)
        moved = select_joint_actions(s, obs)
        for j in range(3):
            if j != i:
                assert np.array_equal(base[j], moved[j])


def test_greedy_actions_repeatable_and_checked():
    s = MaddpgSystem.create(2, 4, HYPER, seed=0)
    obs = [np.ones(4), -np.ones(4)]
    assert np.array_equal(select_joint_actions(s, obs), select_joint_actions(s, obs))
    with pytest.raises(ValueError):
        select_joint_actions(s, obs[:1])
    with pytest.raises(ValueError):
        select_joint_actions(s, [np.ones(4), np.ones(5)])


def test_single_agent_action_matches_ddpg():
    s = MaddpgSystem.create(1, 5, HYPER, seed=4)
    agent = DdpgAgent(s.actors[0], s.critic, s.target_actors[0], s.target_critic,
                      s.actor_opts[0], s.critic_opt, HYPER, s.noise_sigma)
    obs = np.linspace(0, 1, 5)
    assert np.array_equal(select_joint_actions(s, [obs])[0], ddpg.select_action(agent, obs))
    a = select_joint_actions(s, [obs], True, np.random.default_rng(3))[0]
    b = ddpg.select_action(agent, obs, True, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_reduction_to_ddpg():
    seed = 11
    s = MaddpgSystem.create(1, 5, HYPER, seed=seed)
    agent = DdpgAgent(s.actors[0].copy(), s.critic.copy(), s.target_actors[0].copy(),
                      s.target_critic.copy(), AdamState.for_params(s.actors[0], HYPER.actor_lr),
                      AdamState.for_params(s.critic, HYPER.critic_lr), HYPER, HYPER.noise_sigma)
    buf = joint_buffer(1, 5)
    r1, r2 = np.random.default_rng(8), np.random.default_rng(8)
    for _ in range(100):
        maddpg.maddpg_train_step(s, buf, r1)
        ddpg.train_step(agent, buf, r2)
    for a, b in [(s.actors[0], agent.actor), (s.critic, agent.critic),
                 (s.target_actors[0], agent.target_actor), (s.target_critic, agent.target_critic)]:
        assert np.max(np.abs(a.flat - b.flat)) <= 1e-12


def test_tau_zero_keeps_all_targets():
    h = DdpgHyper(batch_size=16, actor_hidden=(8,), critic_hidden=(8,), tau=0.0)
    s = MaddpgSystem.create(3, 4, h, seed=0)
    before = [t.flat.copy() for t in s.target_actors] + [s.target_critic.flat.copy()]
    buf, rng = joint_buffer(3, 4), np.random.default_rng(0)
    for _ in range(5):
        out = maddpg.maddpg_train_step(s, buf, rng)
    assert len(out["actor_objectives"]) == 3
    after = [t.flat for t in s.target_actors] + [s.target_critic.flat]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


def test_under_filled_joint_buffer():
    s = MaddpgSystem.create(2, 4, HYPER)
    with pytest.raises(ValueError):
        maddpg.maddpg_train_step(s, joint_buffer(2, 4, size=3), np.random.default_rng(0))


def test_each_actor_finds_its_own_optimum():
    n, obs_len = 3, 4
    centers = [-0.5, -0.5, 0.1, 0.1, 0.6, 0.6]
    critic = bowl_critic(n * obs_len, centers)
    s = MaddpgSystem.create(n, obs_len, HYPER, seed=3)
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(64, n * obs_len))
    replayed = rng.uniform(-1, 1, size=(64, 2 * n))
    actors = list(s.actors)
    opts = [AdamState.for_params(a, 1e-2) for a in actors]
    for _ in range(1000):
        for i in range(n):
            actors[i], opts[i], _ = ddpg.actor_update(
                actors[i], opts[i], critic, obs[:, s.obs_slice(i)], obs,
                slice(2 * i, 2 * i + 2), replayed)
    for i in range(n):
        out = mlp_forward(actors[i], obs[:, s.obs_slice(i)])[0]
        assert np.max(np.abs(out - centers[2 * i])) < 0.05


def test_system_dict_round_trip():
    s = MaddpgSystem.create(2, 4, HYPER, seed=0)
    maddpg.maddpg_train_step(s, joint_buffer(2, 4), np.random.default_rng(0))
    back = MaddpgSystem.from_dict(s.to_dict())
    assert np.array_equal(back.critic.flat, s.critic.flat)
    assert all(np.array_equal(a.flat, b.flat) for a, b in zip(back.actors, s.actors))
    assert [o.step_count for o in back.actor_opts] == [1, 1]


def test_inert_actors_evaluate_to_timeouts():
    cfg = E.WorldConfig(arena_width=20.0, arena_height=20.0, n_agents=2, n_trash=2, max_steps=60)
    s = MaddpgSystem.create(2, cfg.obs_len, HYPER)
    zero = [a.zeros_like() for a in s.actors]
    out = evaluate_actors(zero, cfg, episodes=3, seed=0)
    assert out["mean_collected"] == 0 and out["mean_steps"] == 60
    assert out["mean_collisions"] == 0


def test_evaluation_is_deterministic():
    cfg = E.WorldConfig(arena_width=20.0, arena_height=20.0, n_agents=2, n_trash=2, max_steps=80)
    s = MaddpgSystem.create(2, cfg.obs_len, HYPER, seed=5)
    a = maddpg.evaluate_decentralized(s, cfg, 1, seed=4)
    b = maddpg.evaluate_decentralized(s, cfg, 1, seed=4)
    assert a == b
    with pytest.raises(ValueError):
        evaluate_actors(s.actors, cfg, 0, 0)


def test_evaluation_rejects_mismatched_world():
    s = MaddpgSystem.create(2, 25, HYPER)
    with pytest.raises(ValueError):
        evaluate_actors(s.actors, E.WorldConfig(n_agents=3), 1, 0)
    with pytest.raises(ValueError):
        evaluate_actors(s.actors, E.WorldConfig(n_agents=2, lidar_beams=32), 1, 0)


def test_random_baseline_is_reproducible():
    cfg = E.WorldConfig(arena_width=20.0, arena_height=20.0, n_agents=2, n_trash=2, max_steps=50)
    a = maddpg.evaluate_random_policy(cfg, 3, seed=1, per_episode=True)
    b = maddpg.evaluate_random_policy(cfg, 3, seed=1)
    assert a["mean_return"] == b["mean_return"] and len(a["episodes"]) == 3
    assert maddpg.evaluate_random_policy(cfg, 3, seed=2)["mean_return"] != a["mean_return"]
