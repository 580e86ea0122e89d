"""Command line: train, eval, replay, selftest.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, learner_actors, load_checkpoint
from .config import ConfigError, load_config
from .maddpg import evaluate_actors
from .training import Trainer, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("usv_swarm")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_train(args) -> int:
    try:
        config = load_config(args.config)
        trainer = Trainer.resume(args.resume, config) if args.resume else None
    except (ConfigError, CheckpointError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    out = Path(args.out or config.output_dir)

    def progress(row):
        if row["episode"] % 10 == 0:
            log.info("episode %d: return %.2f, collected %d, steps %d", row["episode"],
                     row["return"], row["collected"], row["steps"])

    try:
        train(config, out, trainer, progress)
    except FloatingPointError as exc:
        return _fail(EXIT_NUMERIC, f"{exc} (see {out / 'diagnostics.json'})")
    print(f"trained {config.training.episodes} episodes; outputs in {out}")
    return EXIT_OK


def _load_for_execution(ckpt_path, config_path):
    config = load_config(config_path)
    learner, _ = load_checkpoint(ckpt_path)
    actors = learner_actors(learner)
    if len(actors) != config.world.n_agents:
        raise ConfigError(f"checkpoint has {len(actors)} actor(s), config has "
                          f"{config.world.n_agents} agent(s)")
    for a in actors:
        if a.input_size != config.world.obs_len:
            raise ConfigError(f"checkpoint actors take {a.input_size}-dim observations but the "
                              f"config produces {config.world.obs_len} "
                              f"(lidar_beams={config.world.lidar_beams})")
    return config, actors


def cmd_eval(args) -> int:
    try:
        config, actors = _load_for_execution(args.checkpoint, args.config)
    except (ConfigError, CheckpointError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    summary = evaluate_actors(actors, config.world, args.episodes, args.seed)
    summary.update({"episodes": args.episodes, "seed": args.seed})
    text = json.dumps(summary, indent=2)
    print(text)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name("eval_summary.json")
    out.write_text(text + "\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import record_episode, render_svg, write_jsonl
    try:
        config, actors = _load_for_execution(args.checkpoint, args.config)
    except (ConfigError, CheckpointError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    records, trash, summary = record_episode(actors, config.world, args.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(records, out / "trajectory.jsonl")
        (out / "trajectory.svg").write_text(render_svg(records, trash, summary["start"], config.world))
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot write to {out}: {exc}")
    print(f"{len(records)} steps, {summary['collected']} collected; wrote {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Quick versions of the oracle suites."""
    from . import env as world_env
    from .nn import finite_diff_check, mlp_init
    from .oracles import marching_lidar, scalar_reward
    from .rewards import RewardWeights, compute_reward

    rng = np.random.default_rng(args.seed)
    ok = True

    worst = 0.0
    for k in range(10):
        sizes = [int(n) for n in rng.integers(1, 9, size=rng.integers(2, 5))]
        net = mlp_init(sizes, "tanh", "identity", seed=k)
        worst = max(worst, finite_diff_check(net, rng.normal(size=(3, sizes[0]))))
    ok &= _report("gradient check (10 nets)", worst < 1e-6, f"max rel err {worst:.2e}")

    worst = 0.0
    for k in range(5):
        cfg = world_env.WorldConfig(arena_width=20, arena_height=20, n_agents=2, n_trash=4,
                                    lidar_beams=8, lidar_max_range=10.0)
        world, _ = world_env.reset(cfg, k)
        world.vessels[0] = world_env.VesselState(*rng.uniform(2, 18, size=2), rng.uniform(-3, 3))
        v = world.vessels[0]
        discs = [(x, y, cfg.trash_radius) for x, y in world.trash_xy]
        discs += [(o.x, o.y, cfg.vessel.hull_radius) for o in world.vessels[1:]]
        ref = marching_lidar((v.x, v.y), v.heading, 8, discs, 20, 20, 10.0)
        worst = max(worst, float(np.max(np.abs(world_env.lidar_scan(world, 0) - ref))))
    ok &= _report("lidar vs marching (5 scenes)", worst < 1e-3, f"max err {worst * 1000:.3f} mm")

    worst = 0.0
    for _ in range(100):
        w = RewardWeights(*rng.uniform(0, 2, size=4), *rng.uniform(0, 10, size=3))
        pts = rng.uniform(0, 40, size=(3, 2))
        nc, nk = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        worst = max(worst, abs(compute_reward(nc, nk, pts, w, 56.0) - scalar_reward(nc, nk, pts, w, 56.0)))
    ok &= _report("reward arithmetic (100 cases)", worst < 1e-12, f"max diff {worst:.1e}")
    return EXIT_OK if ok else 1


def _report(name, passed, detail) -> bool:
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return passed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="usv-swarm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a JSON run configuration")
    t.add_argument("config")
    t.add_argument("--out", help="output directory (overrides output_dir)")
    t.add_argument("--resume", metavar="CHECKPOINT", help="continue from a saved checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("config")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="summary JSON path (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="record one greedy episode as JSONL + SVG")
    r.add_argument("checkpoint")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("selftest", help="run the quick oracle checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
