"""Trajectory export (JSON Lines), reward re-validation and an SVG overhead plot."""
from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

from . import env as world_env
from .maddpg import check_dimensions, run_greedy_episode
from .rewards import compute_reward

PATH_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def step_record(world: world_env.WorldState, result: world_env.StepResult) -> dict:
    info = result.info
    return {
        "t": world.step_index,
        "vessels": [{"x": v.x, "y": v.y, "heading": v.heading, "u": v.u, "r": v.r}
                    for v in world.vessels],
        "trash": [{"x": float(x), "y": float(y), "active": bool(a)}
                  for (x, y), a in zip(world.trash_xy, world.trash_active)],
        "reward": result.reward,
        "events": {
            "collected_ids": info["collected_ids"],
            "collected_by": info["collected_by"],
            "collision_pairs": [list(p) for p in info["collision_pairs"]],
            "wall_hits": [[i, w] for i, w in info["wall_hits"]],
        },
    }


def record_episode(actors, config: world_env.WorldConfig, seed: int):
    """Greedy episode; returns (records, initial trash positions, summary)."""
    check_dimensions(actors, config)
    records = []
    world0, _ = world_env.reset(config, seed)
    initial_trash = [(float(x), float(y)) for x, y in world0.trash_xy]
    start = [(v.x, v.y) for v in world0.vessels]
    summary = run_greedy_episode(actors, config, seed,
                                 on_step=lambda w, a, res: records.append(step_record(w, res)))
    summary["start"] = start
    return records, initial_trash, summary


def write_jsonl(records, path):
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def recompute_reward(record: dict, config: world_env.WorldConfig) -> float:
    """Reward implied by a logged step: its events and the logged vessel positions."""
    ev = record["events"]
    n_coll = len(ev["collision_pairs"]) + len(ev["wall_hits"])
    positions = [(v["x"], v["y"]) for v in record["vessels"]]
    return compute_reward(len(ev["collected_ids"]), n_coll, positions, config.reward_weights,
                          d_max=config.d_max)


def render_svg(records, initial_trash, start, config: world_env.WorldConfig,
               scale: float = 12.0) -> str:
    """Top-down plot: one <path> per vessel track, one <circle class="trash"> per item."""
    w, h = config.arena_width * scale, config.arena_height * scale

    def pt(x, y):
        # SVG y grows downward; flip so north is up
        return f"{x * scale:.2f},{h - y * scale:.2f}"

    collected = set()
    for rec in records:
        collected.update(rec["events"]["collected_ids"])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">',
        f'<rect class="arena" x="0" y="0" width="{w:.2f}" height="{h:.2f}" '
        'fill="#eaf4fb" stroke="#333"/>',
    ]
    for k, (x, y) in enumerate(initial_trash):
        fill = "#999" if k in collected else "#8b4513"
        parts.append(f'<circle class="trash" cx="{x * scale:.2f}" cy="{h - y * scale:.2f}" '
                     f'r="{max(config.trash_radius * scale, 2.0):.2f}" fill="{fill}">'
                     f'<title>{escape(f"trash {k}")}</title></circle>')
    for i in range(config.n_agents):
        pts = [pt(*start[i])] + [pt(r["vessels"][i]["x"], r["vessels"][i]["y"]) for r in records]
        color = PATH_COLORS[i % len(PATH_COLORS)]
        parts.append(f'<path class="vessel" d="M {" L ".join(pts)}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"><title>usv_{i}</title></path>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
