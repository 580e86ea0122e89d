"""Checkpoint documents.

A checkpoint is one JSON file holding every network, optimizer moment,
hyperparameter, the exploration noise level, the episode counter, the master
seed and the training RNG state. Python's float repr round-trips float64 exactly.
The replay buffer, needed only to resume training, goes to a sidecar ``.npz``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ddpg import DdpgAgent, ReplayBuffer
from .maddpg import MaddpgSystem

FORMAT = "usv_swarm-checkpoint"
VERSION = "1"


class CheckpointError(ValueError):
    pass


def learner_actors(learner) -> list:
    return [learner.actor] if isinstance(learner, DdpgAgent) else list(learner.actors)


def save_checkpoint(learner, meta: dict, path, buffer: ReplayBuffer | None = None):
    path = Path(path)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "algorithm": "ddpg_single" if isinstance(learner, DdpgAgent) else "maddpg",
        **meta,
        "learner": learner.to_dict(),
        "replay_file": None,
    }
    if buffer is not None:
        replay = path.with_suffix(".replay.npz")
        np.savez(replay, capacity=np.array(buffer.capacity), **buffer.state_arrays())
        doc["replay_file"] = replay.name
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)


def read_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is truncated or corrupt: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r} is not supported "
                              f"(expected {VERSION!r})")
    return doc


def load_checkpoint(path):
    """Returns ``(learner, doc)`` where ``doc`` is the parsed JSON document."""
    doc = read_document(path)
    try:
        if doc["algorithm"] == "ddpg_single":
            learner = DdpgAgent.from_dict(doc["learner"])
        else:
            learner = MaddpgSystem.from_dict(doc["learner"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} is malformed: {exc}") from exc
    return learner, doc


def load_replay(path, doc: dict) -> ReplayBuffer | None:
    if not doc.get("replay_file"):
        return None
    with np.load(Path(path).parent / doc["replay_file"]) as data:
        return ReplayBuffer.from_arrays(int(data["capacity"]), data)
