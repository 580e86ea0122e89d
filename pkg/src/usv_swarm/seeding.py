"""Seed derivation.

Every random stream in a run is a ``numpy.random.PCG64`` generator. Child seeds
come from ``SeedSequence(master, spawn_key=keys)``, so a run is fully described
by its master seed and the integer keys below.
"""
from __future__ import annotations

import numpy as np

# spawn-key namespaces used by the training loop
KEY_NETWORKS = 0
KEY_TRAIN_RNG = 1
KEY_EPISODE = 2
KEY_EVAL = 3


def derive_seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(master: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    if state.get("bit_generator") != "PCG64":
        raise ValueError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
