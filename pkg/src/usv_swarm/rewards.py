"""Shared team reward: collection bonus, collision and time penalties, proximity bonus."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 1.0     # collection
    w2: float = 1.0     # collision
    w3: float = 1.0     # time
    w4: float = 0.25    # coordination
    r_collect_unit: float = 10.0
    p_coll_unit: float = 5.0
    p_time_unit: float = 0.01
    d_max: float | None = None  # None: use the arena diagonal

    def __post_init__(self):
        for name in ("w1", "w2", "w3", "w4", "r_collect_unit", "p_coll_unit", "p_time_unit"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.d_max is not None and not (math.isfinite(self.d_max) and self.d_max > 0):
            raise ValueError(f"d_max must be positive, got {self.d_max}")


def coordination_term(positions, d_max: float) -> float:
    """Sum over unordered pairs of ``1 - min(D, d_max) / d_max``."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    pts = [(float(x), float(y)) for x, y in positions]
    total = 0.0
    for i in range(len(pts)):
        xi, yi = pts[i]
        for j in range(i + 1, len(pts)):
            d = math.hypot(pts[j][0] - xi, pts[j][1] - yi)
            total += 1.0 - min(d, d_max) / d_max
    return total


def compute_reward(n_collected: int, n_collisions: int, positions, weights: RewardWeights,
                   d_max: float | None = None) -> float:
    """Team reward for one step.

    ``n_collisions`` counts vessel-vessel pairs and wall hits together. The time
    penalty is charged once per call. ``d_max`` overrides ``weights.d_max``.
    """
    if n_collected < 0 or n_collisions < 0:
        raise ValueError("event counts must be non-negative")
    pts = [(float(x), float(y)) for x, y in positions]
    if not all(math.isfinite(v) for p in pts for v in p):
        raise ValueError("non-finite vessel position")
    d_max = weights.d_max if d_max is None else d_max
    if d_max is None:
        raise ValueError("no distance normalizer given")
    return (weights.w1 * (n_collected * weights.r_collect_unit)
            - weights.w2 * (n_collisions * weights.p_coll_unit)
            - weights.w3 * weights.p_time_unit
            + weights.w4 * coordination_term(pts, d_max))
