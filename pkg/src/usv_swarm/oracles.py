"""Slow, independent re-implementations used to cross-check the fast paths.

None of these share code with the functions they check.
"""
from __future__ import annotations

import math

import numpy as np


def marching_lidar(origin, heading, n_beams, discs, width, height, max_range, step=1e-3):
    """Ranges found by walking each ray in ``step`` increments.

    ``discs`` is a sequence of (cx, cy, radius). A beam stops at the first sample
    that is inside a disc or on/outside the arena boundary; the result therefore
    overshoots the true range by less than ``step``.
    """
    ox, oy = origin
    t = np.arange(0.0, max_range + step, step)
    out = []
    for k in range(n_beams):
        a = heading + 2.0 * math.pi * k / n_beams
        px = ox + t * math.cos(a)
        py = oy + t * math.sin(a)
        blocked = (px <= 0) | (px >= width) | (py <= 0) | (py >= height)
        for cx, cy, r in discs:
            blocked |= (px - cx) ** 2 + (py - cy) ** 2 <= r * r
        hits = np.flatnonzero(blocked)
        out.append(min(t[hits[0]], max_range) if len(hits) else max_range)
    return np.array(out)


def scalar_coordination(positions, d_max):
    total = 0.0
    n = len(positions)
    for i in range(n):
        for j in range(n):
            if i < j:
                dx = positions[i][0] - positions[j][0]
                dy = positions[i][1] - positions[j][1]
                d = math.sqrt(dx * dx + dy * dy)
                total += 1.0 - (d if d < d_max else d_max) / d_max
    return total


def scalar_reward(n_collected, n_collisions, positions, w, d_max):
    """Weighted team reward written out term by term."""
    collect = n_collected * w.r_collect_unit
    collide = n_collisions * w.p_coll_unit
    return (w.w1 * collect - w.w2 * collide - w.w3 * w.p_time_unit
            + w.w4 * scalar_coordination(positions, d_max))


def scalar_mlp(params, x):
    """Forward pass for a single input vector with explicit loops."""
    a = [float(v) for v in x]
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = []
        for row, bias in zip(w, b):
            s = float(bias)
            for wi, ai in zip(row, a):
                s += float(wi) * ai
            z.append(s)
        kind = params.output_activation if l == last else params.hidden_activation
        if kind == "relu":
            a = [v if v > 0 else 0.0 for v in z]
        elif kind == "tanh":
            a = [math.tanh(v) for v in z]
        else:
            a = z
    return a


def scalar_td_targets(target_actor, target_critic, rewards, next_obs, dones, gamma):
    ys = []
    for r, s2, d in zip(rewards, next_obs, dones):
        a2 = scalar_mlp(target_actor, s2)
        q2 = scalar_mlp(target_critic, list(s2) + list(a2))[0]
        ys.append(r + gamma * (1.0 - d) * q2)
    return np.array(ys)


def brute_force_pairs(points, limit):
    pairs = []
    for i, p in enumerate(points):
        for j, q in enumerate(points):
            if i < j and math.dist(p, q) < limit:
                pairs.append((i, j))
    return pairs
