"""Planar surge/yaw model of a twin-propeller catamaran.

Each propeller takes a normalized command in [-1, 1]. Sum of commands drives
surge, difference drives yaw; both axes have quadratic drag. Sway is ignored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class VesselParams:
    mass: float = 180.0           # kg
    yaw_inertia: float = 50.0     # kg m^2
    thrust_gain: float = 50.0     # N per unit command
    beam: float = 2.4             # m, lateral distance between propellers
    drag_surge: float = 30.0      # N / (m/s)^2
    drag_yaw: float = 20.0        # N m / (rad/s)^2
    hull_radius: float = 1.2      # m

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"vessel parameter {name} must be positive, got {value}")

    @property
    def max_surge_speed(self) -> float:
        """Terminal speed with both propellers at full forward."""
        return math.sqrt(2.0 * self.thrust_gain / self.drag_surge)

    @property
    def max_yaw_rate(self) -> float:
        """Terminal yaw rate under full differential thrust."""
        return math.sqrt(self.thrust_gain * self.beam / self.drag_yaw)


@dataclass(frozen=True)
class VesselState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    u: float = 0.0        # surge speed, m/s
    r: float = 0.0        # yaw rate, rad/s
    prop_left: float = 0.0
    prop_right: float = 0.0


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta}")
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod puts odd multiples of pi at -pi; the interval is open there
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def clamp_action(raw) -> tuple[float, float]:
    left, right = (float(v) for v in raw)
    if not (math.isfinite(left) and math.isfinite(right)):
        raise ValueError(f"non-finite propeller command {(left, right)}")
    return min(max(left, -1.0), 1.0), min(max(right, -1.0), 1.0)


def step_vessel(state: VesselState, action, params: VesselParams, dt: float) -> VesselState:
    """One semi-implicit Euler step; velocities update first, pose uses the new ones."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_l, n_r = action
    u, r = state.u, state.r
    force = params.thrust_gain * (n_l + n_r) - params.drag_surge * u * abs(u)
    torque = params.thrust_gain * (params.beam / 2.0) * (n_r - n_l) - params.drag_yaw * r * abs(r)
    u_new = u + (force / params.mass) * dt
    r_new = r + (torque / params.yaw_inertia) * dt
    heading = wrap_angle(state.heading + r_new * dt)
    return VesselState(
        x=state.x + u_new * math.cos(heading) * dt,
        y=state.y + u_new * math.sin(heading) * dt,
        heading=heading,
        u=u_new,
        r=r_new,
        prop_left=n_l,
        prop_right=n_r,
    )


def mirror_x(state: VesselState) -> VesselState:
    """Reflect across the x-axis; the port and starboard propellers swap roles."""
    return replace(state, y=-state.y, heading=wrap_angle(-state.heading), r=-state.r,
                   prop_left=state.prop_right, prop_right=state.prop_left)
