"""In-process publish/subscribe bus for swarm telemetry.

Each topic carries one payload type. Every subscriber owns a bounded FIFO; when
it is full the oldest message is dropped and counted. Subscribers only receive
messages published after they subscribed.

All publish and drain calls take the bus lock, so concurrent callers observe
some total order that respects each caller's own program order.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import env as world_env
from .ddpg import policy_action
from .rewards import coordination_term

DEFAULT_QUEUE_CAPACITY = 64


@dataclass(frozen=True)
class PoseMsg:
    x: float
    y: float
    heading: float
    u: float
    r: float


@dataclass(frozen=True)
class StatusMsg:
    trash_detected: bool
    collected_count: int


@dataclass(frozen=True)
class Message:
    sequence: int
    payload: object
    stamp: int


class StaleHandleError(RuntimeError):
    pass


class Subscription:
    def __init__(self, topic: "Topic"):
        self.topic = topic
        self.queue: deque[Message] = deque()
        self.dropped = 0
        self.delivered = 0

    def _push(self, msg: Message):
        if len(self.queue) >= self.topic.queue_capacity:
            self.queue.popleft()
            self.dropped += 1
        self.queue.append(msg)

    def drain(self) -> list[Message]:
        with self.topic.bus.lock:
            if self.topic.closed:
                raise StaleHandleError(f"topic {self.topic.name} was removed")
            out = list(self.queue)
            self.queue.clear()
            self.delivered += len(out)
            return out

    @property
    def pending(self) -> int:
        return len(self.queue)


class Topic:
    def __init__(self, bus: "SwarmBus", name: str, payload_kind: type, queue_capacity: int):
        self.bus = bus
        self.name = name
        self.payload_kind = payload_kind
        self.queue_capacity = queue_capacity
        self.subscriptions: list[Subscription] = []
        self.next_sequence = 0
        self.closed = False

    @property
    def published(self) -> int:
        return self.next_sequence

    def subscribe(self) -> Subscription:
        with self.bus.lock:
            if self.closed:
                raise StaleHandleError(f"topic {self.name} was removed")
            sub = Subscription(self)
            self.subscriptions.append(sub)
            return sub

    def publish(self, payload, stamp: int) -> int:
        if not isinstance(payload, self.payload_kind):
            raise TypeError(f"topic {self.name} carries {self.payload_kind.__name__}, "
                            f"got {type(payload).__name__}")
        with self.bus.lock:
            if self.closed:
                raise StaleHandleError(f"topic {self.name} was removed")
            seq = self.next_sequence
            self.next_sequence += 1
            msg = Message(seq, payload, stamp)
            for sub in self.subscriptions:
                sub._push(msg)
            return seq


class SwarmBus:
    def __init__(self):
        self.lock = threading.RLock()
        self.topics: dict[str, Topic] = {}

    def create_topic(self, name: str, payload_kind: type,
                     queue_capacity: int = DEFAULT_QUEUE_CAPACITY) -> Topic:
        if queue_capacity < 1:
            raise ValueError("queue capacity must be at least 1")
        with self.lock:
            if name in self.topics:
                raise ValueError(f"topic {name} already exists")
            topic = Topic(self, name, payload_kind, queue_capacity)
            self.topics[name] = topic
            return topic

    def topic(self, name: str) -> Topic:
        return self.topics[name]

    def remove_topic(self, name: str):
        with self.lock:
            self.topics.pop(name).closed = True


def pose_topic(i: int) -> str:
    return f"/usv_{i}/pose"


def status_topic(i: int) -> str:
    return f"/usv_{i}/status"


class AgentNode:
    """One vessel's onboard process: acts on its own observation, tracks peers via the bus."""

    def __init__(self, index: int, actor, bus: SwarmBus, n_agents: int):
        self.index = index
        self.actor = actor
        self.pose_out = bus.topic(pose_topic(index))
        self.status_out = bus.topic(status_topic(index))
        self.peer_subs = {j: bus.topic(pose_topic(j)).subscribe()
                          for j in range(n_agents) if j != index}
        self.peer_status = {j: bus.topic(status_topic(j)).subscribe()
                            for j in range(n_agents) if j != index}
        self.peer_poses: dict[int, PoseMsg] = {}
        self.peer_collected: dict[int, int] = {}
        self.own_pose: PoseMsg | None = None

    def act(self, observation) -> np.ndarray:
        return policy_action(self.actor, observation, False, 0.0, None)

    def publish(self, vessel, observation, collected: int, stamp: int):
        self.own_pose = PoseMsg(vessel.x, vessel.y, vessel.heading, vessel.u, vessel.r)
        self.pose_out.publish(self.own_pose, stamp)
        self.status_out.publish(StatusMsg(bool(observation[-1] > 0.5), collected), stamp)

    def listen(self):
        for j, sub in self.peer_subs.items():
            msgs = sub.drain()
            if msgs:
                self.peer_poses[j] = msgs[-1].payload
        for j, sub in self.peer_status.items():
            msgs = sub.drain()
            if msgs:
                self.peer_collected[j] = msgs[-1].payload.collected_count

    def coordination_estimate(self, d_max: float) -> float:
        """Team proximity term from the node's own pose plus the latest peer poses."""
        poses = dict(self.peer_poses)
        poses[self.index] = self.own_pose
        return coordination_term([(poses[i].x, poses[i].y) for i in sorted(poses)], d_max)


def run_bus_episode(actors, config: world_env.WorldConfig, seed: int,
                    queue_capacity: int = DEFAULT_QUEUE_CAPACITY) -> dict:
    """Greedy episode where every vessel runs as an :class:`AgentNode` on a shared bus.

    Within a tick all nodes publish before any node drains. Returns the joint
    actions taken, each node's coordination estimate per step, and the bus.
    """
    n = config.n_agents
    bus = SwarmBus()
    for i in range(n):
        bus.create_topic(pose_topic(i), PoseMsg, queue_capacity)
        bus.create_topic(status_topic(i), StatusMsg, queue_capacity)
    nodes = [AgentNode(i, actors[i], bus, n) for i in range(n)]
    credited = [0] * n
    world, obs = world_env.reset(config, seed)
    actions_log, coord_log, rewards = [], [], []
    while not world.done:
        actions = np.stack([node.act(o) for node, o in zip(nodes, obs)])
        world, result = world_env.step(world, actions)
        for i in result.info["collected_by"]:
            credited[i] += 1
        obs = result.observations
        for i, node in enumerate(nodes):
            node.publish(world.vessels[i], obs[i], credited[i], world.step_index)
        for node in nodes:
            node.listen()
        actions_log.append(actions)
        rewards.append(result.reward)
        coord_log.append([node.coordination_estimate(config.d_max) for node in nodes])
    return {"actions": actions_log, "coordination": coord_log, "rewards": rewards,
            "collected": world.collected_count, "steps": world.step_index, "bus": bus,
            "nodes": nodes}
