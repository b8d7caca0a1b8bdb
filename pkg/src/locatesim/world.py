"""Square arena, node roles, and straight-line-until-boundary mobility."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

from .kernel import RandomStream

SPEED_MIN = 0.5  # m/s, pedestrian walking range
SPEED_MAX = 3.0  # m/s

_SNAP = 1e-6  # m, endpoint snap to the arena edge


class Role(IntEnum):
    SOURCE = 0  # stationary emergency source at the arena center
    SOLVER = 1  # can answer requests
    RELAY = 2  # can only spread them


@dataclass(slots=True)
class MobilityLeg:
    x0: float
    y0: float
    heading: float  # rad
    speed: float  # m/s
    start: float  # s
    end: float  # s, boundary-hit time
    vx: float  # m/s, cached speed * cos(heading)
    vy: float  # m/s


@dataclass(slots=True)
class NodeRecord:
    id: int
    role: Role
    stationary: bool
    leg: MobilityLeg


def distance(p: tuple[float, float], q: tuple[float, float]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def solver_count(n: int, tau: float) -> int:
    """Number of solver nodes among n mobiles for solver fraction tau; ties round up."""
    if n < 0:
        raise ValueError(f"negative node count {n}")
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"solver fraction {tau} outside [0, 1]")
    return math.floor(tau * n + 0.5)


def _still_leg(x: float, y: float) -> MobilityLeg:
    return MobilityLeg(x, y, 0.0, 0.0, 0.0, math.inf, 0.0, 0.0)


class World:
    """Node placement plus per-node current mobility leg; positions are evaluated lazily."""

    __slots__ = ("nodes", "side")

    def __init__(self, nodes: list[NodeRecord], side: float) -> None:
        if side <= 0.0:
            raise ValueError(f"arena side {side} must be positive")
        self.nodes = nodes
        self.side = side

    @classmethod
    def random(cls, n: int, tau: float, side: float, stream: RandomStream) -> "World":
        """Source pinned at the center, n mobiles placed uniformly, solvers sampled by tau.

        Draw order is fixed (positions, then solver ids, then initial legs) so a
        seed fully determines the world.
        """
        nodes = [NodeRecord(0, Role.SOURCE, True, _still_leg(side / 2.0, side / 2.0))]
        positions = [(stream.uniform(0.0, side), stream.uniform(0.0, side)) for _ in range(n)]
        solver_ids = set(stream.sample(range(1, n + 1), solver_count(n, tau)))
        for i, (x, y) in enumerate(positions, start=1):
            role = Role.SOLVER if i in solver_ids else Role.RELAY
            nodes.append(NodeRecord(i, role, False, _still_leg(x, y)))
        world = cls(nodes, side)
        for rec in nodes[1:]:
            world.start_leg(rec.id, 0.0, stream)
        return world

    def position_at(self, node_id: int, t: float) -> tuple[float, float]:
        """Position at time t, clamped into the arena; t must lie within the current leg."""
        leg = self.nodes[node_id].leg
        if leg.speed == 0.0:
            return leg.x0, leg.y0
        if not (leg.start <= t <= leg.end):
            raise ValueError(f"node {node_id}: t={t} outside leg [{leg.start}, {leg.end}]")
        dt = t - leg.start
        side = self.side
        x = leg.x0 + leg.vx * dt
        y = leg.y0 + leg.vy * dt
        if x < 0.0:
            x = 0.0
        elif x > side:
            x = side
        if y < 0.0:
            y = 0.0
        elif y > side:
            y = side
        return x, y

    def start_leg(self, node_id: int, t: float, stream: RandomStream) -> MobilityLeg:
        """Begin a new leg at time t from the node's current position.

        Heading is drawn uniform on [0, 2*pi) and redrawn until it points
        strictly into the arena; speed is drawn after the heading is accepted.
        The leg ends exactly when the ray hits the boundary.
        """
        rec = self.nodes[node_id]
        if rec.stationary:
            raise ValueError(f"node {node_id} is stationary")
        x, y = self.position_at(node_id, t) if rec.leg.speed != 0.0 else (rec.leg.x0, rec.leg.y0)
        side = self.side
        # pull near-edge endpoints onto the edge so the inward test is exact
        if x < _SNAP:
            x = 0.0
        elif side - x < _SNAP:
            x = side
        if y < _SNAP:
            y = 0.0
        elif side - y < _SNAP:
            y = side
        while True:
            heading = stream.uniform(0.0, 2.0 * math.pi)
            cx = math.cos(heading)
            cy = math.sin(heading)
            if (x > 0.0 or cx > 0.0) and (x < side or cx < 0.0) \
                    and (y > 0.0 or cy > 0.0) and (y < side or cy < 0.0):
                break
        speed = stream.uniform(SPEED_MIN, SPEED_MAX)
        vx = speed * cx
        vy = speed * cy
        hit = math.inf
        if vx > 0.0:
            hit = (side - x) / vx
        elif vx < 0.0:
            hit = -x / vx
        if vy > 0.0:
            hit = min(hit, (side - y) / vy)
        elif vy < 0.0:
            hit = min(hit, -y / vy)
        leg = MobilityLeg(x, y, heading, speed, t, t + hit, vx, vy)
        rec.leg = leg
        return leg
