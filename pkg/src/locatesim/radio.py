"""Broadcast propagation: who hears a transmission, and when the copy lands."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Any

from .kernel import RandomStream
from .world import World, distance

UNIT_DISK = "unit_disk"
SMOOTH = "smooth"

INTERFERENCE_NONE = "none"
INTERFERENCE_COLLISION = "collision"


@dataclass(frozen=True, slots=True)
class RadioProfile:
    range_m: float = 500.0
    airtime_s: float = 0.4
    pdr_model: str = UNIT_DISK
    beta: float = 4.0  # smooth-model falloff exponent
    interference: str = INTERFERENCE_NONE

    def __post_init__(self) -> None:
        if self.range_m <= 0.0:
            raise ValueError(f"radio range {self.range_m} must be positive")
        if self.airtime_s <= 0.0:
            raise ValueError(f"airtime {self.airtime_s} must be positive")
        if self.pdr_model not in (UNIT_DISK, SMOOTH):
            raise ValueError(f"unknown pdr model {self.pdr_model!r}")
        if self.interference not in (INTERFERENCE_NONE, INTERFERENCE_COLLISION):
            raise ValueError(f"unknown interference mode {self.interference!r}")


def lora_profile(**overrides) -> RadioProfile:
    return RadioProfile(**{"range_m": 500.0, "airtime_s": 0.4, **overrides})


def wifi_profile(**overrides) -> RadioProfile:
    return RadioProfile(**{"range_m": 100.0, "airtime_s": 0.4, **overrides})


@dataclass(slots=True)
class Reception:
    receiver: int
    start: float  # s, transmission start
    end: float  # s, start + airtime; the copy is delivered at this instant
    message: Any


def pdr(d: float, profile: RadioProfile) -> float:
    """Packet delivery ratio at distance d; exactly zero beyond range."""
    if d < 0.0:
        raise ValueError(f"negative distance {d}")
    if d > profile.range_m:
        return 0.0
    if profile.pdr_model == UNIT_DISK:
        return 1.0
    p = 1.0 - (d / profile.range_m) ** profile.beta
    return p if p > 0.0 else 0.0


def broadcast(world: World, tx_node: int, t: float, message: Any,
              profile: RadioProfile, stream: RandomStream) -> list[Reception]:
    """Receptions produced by one transmission starting at time t.

    Membership is decided from positions at the transmission start; the
    transmitter never hears itself. Loss draws happen in node-id order, and
    only for nodes whose delivery ratio is strictly between 0 and 1, so the
    unit-disk model consumes no randomness.
    """
    tx_pos = world.position_at(tx_node, t)
    end = t + profile.airtime_s
    out: list[Reception] = []
    for rec in world.nodes:
        if rec.id == tx_node:
            continue
        d = distance(tx_pos, world.position_at(rec.id, t))
        if d > profile.range_m:
            continue
        p = pdr(d, profile)
        if p >= 1.0 or (p > 0.0 and stream.bernoulli(p)):
            out.append(Reception(rec.id, t, end, message))
    return out


def resolve_collisions(receptions: list[Reception]) -> list[Reception]:
    """Drop every reception that overlaps another at the same receiver (inclusive bounds)."""
    by_receiver: dict[int, list[Reception]] = defaultdict(list)
    for r in receptions:
        by_receiver[r.receiver].append(r)
    survivors: list[Reception] = []
    for group in by_receiver.values():
        doomed = [False] * len(group)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                if group[j].start <= group[i].end and group[i].start <= group[j].end:
                    doomed[i] = True
                    doomed[j] = True
        survivors.extend(r for i, r in enumerate(group) if not doomed[i])
    survivors.sort(key=lambda r: (r.start, r.receiver))
    return survivors
