"""Scenario assembly, per-run event loop, Monte Carlo batches, and parameter sweeps."""

from __future__ import annotations

import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from . import protocol
from .kernel import DELIVERY, FREEZE_POLL, LEG_END, TIMER, EventQueue, RandomStream
from .protocol import (CANCEL_TIMER, E_REQ, MARK_SOLVED, SET_TIMER, START_POLL,
                       STOP_POLL, TRANSMIT, FloodingBehavior, LocateBehavior, ProtocolParams)
from .radio import INTERFERENCE_COLLISION, RadioProfile, broadcast, lora_profile
from .world import Role, World

THREADS_ENV = "LOCATE_SIM_THREADS"

PROTOCOLS = ("locate", "locate-basic", "flooding", "probabilistic")

POLL_PERIOD_S = 1.0  # movement check cadence while a carrier is frozen

EMERGENCY_ID = 0  # single concurrent emergency per run
SOURCE_ID = 0


@dataclass(slots=True)
class ScenarioConfig:
    n: int = 40
    tau: float = 0.15
    protocol: str = "locate"
    side_m: float = 5000.0
    runs: int = 1000
    base_seed: int = 1
    horizon_s: float = 86400.0
    radio: RadioProfile = field(default_factory=lora_profile)
    params: ProtocolParams = field(default_factory=ProtocolParams)

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}")
        if self.n < 0:
            raise ValueError(f"negative node count {self.n}")
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"solver fraction {self.tau} outside [0, 1]")
        if self.runs < 1:
            raise ValueError(f"run count {self.runs} must be at least 1")
        if self.horizon_s <= 0.0:
            raise ValueError(f"horizon {self.horizon_s} must be positive")
        if self.side_m <= 0.0:
            raise ValueError(f"arena side {self.side_m} must be positive")


@dataclass(slots=True)
class RunResult:
    run_index: int
    seed: int
    solved: bool  # source received a reply
    ert_s: float | None  # time of the source's first reply, None when unsolved
    ereq_count: int  # request transmissions, all nodes (the overhead metric)
    erep_count: int  # reply transmissions, all nodes
    end_time_s: float


@dataclass(slots=True)
class Aggregate:
    runs_total: int
    runs_solved: int
    err_pct: float  # fraction of runs solved within the deadline, in [0, 1]
    ert_mean_s: float | None  # over solved runs
    ert_ci95_s: float | None  # half-width, absent with fewer than 2 solved runs
    eo_mean: float  # over all runs
    eo_ci95: float | None


def make_behavior(name: str, params: ProtocolParams):
    if name == "locate":
        return LocateBehavior(params, dtn_optimized=True)
    if name == "locate-basic":
        return LocateBehavior(params, dtn_optimized=False)
    if name == "flooding":
        return FloodingBehavior(params, relay_probability=None)
    if name == "probabilistic":
        return FloodingBehavior(params, relay_probability=params.q_flood)
    raise ValueError(f"unknown protocol {name!r}, expected one of {PROTOCOLS}")


def run_once(config: ScenarioConfig, run_index: int, world: World | None = None,
             trace: list | None = None) -> RunResult:
    """Simulate one emergency to resolution, horizon, or queue exhaustion.

    The per-run seed is base_seed XOR run_index. A caller-supplied world skips
    random placement (the seed then drives only protocol timing and losses).
    When `trace` is given it collects ("phase", t, node, phase), ("tx", t,
    node, kind, ttl) and ("aware", t, node) tuples for inspection.
    """
    seed = config.base_seed ^ run_index
    stream = RandomStream(seed)
    if world is None:
        world = World.random(config.n, config.tau, config.side_m, stream)
    behavior = make_behavior(config.protocol, config.params)
    profile = config.radio
    airtime = profile.airtime_s
    collision = profile.interference == INTERFERENCE_COLLISION
    horizon = config.horizon_s

    queue = EventQueue()
    states: dict[int, protocol.EmergencyState] = {}
    timers: dict[tuple[int, str], list] = {}
    polls: dict[int, list] = {}
    busy: dict[int, list[tuple[float, float]]] = {}
    aware = {SOURCE_ID}
    solved: set[int] = set()
    unsolved_aware = 1
    ereq_count = 0
    erep_count = 0
    ert: float | None = None

    def state_of(node: int) -> protocol.EmergencyState:
        st = states.get(node)
        if st is None:
            rec = world.nodes[node]
            st = behavior.new_state(node, EMERGENCY_ID, rec.role == Role.SOLVER,
                                    node == SOURCE_ID)
            states[node] = st
        return st

    def interpret(st: protocol.EmergencyState, acts: list[tuple], t: float) -> None:
        nonlocal ereq_count, erep_count, unsolved_aware
        node = st.node
        for act in acts:
            op = act[0]
            if op == TRANSMIT:
                msg = act[1]
                if msg.kind == E_REQ:
                    ereq_count += 1
                else:
                    erep_count += 1
                if trace is not None:
                    trace.append(("tx", t, node, msg.kind, msg.ttl))
                for r in broadcast(world, node, t, msg, profile, stream):
                    queue.schedule(r.end, DELIVERY, r.receiver, msg)
                    if collision:
                        busy.setdefault(r.receiver, []).append((r.start, r.end))
            elif op == SET_TIMER:
                slot, delay = act[1], act[2]
                key = (node, slot)
                if key in timers:
                    raise RuntimeError(f"timer slot {slot!r} already armed for node {node}")
                timers[key] = queue.schedule(t + delay, TIMER, node, slot)
            elif op == CANCEL_TIMER:
                handle = timers.pop((node, act[1]), None)
                if handle is not None:
                    queue.cancel(handle)
            elif op == MARK_SOLVED:
                if node not in solved:
                    solved.add(node)
                    if node in aware:
                        unsolved_aware -= 1
            elif op == START_POLL:
                if node not in polls:
                    polls[node] = queue.schedule(t + POLL_PERIOD_S, FREEZE_POLL, node, None)
            elif op == STOP_POLL:
                handle = polls.pop(node, None)
                if handle is not None:
                    queue.cancel(handle)
            else:
                raise RuntimeError(f"unknown action opcode {op}")

    for rec in world.nodes:
        if not rec.stationary:
            queue.schedule(rec.leg.end, LEG_END, rec.id, None)

    src = state_of(SOURCE_ID)
    interpret(src, behavior.start_emergency(src, 0.0, world.position_at(SOURCE_ID, 0.0), stream), 0.0)

    phase_seen: dict[int, int] = {}
    end_time = 0.0
    while True:
        t_next = queue.peek()
        if t_next is None:
            end_time = queue.now  # drained: every aware node reached a rest state
            break
        if t_next > horizon:
            end_time = horizon
            break
        ev = queue.pop()
        t = ev.time
        kind = ev.kind
        node = ev.node
        if kind == DELIVERY:
            msg = ev.data
            if collision and _collided(busy[node], t - airtime, t):
                continue
            if msg.kind == E_REQ:
                if node not in aware:
                    aware.add(node)
                    if node not in solved:
                        unsolved_aware += 1
                    if trace is not None:
                        trace.append(("aware", t, node))
            elif node == SOURCE_ID and ert is None:
                ert = t
            st = state_of(node)
            interpret(st, behavior.on_delivery(st, msg, t, world.position_at(node, t), stream), t)
        elif kind == TIMER:
            slot = ev.data
            timers.pop((node, slot), None)
            st = state_of(node)
            interpret(st, behavior.on_timer(st, slot, t, world.position_at(node, t), stream), t)
        elif kind == LEG_END:
            leg = world.start_leg(node, t, stream)
            queue.schedule(leg.end, LEG_END, node, None)
            continue
        else:  # FREEZE_POLL
            polls.pop(node, None)
            st = state_of(node)
            interpret(st, behavior.on_freeze_poll(st, t, world.position_at(node, t), stream), t)
        if trace is not None and st.phase != phase_seen.get(node):
            phase_seen[node] = st.phase
            trace.append(("phase", t, node, st.phase))
        if unsolved_aware == 0:
            end_time = t  # everyone who heard of the emergency is done, including the source
            break

    return RunResult(run_index, seed, ert is not None, ert, ereq_count, erep_count, end_time)


def _collided(intervals: list[tuple[float, float]], start: float, end: float) -> bool:
    """Inclusive-overlap test against the receiver's other receptions; prunes stale entries."""
    hits = 0
    keep = []
    for s, e in intervals:
        if e >= start:
            keep.append((s, e))
            if s <= end:
                hits += 1
    intervals[:] = keep
    return hits >= 2  # the interval under test is its own first hit


def _run_indexed(args: tuple[ScenarioConfig, int]) -> RunResult:
    return run_once(args[0], args[1])


def worker_count(runs: int) -> int:
    """Worker pool size: LOCATE_SIM_THREADS caps it, 0 or unset means auto."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            requested = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if requested < 0:
            raise ValueError(f"{THREADS_ENV} must be non-negative, got {requested}")
    else:
        requested = 0
    if requested == 0:
        requested = os.cpu_count() or 1
    return max(1, min(requested, runs))


def run_batch(config: ScenarioConfig, workers: int | None = None) -> tuple[list[RunResult], Aggregate]:
    """All runs of a config, in run-index order, plus their aggregate."""
    if workers is None:
        workers = worker_count(config.runs)
    if workers <= 1 or config.runs == 1:
        results = [run_once(config, i) for i in range(config.runs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, config.runs // (workers * 4))
            results = list(pool.map(_run_indexed, ((config, i) for i in range(config.runs)),
                                    chunksize=chunk))
    return results, aggregate(results, config.params.e_thr_s)


def aggregate(results: list[RunResult], e_thr_s: float) -> Aggregate:
    """Success ratio, resolution-time stats over solved runs, overhead stats over all runs."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    solved = [r for r in results if r.solved]
    within = sum(1 for r in solved if r.ert_s <= e_thr_s)
    erts = [r.ert_s for r in solved]
    eos = [float(r.ereq_count) for r in results]
    ert_mean, ert_ci = _mean_ci(erts)
    eo_mean, eo_ci = _mean_ci(eos)
    return Aggregate(len(results), len(solved), within / len(results),
                     ert_mean, ert_ci, eo_mean, eo_ci)


def _mean_ci(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, None
    half = 1.96 * statistics.stdev(values) / math.sqrt(len(values))
    return mean, half


@dataclass(slots=True)
class SweepRow:
    protocol: str
    n: int
    tau: float
    p_start: float
    results: list[RunResult]
    agg: Aggregate


SWEEP_AXES = ("tau", "n", "p_start")


def sweep(config: ScenarioConfig, axis: str, values: list[float],
          protocols: list[str] | None = None) -> list[SweepRow]:
    """Run a batch per (protocol, axis value); all rows share the base seed.

    Sharing seeds gives every row the same sequence of worlds, so protocol
    comparisons at a point are paired rather than independent.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    if not values:
        raise ValueError("sweep needs at least one axis value")
    rows = []
    for name in protocols or [config.protocol]:
        for value in values:
            cfg = _at_point(config, name, axis, value)
            results, agg = run_batch(cfg)
            rows.append(SweepRow(name, cfg.n, cfg.tau, cfg.params.p_start, results, agg))
    return rows


def _at_point(config: ScenarioConfig, protocol_name: str, axis: str, value: float) -> ScenarioConfig:
    if axis == "tau":
        return replace(config, protocol=protocol_name, tau=float(value))
    if axis == "n":
        if value != int(value):
            raise ValueError(f"node count must be an integer, got {value}")
        return replace(config, protocol=protocol_name, n=int(value))
    return replace(config, protocol=protocol_name,
                   params=replace(config.params, p_start=float(value)))
