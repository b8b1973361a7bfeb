"""Event-driven graphical construction of the spin process.

Each interior site carries a rate-1 Poisson clock.  Events are processed
in global time order; at an event the site's agent picks a decision,
the spin is written, and the reward (sign of the signed alignment sum on
the post-update configuration) is fed back to the agent.  All randomness
comes from the keyed plan, so a run is a pure function of
(graph seed inputs, strategy assignment, horizon).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .geometry import Window
from .graph import FeelingMap, Graph
from .randomness import RandomnessPlan
from .strategy import ObserveInfo


def init_configuration(window: Window, plan: RandomnessPlan) -> np.ndarray:
    """Independent fair +-1 spin per interior site; frame from pinned values."""
    config = np.zeros(window.n_total, dtype=np.int8)
    keys = np.array([window.coord_of(i) for i in range(window.n_interior)], dtype=np.int64)
    u = plan.uniforms("init", keys)
    config[: window.n_interior] = np.where(u < 0.5, 1, -1)
    if window.boundary == "pinned":
        assert window.pinned_values is not None
        for c, s in window.pinned_values.items():
            config[window.id_of(c)] = s
    return config


@dataclass
class EventStream:
    """Globally ordered Poisson arrivals up to the horizon.

    ``arrival[k]`` is the 0-based index of event k within its own site's
    clock.  Ties (possible only through float collision) are ordered by
    site id, identically in every replay.
    """

    times: list[float]
    sites: list[int]
    arrival: list[int]
    horizon: float

    def __len__(self) -> int:
        return len(self.times)

    def truncated(self, n_events: int) -> "EventStream":
        return EventStream(self.times[:n_events], self.sites[:n_events],
                           self.arrival[:n_events], self.horizon)


def site_arrivals(window: Window, site_id: int, horizon: float,
                  plan: RandomnessPlan) -> np.ndarray:
    """Arrival times of one site's unit-rate clock up to the horizon."""
    x1, x2 = window.coord_of(site_id)
    gaps: list[np.ndarray] = []
    total = 0.0
    start = 0
    block = max(8, int(horizon + 6.0 * math.sqrt(horizon) + 8))
    while True:
        ks = np.arange(start, start + block, dtype=np.int64)
        keys = np.stack([np.full(block, x1, dtype=np.int64),
                         np.full(block, x2, dtype=np.int64), ks], axis=1)
        u = plan.uniforms("clock", keys)
        g = -np.log1p(-u)
        gaps.append(g)
        total += float(g.sum())
        start += block
        if total > horizon:
            break
        block = max(8, block // 2)
    t = np.cumsum(np.concatenate(gaps))
    return t[t <= horizon]


def build_event_stream(window: Window, horizon: float,
                       plan: RandomnessPlan) -> EventStream:
    """Merge per-site Poisson arrivals; deterministic given the plan."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    times_parts = []
    sites_parts = []
    arrival_parts = []
    for i in range(window.n_interior):
        t = site_arrivals(window, i, horizon, plan)
        if len(t) == 0:
            continue
        times_parts.append(t)
        sites_parts.append(np.full(len(t), i, dtype=np.int64))
        arrival_parts.append(np.arange(len(t), dtype=np.int64))
    if not times_parts:
        return EventStream([], [], [], horizon)
    times = np.concatenate(times_parts)
    sites = np.concatenate(sites_parts)
    arrival = np.concatenate(arrival_parts)
    order = np.lexsort((sites, times))
    return EventStream(times[order].tolist(), sites[order].tolist(),
                       arrival[order].tolist(), horizon)


def alignment_sum(site: int, config: np.ndarray, graph: Graph,
                  feelings: FeelingMap) -> int:
    """Signed alignment sum at a site: sum_y j(site, y) s(site) s(y)."""
    s = 0
    row = feelings.out[site]
    for k, j in enumerate(graph.neighbors[site]):
        s += row[k] * int(config[j])
    return s * int(config[site])


def incoming_alignment_sum(site: int, config: np.ndarray, graph: Graph,
                           feelings: FeelingMap) -> int:
    """Mirror sum with incoming feelings: sum_y j(y, site) s(site) s(y)."""
    s = 0
    row = feelings.in_[site]
    for k, j in enumerate(graph.neighbors[site]):
        s += row[k] * int(config[j])
    return s * int(config[site])


def reward(site: int, config: np.ndarray, graph: Graph,
           feelings: FeelingMap) -> int:
    """Sign of the alignment sum; zero sum gives reward zero."""
    s = alignment_sum(site, config, graph, feelings)
    return (s > 0) - (s < 0)


class EventContext:
    """Per-event view handed to agents; rebound in place each event.

    ``extract`` reads ball patterns from the pre-decision configuration
    (the center cell reports the spin before the pending update).
    """

    __slots__ = ("window", "graph", "feelings", "config", "plan",
                 "time", "site", "arrival_index", "pre_spin", "_coords")

    def __init__(self, window: Window, graph: Graph, feelings: FeelingMap,
                 config: np.ndarray, plan: RandomnessPlan) -> None:
        self.window = window
        self.graph = graph
        self.feelings = feelings
        self.config = config
        self.plan = plan
        self.time = 0.0
        self.site = 0
        self.arrival_index = 0
        self.pre_spin = 0
        self._coords = [window.coord_of(i) for i in range(window.n_interior)]

    def bind(self, time: float, site: int, arrival_index: int) -> None:
        self.time = time
        self.site = site
        self.arrival_index = arrival_index
        self.pre_spin = int(self.config[site])

    @property
    def current_spin(self) -> int:
        return self.pre_spin

    def coin(self) -> int:
        x1, x2 = self._coords[self.site]
        return self.plan.coin("coin", x1, x2, self.arrival_index)

    def extract(self, radius: int) -> bytes:
        idx, center = self.window.ball(self.site, radius)
        cells = self.config[idx]
        cells[center] = self.pre_spin
        return cells.tobytes()

    def raw_field(self) -> int:
        s = 0
        row = self.feelings.out[self.site]
        cfg = self.config
        for k, j in enumerate(self.graph.neighbors[self.site]):
            s += row[k] * int(cfg[j])
        return s


@dataclass
class TrajectoryLog:
    """Columnar per-event record of a run."""

    horizon: float
    times: list[float] = field(default_factory=list)
    sites: list[int] = field(default_factory=list)
    decisions: list[int] = field(default_factory=list)
    rewards: list[int] = field(default_factory=list)
    flipped: list[bool] = field(default_factory=list)
    new_pattern: list[bool] = field(default_factory=list)
    memory_grew: list[bool] = field(default_factory=list)
    radius_after: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, time: float, site: int, decision: int, rew: int,
               did_flip: bool, info: ObserveInfo) -> None:
        self.times.append(time)
        self.sites.append(site)
        self.decisions.append(decision)
        self.rewards.append(rew)
        self.flipped.append(did_flip)
        self.new_pattern.append(info.new_pattern)
        self.memory_grew.append(info.record_added)
        self.radius_after.append(info.radius)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "time": np.array(self.times, dtype=np.float64),
            "site": np.array(self.sites, dtype=np.int64),
            "decision": np.array(self.decisions, dtype=np.int8),
            "reward": np.array(self.rewards, dtype=np.int8),
            "flipped": np.array(self.flipped, dtype=bool),
            "new_pattern": np.array(self.new_pattern, dtype=bool),
            "memory_grew": np.array(self.memory_grew, dtype=bool),
            "radius": np.array(self.radius_after, dtype=np.int64),
        }

    def write_csv(self, window: Window, dest) -> None:
        own = isinstance(dest, str) or hasattr(dest, "__fspath__")
        stream = open(dest, "w", newline="") if own else dest
        try:
            writer = csv.writer(stream)
            writer.writerow(["time", "site_x1", "site_x2", "decision",
                             "reward", "flipped", "new_pattern", "radius"])
            for k in range(len(self.times)):
                x1, x2 = window.coord_of(self.sites[k])
                writer.writerow([repr(self.times[k]), x1, x2,
                                 self.decisions[k], self.rewards[k],
                                 int(self.flipped[k]), int(self.new_pattern[k]),
                                 self.radius_after[k]])
        finally:
            if own:
                stream.close()


@dataclass
class SimState:
    """Mutable run state: quenched inputs, spins, agents, clock."""

    graph: Graph
    feelings: FeelingMap
    config: np.ndarray
    agents: list
    clock: float = 0.0
    events_done: int = 0

    def memories(self):
        return [getattr(a, "memory", None) for a in self.agents]


def step(state: SimState, ctx: EventContext, time: float, site: int,
         arrival_index: int, log: TrajectoryLog | None) -> int:
    """Process one event; returns the decision taken."""
    if time < state.clock:
        raise InvariantViolation("event time precedes the state clock")
    ctx.bind(time, site, arrival_index)
    agent = state.agents[site]
    u = agent.decide(ctx)
    if u not in (-1, 1):
        raise InvariantViolation(f"strategy returned invalid decision {u!r}")
    state.config[site] = u
    h = reward(site, state.config, state.graph, state.feelings)
    info = agent.observe(ctx, u, h)
    if log is not None:
        log.append(time, site, u, h, u != ctx.pre_spin, info)
    state.clock = time
    state.events_done += 1
    return u


def run(graph: Graph, feelings: FeelingMap, agent_factory, horizon: float,
        plan: RandomnessPlan, events: EventStream | None = None,
        init_config: np.ndarray | None = None,
        collect_log: bool = True) -> tuple[TrajectoryLog, SimState]:
    """Process the full event stream in time order.

    Deterministic given the plan: graph, clocks, coins, and the initial
    configuration are all keyed draws.  ``events`` and ``init_config``
    may be passed explicitly for replays and truncated runs.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    window = graph.window
    if init_config is None:
        init_config = init_configuration(window, plan)
    config = init_config.copy()
    if events is None:
        events = build_event_stream(window, horizon, plan)
    agents = [agent_factory(i) for i in range(window.n_interior)]
    state = SimState(graph=graph, feelings=feelings, config=config, agents=agents)
    log = TrajectoryLog(horizon=horizon)
    ctx = EventContext(window, graph, feelings, config, plan)
    times, sites, arrival = events.times, events.sites, events.arrival
    sink = log if collect_log else None
    for k in range(len(times)):
        step(state, ctx, times[k], sites[k], arrival[k], sink)
    return log, state
