"""Independent brute-force cross-checks for small windows.

These deliberately avoid the production code paths: rewards and energies
are recomputed from a flat edge dictionary by naive summation, and the
replay oracle re-derives clocks, coins, and the memory rule from scratch
with plain dictionaries.  They exist to catch bookkeeping bugs in the
fast implementations, so keep them naive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Window, ball_offsets
from .graph import FeelingMap, Graph
from .randomness import RandomnessPlan


class BruteForce:
    """Naive reward/energy evaluation from a flat edge dictionary."""

    def __init__(self, graph: Graph, feelings: FeelingMap) -> None:
        self.window = graph.window
        self.edges: dict[tuple[int, int], int] = {}
        for i in range(graph.window.n_total):
            for k, j in enumerate(graph.neighbors[i]):
                self.edges[(i, j)] = feelings.out[i][k]

    def local_field(self, site: int, config) -> int:
        total = 0
        for y in range(self.window.n_total):
            jv = self.edges.get((site, y))
            if jv is not None:
                total += jv * int(config[site]) * int(config[y])
        return total

    def reward(self, site: int, config) -> int:
        f = self.local_field(site, config)
        return (f > 0) - (f < 0)

    def energy(self, region, config) -> int:
        return -sum(self.local_field(u, config) for u in region)


@dataclass
class OracleCheck:
    name: str
    passed: bool
    detail: str


def _oracle_arrivals(window: Window, site: int, horizon: float,
                     plan: RandomnessPlan) -> list[float]:
    x1, x2 = window.coord_of(site)
    t = 0.0
    out = []
    k = 0
    while True:
        u = plan.uniform("clock", x1, x2, k)
        t += -math.log1p(-u)
        k += 1
        if t > horizon:
            return out
        out.append(t)


def replay_oracle(graph: Graph, feelings: FeelingMap, plan: RandomnessPlan,
                  horizon: float, max_events: int | None = None):
    """Step-by-step reference simulation of the memory rule.

    Returns (final spins dict, list of (time, site, decision, reward)).
    Everything is re-derived from the plan with scalar draws and plain
    dictionaries.
    """
    window = graph.window
    brute = BruteForce(graph, feelings)

    spins: dict[int, int] = {}
    for i in range(window.n_total):
        x1, x2 = window.coord_of(i)
        if window.is_interior(i):
            spins[i] = 1 if plan.uniform("init", x1, x2) < 0.5 else -1
        else:
            spins[i] = window.pinned_values[(x1, x2)]

    events = []
    for i in range(window.n_interior):
        for n, t in enumerate(_oracle_arrivals(window, i, horizon, plan)):
            events.append((t, i, n))
    events.sort()
    if max_events is not None:
        events = events[:max_events]

    def pattern(site: int, radius: int) -> tuple:
        x1, x2 = window.coord_of(site)
        cells = []
        for dx, dy in ball_offsets(radius):
            if window.boundary == "torus":
                c = ((x1 + dx) % window.side, (x2 + dy) % window.side)
            else:
                c = (x1 + dx, x2 + dy)
                if not window.contains(c):
                    continue
            cells.append(spins[window.id_of(c)])
        return tuple(cells)

    memories: dict[int, dict] = {
        i: {"records": {}, "radius": 0, "last": 0, "first": False}
        for i in range(window.n_interior)
    }
    trace = []
    for t, site, n in events:
        mem = memories[site]
        x1, x2 = window.coord_of(site)
        pre_patterns = {r: pattern(site, r) for r in (1, mem["radius"], mem["radius"] + 1) if r >= 1}
        if not mem["first"]:
            u = plan.coin("coin", x1, x2, n)
        else:
            key = (mem["radius"], pre_patterns[mem["radius"]])
            rec = mem["records"].get(key)
            if rec is None:
                u = mem["last"]
            else:
                u = rec[0] if rec[1] >= 0 else -rec[0]
        spins[site] = u
        h = brute.reward(site, spins)
        if not mem["first"]:
            mem["records"][(1, pre_patterns[1])] = (u, h)
            mem["radius"] = 1
            mem["first"] = True
        else:
            key = (mem["radius"], pre_patterns[mem["radius"]])
            if key in mem["records"]:
                if h < 0:
                    grown = mem["radius"] + 1
                    mem["records"][(grown, pre_patterns[grown])] = (u, h)
                    mem["radius"] = grown
            else:
                mem["records"][key] = (u, h)
        mem["last"] = u
        trace.append((t, site, u, h))
    return spins, trace


def run_oracle_checks(side: int, seed: int, horizon: float = 6.0,
                      n_random: int = 200, n_replays: int = 5) -> list[OracleCheck]:
    """Built-in dual-route checks on a small torus window.

    Compares production rewards/energies against the brute-force routes
    over random configurations, and full runs against the replay oracle.
    """
    from .dynamics import init_configuration, run
    from .graph import sample_feelings, sample_graph
    from .observables import energy, local_field
    from .strategy import memory_strategy

    checks = []
    window = Window(side, "torus")
    base = RandomnessPlan(seed)

    mismatches = 0
    total = 0
    for rep in range(n_random):
        plan = base.spawn("oracle-random", rep)
        graph = sample_graph(window, 1.0, 9.0, plan)
        feelings = sample_feelings(graph, rep % 2 == 0, plan)
        config = init_configuration(window, plan)
        brute = BruteForce(graph, feelings)
        for site in range(window.n_interior):
            total += 1
            if local_field(site, config, graph, feelings) != brute.local_field(site, config):
                mismatches += 1
        if energy(range(window.n_interior), config, graph, feelings) != \
                brute.energy(range(window.n_interior), config):
            mismatches += 1
    checks.append(OracleCheck(
        name=f"field-and-energy-vs-bruteforce-{side}x{side}",
        passed=mismatches == 0,
        detail=f"{mismatches} mismatches over {n_random} configurations"))

    replay_bad = 0
    for rep in range(n_replays):
        plan = base.spawn("oracle-replay", rep)
        graph = sample_graph(window, 1.0, 9.0, plan)
        feelings = sample_feelings(graph, True, plan)
        log, state = run(graph, feelings, memory_strategy(), horizon, plan)
        spins, trace = replay_oracle(graph, feelings, plan, horizon)
        ok = len(trace) == len(log)
        if ok:
            for k, (t, site, u, h) in enumerate(trace):
                if (abs(t - log.times[k]) > 1e-12 or site != log.sites[k]
                        or u != log.decisions[k] or h != log.rewards[k]):
                    ok = False
                    break
        if ok:
            for i in range(window.n_interior):
                if spins[i] != int(state.config[i]):
                    ok = False
                    break
        if not ok:
            replay_bad += 1
    checks.append(OracleCheck(
        name=f"full-run-vs-replay-oracle-{side}x{side}",
        passed=replay_bad == 0,
        detail=f"{replay_bad} diverging runs out of {n_replays}"))
    return checks
