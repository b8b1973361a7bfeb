"""Energy, event classification, fixation statistics, and the Nash replay check.

All operations here are pure post-processing over an immutable trajectory
log plus the quenched inputs; the energy decomposition replays the logged
flips independently of the run's own bookkeeping.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (EventStream, TrajectoryLog, alignment_sum,
                       incoming_alignment_sum, run)
from .errors import InvariantViolation
from .graph import DegreeStats, FeelingMap, Graph
from .randomness import RandomnessPlan
from .strategy import ObserveInfo, empirical_T

_NO_INFO = ObserveInfo(False, False, 0)


def local_field(site: int, config: np.ndarray, graph: Graph,
                feelings: FeelingMap) -> int:
    """Integer alignment sum at a site (the reward is its sign)."""
    return alignment_sum(site, config, graph, feelings)


def energy(region, config: np.ndarray, graph: Graph,
           feelings: FeelingMap) -> int:
    """Energy of a region: minus the sum of local fields over its sites."""
    return -sum(local_field(u, config, graph, feelings) for u in region)


@dataclass
class FixationReport:
    """Per-site event classes and opinion-change statistics.

    Classes per event: 1 = known pattern and loss before the settling
    time, 2 = any other arrival before it, 3 = opinion change after it,
    0 = arrival after it without an opinion change.
    """

    horizon: float
    empirical_T: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray
    flips: np.ndarray
    last_flip: np.ndarray
    rho: np.ndarray
    degree: np.ndarray
    classes: np.ndarray
    unstabilized: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.empirical_T)


def classify_events(log: TrajectoryLog, state, horizon: float) -> FixationReport:
    """Retrospective classification of all events by each site's settling time.

    Requires memory strategies everywhere; baselines carry no settling
    metadata.  Sites whose settling time falls in the final 10% of the
    horizon are flagged as unstabilized.
    """
    memories = state.memories()
    if any(m is None for m in memories):
        raise ValueError("event classification needs memory strategies at every site")
    n_sites = len(memories)
    emp_T = np.array([empirical_T(m) for m in memories], dtype=np.float64)

    t = np.array(log.times, dtype=np.float64)
    s = np.array(log.sites, dtype=np.int64)
    h = np.array(log.rewards, dtype=np.int64)
    flip = np.array(log.flipped, dtype=bool)
    new = np.array(log.new_pattern, dtype=bool)

    before = t <= emp_T[s]
    classes = np.zeros(len(t), dtype=np.int8)
    is_n1 = before & ~new & (h < 0)
    classes[is_n1] = 1
    classes[before & ~is_n1] = 2
    classes[~before & flip] = 3

    n1 = np.bincount(s[classes == 1], minlength=n_sites)
    n2 = np.bincount(s[classes == 2], minlength=n_sites)
    n3 = np.bincount(s[classes == 3], minlength=n_sites)
    flips = np.bincount(s[flip], minlength=n_sites)
    last_flip = np.zeros(n_sites, dtype=np.float64)
    for k in np.nonzero(flip)[0]:
        last_flip[s[k]] = t[k]

    graph = state.graph
    degree = np.array([graph.degree(i) for i in range(n_sites)], dtype=np.int64)
    return FixationReport(
        horizon=horizon,
        empirical_T=emp_T,
        n1=n1, n2=n2, n3=n3,
        flips=flips,
        last_flip=last_flip,
        rho=graph.rho_all().copy(),
        degree=degree,
        classes=classes,
        unstabilized=emp_T > 0.9 * horizon,
    )


@dataclass
class EnergyReport:
    """Energy trajectory and its decomposition by event class.

    Rows are recorded at time 0, at every opinion change, and at the
    horizon; the trajectory is constant between rows.  All totals are
    exact integers divided by the window size, so e = e0 + e1 + e2 + e3
    holds identically.
    """

    n_sites: int
    times: list[float]
    H: list[int]
    e1: list[float]
    e2: list[float]
    e3: list[float]
    e0: float
    delta_by_event: np.ndarray
    n3_non_unit: list[tuple[float, int, int]] = field(default_factory=list)

    @property
    def e(self) -> list[float]:
        return [hh / self.n_sites for hh in self.H]

    def max_abs_e(self) -> float:
        return max(abs(hh) for hh in self.H) / self.n_sites

    def max_e2(self) -> float:
        return max(self.e2)

    def value_at(self, t: float) -> float:
        """Energy density at time t (piecewise constant between rows)."""
        k = np.searchsorted(np.array(self.times), t, side="right") - 1
        return self.H[max(k, 0)] / self.n_sites


def energy_decomposition(log: TrajectoryLog, report: FixationReport,
                         graph: Graph, feelings: FeelingMap,
                         init_config: np.ndarray) -> EnergyReport:
    """Replay the log, accumulating energy changes into the event classes.

    The change at a flip of site x equals 2 * (outgoing + incoming
    alignment sums at x) on the pre-flip configuration; with symmetric
    feelings this is 4 times the pre-flip local field.  Class-3 flips
    under symmetric feelings should lower the energy by at least one
    unit; exceptions are collected, not raised.
    """
    window = graph.window
    n = window.n_interior
    config = init_config.copy()
    H = energy(range(n), config, graph, feelings)
    e0 = H / n

    times = [0.0]
    H_rows = [H]
    acc = {1: 0, 2: 0, 3: 0, 0: 0}
    e1_rows = [0.0]
    e2_rows = [0.0]
    e3_rows = [0.0]
    deltas = np.zeros(len(log), dtype=np.int64)
    non_unit: list[tuple[float, int, int]] = []

    for k in range(len(log)):
        site = log.sites[k]
        u = log.decisions[k]
        pre = -u if log.flipped[k] else u
        if int(config[site]) != pre:
            raise InvariantViolation("log replay diverged from the recorded trajectory")
        if not log.flipped[k]:
            continue
        d = 2 * (alignment_sum(site, config, graph, feelings)
                 + incoming_alignment_sum(site, config, graph, feelings))
        config[site] = u
        H += d
        deltas[k] = d
        cls = int(report.classes[k])
        acc[cls] += d
        if cls == 3 and feelings.symmetric_mode and d > -1:
            non_unit.append((log.times[k], site, d))
        times.append(log.times[k])
        H_rows.append(H)
        e1_rows.append(acc[1] / n)
        e2_rows.append(acc[2] / n)
        e3_rows.append(acc[3] / n)

    times.append(log.horizon)
    H_rows.append(H)
    e1_rows.append(acc[1] / n)
    e2_rows.append(acc[2] / n)
    e3_rows.append(acc[3] / n)

    return EnergyReport(n_sites=n, times=times, H=H_rows,
                        e1=e1_rows, e2=e2_rows, e3=e3_rows, e0=e0,
                        delta_by_event=deltas, n3_non_unit=non_unit)


@dataclass
class MarkovRow:
    threshold: float
    empirical_fraction: float
    bound: float
    std_error: float
    passed: bool


def markov_bound_check(reports: list[FixationReport], stats: list[DegreeStats],
                       thresholds: list[float]) -> list[MarkovRow]:
    """Tail check: fraction of sites with many post-settling flips vs the
    second-plus-third moment bound, with three standard errors of slack."""
    n3 = np.concatenate([r.n3 for r in reports])
    m2 = float(np.mean([s.rho_moments[1] for s in stats]))
    m3 = float(np.mean([s.rho_moments[2] for s in stats]))
    rows = []
    for c in thresholds:
        if c <= 0:
            raise ValueError("threshold must be positive")
        frac = float(np.mean(n3 > c))
        bound = (m2 + m3) / c
        se = math.sqrt(max(frac * (1 - frac), 1e-12) / len(n3))
        rows.append(MarkovRow(c, frac, bound, se, frac <= bound + 3 * se))
    return rows


# --- Nash deviation replay -------------------------------------------------


class PinnedAgent:
    """Replays a recorded decision sequence; used to hold others fixed."""

    kind = "pinned"

    def __init__(self, decisions: list[int]) -> None:
        self.decisions = decisions

    def decide(self, ctx) -> int:
        return self.decisions[ctx.arrival_index]

    def observe(self, ctx, decision: int, reward: int) -> ObserveInfo:
        return _NO_INFO


class DeviatingAgent(PinnedAgent):
    """Pinned up to the cut time, then plays a fixed deviation rule."""

    kind = "deviating"

    def __init__(self, decisions: list[int], cut: float, rule: str) -> None:
        super().__init__(decisions)
        self.cut = cut
        self.rule = rule

    def decide(self, ctx) -> int:
        original = self.decisions[ctx.arrival_index]
        if ctx.time <= self.cut:
            return original
        if self.rule == "constant(+1)":
            return 1
        if self.rule == "constant(-1)":
            return -1
        if self.rule == "flip":
            return -original
        raise ValueError(f"unknown deviation rule {self.rule!r}")


@dataclass
class NashCase:
    site: int
    deviation: str
    suffix_events: int
    base_losses: int
    deviated_losses: int

    @property
    def improved(self) -> bool:
        return self.deviated_losses < self.base_losses


def _decisions_by_site(log: TrajectoryLog, n_sites: int) -> list[list[int]]:
    table: list[list[int]] = [[] for _ in range(n_sites)]
    for k in range(len(log)):
        table[log.sites[k]].append(log.decisions[k])
    return table


def nash_check(log: TrajectoryLog, state, events: EventStream,
               init_config: np.ndarray, plan: RandomnessPlan,
               n_agents: int = 5,
               deviations: tuple[str, ...] = ("constant(+1)", "constant(-1)", "flip"),
               ) -> tuple[float, list[NashCase]]:
    """Deviation test after every agent in the window has settled.

    Replays the run with one agent's post-settling decisions replaced by
    each deviation rule while all randomness and the other agents'
    decision sequences stay fixed, and reports whether any deviation
    lowers that agent's loss count on the suffix.  An identity replay
    must reproduce the original log exactly; a mismatch is fatal.
    """
    graph, feelings = state.graph, state.feelings
    window = graph.window
    n_sites = window.n_interior
    memories = state.memories()
    if any(m is None for m in memories):
        raise ValueError("nash check needs memory strategies at every site")
    t_star = max(empirical_T(m) for m in memories)
    table = _decisions_by_site(log, n_sites)

    identity, _ = run(graph, feelings, lambda i: PinnedAgent(table[i]),
                      log.horizon, plan, events=events, init_config=init_config)
    if identity.decisions != log.decisions or identity.rewards != log.rewards:
        raise InvariantViolation("pinned replay failed to reproduce the original run")

    # deterministic agent sample: rank sites by a keyed uniform
    ranked = sorted(range(n_sites), key=lambda i: plan.uniform("nash-sample", i))
    chosen = ranked[:n_agents]

    t_arr = np.array(log.times)
    s_arr = np.array(log.sites)
    h_arr = np.array(log.rewards)
    cases = []
    for site in chosen:
        suffix = (s_arr == site) & (t_arr > t_star)
        base_losses = int(np.sum(suffix & (h_arr < 0)))
        for rule in deviations:
            def factory(i, _site=site, _rule=rule):
                if i == _site:
                    return DeviatingAgent(table[i], t_star, _rule)
                return PinnedAgent(table[i])

            dev_log, _ = run(graph, feelings, factory, log.horizon, plan,
                             events=events, init_config=init_config)
            dt = np.array(dev_log.times)
            ds = np.array(dev_log.sites)
            dh = np.array(dev_log.rewards)
            dev_losses = int(np.sum((ds == site) & (dt > t_star) & (dh < 0)))
            cases.append(NashCase(site=site, deviation=rule,
                                  suffix_events=int(np.sum(suffix)),
                                  base_losses=base_losses,
                                  deviated_losses=dev_losses))
    return t_star, cases


# --- CSV emission ----------------------------------------------------------


def write_energy_csv(report: EnergyReport, dest) -> None:
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    stream = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(stream)
        writer.writerow(["time", "H", "e", "e1", "e2", "e3"])
        for k in range(len(report.times)):
            writer.writerow([repr(report.times[k]), report.H[k],
                             repr(report.H[k] / report.n_sites),
                             repr(report.e1[k]), repr(report.e2[k]),
                             repr(report.e3[k])])
    finally:
        if own:
            stream.close()


def write_sites_csv(report: FixationReport, window, dest) -> None:
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    stream = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(stream)
        writer.writerow(["site_x1", "site_x2", "N1", "N2", "N3", "M",
                         "last_flip", "empirical_T", "rho", "degree"])
        for i in range(report.n_sites):
            x1, x2 = window.coord_of(i)
            writer.writerow([x1, x2, report.n1[i], report.n2[i], report.n3[i],
                             report.flips[i], repr(float(report.last_flip[i])),
                             repr(float(report.empirical_T[i])),
                             report.rho[i], report.degree[i]])
    finally:
        if own:
            stream.close()


def write_bounds_csv(rows: list[MarkovRow], dest) -> None:
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    stream = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(stream)
        writer.writerow(["C", "empirical_fraction", "markov_bound"])
        for row in rows:
            writer.writerow([repr(float(row.threshold)),
                             repr(row.empirical_fraction), repr(row.bound)])
    finally:
        if own:
            stream.close()
