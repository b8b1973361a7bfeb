"""Coupled-copy machinery: subbox partitions, discrepancy fronts, TV estimates.

Two copies of the process run on identical randomness (graph, clocks,
coins, interior initial spins) but different pinned frames.  Per site we
track the first disagreement time tau_x and a dominating blackening
process: a true disagreement instantly blackens the site's whole subbox,
and a site whose clock rings while a neighbouring subbox is already
black turns black itself.  Black never clears.  The time a target
region's subboxes all turn black is the front time; the empirical
distribution of the target pattern under the two frames gives the
total-variation estimate.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .dynamics import EventContext, build_event_stream, init_configuration, reward
from .errors import InvariantViolation
from .geometry import Coord, Window, frame_assignment
from .graph import FeelingMap, Graph, sample_feelings, sample_graph
from .randomness import RandomnessPlan
from .strategy import memory_strategy

DEFAULT_SUBBOX_EXPONENT = 13.0 / 42.0

Cell = tuple[int, int]


def rate_function(alpha: float) -> float:
    """Large-deviation rate for sums of unit exponentials: a - 1 - log a."""
    if alpha <= 0:
        raise ValueError("rate function defined for positive arguments only")
    return alpha - 1.0 - math.log(alpha)


@dataclass
class SubboxPartition:
    """Square grid of side-s subboxes tiling an L x L box.

    Two distinct subboxes are neighbours when their grid Chebyshev
    distance is 1 (the 8 surrounding cells, wrapping on a torus).  In
    pinned contexts a virtual ring of boundary cells at grid index -1
    and g represents the frame.
    """

    L: int
    s: int
    boundary: str = "torus"
    _members: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def grid(self) -> int:
        return self.L // self.s

    @property
    def rho_effective(self) -> float:
        return math.log(self.s) / math.log(self.L)

    def cell_of(self, coord: Coord) -> Cell:
        # floor division sends frame coordinates (-1 and L) to the virtual ring
        return (coord[0] // self.s, coord[1] // self.s)

    def cells(self) -> list[Cell]:
        g = self.grid
        return [(a, b) for a in range(g) for b in range(g)]

    def is_virtual(self, cell: Cell) -> bool:
        g = self.grid
        return not (0 <= cell[0] < g and 0 <= cell[1] < g)

    def neighbors(self, cell: Cell, include_virtual: bool = False) -> list[Cell]:
        g = self.grid
        out = []
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                if da == 0 and db == 0:
                    continue
                a, b = cell[0] + da, cell[1] + db
                if self.boundary == "torus":
                    out.append((a % g, b % g))
                elif 0 <= a < g and 0 <= b < g:
                    out.append((a, b))
                elif include_virtual and -1 <= a <= g and -1 <= b <= g:
                    out.append((a, b))
        return out

    def are_neighbors(self, r: Cell, t: Cell) -> bool:
        if r == t:
            return False
        da = abs(r[0] - t[0])
        db = abs(r[1] - t[1])
        if self.boundary == "torus":
            g = self.grid
            da = min(da, g - da)
            db = min(db, g - db)
        return max(da, db) == 1

    def members(self, cell: Cell, window: Window) -> np.ndarray:
        """Interior site ids inside a (non-virtual) cell."""
        key = cell
        m = self._members.get(key)
        if m is None:
            a, b = cell
            ids = [x1 * self.L + x2
                   for x1 in range(a * self.s, (a + 1) * self.s)
                   for x2 in range(b * self.s, (b + 1) * self.s)]
            m = np.array(ids, dtype=np.int64)
            self._members[key] = m
        return m


def partition_subboxes(L: int, rho: float = DEFAULT_SUBBOX_EXPONENT,
                       boundary: str = "torus") -> SubboxPartition:
    """Partition an L x L box into subboxes of side about L**rho.

    The side is max(2, round(L**rho)) adjusted down to the nearest
    divisor of L; if no divisor of at least 2 fits, L is rejected.
    """
    if L < 4:
        raise ValueError("box side must be at least 4")
    target = max(2, round(L ** rho))
    s = 0
    for cand in range(target, 1, -1):
        if L % cand == 0:
            s = cand
            break
    if s < 2:
        raise ValueError(f"no subbox side >= 2 divides L={L}")
    return SubboxPartition(L=L, s=s, boundary=boundary)


@dataclass
class LinkedNonNeighbor:
    cell_a: Cell
    cell_b: Cell
    witness: tuple[Coord, Coord]


def find_linked_nonneighbor(graph: Graph,
                            partition: SubboxPartition) -> list[LinkedNonNeighbor]:
    """All pairs of non-neighbour subboxes joined by an edge, one witness each.

    Only interior-interior edges are considered (the partition tiles the
    box).  Deterministic order: first witness in sorted edge order.
    """
    window = graph.window
    found: dict[tuple[Cell, Cell], tuple[Coord, Coord]] = {}
    for i in range(window.n_interior):
        ci = window.coord_of(i)
        cell_i = partition.cell_of(ci)
        for j in graph.neighbors[i]:
            if j <= i or j >= window.n_interior:
                continue
            cj = window.coord_of(j)
            cell_j = partition.cell_of(cj)
            if cell_i == cell_j or partition.are_neighbors(cell_i, cell_j):
                continue
            key = (cell_i, cell_j) if cell_i <= cell_j else (cell_j, cell_i)
            if key not in found:
                found[key] = (ci, cj)
    return [LinkedNonNeighbor(a, b, w) for (a, b), w in sorted(found.items())]


@dataclass
class CouplingResult:
    """Outcome of one coupled pair of runs."""

    window: Window
    partition: SubboxPartition
    graph: Graph
    tau: np.ndarray            # first disagreement time per site, inf if never
    black_time: np.ndarray     # blackening time per site, inf if never
    cell_black_time: dict      # cell -> first time it contains a black site
    snapshots: dict            # t -> (pattern bytes copy 1, pattern bytes copy 2)
    n_events: int
    horizon: float

    def check_domination(self) -> None:
        """The blackening process must cover true disagreement everywhere."""
        bad = np.nonzero(self.black_time > self.tau)[0]
        if len(bad):
            raise InvariantViolation(
                f"blackening lags true disagreement at site {int(bad[0])}")


def coupled_run(side: int, zeta1, zeta2, horizon: float, plan: RandomnessPlan,
                C: float = 1.0, gamma: float = 9.0, symmetric: bool = False,
                agent_factory: Callable[[int], object] | None = None,
                partition: SubboxPartition | None = None,
                lambda0: list[Coord] | None = None,
                snapshot_times: tuple[float, ...] = (),
                graph_pair: tuple[Graph, Graph] | None = None,
                feelings_pair: tuple[FeelingMap, FeelingMap] | None = None,
                ) -> CouplingResult:
    """Run two copies that differ only in their pinned frames.

    ``zeta1``/``zeta2`` are +-1 scalars or frame assignments.  Everything
    else (graph, feelings, interior initial spins, clocks, coins) is
    drawn from the shared plan, so identical frames imply identical
    trajectories.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    z1 = frame_assignment(side, zeta1) if isinstance(zeta1, int) else dict(zeta1)
    z2 = frame_assignment(side, zeta2) if isinstance(zeta2, int) else dict(zeta2)
    if set(z1) != set(z2):
        raise ValueError("both frames must assign the same frame sites")
    w1 = Window(side, "pinned", pinned_values=z1)
    w2 = Window(side, "pinned", pinned_values=z2)
    if partition is None:
        if side >= 4:
            partition = partition_subboxes(side, boundary="pinned")
        else:
            # tiny windows carry a single cell plus the virtual frame ring
            partition = SubboxPartition(L=side, s=side, boundary="pinned")

    if graph_pair is None:
        g1 = sample_graph(w1, C, gamma, plan)
        g2 = Graph(window=w2, C=C, gamma=gamma, neighbors=g1.neighbors)
    else:
        g1, g2 = graph_pair
    if feelings_pair is None:
        f1 = sample_feelings(g1, symmetric, plan)
        f2 = FeelingMap(graph=g2, symmetric_mode=symmetric, out=f1.out, in_=f1.in_)
    else:
        f1, f2 = feelings_pair

    cfg1 = init_configuration(w1, plan)
    cfg2 = init_configuration(w2, plan)
    if not np.array_equal(cfg1[: w1.n_interior], cfg2[: w2.n_interior]):
        raise InvariantViolation("coupled copies received different interior spins")

    factory = agent_factory if agent_factory is not None else memory_strategy()
    agents1 = [factory(i) for i in range(w1.n_interior)]
    agents2 = [factory(i) for i in range(w2.n_interior)]
    ctx1 = EventContext(w1, g1, f1, cfg1, plan)
    ctx2 = EventContext(w2, g2, f2, cfg2, plan)

    n_total = w1.n_total
    tau = np.full(n_total, np.inf)
    black = np.full(n_total, np.inf)
    cell_black: dict[Cell, float] = {}

    # pinned frames disagree from time zero wherever the assignments differ
    for c in z1:
        if z1[c] != z2[c]:
            i = w1.id_of(c)
            tau[i] = 0.0
            black[i] = 0.0
            cell_black.setdefault(partition.cell_of(c), 0.0)

    lambda0_ids = None
    if lambda0 is not None:
        lambda0_ids = np.array([w1.id_of(c) for c in lambda0], dtype=np.int64)
    snaps: dict[float, tuple[bytes, bytes]] = {}
    pending = sorted(snapshot_times)
    p_ix = 0

    def take_snapshot(t: float) -> None:
        if lambda0_ids is not None:
            snaps[t] = (cfg1[lambda0_ids].tobytes(), cfg2[lambda0_ids].tobytes())

    events = build_event_stream(w1, horizon, plan) if horizon > 0 else None
    times = events.times if events else []
    sites = events.sites if events else []
    arrivals = events.arrival if events else []
    coords = [w1.coord_of(i) for i in range(w1.n_interior)]

    for k in range(len(times)):
        t, s, n = times[k], sites[k], arrivals[k]
        while p_ix < len(pending) and pending[p_ix] < t:
            take_snapshot(pending[p_ix])
            p_ix += 1
        ctx1.bind(t, s, n)
        u1 = agents1[s].decide(ctx1)
        cfg1[s] = u1
        h1 = reward(s, cfg1, g1, f1)
        agents1[s].observe(ctx1, u1, h1)

        ctx2.bind(t, s, n)
        u2 = agents2[s].decide(ctx2)
        cfg2[s] = u2
        h2 = reward(s, cfg2, g2, f2)
        agents2[s].observe(ctx2, u2, h2)

        cell = partition.cell_of(coords[s])
        if u1 != u2 and tau[s] == np.inf:
            tau[s] = t
            # a true disagreement blackens its whole subbox at once
            if t < cell_black.get(cell, np.inf):
                cell_black[cell] = t
            for m in partition.members(cell, w1):
                if black[m] == np.inf:
                    black[m] = t
        if black[s] == np.inf:
            for nb in partition.neighbors(cell, include_virtual=True):
                if cell_black.get(nb, np.inf) <= t:
                    black[s] = t
                    cell_black.setdefault(cell, t)
                    break

    while p_ix < len(pending):
        take_snapshot(pending[p_ix])
        p_ix += 1

    result = CouplingResult(window=w1, partition=partition, graph=g1, tau=tau,
                            black_time=black, cell_black_time=cell_black,
                            snapshots=snaps, n_events=len(times), horizon=horizon)
    result.check_domination()
    return result


def black_front_time(result: CouplingResult, lambda0: list[Coord]) -> float:
    """First time every subbox meeting the target region is black (inf if never)."""
    part = result.partition
    cells = {part.cell_of(c) for c in lambda0}
    t = 0.0
    for cell in cells:
        ct = result.cell_black_time.get(cell, np.inf)
        t = max(t, ct)
    return t


def centered_region(side: int, extent: int = 2) -> list[Coord]:
    """A centered extent x extent block of sites in an L x L window."""
    lo = (side - extent) // 2
    return [(x1, x2) for x1 in range(lo, lo + extent) for x2 in range(lo, lo + extent)]


@dataclass
class TvEstimate:
    estimate: float
    half_width: float
    replicas: int


def iter_coupled_replicas(side: int, zeta1, zeta2, horizon: float, replicas: int,
                          plan: RandomnessPlan, **kwargs) -> Iterator[tuple[int, CouplingResult]]:
    """Independent coupled pairs, one derived plan per replica.

    The replica key does not include the window side, so ladders over
    nested windows reuse the same per-replica seeds.
    """
    for r in range(replicas):
        sub = plan.spawn("replica", r)
        yield r, coupled_run(side, zeta1, zeta2, horizon, sub, **kwargs)


def tv_distance(counter1: Counter, counter2: Counter, n: int) -> float:
    keys = set(counter1) | set(counter2)
    return 0.5 * sum(abs(counter1.get(k, 0) - counter2.get(k, 0)) for k in keys) / n


def tv_estimate(side: int, lambda0: list[Coord], t: float, zeta1, zeta2,
                replicas: int, plan: RandomnessPlan, C: float = 1.0,
                gamma: float = 9.0, symmetric: bool = False,
                bootstrap: int = 400, **coupled_kwargs) -> TvEstimate:
    """Estimate the boundary-pair discrepancy of the target pattern at time t.

    Replicas pair two runs (one per frame) on shared randomness; across
    replicas everything is independent.  Returns half the L1 difference
    of the two empirical pattern distributions plus a bootstrap
    percentile half-width.  Extra keyword arguments go to
    :func:`coupled_run` (e.g. fixed graph or feelings instances).
    """
    if len(lambda0) > 12:
        raise ValueError("target region too large to enumerate patterns")
    if replicas < 100:
        raise ValueError("need at least 100 replicas for a meaningful estimate")
    pats1: list[bytes] = []
    pats2: list[bytes] = []
    for _, result in iter_coupled_replicas(
            side, zeta1, zeta2, t, replicas, plan, C=C, gamma=gamma,
            symmetric=symmetric, lambda0=lambda0, snapshot_times=(t,),
            **coupled_kwargs):
        p1, p2 = result.snapshots[t]
        pats1.append(p1)
        pats2.append(p2)

    estimate = tv_distance(Counter(pats1), Counter(pats2), replicas)

    # paired bootstrap over replica indices
    codes = {p: k for k, p in enumerate(sorted(set(pats1) | set(pats2)))}
    a1 = np.array([codes[p] for p in pats1])
    a2 = np.array([codes[p] for p in pats2])
    n_codes = len(codes)
    rng = np.random.default_rng(plan.spawn("tv-bootstrap").master_seed % (2 ** 32))
    tvs = np.empty(bootstrap)
    for b in range(bootstrap):
        pick = rng.integers(0, replicas, replicas)
        c1 = np.bincount(a1[pick], minlength=n_codes)
        c2 = np.bincount(a2[pick], minlength=n_codes)
        tvs[b] = 0.5 * np.abs(c1 - c2).sum() / replicas
    lo, hi = np.percentile(tvs, [2.5, 97.5])
    return TvEstimate(estimate=estimate, half_width=float((hi - lo) / 2.0),
                      replicas=replicas)
