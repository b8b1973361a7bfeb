"""Random graph and feelings sampling on a lattice window.

Nearest-neighbour edges are always present; a pair at distance d > 1 is
linked independently with probability min(1, C / d**gamma).  Each pair's
inclusion draw is keyed by its canonical coordinates, so the sampled
graph is a pure function of (window, C, gamma, master seed) and is
shared exactly between runs and coupled copies using the same plan.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .geometry import Coord, Window
from .randomness import RandomnessPlan

DEFAULT_C = 1.0
DEFAULT_GAMMA = 9.0


def edge_probability(x: Coord, y: Coord, C: float = DEFAULT_C,
                     gamma: float = DEFAULT_GAMMA, window: Window | None = None) -> float:
    """Inclusion probability of the pair {x, y}.

    Distance 1 pairs are linked surely; farther pairs follow the
    algebraic decay law.  Distance uses the window metric when a window
    is given (torus wraparound), plain L1 otherwise.
    """
    if x == y:
        raise ValueError("edge_probability needs two distinct sites")
    if window is not None:
        d = window.distance(x, y)
    else:
        d = abs(x[0] - y[0]) + abs(x[1] - y[1])
    if d == 1:
        return 1.0
    return min(1.0, C / float(d) ** gamma)


@dataclass
class Graph:
    """Sampled adjacency on a window.

    ``neighbors[i]`` is the sorted list of flat site ids linked to i.
    Symmetric by construction; nearest neighbours always included.
    """

    window: Window
    C: float
    gamma: float
    neighbors: list[list[int]]
    _rho: np.ndarray | None = field(default=None, repr=False, compare=False)

    def degree(self, site_id: int) -> int:
        return len(self.neighbors[site_id])

    def n_edges(self) -> int:
        return sum(len(n) for n in self.neighbors) // 2

    def rho_all(self) -> np.ndarray:
        """Distance of the longest edge at each interior site (>= 1)."""
        if self._rho is None:
            w = self.window
            out = np.zeros(w.n_interior, dtype=np.int64)
            for i in range(w.n_interior):
                ci = w.coord_of(i)
                out[i] = max(w.distance(ci, w.coord_of(j)) for j in self.neighbors[i])
            self._rho = out
        return self._rho


def rho(graph: Graph, site_id: int) -> int:
    """Distance of the longest edge having the site as endpoint."""
    return int(graph.rho_all()[site_id])


def _canonical_pair(a: Coord, b: Coord) -> tuple[int, int, int, int]:
    if b < a:
        a, b = b, a
    return (a[0], a[1], b[0], b[1])


def _pair_uniform(plan: RandomnessPlan, a: Coord, b: Coord) -> float:
    return plan.uniform("edge", *_canonical_pair(a, b))


def sample_graph(window: Window, C: float = DEFAULT_C, gamma: float = DEFAULT_GAMMA,
                 plan: RandomnessPlan | None = None) -> Graph:
    """Sample the quenched graph on the window.

    Pairs are drawn independently with keyed per-pair randomness, so the
    result does not depend on iteration order.  In pinned mode, pairs of
    two frame sites are skipped: frame sites never act, so such edges
    could never influence anything.
    """
    if plan is None:
        raise ValueError("sample_graph requires a randomness plan")
    if C < 0:
        raise ValueError("C must be nonnegative")
    L = window.side
    n_int = window.n_interior
    coords = [window.coord_of(i) for i in range(window.n_total)]
    adj: list[set[int]] = [set() for _ in range(window.n_total)]

    # nearest neighbours, surely present
    for i in range(n_int):
        x1, x2 = coords[i]
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if window.boundary == "torus":
                j = ((x1 + dx) % L) * L + (x2 + dy) % L
            else:
                c = (x1 + dx, x2 + dy)
                if not window.contains(c):
                    continue
                j = window.id_of(c)
            adj[i].add(j)
            adj[j].add(i)

    if C > 0:
        carr = np.array(coords, dtype=np.int64)
        x1 = carr[:, 0]
        x2 = carr[:, 1]
        for i in range(n_int):
            lo = i + 1
            if lo >= window.n_total:
                break
            d1 = np.abs(x1[lo:] - x1[i])
            d2 = np.abs(x2[lo:] - x2[i])
            if window.boundary == "torus":
                d1 = np.minimum(d1, L - d1)
                d2 = np.minimum(d2, L - d2)
            d = d1 + d2
            cand = np.nonzero(d >= 2)[0]
            if len(cand) == 0:
                continue
            p = np.minimum(1.0, C / d[cand].astype(np.float64) ** gamma)
            j_ids = cand + lo
            # canonical coordinate order for the pair key
            a = carr[np.full(len(j_ids), i)]
            b = carr[j_ids]
            swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
            keys = np.concatenate([np.where(swap[:, None], b, a),
                                   np.where(swap[:, None], a, b)], axis=1)
            u = plan.uniforms("edge", keys)
            for j in j_ids[u < p]:
                adj[i].add(int(j))
                adj[int(j)].add(i)

    neighbors = [sorted(s) for s in adj]
    return Graph(window=window, C=C, gamma=gamma, neighbors=neighbors)


@dataclass
class FeelingMap:
    """Signed feelings j(x, y) on ordered pairs of linked sites.

    Stored aligned with ``graph.neighbors``: ``out[i][k]`` is j(i, n_k)
    and ``in_[i][k]`` is j(n_k, i) for the k-th neighbour of i.  In
    symmetric mode both directions carry one shared variate per edge.
    """

    graph: Graph
    symmetric_mode: bool
    out: list[list[int]]
    in_: list[list[int]]

    def value(self, x: int, y: int) -> int:
        """j(x, y); zero when {x, y} is not an edge."""
        nbrs = self.graph.neighbors[x]
        k = bisect_left(nbrs, y)
        if k == len(nbrs) or nbrs[k] != y:
            return 0
        return self.out[x][k]


def sample_feelings(graph: Graph, symmetric_mode: bool,
                    plan: RandomnessPlan) -> FeelingMap:
    """Fair +-1 feelings, one per edge direction (or per edge if symmetric)."""
    w = graph.window
    coords = [w.coord_of(i) for i in range(w.n_total)]
    out = [[0] * len(graph.neighbors[i]) for i in range(w.n_total)]
    in_ = [[0] * len(graph.neighbors[i]) for i in range(w.n_total)]
    for i in range(w.n_total):
        for k, j in enumerate(graph.neighbors[i]):
            if j < i:
                continue
            a, b = coords[i], coords[j]
            if symmetric_mode:
                v = plan.coin("feel_sym", *_canonical_pair(a, b))
                vij, vji = v, v
            else:
                vij = plan.coin("feel_asym", a[0], a[1], b[0], b[1])
                vji = plan.coin("feel_asym", b[0], b[1], a[0], a[1])
            kj = bisect_left(graph.neighbors[j], i)
            out[i][k] = vij
            in_[i][k] = vji
            out[j][kj] = vji
            in_[j][kj] = vij
    return FeelingMap(graph=graph, symmetric_mode=symmetric_mode, out=out, in_=in_)


@dataclass
class DegreeStats:
    """Empirical degree and longest-edge statistics over interior sites."""

    n_sites: int
    mean_degree: float
    rho_moments: tuple[float, float, float, float, float]
    max_rho: int


def degree_stats(graph: Graph) -> DegreeStats:
    w = graph.window
    degs = [len(graph.neighbors[i]) for i in range(w.n_interior)]
    r = graph.rho_all().astype(np.float64)
    moments = tuple(float(np.mean(r ** k)) for k in range(1, 6))
    return DegreeStats(
        n_sites=w.n_interior,
        mean_degree=float(np.mean(degs)),
        rho_moments=moments,  # type: ignore[arg-type]
        max_rho=int(r.max()),
    )


def empirical_edge_frequency(C: float, gamma: float, distance: int,
                             n_pairs: int, plan: RandomnessPlan) -> float:
    """Fraction of n_pairs distinct same-distance pairs that get linked.

    Uses the same keyed per-pair draw as :func:`sample_graph`, over a
    synthetic family of disjoint pairs at the requested distance.
    """
    if distance < 2:
        raise ValueError("frequency check targets long-range distances")
    stride = 2 * distance + 2  # keeps the synthetic pairs disjoint
    ks = np.arange(n_pairs, dtype=np.int64)
    a1 = (ks % 4096) * stride
    a2 = (ks // 4096) * stride
    keys = np.stack([a1, a2, a1 + distance, a2], axis=1)
    u = plan.uniforms("edge", keys)
    p = min(1.0, C / float(distance) ** gamma)
    return float(np.mean(u < p))


# --- line-oriented text format -------------------------------------------
#
# header:  L=<int> boundary=<mode> C=<float> gamma=<float> seed=<int>
# edges:   x1 x2 y1 y2 j_xy j_yx        (canonical pair order, sorted)
# spins:   optional section opened by a line "spins", then "x1 x2 s"


def export_graph(graph: Graph, feelings: FeelingMap, dest,
                 seed: int | None = None, config: np.ndarray | None = None) -> None:
    """Write graph + feelings (and optionally spins) in the text format."""
    own = isinstance(dest, (str,)) or hasattr(dest, "__fspath__")
    stream = open(dest, "w") if own else dest
    try:
        w = graph.window
        stream.write(
            f"L={w.side} boundary={w.boundary} C={graph.C!r} "
            f"gamma={graph.gamma!r} seed={seed if seed is not None else -1}\n"
        )
        lines = []
        for i in range(w.n_total):
            ci = w.coord_of(i)
            for k, j in enumerate(graph.neighbors[i]):
                if j < i:
                    continue
                cj = w.coord_of(j)
                a, b = (ci, cj) if ci <= cj else (cj, ci)
                jab = feelings.out[i][k] if a == ci else feelings.in_[i][k]
                jba = feelings.in_[i][k] if a == ci else feelings.out[i][k]
                lines.append((a, b, jab, jba))
        lines.sort()
        for a, b, jab, jba in lines:
            stream.write(f"{a[0]} {a[1]} {b[0]} {b[1]} {jab} {jba}\n")
        if config is not None:
            stream.write("spins\n")
            for i in range(w.n_total):
                x1, x2 = w.coord_of(i)
                stream.write(f"{x1} {x2} {int(config[i])}\n")
    finally:
        if own:
            stream.close()


def import_graph(source) -> tuple[Graph, FeelingMap, np.ndarray | None]:
    """Read the text format back into (graph, feelings, spins-or-None)."""
    own = isinstance(source, (str,)) or hasattr(source, "__fspath__")
    stream = open(source) if own else source
    try:
        header = stream.readline().strip()
        fields = dict(part.split("=", 1) for part in header.split())
        L = int(fields["L"])
        boundary = fields["boundary"]
        C = float(fields["C"])
        gamma = float(fields["gamma"])
        edge_rows: list[tuple[Coord, Coord, int, int]] = []
        spin_rows: list[tuple[Coord, int]] = []
        in_spins = False
        for raw in stream:
            line = raw.strip()
            if not line:
                continue
            if line == "spins":
                in_spins = True
                continue
            parts = line.split()
            if in_spins:
                spin_rows.append(((int(parts[0]), int(parts[1])), int(parts[2])))
            else:
                edge_rows.append((
                    (int(parts[0]), int(parts[1])),
                    (int(parts[2]), int(parts[3])),
                    int(parts[4]), int(parts[5]),
                ))
    finally:
        if own:
            stream.close()

    pinned = None
    if boundary == "pinned":
        if not spin_rows:
            raise ValueError("pinned graph import needs a spins section")
        # recover the frame assignment from the spin section
        pinned = {c: s for c, s in spin_rows if not (0 <= c[0] < L and 0 <= c[1] < L)}
    window = Window(L, boundary, pinned_values=pinned)

    adj: list[set[int]] = [set() for _ in range(window.n_total)]
    jmap: dict[tuple[int, int], int] = {}
    for a, b, jab, jba in edge_rows:
        ia, ib = window.id_of(a), window.id_of(b)
        adj[ia].add(ib)
        adj[ib].add(ia)
        jmap[(ia, ib)] = jab
        jmap[(ib, ia)] = jba
    neighbors = [sorted(s) for s in adj]
    graph = Graph(window=window, C=C, gamma=gamma, neighbors=neighbors)

    # nearest-neighbour completeness is part of the format's contract
    for i in range(window.n_interior):
        ci = window.coord_of(i)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if window.boundary == "torus":
                j = ((ci[0] + dx) % L) * L + (ci[1] + dy) % L
            else:
                c = (ci[0] + dx, ci[1] + dy)
                if not window.contains(c):
                    continue
                j = window.id_of(c)
            if j not in adj[i]:
                raise InvariantViolation(f"imported graph misses nearest-neighbour edge at {ci}")

    out = [[jmap[(i, j)] for j in neighbors[i]] for i in range(window.n_total)]
    in_ = [[jmap[(j, i)] for j in neighbors[i]] for i in range(window.n_total)]
    symmetric = all(jmap[(i, j)] == jmap[(j, i)] for (i, j) in jmap)
    feelings = FeelingMap(graph=graph, symmetric_mode=symmetric, out=out, in_=in_)

    config = None
    if spin_rows:
        config = np.zeros(window.n_total, dtype=np.int8)
        for c, s in spin_rows:
            config[window.id_of(c)] = s
    return graph, feelings, config
