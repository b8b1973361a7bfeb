"""Finite lattice windows: coordinates, distance, L1 balls, boundary frames.

Sites are integer coordinate pairs ``(x1, x2)``.  A window restricts the
plane to an L x L square with one of three boundary treatments:

* ``torus``  -- opposite sides identified, distance wraps around;
* ``free``   -- nothing outside the square;
* ``pinned`` -- a one-site-wide frame of frozen spins surrounds the
  square; frame sites never update but are visible to their neighbours.

Interior sites get flat ids ``x1 * L + x2`` in ``[0, L**2)``; frame sites
(pinned mode only) get ids after the interior block, in lexicographic
coordinate order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

BOUNDARY_MODES = ("torus", "free", "pinned")

Coord = tuple[int, int]


@lru_cache(maxsize=None)
def ball_offsets(radius: int) -> tuple[Coord, ...]:
    """Relative offsets of the L1 ball of the given radius, center included.

    Lexicographic order; this order is the canonical cell order of
    extracted patterns.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return tuple(
        (dx, dy)
        for dx in range(-radius, radius + 1)
        for dy in range(-radius, radius + 1)
        if abs(dx) + abs(dy) <= radius
    )


@dataclass
class Window:
    """An L x L lattice window with a boundary mode.

    ``pinned_values`` must be present exactly in pinned mode and assign a
    spin in {-1, +1} to every frame site.
    """

    side: int
    boundary: str = "torus"
    pinned_values: Mapping[Coord, int] | None = None
    _ball_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _frame_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.side < 2:
            raise ValueError("window side must be at least 2")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.boundary == "pinned":
            if self.pinned_values is None:
                raise ValueError("pinned mode requires pinned_values")
            missing = [c for c in self.frame_coords() if c not in self.pinned_values]
            if missing:
                raise ValueError(f"pinned_values misses frame sites, e.g. {missing[0]}")
            bad = [c for c, v in self.pinned_values.items()
                   if c not in set(self.frame_coords()) or v not in (-1, 1)]
            if bad:
                raise ValueError(f"pinned_values has invalid entries, e.g. {bad[0]}")
        elif self.pinned_values is not None:
            raise ValueError("pinned_values only allowed in pinned mode")
        for k, c in enumerate(self.frame_coords()):
            self._frame_index[c] = self.n_interior + k

    @property
    def n_interior(self) -> int:
        return self.side * self.side

    def frame_coords(self) -> list[Coord]:
        if self.boundary != "pinned":
            return []
        L = self.side
        return sorted(
            (x1, x2)
            for x1 in range(-1, L + 1)
            for x2 in range(-1, L + 1)
            if not (0 <= x1 < L and 0 <= x2 < L)
        )

    @property
    def n_total(self) -> int:
        return self.n_interior + len(self._frame_index)

    def is_interior(self, site_id: int) -> bool:
        return site_id < self.n_interior

    def id_of(self, coord: Coord) -> int:
        x1, x2 = coord
        if 0 <= x1 < self.side and 0 <= x2 < self.side:
            return x1 * self.side + x2
        return self._frame_index[coord]

    def coord_of(self, site_id: int) -> Coord:
        if site_id < self.n_interior:
            return divmod(site_id, self.side)
        return self.frame_coords()[site_id - self.n_interior]

    def contains(self, coord: Coord) -> bool:
        x1, x2 = coord
        if 0 <= x1 < self.side and 0 <= x2 < self.side:
            return True
        return coord in self._frame_index

    def distance(self, a: Coord, b: Coord) -> int:
        """L1 distance; wraps around in torus mode."""
        d1 = abs(a[0] - b[0])
        d2 = abs(a[1] - b[1])
        if self.boundary == "torus":
            d1 = min(d1, self.side - d1)
            d2 = min(d2, self.side - d2)
        return d1 + d2

    def ball(self, site_id: int, radius: int) -> tuple[np.ndarray, int]:
        """Flat ids of the L1 ball around a site, plus the center position.

        Torus balls wrap; free and pinned balls are clipped to existing
        sites.  The id array follows the canonical offset order, so the
        byte pattern of the spins along it is a stable pattern key for
        the site.
        """
        cached = self._ball_cache.get((site_id, radius))
        if cached is not None:
            return cached
        x1, x2 = self.coord_of(site_id)
        L = self.side
        ids = []
        center_pos = -1
        for dx, dy in ball_offsets(radius):
            if self.boundary == "torus":
                ids.append(((x1 + dx) % L) * L + (x2 + dy) % L)
            else:
                c = (x1 + dx, x2 + dy)
                if not self.contains(c):
                    continue
                ids.append(self.id_of(c))
            if dx == 0 and dy == 0:
                center_pos = len(ids) - 1
        result = (np.array(ids, dtype=np.int64), center_pos)
        self._ball_cache[(site_id, radius)] = result
        return result


def frame_assignment(side: int, value: int) -> dict[Coord, int]:
    """Constant spin assignment for the frame of an L x L pinned window."""
    if value not in (-1, 1):
        raise ValueError("frame spin must be -1 or +1")
    L = side
    return {
        (x1, x2): value
        for x1 in range(-1, L + 1)
        for x2 in range(-1, L + 1)
        if not (0 <= x1 < L and 0 <= x2 < L)
    }
