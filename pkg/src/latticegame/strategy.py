"""Per-agent decision rules.

``MemoryAgent`` implements a loss-eliminating lookup strategy.  The
agent keeps a record set of (pattern, decision, reward) triples, where a
pattern is the spin assignment on an L1 ball around the agent at the
moment just before it acts:

* first arrival: play a fair coin, record the radius-1 pattern with the
  decision and the obtained reward;
* known pattern: replay the stored decision if it did not lose, play its
  opposite if it did (a stored reward of zero counts as not losing); if
  the move still loses, record the pattern on the next larger ball;
* unknown pattern: repeat the previous decision and record the outcome.

At most one record can exist per (radius, pattern); the observation
radius is the radius of the last record added and never shrinks.

``baseline_strategy`` builds stateless comparison rules: constants, a
fair coin, and myopic best response.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

from .errors import InvariantViolation

PatternKey = tuple[int, bytes]


@dataclass(frozen=True)
class MemoryRecord:
    """One remembered (pattern, decision, reward) triple."""

    radius: int
    cells: bytes
    decision: int
    reward: int

    @property
    def key(self) -> PatternKey:
        return (self.radius, self.cells)

    def pattern_string(self) -> str:
        return "".join("+" if b == 1 else "-" for b in self.cells)


class ObserveInfo(NamedTuple):
    new_pattern: bool
    record_added: bool
    radius: int


class AgentMemory:
    """Record set plus bookkeeping for one agent.

    ``last_activity_time`` tracks the latest event at which the agent saw
    a new pattern or lost; it is the finite-horizon estimate of the time
    after which the agent is settled.
    """

    __slots__ = ("site", "records", "radius", "last_decision",
                 "first_move_done", "losses", "new_patterns",
                 "last_activity_time")

    def __init__(self, site: int) -> None:
        self.site = site
        self.records: dict[PatternKey, MemoryRecord] = {}
        self.radius = 0
        self.last_decision = 0
        self.first_move_done = False
        self.losses = 0
        self.new_patterns = 0
        self.last_activity_time = 0.0

    def _add(self, record: MemoryRecord) -> None:
        if record.key in self.records:
            raise InvariantViolation(
                f"duplicate memory record for site {self.site} at radius {record.radius}")
        self.records[record.key] = record


def decide(memory: AgentMemory, extract: Callable[[int], bytes],
           coin, coin_on_miss: bool = False) -> int:
    """Pick the next decision from memory, the current pattern, and a coin.

    ``coin`` is a fair +-1 variate, passed either as the value or as a
    zero-argument callable (evaluated only on branches that need it).
    Pure: no state is modified here.
    """
    if not memory.first_move_done:
        return coin() if callable(coin) else coin
    record = memory.records.get((memory.radius, extract(memory.radius)))
    if record is None:
        if coin_on_miss:
            return coin() if callable(coin) else coin
        return memory.last_decision
    if record.reward < 0:
        return -record.decision
    # stored reward 0 counts as not losing: replay the stored decision
    return record.decision


def observe_outcome(memory: AgentMemory, extract: Callable[[int], bytes],
                    decision: int, reward: int, time: float) -> ObserveInfo:
    """Feed the outcome of a decision back into memory.

    Adds a record on the first move, on an unknown pattern, and on a
    known pattern that lost (at the next larger radius).  All patterns
    are extracted from the pre-decision configuration.
    """
    added = False
    if not memory.first_move_done:
        memory._add(MemoryRecord(1, extract(1), decision, reward))
        memory.radius = 1
        memory.first_move_done = True
        new_pattern = True
        added = True
    else:
        key = (memory.radius, extract(memory.radius))
        if key in memory.records:
            new_pattern = False
            if reward < 0:
                grown = memory.radius + 1
                memory._add(MemoryRecord(grown, extract(grown), decision, reward))
                memory.radius = grown
                added = True
        else:
            memory._add(MemoryRecord(memory.radius, key[1], decision, reward))
            new_pattern = True
            added = True
    memory.last_decision = decision
    if reward < 0:
        memory.losses += 1
    if new_pattern:
        memory.new_patterns += 1
    if added or reward < 0:
        memory.last_activity_time = time
    return ObserveInfo(new_pattern, added, memory.radius)


def empirical_T(memory: AgentMemory) -> float:
    """Last time the agent saw a new pattern or lost (0 if never active)."""
    return memory.last_activity_time


def dump_memory(memory: AgentMemory, stream) -> None:
    """Diagnostic dump: one line per record, in insertion order."""
    for record in memory.records.values():
        stream.write(
            f"{record.radius} | {record.pattern_string()} | "
            f"{record.decision:+d} | {record.reward:+d}\n")


class MemoryAgent:
    """Run-loop adapter owning one AgentMemory."""

    kind = "memory"

    def __init__(self, site: int, coin_on_miss: bool = False) -> None:
        self.memory = AgentMemory(site)
        self.coin_on_miss = coin_on_miss

    def decide(self, ctx) -> int:
        return decide(self.memory, ctx.extract, ctx.coin, self.coin_on_miss)

    def observe(self, ctx, decision: int, reward: int) -> ObserveInfo:
        return observe_outcome(self.memory, ctx.extract, decision, reward, ctx.time)


_NO_INFO = ObserveInfo(False, False, 0)


class ConstantAgent:
    kind = "constant"

    def __init__(self, value: int) -> None:
        if value not in (-1, 1):
            raise ValueError("constant strategy needs -1 or +1")
        self.value = value

    def decide(self, ctx) -> int:
        return self.value

    def observe(self, ctx, decision: int, reward: int) -> ObserveInfo:
        return _NO_INFO


class CoinAgent:
    kind = "coin"

    def decide(self, ctx) -> int:
        return ctx.coin()

    def observe(self, ctx, decision: int, reward: int) -> ObserveInfo:
        return _NO_INFO


class MyopicAgent:
    """Best response to the current neighbourhood.

    Plays the sign of the incoming alignment sum; keeps the current spin
    on a tie, so it never increases the energy.
    """

    kind = "myopic"

    def decide(self, ctx) -> int:
        s = ctx.raw_field()
        if s > 0:
            return 1
        if s < 0:
            return -1
        return ctx.current_spin

    def observe(self, ctx, decision: int, reward: int) -> ObserveInfo:
        return _NO_INFO


def baseline_strategy(kind: str) -> Callable[[int], object]:
    """Factory of per-site baseline agents by rule name."""
    if kind in ("constant(+1)", "constant+1"):
        return lambda site: ConstantAgent(1)
    if kind in ("constant(-1)", "constant-1"):
        return lambda site: ConstantAgent(-1)
    if kind == "coin":
        return lambda site: CoinAgent()
    if kind in ("myopic-best-response", "myopic"):
        return lambda site: MyopicAgent()
    raise ValueError(f"unknown baseline strategy {kind!r}")


def memory_strategy(coin_on_miss: bool = False) -> Callable[[int], MemoryAgent]:
    """Factory of per-site memory agents."""
    return lambda site: MemoryAgent(site, coin_on_miss=coin_on_miss)
