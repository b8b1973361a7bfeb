"""Event-driven simulator for memory-strategy spin games on long-range
random lattice graphs, with coupled-copy mixing experiments and
fixation/energy observables."""

__version__ = "0.1.0"

from .errors import ConfigError, InvariantViolation
from .geometry import Window, ball_offsets, frame_assignment
from .graph import (DegreeStats, FeelingMap, Graph, degree_stats,
                    edge_probability, export_graph, import_graph, rho,
                    sample_feelings, sample_graph)
from .randomness import RandomnessPlan
from .strategy import (AgentMemory, MemoryAgent, MemoryRecord,
                       baseline_strategy, decide, dump_memory, empirical_T,
                       memory_strategy, observe_outcome)
from .dynamics import (EventStream, SimState, TrajectoryLog,
                       build_event_stream, init_configuration, reward, run,
                       step)
from .observables import (EnergyReport, FixationReport, classify_events,
                          energy, energy_decomposition, local_field,
                          markov_bound_check, nash_check)
from .mixing import (CouplingResult, SubboxPartition, black_front_time,
                     centered_region, coupled_run, find_linked_nonneighbor,
                     partition_subboxes, rate_function, tv_estimate)

__all__ = [name for name in dir() if not name.startswith("_")]
