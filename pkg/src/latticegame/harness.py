"""Experiment orchestration: config parsing, the five experiment kinds,
manifest and CSV emission."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
import time as _time
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .dynamics import build_event_stream, init_configuration, run
from .errors import ConfigError, InvariantViolation
from .geometry import Window
from .graph import degree_stats, export_graph, sample_feelings, sample_graph
from .mixing import (black_front_time, centered_region, find_linked_nonneighbor,
                     iter_coupled_replicas, partition_subboxes, tv_distance)
from .observables import (classify_events, energy_decomposition,
                          markov_bound_check, nash_check, write_bounds_csv,
                          write_energy_csv, write_sites_csv)
from .oracles import run_oracle_checks
from .randomness import RandomnessPlan
from .strategy import dump_memory, memory_strategy

KINDS = ("graph-stats", "simulate", "fixation", "mixing", "nash-check", "oracle-check")

_REQUIRED = ("kind", "L", "horizon", "seed")

_DEFAULTS = {
    "boundary": "torus",
    "C": 1.0,
    "gamma": 9.0,
    "symmetric": False,
    "coin_on_miss": False,
    "replicas": 1,
    "thresholds": (10.0, 20.0, 50.0),
    "ladder": (8, 16, 32),
}


@dataclass
class ExperimentConfig:
    kind: str
    L: int
    horizon: float
    seed: int
    boundary: str = "torus"
    C: float = 1.0
    gamma: float = 9.0
    symmetric: bool = False
    coin_on_miss: bool = False
    replicas: int = 1
    thresholds: tuple[float, ...] = (10.0, 20.0, 50.0)
    ladder: tuple[int, ...] = (8, 16, 32)
    out_dir: str = "out"
    quiet: bool = False


def _parse_bool(raw: str, line_no: int, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"line {line_no}: key '{key}' needs a boolean, got {raw!r}")


def _parse_list(raw: str, line_no: int, key: str, conv):
    parts = [p for p in raw.replace("[", " ").replace("]", " ").replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"line {line_no}: key '{key}' needs a nonempty list")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {line_no}: key '{key}' has a malformed entry") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse a key/value config document.

    One ``key = value`` (or ``key: value``) assignment per line; ``#``
    starts a comment.  Unknown keys, duplicates, missing required keys,
    and out-of-range values are rejected with a line or field diagnostic.
    """
    seen: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split(sep, 1))
        if not key or not value:
            raise ConfigError(f"line {line_no}: empty key or value")
        if key in seen:
            raise ConfigError(f"line {line_no}: duplicate key '{key}'")
        try:
            if key == "kind":
                if value not in KINDS:
                    raise ConfigError(
                        f"line {line_no}: unknown kind {value!r} (one of {', '.join(KINDS)})")
                seen[key] = value
            elif key == "L":
                seen[key] = int(value)
            elif key == "horizon":
                seen[key] = float(value)
            elif key == "seed":
                seen[key] = int(value)
            elif key == "boundary":
                if value not in ("torus", "free"):
                    raise ConfigError(
                        f"line {line_no}: boundary must be torus or free, got {value!r}")
                seen[key] = value
            elif key == "C":
                seen[key] = float(value)
            elif key == "gamma":
                seen[key] = float(value)
            elif key == "symmetric":
                seen[key] = _parse_bool(value, line_no, key)
            elif key == "coin_on_miss":
                seen[key] = _parse_bool(value, line_no, key)
            elif key == "replicas":
                seen[key] = int(value)
            elif key == "thresholds":
                seen[key] = _parse_list(value, line_no, key, float)
            elif key == "ladder":
                seen[key] = _parse_list(value, line_no, key, int)
            else:
                raise ConfigError(f"line {line_no}: unknown key '{key}'")
        except ValueError:
            raise ConfigError(f"line {line_no}: malformed value for key '{key}'") from None

    for key in _REQUIRED:
        if key not in seen:
            raise ConfigError(f"missing required key '{key}'")
    merged = dict(_DEFAULTS)
    merged.update(seen)

    cfg = ExperimentConfig(**merged)  # type: ignore[arg-type]
    if cfg.L < 2:
        raise ConfigError("field 'L': window side must be at least 2")
    if cfg.horizon <= 0:
        raise ConfigError("field 'horizon': must be positive")
    if cfg.C < 0:
        raise ConfigError("field 'C': must be nonnegative")
    if cfg.gamma < 3:
        raise ConfigError("field 'gamma': must be at least 3 (long-range sums diverge below)")
    if cfg.replicas < 1:
        raise ConfigError("field 'replicas': must be at least 1")
    if any(c <= 0 for c in cfg.thresholds):
        raise ConfigError("field 'thresholds': entries must be positive")
    if any(l < 4 for l in cfg.ladder):
        raise ConfigError("field 'ladder': entries must be at least 4")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _say(cfg: ExperimentConfig, msg: str) -> None:
    if not cfg.quiet:
        print(msg, flush=True)


def _fmt(value: float) -> str:
    return repr(float(value))


class _Manifest:
    def __init__(self, cfg: ExperimentConfig) -> None:
        self.data = {
            "config": asdict(cfg),
            "version": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "started": _time.strftime("%Y-%m-%dT%H:%M:%S"),
            "replica_seeds": [],
            "realized": {},
            "findings": [],
        }

    def write(self, out_dir: str) -> None:
        self.data["finished"] = _time.strftime("%Y-%m-%dT%H:%M:%S")
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute the configured experiment; returns the process exit code."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = _Manifest(cfg)
    runner = {
        "graph-stats": _run_graph_stats,
        "simulate": _run_simulate,
        "fixation": _run_fixation,
        "mixing": _run_mixing,
        "nash-check": _run_nash,
        "oracle-check": _run_oracle_check,
    }[cfg.kind]
    try:
        code = runner(cfg, manifest)
    except InvariantViolation as exc:
        manifest.data["findings"].append({"invariant_violation": str(exc)})
        manifest.write(cfg.out_dir)
        raise
    manifest.write(cfg.out_dir)
    return code


def _replica_plan(cfg: ExperimentConfig, manifest: _Manifest, r: int) -> RandomnessPlan:
    plan = RandomnessPlan(cfg.seed).spawn("replica", r)
    manifest.data["replica_seeds"].append({"replica": r, "master_seed": plan.master_seed})
    return plan


def _run_graph_stats(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    window = Window(cfg.L, cfg.boundary)
    path = os.path.join(cfg.out_dir, "stats.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "mean_degree", "rho_m1", "rho_m2",
                         "rho_m3", "rho_m4", "rho_m5", "max_rho", "edges"])
        for r in range(cfg.replicas):
            plan = _replica_plan(cfg, manifest, r)
            graph = sample_graph(window, cfg.C, cfg.gamma, plan)
            stats = degree_stats(graph)
            writer.writerow([r, _fmt(stats.mean_degree)]
                            + [_fmt(m) for m in stats.rho_moments]
                            + [stats.max_rho, graph.n_edges()])
    _say(cfg, f"wrote {path}")
    return 0


def _run_simulate(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    window = Window(cfg.L, cfg.boundary)
    for r in range(cfg.replicas):
        plan = _replica_plan(cfg, manifest, r)
        rep_dir = os.path.join(cfg.out_dir, f"rep{r:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        graph = sample_graph(window, cfg.C, cfg.gamma, plan)
        feelings = sample_feelings(graph, cfg.symmetric, plan)
        init = init_configuration(window, plan)
        log, state = run(graph, feelings, memory_strategy(cfg.coin_on_miss),
                         cfg.horizon, plan, init_config=init)
        log.write_csv(window, os.path.join(rep_dir, "trajectory.csv"))
        export_graph(graph, feelings, os.path.join(rep_dir, "final_state.txt"),
                     seed=plan.master_seed, config=state.config)
        with open(os.path.join(rep_dir, "memories.txt"), "w") as fh:
            for mem in state.memories():
                x1, x2 = window.coord_of(mem.site)
                fh.write(f"site {x1} {x2}\n")
                dump_memory(mem, fh)
        report = classify_events(log, state, cfg.horizon)
        energy_report = energy_decomposition(log, report, graph, feelings, init)
        write_energy_csv(energy_report, os.path.join(rep_dir, "energy.csv"))
        write_sites_csv(report, window, os.path.join(rep_dir, "sites.csv"))
        _say(cfg, f"replica {r}: {len(log)} events, "
                  f"final energy density {energy_report.H[-1] / window.n_interior:+.4f}")
    return 0


def _run_fixation(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    window = Window(cfg.L, cfg.boundary)
    reports = []
    stats = []
    for r in range(cfg.replicas):
        plan = _replica_plan(cfg, manifest, r)
        rep_dir = os.path.join(cfg.out_dir, f"rep{r:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        graph = sample_graph(window, cfg.C, cfg.gamma, plan)
        feelings = sample_feelings(graph, cfg.symmetric, plan)
        init = init_configuration(window, plan)
        log, state = run(graph, feelings, memory_strategy(cfg.coin_on_miss),
                         cfg.horizon, plan, init_config=init)
        report = classify_events(log, state, cfg.horizon)
        energy_report = energy_decomposition(log, report, graph, feelings, init)
        write_energy_csv(energy_report, os.path.join(rep_dir, "energy.csv"))
        write_sites_csv(report, window, os.path.join(rep_dir, "sites.csv"))
        reports.append(report)
        stats.append(degree_stats(graph))
        radius_excess = [
            int(i) for i in range(window.n_interior)
            if state.agents[i].memory.radius > report.rho[i] + 1
        ]
        if radius_excess:
            manifest.data["findings"].append(
                {"replica": r, "radius_exceeds_rho_plus_1": radius_excess})
        if energy_report.n3_non_unit:
            manifest.data["findings"].append(
                {"replica": r,
                 "late_flips_without_unit_energy_drop": len(energy_report.n3_non_unit)})
        unstab = int(report.unstabilized.sum())
        if unstab:
            manifest.data["findings"].append({"replica": r, "unstabilized_sites": unstab})
        _say(cfg, f"replica {r}: {len(log)} events, "
                  f"max settling time {report.empirical_T.max():.2f}")
    rows = markov_bound_check(reports, stats, list(cfg.thresholds))
    write_bounds_csv(rows, os.path.join(cfg.out_dir, "bounds.csv"))
    manifest.data["realized"]["markov"] = [
        {"C": row.threshold, "fraction": row.empirical_fraction,
         "bound": row.bound, "passed": row.passed} for row in rows]
    return 0


def _run_mixing(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    times = sorted({cfg.horizon, cfg.horizon / 2.0, cfg.horizon / 4.0, 0.0})
    tv_path = os.path.join(cfg.out_dir, "tv.csv")
    front_path = os.path.join(cfg.out_dir, "front.csv")
    viol_path = os.path.join(cfg.out_dir, "violations.csv")
    base = RandomnessPlan(cfg.seed)
    manifest.data["replica_seeds"] = [
        {"replica": r, "master_seed": base.spawn("replica", r).master_seed}
        for r in range(cfg.replicas)]
    with open(tv_path, "w", newline="") as tv_fh, \
            open(front_path, "w", newline="") as front_fh, \
            open(viol_path, "w", newline="") as viol_fh:
        tv_writer = csv.writer(tv_fh)
        tv_writer.writerow(["L", "t", "pair_id", "estimate", "half_width", "replicas"])
        front_writer = csv.writer(front_fh)
        front_writer.writerow(["L", "replica", "front_time"])
        viol_writer = csv.writer(viol_fh)
        viol_writer.writerow(["L", "seed", "cell_a", "cell_b", "witness_edge"])
        for L in cfg.ladder:
            partition = partition_subboxes(L, boundary="pinned")
            manifest.data["realized"][f"partition_L{L}"] = {
                "s": partition.s, "rho_effective": partition.rho_effective}
            lam0 = centered_region(L, 2)
            pairs = [("opposite", 1, -1), ("identical", 1, 1)]
            for pair_id, z1, z2 in pairs:
                pats1: dict[float, list[bytes]] = {t: [] for t in times}
                pats2: dict[float, list[bytes]] = {t: [] for t in times}
                for r, result in iter_coupled_replicas(
                        L, z1, z2, cfg.horizon, cfg.replicas, base,
                        C=cfg.C, gamma=cfg.gamma, symmetric=cfg.symmetric,
                        partition=partition, lambda0=lam0,
                        snapshot_times=tuple(times)):
                    for t in times:
                        p1, p2 = result.snapshots[t]
                        pats1[t].append(p1)
                        pats2[t].append(p2)
                    if pair_id == "opposite":
                        ft = black_front_time(result, lam0)
                        front_writer.writerow(
                            [L, r, "NA" if math.isinf(ft) else _fmt(ft)])
                        seed_r = base.spawn("replica", r).master_seed
                        for hit in find_linked_nonneighbor(result.graph, partition):
                            viol_writer.writerow(
                                [L, seed_r, f"{hit.cell_a}",
                                 f"{hit.cell_b}", f"{hit.witness}"])
                rng = np.random.default_rng(base.spawn("tv-bootstrap", L).master_seed % 2 ** 32)
                for t in times:
                    est = tv_distance(Counter(pats1[t]), Counter(pats2[t]), cfg.replicas)
                    codes = {p: k for k, p in enumerate(sorted(set(pats1[t]) | set(pats2[t])))}
                    a1 = np.array([codes[p] for p in pats1[t]])
                    a2 = np.array([codes[p] for p in pats2[t]])
                    tvs = np.empty(200)
                    for b in range(200):
                        pick = rng.integers(0, cfg.replicas, cfg.replicas)
                        c1 = np.bincount(a1[pick], minlength=len(codes))
                        c2 = np.bincount(a2[pick], minlength=len(codes))
                        tvs[b] = 0.5 * np.abs(c1 - c2).sum() / cfg.replicas
                    lo, hi = np.percentile(tvs, [2.5, 97.5])
                    tv_writer.writerow([L, _fmt(t), pair_id, _fmt(est),
                                        _fmt((hi - lo) / 2), cfg.replicas])
                _say(cfg, f"L={L} pair={pair_id}: done ({cfg.replicas} replicas)")
    return 0


def _run_nash(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    window = Window(cfg.L, cfg.boundary)
    path = os.path.join(cfg.out_dir, "nash.csv")
    any_improved = False
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "site_x1", "site_x2", "deviation",
                         "suffix_events", "base_losses", "deviated_losses",
                         "improved"])
        for r in range(cfg.replicas):
            plan = _replica_plan(cfg, manifest, r)
            graph = sample_graph(window, cfg.C, cfg.gamma, plan)
            feelings = sample_feelings(graph, cfg.symmetric, plan)
            init = init_configuration(window, plan)
            events = build_event_stream(window, cfg.horizon, plan)
            log, state = run(graph, feelings, memory_strategy(cfg.coin_on_miss),
                             cfg.horizon, plan, events=events, init_config=init)
            t_star, cases = nash_check(log, state, events, init, plan)
            for case in cases:
                x1, x2 = window.coord_of(case.site)
                writer.writerow([r, x1, x2, case.deviation, case.suffix_events,
                                 case.base_losses, case.deviated_losses,
                                 int(case.improved)])
                any_improved = any_improved or case.improved
            _say(cfg, f"replica {r}: settled by {t_star:.2f}, "
                      f"{len(cases)} deviations tested")
    manifest.data["realized"]["improving_deviation_found"] = any_improved
    return 0


def _run_oracle_check(cfg: ExperimentConfig, manifest: _Manifest) -> int:
    checks = run_oracle_checks(cfg.L, cfg.seed, horizon=cfg.horizon)
    all_ok = True
    for check in checks:
        _say(cfg, f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
        all_ok = all_ok and check.passed
    manifest.data["realized"]["oracles"] = [
        {"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]
    if not all_ok:
        raise InvariantViolation("oracle cross-check failed")
    return 0
