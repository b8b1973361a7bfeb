"""Shared plumbing for the chart scripts.

Each script renders one chart kind from the simulator's CSV outputs.  The
scripts read only the documented CSV columns and never import simulator
internals, so they stay buildable against saved outputs alone.
"""

from __future__ import annotations

import argparse
import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


class MissingColumnError(Exception):
    """An input CSV lacks a required column."""


@dataclass
class PlotSpec:
    inputs: list[str]
    kind: str
    output: str
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None


def load_csv(path: str, required: list[str]) -> dict[str, list[str]]:
    """Column-major read; raises MissingColumnError naming the gap."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise MissingColumnError(
                    f"{path}: missing required column '{column}'")
        columns: dict[str, list[str]] = {c: [] for c in header}
        for row in reader:
            for c in header:
                columns[c].append(row[c])
    return columns


def _finish(fig, ax, spec: PlotSpec) -> str:
    if spec.xlim:
        ax.set_xlim(*spec.xlim)
    if spec.ylim:
        ax.set_ylim(*spec.ylim)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=120)
    plt.close(fig)
    return spec.output


def _plot_energy(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in spec.inputs:
        cols = load_csv(path, ["time", "H", "e", "e1", "e2", "e3"])
        t = [float(v) for v in cols["time"]]
        label = "" if len(spec.inputs) == 1 else f" [{path}]"
        for name, style in (("e", "-"), ("e1", "--"), ("e2", ":"), ("e3", "-.")):
            ax.step(t, [float(v) for v in cols[name]], style,
                    where="post", label=name + label)
    ax.set_xlabel("time")
    ax.set_ylabel("energy density")
    ax.legend()
    return _finish(fig, ax, spec)


def _plot_tv(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for path in spec.inputs:
        cols = load_csv(path, ["L", "t", "pair_id", "estimate",
                               "half_width", "replicas"])
        series: dict[tuple[str, str], list[tuple[float, float, float]]] = {}
        for k in range(len(cols["L"])):
            key = (cols["pair_id"][k], cols["t"][k])
            series.setdefault(key, []).append(
                (float(cols["L"][k]), float(cols["estimate"][k]),
                 float(cols["half_width"][k])))
        for (pair, t), rows in sorted(series.items()):
            rows.sort()
            ax.errorbar([r[0] for r in rows], [r[1] for r in rows],
                        yerr=[r[2] for r in rows], marker="o", capsize=3,
                        label=f"{pair}, t={t}")
    ax.set_xlabel("window side L")
    ax.set_ylabel("total variation estimate")
    ax.legend(fontsize=8)
    return _finish(fig, ax, spec)


def _plot_fronts(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for path in spec.inputs:
        cols = load_csv(path, ["L", "replica", "front_time"])
        per_l: dict[str, list[float]] = {}
        censored: dict[str, int] = {}
        for k in range(len(cols["L"])):
            L = cols["L"][k]
            raw = cols["front_time"][k]
            if raw == "NA":
                censored[L] = censored.get(L, 0) + 1
            else:
                per_l.setdefault(L, []).append(float(raw))
        for L, values in sorted(per_l.items(), key=lambda kv: float(kv[0])):
            extra = f" ({censored[L]} censored)" if censored.get(L) else ""
            ax.hist(values, bins=20, alpha=0.5, label=f"L={L}{extra}")
    ax.set_xlabel("black front time")
    ax.set_ylabel("replicas")
    ax.legend()
    return _finish(fig, ax, spec)


def _plot_flips(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    counts: list[int] = []
    for path in spec.inputs:
        cols = load_csv(path, ["site_x1", "site_x2", "N1", "N2", "N3", "M",
                               "last_flip", "empirical_T", "rho", "degree"])
        counts.extend(int(v) for v in cols["M"])
    top = max(counts) if counts else 1
    ax.hist(counts, bins=range(0, top + 2), align="left", rwidth=0.9)
    ax.set_xlabel("opinion changes per site")
    ax.set_ylabel(f"sites (total {len(counts)})")
    return _finish(fig, ax, spec)


def _plot_bounds(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for path in spec.inputs:
        cols = load_csv(path, ["C", "empirical_fraction", "markov_bound"])
        c = [float(v) for v in cols["C"]]
        ax.plot(c, [float(v) for v in cols["empirical_fraction"]],
                "o-", label="empirical fraction")
        ax.plot(c, [float(v) for v in cols["markov_bound"]],
                "s--", label="tail bound")
    ax.set_xlabel("threshold C")
    ax.set_ylabel("fraction of sites")
    ax.set_yscale("log")
    ax.legend()
    return _finish(fig, ax, spec)


_KINDS = {
    "energy": _plot_energy,
    "tv": _plot_tv,
    "fronts": _plot_fronts,
    "flips": _plot_flips,
    "bounds": _plot_bounds,
}


def plot(spec: PlotSpec) -> str:
    """Render one chart; returns the written image path."""
    try:
        renderer = _KINDS[spec.kind]
    except KeyError:
        raise ValueError(f"unknown chart kind {spec.kind!r}") from None
    return renderer(spec)


def main_for_kind(kind: str, argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=f"Render the {kind} chart.")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input CSV path(s)")
    parser.add_argument("--out", dest="output", required=True,
                        help="output image path")
    parser.add_argument("--xlim", nargs=2, type=float, default=None)
    parser.add_argument("--ylim", nargs=2, type=float, default=None)
    args = parser.parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind=kind, output=args.output,
                    xlim=tuple(args.xlim) if args.xlim else None,
                    ylim=tuple(args.ylim) if args.ylim else None)
    try:
        written = plot(spec)
    except (MissingColumnError, FileNotFoundError) as exc:
        print(f"error: {exc}", flush=True)
        return 1
    print(written)
    return 0
