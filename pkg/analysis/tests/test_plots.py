"""Chart scripts run against both synthetic CSVs and real harness output.

The real-output tests drive the simulator through its command line and
consume only the CSV files it writes.
"""

import csv
import os
import subprocess
import sys

import pytest

SCRIPTS_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

ALL_KINDS = ("energy", "tv", "fronts", "flips", "bounds")

SYNTHETIC = {
    "energy": (
        "time,H,e,e1,e2,e3\n"
        "0.0,-10,-0.15625,0.0,0.0,0.0\n"
        "1.5,-18,-0.28125,0.0,-0.125,0.0\n"
        "4.0,-18,-0.28125,0.0,-0.125,0.0\n"),
    "tv": (
        "L,t,pair_id,estimate,half_width,replicas\n"
        "8,5.0,opposite,0.41,0.05,200\n"
        "16,5.0,opposite,0.22,0.05,200\n"
        "32,5.0,opposite,0.10,0.04,200\n"
        "8,5.0,identical,0.0,0.0,200\n"),
    "fronts": (
        "L,replica,front_time\n"
        "8,0,0.5\n8,1,0.7\n8,2,NA\n16,0,1.2\n16,1,1.4\n"),
    "flips": (
        "site_x1,site_x2,N1,N2,N3,M,last_flip,empirical_T,rho,degree\n"
        "0,0,0,4,1,2,3.5,4.0,1,4\n"
        "0,1,1,5,0,1,2.0,6.0,2,5\n"
        "1,0,0,3,0,0,0.0,1.0,1,4\n"
        "1,1,0,2,2,3,7.0,2.5,1,4\n"),
    "bounds": (
        "C,empirical_fraction,markov_bound\n"
        "10.0,0.001,0.21\n20.0,0.0005,0.105\n50.0,0.0,0.042\n"),
}


def run_script(kind, inputs, output, extra=()):
    cmd = [sys.executable, os.path.join(SCRIPTS_DIR, f"plot_{kind}.py"),
           "--in", *inputs, "--out", str(output), *extra]
    return subprocess.run(cmd, capture_output=True, text=True)


def run_simulator(kind, config_text, out_dir, tmp_path):
    config = tmp_path / f"{kind}.cfg"
    config.write_text(config_text)
    cmd = [sys.executable, "-m", "latticegame.cli", kind,
           "--config", str(config), "--out", str(out_dir), "--quiet"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out_dir


class TestSyntheticInputs:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_renders_an_image(self, kind, tmp_path):
        path = tmp_path / f"{kind}.csv"
        path.write_text(SYNTHETIC[kind])
        out = tmp_path / f"{kind}.png"
        proc = run_script(kind, [str(path)], out)
        assert proc.returncode == 0, proc.stderr
        assert out.exists() and out.stat().st_size > 1000

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_missing_column_is_named(self, kind, tmp_path):
        header, rest = SYNTHETIC[kind].split("\n", 1)
        columns = header.split(",")
        dropped = columns[-1]
        rows = [line.rsplit(",", 1)[0] for line in rest.splitlines() if line]
        path = tmp_path / f"{kind}.csv"
        path.write_text(",".join(columns[:-1]) + "\n" + "\n".join(rows) + "\n")
        proc = run_script(kind, [str(path)], tmp_path / "x.png")
        assert proc.returncode == 1
        assert dropped in proc.stdout

    def test_axis_limits(self, tmp_path):
        path = tmp_path / "energy.csv"
        path.write_text(SYNTHETIC["energy"])
        out = tmp_path / "energy.png"
        proc = run_script("energy", [str(path)], out,
                          extra=("--xlim", "0", "2", "--ylim", "-1", "1"))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_rerender_is_byte_stable(self, tmp_path):
        path = tmp_path / "bounds.csv"
        path.write_text(SYNTHETIC["bounds"])
        images = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            assert run_script("bounds", [str(path)], out).returncode == 0
            images.append(out.read_bytes())
        assert images[0] == images[1]

    def test_flip_histogram_conserves_sites(self, tmp_path):
        # the histogram is over one row per site; the chart must see all rows
        path = tmp_path / "sites.csv"
        path.write_text(SYNTHETIC["flips"])
        with open(path) as fh:
            n_sites = len(list(csv.DictReader(fh)))
        assert n_sites == 4
        out = tmp_path / "flips.png"
        assert run_script("flips", [str(path)], out).returncode == 0
        assert out.exists()


@pytest.fixture(scope="module")
def harness_outputs(tmp_path_factory):
    """Real CSVs from small harness runs, via the simulator CLI."""
    tmp_path = tmp_path_factory.mktemp("harness")
    fixation = run_simulator(
        "fixation",
        "kind = fixation\nL = 8\nhorizon = 25\nseed = 5\n"
        "replicas = 2\nsymmetric = true\n",
        tmp_path / "fixation", tmp_path)
    mixing = run_simulator(
        "mixing",
        "kind = mixing\nL = 8\nhorizon = 2\nseed = 9\nreplicas = 4\n"
        "ladder = 8\n",
        tmp_path / "mixing", tmp_path)
    control = run_simulator(
        "simulate",
        "kind = simulate\nL = 8\nhorizon = 0.001\nseed = 0\n",
        tmp_path / "control", tmp_path)
    return {"fixation": fixation, "mixing": mixing, "control": control,
            "tmp": tmp_path}


class TestHarnessOutputs:
    def test_all_five_charts_render(self, harness_outputs):
        tmp = harness_outputs["tmp"]
        jobs = [
            ("energy", [harness_outputs["fixation"] / "rep000" / "energy.csv"]),
            ("flips", [harness_outputs["fixation"] / "rep000" / "sites.csv"]),
            ("bounds", [harness_outputs["fixation"] / "bounds.csv"]),
            ("tv", [harness_outputs["mixing"] / "tv.csv"]),
            ("fronts", [harness_outputs["mixing"] / "front.csv"]),
        ]
        for kind, inputs in jobs:
            out = tmp / f"real_{kind}.png"
            proc = run_script(kind, [str(p) for p in inputs], out)
            assert proc.returncode == 0, proc.stderr
            assert out.exists() and out.stat().st_size > 1000

    def test_zero_flip_control_curve_is_flat(self, harness_outputs):
        energy_csv = harness_outputs["control"] / "rep000" / "energy.csv"
        with open(energy_csv) as fh:
            rows = list(csv.DictReader(fh))
        values = {row["e"] for row in rows}
        assert len(values) == 1, "control run must have a flat energy curve"
        assert all(row["e1"] == "0.0" and row["e2"] == "0.0"
                   and row["e3"] == "0.0" for row in rows)
        out = harness_outputs["tmp"] / "control_energy.png"
        proc = run_script("energy", [str(energy_csv)], out)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
