from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import SCENARIOS
from stochfreq.analytic import COMPONENT_HEADER, SUMMARY_HEADER
from stochfreq.cli import main
from stochfreq.errors import IncompleteRun
from stochfreq.plotdata import emit_plot_data

SFR = {"inv_R": 16.5, "H": 4.96, "a": 0.278, "T": 10, "D": 1.2, "delta_w": 0.05,
       "H_w": 2, "K": 0.7, "K1": 0.3, "K2": 0.0}
DESK = {"components": [
    {"weight": 0.6, "mean": 0.50, "variance": 0.0016},
    {"weight": 0.3, "mean": 0.52, "variance": 0.0049},
    {"weight": 0.1, "mean": 0.56, "variance": 0.0144},
]}


def write_scenario(tmp_path: Path, name: str = "s", **body) -> Path:
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(body))
    return path


def small_desk(tmp_path: Path, **extra) -> Path:
    return write_scenario(
        tmp_path, "desk_small",
        input={"gmm": DESK}, sfr=SFR,
        solver={"t_end": 5.0},
        mcs={"n_paths": 3000, "seed": 1, "capture_times": [2.5, 5.0]},
        baseline={"dsm": True},
        **extra,
    )


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    scenario = small_desk(base)
    assert main(["run", str(scenario), "--out", str(base / "run"), "--threads", "2"]) == 0
    return base, scenario, base / "run"


class TestRun:
    def test_minimal_analytic_only(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, input={"gmm": {"components": [{"weight": 1.0, "mean": 0.5, "variance": 0.01}]}},
                                  sfr=SFR)
        out = tmp_path / "out"
        assert main(["run", str(scenario), "--out", str(out), "--no-mcs"]) == 0
        assert (out / "mixture_components.csv").read_text().splitlines()[0] == ",".join(COMPONENT_HEADER)
        assert (out / "mixture_summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_HEADER)
        assert not list(out.glob("mcs_*.csv")) and not (out / "metrics.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "complete" and manifest["mcs"] is None

    def test_artifacts(self, desk_run):
        _, _, out = desk_run
        names = {p.name for p in out.iterdir()}
        assert {"gmm.json", "gmm_dsm.json", "ito.json", "system.json", "manifest.json",
                "mixture_components.csv", "mixture_summary.csv", "dsm_mixture_components.csv",
                "mcs_t2.5.csv", "mcs_t5.csv", "metrics.csv", "metrics_summary.txt"} <= names
        system = json.loads((out / "system.json").read_text())
        assert system["state_order"] == ["tg", "df", "pw"]
        assert system["aggregated"]["H_s"] == pytest.approx(4.072)

    def test_dsm_rows_and_dominance(self, desk_run):
        _, _, out = desk_run
        rows = [line.split(",") for line in (out / "metrics.csv").read_text().splitlines()[1:]]
        w1 = {(m, float(t)): float(v) for m, t, _, v in rows if m.endswith(".wasserstein")}
        for t in (2.5, 5.0):
            assert w1[("nsa_gip.wasserstein", t)] < w1[("dsm.wasserstein", t)]

    def test_manifest(self, desk_run):
        _, _, out = desk_run
        m = json.loads((out / "manifest.json").read_text())
        assert m["status"] == "complete"
        assert m["seeds"]["mcs_master"] == 1
        assert m["n_w"] == 3 and m["lambda_w"] == 1.0
        assert m["mcs"]["dt"] == 1e-3 and m["mcs"]["n_paths"] == 3000
        assert {"nsa_gip.solve", "mcs", "metrics"} <= set(m["timings_s"])
        assert m["wall_clock_s"]["mcs"] > m["wall_clock_s"]["analytic"]
        assert {"numpy", "scipy", "python", "artifact"} <= set(m["versions"])

    def test_byte_identical_reruns(self, desk_run):
        base, scenario, out = desk_run
        again = base / "again"
        assert main(["run", str(scenario), "--out", str(again), "--threads", "1"]) == 0
        for path in out.glob("*.csv"):
            assert path.read_bytes() == (again / path.name).read_bytes(), path.name

    def test_seed_override(self, tmp_path):
        scenario = small_desk(tmp_path)
        out = tmp_path / "o"
        assert main(["run", str(scenario), "--out", str(out), "--no-mcs", "--seed", "99"]) == 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["seeds"] == {"gmm": 99, "sample": 99, "mcs_master": 99}

    def test_env_output_root(self, tmp_path, monkeypatch):
        scenario = small_desk(tmp_path)
        monkeypatch.setenv("STOCHFREQ_OUT", str(tmp_path / "root"))
        assert main(["run", str(scenario), "--no-mcs"]) == 0
        assert (tmp_path / "root" / "desk_small" / "manifest.json").exists()

    def test_quantile_input(self, tmp_path):
        (tmp_path / "q.json").write_text((SCENARIOS / "wind_quantiles.json").read_text())
        scenario = write_scenario(tmp_path, input={"quantiles": "q.json"}, sfr=SFR,
                                  gmm={"n": 3, "sample_count": 2000, "seed": 2},
                                  solver={"t_end": 2.0}, mcs={"n_paths": 500, "capture_times": [1.0]},
                                  baseline={"dsm": True})
        out = tmp_path / "out"
        assert main(["run", str(scenario), "--out", str(out)]) == 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["input"]["R"] == 19 and m["n_w"] == 3 and m["em"]["iterations"] >= 1
        dsm = json.loads((out / "gmm_dsm.json").read_text())
        assert len(dsm["components"]) == 1


class TestExitCodes:
    def test_validate_ok(self, capsys):
        assert main(["validate", str(SCENARIOS / "desk.yaml")]) == 0
        assert "ok" in capsys.readouterr().out

    def test_missing_key(self, tmp_path, capsys):
        sfr = {k: v for k, v in SFR.items() if k != "H"}
        scenario = write_scenario(tmp_path, input={"gmm": DESK}, sfr=sfr)
        assert main(["validate", str(scenario)]) == 2
        assert "sfr.H" in capsys.readouterr().err
        assert main(["run", str(scenario), "--out", str(tmp_path / "o")]) == 2

    def test_metric_time_not_captured(self, tmp_path):
        scenario = small_desk(tmp_path, metrics={"times": [7.5]})
        assert main(["validate", str(scenario)]) == 2

    def test_numeric_failure_marks_incomplete(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, input={"gmm": DESK},
                                  sfr={**SFR, "K": 1.0, "K1": 0.0, "D_s": -10.0})
        out = tmp_path / "o"
        assert main(["run", str(scenario), "--out", str(out)]) == 3
        assert "[numeric]" in capsys.readouterr().err
        m = json.loads((out / "manifest.json").read_text())
        assert m["status"] == "incomplete" and m["error"]["category"] == "numeric"
        with pytest.raises(IncompleteRun):
            emit_plot_data(out)
        assert main(["plot-data", str(out)]) == 4

    def test_missing_scenario_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.yaml")]) == 4

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        scenario = small_desk(tmp_path)
        assert main(["run", str(scenario), "--out", str(blocker / "sub"), "--no-mcs"]) == 4

    def test_bad_threads(self, tmp_path):
        assert main(["run", str(small_desk(tmp_path)), "--threads", "0"]) == 2


class TestPlotData:
    def test_with_mcs(self, desk_run):
        _, _, out = desk_run
        assert main(["plot-data", str(out)]) == 0
        std = np.loadtxt(out / "plots" / "stddev_vs_time.dat")
        assert std.shape[1] == 3
        assert "analytic mcs" in (out / "plots" / "stddev_vs_time.dat").read_text().splitlines()[0]
        captured = std[~np.isnan(std[:, 2])]
        np.testing.assert_allclose(captured[:, 0], [2.5, 5.0])
        for t in ("2.5", "5"):
            pdf = np.loadtxt(out / "plots" / f"pdf_t{t}.dat")
            assert np.trapezoid(pdf[:, 1], pdf[:, 0]) == pytest.approx(1.0, abs=1e-4)
            assert np.all(np.diff(pdf[:, 2]) >= 0.0)
            pd = np.loadtxt(out / "plots" / f"pd_t{t}.dat")
            assert pd.shape == (19, 3)

    def test_without_mcs(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", str(small_desk(tmp_path)), "--out", str(out), "--no-mcs"]) == 0
        written = emit_plot_data(out)
        names = {p.name for p in written}
        assert "NOTE.txt" in names and not any(n.startswith("pd_t") for n in names)
        assert np.loadtxt(out / "plots" / "stddev_vs_time.dat").shape[1] == 2
        pdf = np.loadtxt(out / "plots" / "pdf_t5.dat")
        assert np.trapezoid(pdf[:, 1], pdf[:, 0]) == pytest.approx(1.0, abs=1e-4)

    def test_not_a_run(self, tmp_path):
        with pytest.raises(IncompleteRun):
            emit_plot_data(tmp_path)
