import csv
import io

import numpy as np
import pytest

from irsec_figures import PlotSpec, RenderError, aggregate, render

HEADER = (
    "scenario,scheme,sweep_value,trial,status,sum_rate,secrecy_rate,"
    "leakage_worst_sampled,leakage_cert_min_eig,leakage_kj,an_power_fraction,"
    "energy_efficiency,eve_sinr_max,outage_count,outage_total,iterations,"
    "converged,power_used"
)


def _write_csv(tmp_path, rows, name="results.csv"):
    path = tmp_path / name
    lines = [HEADER]
    for r in rows:
        lines.append(",".join(str(r.get(c, 0)) for c in HEADER.split(",")))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _rows(schemes=("proposed", "baseline1"), sweeps=(10.0, 20.0), trials=3, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for scheme in schemes:
        for sweep in sweeps:
            for trial in range(trials):
                rows.append(
                    dict(
                        scenario="sumrate_vs_power", scheme=scheme, sweep_value=sweep,
                        trial=trial, status="ok",
                        sum_rate=f"{rng.uniform(1, 5):.9g}",
                        secrecy_rate=f"{rng.uniform(0, 3):.9g}",
                        outage_count=int(rng.integers(0, 3)), outage_total=4,
                    )
                )
    return rows


class TestAggregate:
    def test_mean_and_se_match_numpy(self, tmp_path):
        rows = _rows()
        path = _write_csv(tmp_path, rows)
        spec = PlotSpec("sumrate_vs_power", path, str(tmp_path / "o.png"))
        from irsec_figures.render import read_rows

        series = aggregate(read_rows(path), spec)
        raw = [float(r["sum_rate"]) for r in rows
               if r["scheme"] == "proposed" and r["sweep_value"] == 10.0]
        idx = list(series["proposed"]["x"]).index(10.0)
        assert series["proposed"]["mean"][idx] == pytest.approx(np.mean(raw), rel=0, abs=0)
        assert series["proposed"]["se"][idx] == pytest.approx(
            np.std(raw, ddof=1) / np.sqrt(len(raw))
        )

    def test_outage_aggregates_counts(self, tmp_path):
        rows = _rows(schemes=("nonrobust",), sweeps=(0.0,))
        for r in rows:
            r["scenario"] = "outage"
        path = _write_csv(tmp_path, rows)
        spec = PlotSpec("outage", path, str(tmp_path / "o.png"))
        from irsec_figures.render import read_rows

        series = aggregate(read_rows(path), spec)
        count = sum(int(r["outage_count"]) for r in rows)
        total = sum(int(r["outage_total"]) for r in rows)
        assert series["nonrobust"]["mean"][0] == pytest.approx(count / total)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("scenario,scheme,sweep_value,trial,status\nx,proposed,1,0,ok\n")
        spec = PlotSpec("sumrate_vs_power", str(path), str(tmp_path / "o.png"))
        from irsec_figures.render import read_rows

        with pytest.raises(RenderError, match="sum_rate"):
            aggregate(read_rows(str(path)), spec)

    def test_non_ok_rows_skipped(self, tmp_path):
        rows = _rows(trials=2)
        rows[0]["status"] = "failed: x"
        path = _write_csv(tmp_path, rows)
        spec = PlotSpec("sumrate_vs_power", path, str(tmp_path / "o.png"))
        from irsec_figures.render import read_rows

        series = aggregate(read_rows(path), spec)
        assert len(series) == 2


class TestRender:
    def test_series_count_matches_schemes(self, tmp_path):
        path = _write_csv(tmp_path, _rows(schemes=("proposed", "baseline1", "baseline2")))
        out = tmp_path / "fig.png"
        spec = PlotSpec("sumrate_vs_power", path, str(out))
        series = render(spec)
        assert len(series) == 3
        assert out.exists() and out.stat().st_size > 0

    def test_empty_csv_no_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(HEADER + "\n")
        out = tmp_path / "fig.png"
        spec = PlotSpec("sumrate_vs_power", str(path), str(out))
        with pytest.raises(RenderError):
            render(spec)
        assert not out.exists()

    def test_idempotent_bytes(self, tmp_path):
        path = _write_csv(tmp_path, _rows())
        out_a, out_b = tmp_path / "a.png", tmp_path / "b.png"
        render(PlotSpec("sumrate_vs_power", path, str(out_a)))
        render(PlotSpec("sumrate_vs_power", path, str(out_b)))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_svg_output(self, tmp_path):
        path = _write_csv(tmp_path, _rows())
        out_a, out_b = tmp_path / "a.svg", tmp_path / "b.svg"
        render(PlotSpec("sumrate_vs_power", path, str(out_a)))
        render(PlotSpec("sumrate_vs_power", path, str(out_b)))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_unknown_scenario_rejected(self, tmp_path):
        with pytest.raises(RenderError, match="unknown scenario"):
            PlotSpec("bogus", "x.csv", "y.png")


class TestAllScenarios:
    @pytest.mark.parametrize("scenario", [
        "convergence", "sumrate_vs_power", "secrecy_vs_tau", "energy_efficiency",
        "sumrate_vs_K", "csi_uncertainty", "outage", "multi_irs_split",
    ])
    def test_every_scenario_preset_renders(self, tmp_path, scenario):
        schemes = ("proposed", "baseline1")
        rows = _rows(schemes=schemes, sweeps=(1.0, 2.0, 3.0), trials=4, seed=7)
        for r in rows:
            r["scenario"] = scenario
        path = _write_csv(tmp_path, rows, name=f"{scenario}.csv")
        out = tmp_path / f"{scenario}.png"
        series = render(PlotSpec(scenario, path, str(out)))
        assert len(series) == len(schemes)
        assert out.exists() and out.stat().st_size > 0
        # plotted means equal the plain arithmetic mean of the raw rows
        spec = PlotSpec(scenario, path, str(out))
        if spec.y_column != "outage":
            for scheme in schemes:
                raw = [float(r.get(spec.y_column, 0)) for r in rows
                       if r["scheme"] == scheme and float(r["sweep_value"]) == 2.0]
                idx = list(series[scheme]["x"]).index(2.0)
                assert series[scheme]["mean"][idx] == np.mean(raw)


class TestCli:
    def test_cli_render(self, tmp_path, capsys):
        from irsec_figures.render import main

        path = _write_csv(tmp_path, _rows())
        out = tmp_path / "cli.png"
        rc = main(["--scenario", "sumrate_vs_power", "--in", path, "--out", str(out)])
        assert rc == 0
        assert out.exists()
        assert "2 series" in capsys.readouterr().out

    def test_cli_missing_column_exit_nonzero(self, tmp_path, capsys):
        from irsec_figures.render import main

        path = tmp_path / "broken.csv"
        path.write_text("scenario,scheme,sweep_value,trial,status\nx,p,1,0,ok\n")
        rc = main(["--scenario", "sumrate_vs_power", "--in", str(path), "--out",
                   str(tmp_path / "o.png")])
        assert rc == 1
        assert "sum_rate" in capsys.readouterr().err

    def test_cli_spec_file(self, tmp_path):
        import json

        from irsec_figures.render import main

        path = _write_csv(tmp_path, _rows())
        spec_path = tmp_path / "plot.json"
        out = tmp_path / "fromspec.png"
        spec_path.write_text(json.dumps({
            "scenario": "sumrate_vs_power", "csv_path": path, "out_path": str(out),
        }))
        assert main(["--spec", str(spec_path)]) == 0
        assert out.exists()
