"""Batch renderer: harness result CSVs to paper-style trend figures.

Reads only the documented result-table schema (header row with
scenario/scheme/sweep_value/trial plus metric columns; floats with 9
significant digits) and renders one line per scheme with mean and
standard-error bands aggregated over trials. Output is deterministic: fixed
canvas, no timestamps, so re-rendering identical input yields identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class RenderError(RuntimeError):
    """Input table unusable (missing column, no data rows, bad scenario)."""


# y-metric presets per scenario id; "outage" aggregates counts, not means
SCENARIO_PRESETS = {
    "convergence": dict(y="sum_rate", xlabel="iteration", ylabel="sum-rate (bits/s/Hz)"),
    "sumrate_vs_power": dict(y="sum_rate", xlabel="transmit power (dBm)",
                             ylabel="average sum-rate (bits/s/Hz)"),
    "secrecy_vs_tau": dict(y="secrecy_rate", xlabel="leakage cap (bits/s/Hz)",
                           ylabel="average secrecy rate (bits/s/Hz)"),
    "energy_efficiency": dict(y="energy_efficiency", xlabel="array size",
                              ylabel="energy efficiency (bits/J/Hz)"),
    "sumrate_vs_K": dict(y="sum_rate", xlabel="number of users",
                         ylabel="average sum-rate (bits/s/Hz)"),
    "csi_uncertainty": dict(y="sum_rate", xlabel="normalized CSI error variance",
                            ylabel="average sum-rate (bits/s/Hz)"),
    "outage": dict(y="outage", xlabel="target SINR (dB)",
                   ylabel="eavesdropper outage probability"),
    "multi_irs_split": dict(y="sum_rate", xlabel="elements at IRS 1",
                            ylabel="average sum-rate (bits/s/Hz)"),
}


@dataclass
class PlotSpec:
    scenario: str
    csv_path: str
    out_path: str
    x_column: str = "sweep_value"
    y_column: str = ""
    group_by: str = "scheme"
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    extra_y_columns: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.scenario not in SCENARIO_PRESETS:
            raise RenderError(
                f"unknown scenario '{self.scenario}' "
                f"(choose from {', '.join(sorted(SCENARIO_PRESETS))})"
            )
        preset = SCENARIO_PRESETS[self.scenario]
        if not self.y_column:
            self.y_column = preset["y"]
        if not self.xlabel:
            self.xlabel = preset["xlabel"]
        if not self.ylabel:
            self.ylabel = preset["ylabel"]

    @staticmethod
    def from_file(path: str) -> "PlotSpec":
        import json

        payload = json.loads(Path(path).read_text())
        return PlotSpec(**payload)


def read_rows(csv_path: str) -> list[dict]:
    try:
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise RenderError(f"{csv_path}: empty file, nothing to render")
            rows = list(reader)
    except OSError as exc:
        raise RenderError(f"{csv_path}: cannot read ({exc})") from exc
    if not rows:
        raise RenderError(f"{csv_path}: no data rows")
    return rows


def _require_columns(rows: list[dict], columns) -> None:
    present = rows[0].keys()
    for col in columns:
        if col not in present:
            raise RenderError(f"missing column '{col}' in result table")


def aggregate(rows: list[dict], spec: PlotSpec) -> dict[str, dict[str, np.ndarray]]:
    """Per-scheme x-grid with mean and standard error over ok trials.

    Means are plain arithmetic means of the raw rows, matching the harness
    summary; the outage metric aggregates exceedance counts instead.
    """
    needed = [spec.group_by, spec.x_column, "status"]
    if spec.y_column == "outage":
        needed += ["outage_count", "outage_total"]
    else:
        needed.append(spec.y_column)
    _require_columns(rows, needed)

    grouped: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        grouped.setdefault((row[spec.group_by], float(row[spec.x_column])), []).append(row)
    if not grouped:
        raise RenderError("no rows with status=ok to render")

    series: dict[str, dict[str, list]] = {}
    for (scheme, x), grp in sorted(grouped.items()):
        entry = series.setdefault(scheme, {"x": [], "mean": [], "se": []})
        if spec.y_column == "outage":
            count = sum(int(r["outage_count"]) for r in grp)
            total = sum(int(r["outage_total"]) for r in grp)
            frac = count / total if total else np.nan
            entry["x"].append(x)
            entry["mean"].append(frac)
            entry["se"].append(
                np.sqrt(frac * (1 - frac) / total) if total else np.nan
            )
        else:
            vals = np.array([float(r[spec.y_column]) for r in grp])
            vals = vals[np.isfinite(vals)]
            entry["x"].append(x)
            entry["mean"].append(float(vals.mean()) if vals.size else np.nan)
            entry["se"].append(
                float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            )
    return {
        scheme: {key: np.array(val) for key, val in data.items()}
        for scheme, data in series.items()
    }


MARKERS = ("o", "s", "^", "d", "v", "*")


def render(spec: PlotSpec) -> dict[str, dict[str, np.ndarray]]:
    """Render the figure; returns the aggregated series for verification."""
    rows = read_rows(spec.csv_path)
    series = aggregate(rows, spec)

    # deterministic output: fixed hash salt (SVG element ids) and no timestamps
    plt.rcParams["svg.hashsalt"] = "irsec-figures"
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=144)
    for i, (scheme, data) in enumerate(sorted(series.items())):
        marker = MARKERS[i % len(MARKERS)]
        ax.plot(data["x"], data["mean"], marker=marker, label=scheme)
        band = np.nan_to_num(data["se"])
        ax.fill_between(data["x"], data["mean"] - band, data["mean"] + band, alpha=0.2)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()

    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata=_deterministic_metadata(out.suffix))
    plt.close(fig)
    return series


def _deterministic_metadata(suffix: str) -> dict:
    if suffix.lower() == ".svg":
        return {"Date": None}
    if suffix.lower() == ".png":
        return {"Software": ""}
    return {}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsec-render",
        description="Render harness result CSVs into trend figures",
    )
    parser.add_argument("--spec", help="JSON plot-spec file")
    parser.add_argument("--scenario", help="scenario id (with --in/--out)")
    parser.add_argument("--in", dest="csv_in", help="input results.csv")
    parser.add_argument("--out", dest="img_out", help="output image path")
    args = parser.parse_args(argv)

    try:
        if args.spec:
            spec = PlotSpec.from_file(args.spec)
        else:
            if not (args.scenario and args.csv_in and args.img_out):
                parser.error("either --spec or all of --scenario/--in/--out are required")
            spec = PlotSpec(scenario=args.scenario, csv_path=args.csv_in, out_path=args.img_out)
        series = render(spec)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {spec.out_path} ({len(series)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
