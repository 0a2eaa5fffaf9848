"""Monte-Carlo harness: scenario sweeps, schemes, deterministic result tables.

An :class:`ExperimentSpec` names a scenario, a sweep grid, trial count,
schemes and config overrides. Each (sweep point, trial) draws fresh geometry
and channels from an addressable seed tree (trial-keyed, so sweeps share
random numbers where dimensions allow) and evaluates every requested scheme.
Rows are emitted in deterministic schedule order regardless of worker
parallelism; CSV floats carry 9 significant digits.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import baselines, system
from .ao import TrialInfeasible, run_ao
from .channels import (
    build_channel_set,
    build_direct_channel_set,
    child_rng,
    sample_geometry,
    scenario_seed_tree,
)
from .config import ConfigError, SystemConfig, dbm_to_watts

SCENARIOS = (
    "convergence",
    "sumrate_vs_power",
    "secrecy_vs_tau",
    "energy_efficiency",
    "sumrate_vs_K",
    "csi_uncertainty",
    "outage",
    "multi_irs_split",
)

SCHEMES = ("proposed", "baseline1", "baseline2", "nonrobust")

# desk-scale default scenario configuration; every field can be overridden
DESK_DEFAULTS = dict(
    n_t=4,
    n_r=2,
    k_users=2,
    j_eves=1,
    irs_sizes=(4,),
    irs_distances=(10.0,),
    cell_radius=20.0,
    p_max=dbm_to_watts(20.0),
    tau=1.0,
    kappa=float(np.sqrt(0.1)),
)

# wall-clock timing is written to a sidecar table (timings.csv), keeping the
# result table byte-identical across reruns of the same (spec, seed)
CSV_COLUMNS = (
    "scenario",
    "scheme",
    "sweep_value",
    "trial",
    "status",
    "sum_rate",
    "secrecy_rate",
    "leakage_worst_sampled",
    "leakage_cert_min_eig",
    "leakage_kj",
    "an_power_fraction",
    "energy_efficiency",
    "eve_sinr_max",
    "outage_count",
    "outage_total",
    "iterations",
    "converged",
    "power_used",
)

TIMING_COLUMNS = ("scenario", "scheme", "sweep_value", "trial", "wall_time")

_EVAL_TAG = 90
_B1_TAG = 91
_SCHEME_TAG = {"proposed": 92, "baseline1": 93, "baseline2": 94, "nonrobust": 95}


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    sweep: tuple
    trials: int
    seed: int
    schemes: tuple
    config_overrides: dict = field(default_factory=dict)
    sweep_var: str = ""            # energy_efficiency: "m" or "n_t"
    leakage_samples: int = 200     # sampled Delta-H per (k,j) in row metrics
    outage_tau_target: bool = True # outage sweep values are SINR targets in dB

    def __post_init__(self):
        object.__setattr__(self, "sweep", tuple(self.sweep))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        self.validate()

    @staticmethod
    def from_dict(payload: dict) -> "ExperimentSpec":
        unknown = set(payload) - {
            "scenario", "sweep", "trials", "seed", "schemes", "config",
            "sweep_var", "leakage_samples",
        }
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        for req in ("scenario", "trials", "seed"):
            if req not in payload:
                raise ConfigError(f"experiment spec is missing '{req}'")
        spec = ExperimentSpec(
            scenario=payload["scenario"],
            sweep=tuple(payload.get("sweep", (0,))),
            trials=int(payload["trials"]),
            seed=int(payload["seed"]),
            schemes=tuple(payload.get("schemes", ("proposed",))),
            config_overrides=dict(payload.get("config", {})),
            sweep_var=payload.get("sweep_var", ""),
            leakage_samples=int(payload.get("leakage_samples", 200)),
        )
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario '{self.scenario}' (choose from {', '.join(SCENARIOS)})"
            )
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.sweep:
            raise ConfigError("sweep grid must be non-empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad} (choose from {', '.join(SCHEMES)})")
        if self.scenario == "energy_efficiency" and self.sweep_var not in ("", "m", "n_t"):
            raise ConfigError("sweep_var must be 'm' or 'n_t' for energy_efficiency")
        self.point_config(self.sweep[0])  # surfaces bad overrides early

    def base_config(self) -> SystemConfig:
        merged = dict(DESK_DEFAULTS)
        merged.update(self.config_overrides)
        merged["seed"] = self.seed
        if "p_dbm" in merged:
            merged["p_max"] = dbm_to_watts(float(merged.pop("p_dbm")))
        if "irs_sizes" in merged:
            merged["irs_sizes"] = tuple(merged["irs_sizes"])
        if "irs_distances" in merged:
            merged["irs_distances"] = tuple(merged["irs_distances"])
        if "tau" in merged and isinstance(merged["tau"], list):
            merged["tau"] = tuple(tuple(r) for r in merged["tau"])
        # the split sweep re-partitions elements over two sites, so the base
        # may carry one site with the pooled element count but both distances
        sizes = merged.get("irs_sizes", DESK_DEFAULTS["irs_sizes"])
        dists = merged.get("irs_distances", DESK_DEFAULTS["irs_distances"])
        if len(dists) != len(sizes):
            merged["irs_distances"] = tuple(dists[: len(sizes)])
        return SystemConfig(**merged)

    def point_config(self, sweep_value) -> SystemConfig:
        """Scenario config at one sweep point."""
        cfg = self.base_config()
        s = self.scenario
        if s == "sumrate_vs_power":
            return cfg.with_updates(p_max=dbm_to_watts(float(sweep_value)))
        if s == "secrecy_vs_tau":
            return cfg.with_updates(tau=float(sweep_value))
        if s == "sumrate_vs_K":
            return cfg.with_updates(k_users=int(sweep_value))
        if s == "csi_uncertainty":
            return cfg.with_updates(kappa=float(np.sqrt(float(sweep_value))))
        if s == "energy_efficiency":
            if self.sweep_var == "n_t":
                return cfg.with_updates(n_t=int(sweep_value))
            return cfg.with_updates(irs_sizes=(int(sweep_value),))
        if s == "multi_irs_split":
            m1 = int(sweep_value)
            total = sum(cfg.irs_sizes)
            if not 1 <= m1 < total:
                raise ConfigError("multi_irs_split sweep values must lie in [1, M-1]")
            dists = self.config_overrides.get("irs_distances", cfg.irs_distances)
            d = float(dists[0])
            d2 = float(dists[1]) if len(dists) > 1 else d
            return cfg.with_updates(irs_sizes=(m1, total - m1), irs_distances=(d, d2))
        return cfg


@dataclass
class ResultRow:
    scenario: str
    scheme: str
    sweep_value: float
    trial: int
    status: str = "ok"
    sum_rate: float = np.nan
    secrecy_rate: float = np.nan
    leakage_worst_sampled: float = np.nan
    leakage_cert_min_eig: float = np.nan
    leakage_kj: str = ""
    an_power_fraction: float = np.nan
    energy_efficiency: float = np.nan
    eve_sinr_max: float = np.nan
    outage_count: int = 0
    outage_total: int = 0
    iterations: int = 0
    converged: bool = False
    power_used: float = np.nan
    wall_time: float = np.nan

    def as_record(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def rows_to_csv(rows: list[ResultRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        rec = row.as_record()
        lines.append(",".join(_fmt(rec[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def rows_to_timing_csv(rows: list[ResultRow]) -> str:
    lines = [",".join(TIMING_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                _fmt(getattr(row, c)) for c in TIMING_COLUMNS
            )
        )
    return "\n".join(lines) + "\n"


def rows_to_json(rows: list[ResultRow]) -> str:
    out = []
    for row in rows:
        rec = row.as_record()
        clean = {}
        for key, val in rec.items():
            if isinstance(val, (float, np.floating)):
                clean[key] = float(f"{float(val):.9g}")
            elif isinstance(val, (bool, np.bool_)):
                clean[key] = bool(val)
            elif isinstance(val, (int, np.integer)):
                clean[key] = int(val)
            else:
                clean[key] = val
        out.append(clean)
    return json.dumps(out, indent=1) + "\n"


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Per (scheme, sweep point) means, standard errors and outage fractions."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.scheme, row.sweep_value), []).append(row)
    summary = []
    for (scheme, sweep_value), grp in sorted(groups.items()):
        ok = [r for r in grp if r.status == "ok"]

        def stats(attr: str) -> tuple[float, float]:
            vals = np.array([getattr(r, attr) for r in ok], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                return np.nan, np.nan
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            return float(vals.mean()), se

        mean_rate, se_rate = stats("sum_rate")
        mean_sec, se_sec = stats("secrecy_rate")
        mean_an, se_an = stats("an_power_fraction")
        mean_ee, se_ee = stats("energy_efficiency")
        n_out = sum(r.outage_count for r in ok)
        n_tot = sum(r.outage_total for r in ok)
        summary.append(
            {
                "scenario": grp[0].scenario,
                "scheme": scheme,
                "sweep_value": sweep_value,
                "trials": len(grp),
                "failures": len(grp) - len(ok),
                "mean_sum_rate": mean_rate,
                "se_sum_rate": se_rate,
                "mean_secrecy_rate": mean_sec,
                "se_secrecy_rate": se_sec,
                "mean_an_power_fraction": mean_an,
                "se_an_power_fraction": se_an,
                "mean_energy_efficiency": mean_ee,
                "se_energy_efficiency": se_ee,
                "outage_fraction": (n_out / n_tot) if n_tot else np.nan,
            }
        )
    return summary


SUMMARY_COLUMNS = (
    "scenario", "scheme", "sweep_value", "trials", "failures",
    "mean_sum_rate", "se_sum_rate", "mean_secrecy_rate", "se_secrecy_rate",
    "mean_an_power_fraction", "se_an_power_fraction",
    "mean_energy_efficiency", "se_energy_efficiency", "outage_fraction",
)


def summary_to_csv(summary: list[dict]) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for rec in summary:
        lines.append(",".join(_fmt(rec[c]) for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


# -- per-trial execution -------------------------------------------------------

def _leakage_metrics(channels, solution, config, rng, n_samples, boundary_fraction=0.8):
    """Sampled worst leakage and certified margins per (k, j), plus flat text."""
    from . import robust
    from .channels import sample_uncertainty

    k_users, j_eves = channels.k_users, channels.j_eves
    tau = config.tau_matrix()
    worst = np.full((k_users, j_eves), np.nan)
    cert = np.full((k_users, j_eves), np.nan)
    n_boundary = int(round(boundary_fraction * n_samples))
    for j in range(j_eves):
        deltas = [
            sample_uncertainty(channels.h_bar[j], channels.eps[j], rng, boundary=i < n_boundary)
            for i in range(n_samples)
        ]
        for k in range(k_users):
            worst[k, j] = max(
                system.leakage_capacity(channels, solution, k, j, d) for d in deltas
            )
            _, cert[k, j] = robust.best_slack_margin(
                channels, solution.v, solution.w[k], solution.z, k, j, tau[k, j]
            )
    flat = ";".join(
        f"{k}:{j}:{worst[k, j]:.6g}" for k in range(k_users) for j in range(j_eves)
    )
    return worst, cert, flat


def _fill_solution_metrics(
    row: ResultRow,
    eval_channels,
    solution,
    config: SystemConfig,
    rng: np.random.Generator,
    n_samples: int,
    sinr_target: float | None = None,
) -> None:
    row.sum_rate = system.sum_rate(eval_channels, solution)
    row.power_used = solution.total_power
    row.an_power_fraction = (
        float(np.real(np.trace(solution.z))) / row.power_used if row.power_used > 0 else 0.0
    )
    row.energy_efficiency = system.energy_efficiency(
        row.sum_rate, config.p_max, config.n_t, config.power_model
    )
    if eval_channels.j_eves:
        worst, cert, flat = _leakage_metrics(eval_channels, solution, config, rng, n_samples)
        row.leakage_worst_sampled = float(np.max(worst))
        row.leakage_cert_min_eig = float(np.min(cert))
        row.leakage_kj = flat
        row.secrecy_rate = system.secrecy_rate(eval_channels, solution, worst)
        if sinr_target is not None:
            from .channels import sample_uncertainty
            from .linalg import RankError, rank_one_factor

            w_vecs = []
            for k in range(eval_channels.k_users):
                try:
                    w_vecs.append(rank_one_factor(solution.w[k], tol=1e-3))
                except RankError:
                    w_vecs.append(np.zeros(eval_channels.n_t, dtype=complex))
            count = 0
            total = 0
            sinr_max = -np.inf
            for j in range(eval_channels.j_eves):
                # one realized channel error per (trial, eavesdropper)
                delta = sample_uncertainty(
                    eval_channels.h_bar[j], eval_channels.eps[j], rng
                )
                for k in range(eval_channels.k_users):
                    sinr = system.eve_sinr(eval_channels, w_vecs[k], solution, j, delta)
                    sinr_max = max(sinr_max, sinr)
                    total += 1
                    # tolerance band keeps certified-feasible ties out of outage
                    if sinr > sinr_target * (1.0 + 1e-6) + 1e-9:
                        count += 1
            row.eve_sinr_max = sinr_max
            row.outage_count = count
            row.outage_total = total
    else:
        row.secrecy_rate = row.sum_rate


def run_point_trial(spec: ExperimentSpec, sweep_value, trial: int) -> list[ResultRow]:
    """All schemes for one (sweep point, trial); never raises, rows carry status."""
    config = spec.point_config(sweep_value)
    root = scenario_seed_tree(config, trial)
    geometry = sample_geometry(config, child_rng(root, 0))
    sinr_target = None
    if spec.scenario == "outage":
        sinr_target = 10.0 ** (float(sweep_value) / 10.0)

    rows: list[ResultRow] = []
    channels = build_channel_set(config, geometry, root)
    for scheme in spec.schemes:
        row = ResultRow(
            scenario=spec.scenario, scheme=scheme,
            sweep_value=float(sweep_value), trial=trial,
        )
        t0 = time.perf_counter()
        eval_rng = child_rng(root, _EVAL_TAG, _SCHEME_TAG[scheme])
        try:
            if scheme == "proposed":
                trace = run_ao(channels, config, child_rng(root, _SCHEME_TAG[scheme]))
                row.iterations = trace.iterations
                row.converged = trace.converged
                if trace.solution is None:
                    raise RuntimeError("; ".join(trace.flags) or "no solution")
                if spec.scenario == "convergence":
                    for rec in trace.records:
                        rows.append(
                            ResultRow(
                                scenario=spec.scenario, scheme=scheme,
                                sweep_value=float(rec.index), trial=trial,
                                sum_rate=rec.sum_rate, iterations=rec.index,
                                converged=trace.converged, wall_time=rec.wall_time,
                            )
                        )
                    continue
                _fill_solution_metrics(
                    row, channels, trace.solution, config, eval_rng,
                    spec.leakage_samples, sinr_target,
                )
            elif scheme == "nonrobust":
                nominal = dataclasses.replace(channels, eps=np.zeros_like(channels.eps))
                trace = run_ao(nominal, config, child_rng(root, _SCHEME_TAG[scheme]))
                row.iterations = trace.iterations
                row.converged = trace.converged
                if trace.solution is None:
                    raise RuntimeError("; ".join(trace.flags) or "no solution")
                # designed with the estimate treated as perfect, judged under
                # true errors inside the ball
                _fill_solution_metrics(
                    row, channels, trace.solution, config, eval_rng,
                    spec.leakage_samples, sinr_target,
                )
            elif scheme == "baseline1":
                b1 = baselines.solve_baseline1(
                    channels, config, child_rng(root, _SCHEME_TAG[scheme])
                )
                if not b1.feasible:
                    row.status = "infeasible"
                sol = b1.as_solution(config.n_t)
                _fill_solution_metrics(
                    row, channels, sol, config, eval_rng,
                    spec.leakage_samples, sinr_target,
                )
            elif scheme == "baseline2":
                direct = build_direct_channel_set(config, geometry, root)
                trace = baselines.solve_baseline2(
                    direct, config, child_rng(root, _SCHEME_TAG[scheme])
                )
                row.iterations = trace.iterations
                row.converged = trace.converged
                if trace.solution is None:
                    raise RuntimeError("; ".join(trace.flags) or "no solution")
                _fill_solution_metrics(
                    row, direct, trace.solution, config, eval_rng,
                    spec.leakage_samples, sinr_target,
                )
        except TrialInfeasible as exc:
            row.status = f"infeasible: {exc}"
        except Exception as exc:  # noqa: BLE001 - rows must record failures
            row.status = f"failed: {type(exc).__name__}: {exc}"
        row.wall_time = time.perf_counter() - t0
        rows.append(row)
    return rows


_WORKER_SPEC: ExperimentSpec | None = None


def _worker_init(spec: ExperimentSpec) -> None:
    global _WORKER_SPEC
    _WORKER_SPEC = spec


def _worker_run(task: tuple) -> list[ResultRow]:
    sweep_value, trial = task
    return run_point_trial(_WORKER_SPEC, sweep_value, trial)


def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    row_callback=None,
) -> tuple[list[ResultRow], list[dict]]:
    """Execute the full sweep x trial grid; deterministic row order.

    ``row_callback`` (if given) receives each task's rows as soon as they are
    available, already in schedule order, enabling incremental writing.
    """
    spec.validate()
    tasks = [(sv, t) for sv in spec.sweep for t in range(spec.trials)]
    all_rows: list[ResultRow] = []
    if workers <= 1:
        for task in tasks:
            rows = run_point_trial(spec, *task)
            all_rows.extend(rows)
            if row_callback:
                row_callback(rows)
    else:
        with Pool(processes=workers, initializer=_worker_init, initargs=(spec,)) as pool:
            for rows in pool.imap(_worker_run, tasks):
                all_rows.extend(rows)
                if row_callback:
                    row_callback(rows)
    return all_rows, summarize(all_rows)
