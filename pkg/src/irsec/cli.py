"""Command-line surface: run/validate experiment specs, demos, self-tests.

Exit codes: 0 success, 1 runtime failure, 2 spec error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError
from .experiments import (
    ExperimentSpec,
    SCENARIOS,
    rows_to_csv,
    rows_to_json,
    rows_to_timing_csv,
    run_experiment,
    summarize,
    summary_to_csv,
)

DEMO_TRIALS = 2


def _load_spec(path: str) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read spec file ({exc})") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return ExperimentSpec.from_dict(payload)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _apply_flags(spec: ExperimentSpec, args) -> ExperimentSpec:
    import dataclasses

    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    return dataclasses.replace(spec, **updates) if updates else spec


def _write_results(rows, summary, out_dir: str, fmt: str) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        (out / "results.csv").write_text(rows_to_csv(rows))
        written.append(str(out / "results.csv"))
        (out / "summary.csv").write_text(summary_to_csv(summary))
        written.append(str(out / "summary.csv"))
        (out / "timings.csv").write_text(rows_to_timing_csv(rows))
        written.append(str(out / "timings.csv"))
    else:
        (out / "results.json").write_text(rows_to_json(rows))
        written.append(str(out / "results.json"))
        (out / "summary.json").write_text(json.dumps(summary, indent=1, default=float) + "\n")
        written.append(str(out / "summary.json"))
    return written


def demo_spec(scenario: str, seed: int) -> ExperimentSpec:
    sweeps = {
        "convergence": (0,),
        "sumrate_vs_power": (10.0, 20.0, 30.0),
        "secrecy_vs_tau": (0.5, 1.0, 2.0, 4.0),
        "energy_efficiency": (2, 4, 6),
        "sumrate_vs_K": (1, 2, 3),
        "csi_uncertainty": (0.0, 0.05, 0.1),
        "outage": (-3.0, 0.0, 3.0),
        "multi_irs_split": (2, 5, 8),
    }
    schemes = {
        "convergence": ("proposed",),
        "outage": ("proposed", "nonrobust"),
        "sumrate_vs_power": ("proposed", "baseline1", "baseline2"),
    }.get(scenario, ("proposed", "baseline1"))
    overrides = {}
    if scenario == "multi_irs_split":
        overrides = {"irs_sizes": (10,), "irs_distances": (10.0, 10.0)}
    return ExperimentSpec(
        scenario=scenario,
        sweep=sweeps[scenario],
        trials=DEMO_TRIALS,
        seed=seed,
        schemes=schemes,
        config_overrides=overrides,
    )


def _selftest(seed: int) -> int:
    """Quick property suites: gradients, eigen reconstruction, AO monotonicity."""
    from . import beamforming as bf
    from . import channels as ch
    from . import phase as phs
    from . import system as sysm
    from .ao import run_ao
    from .config import SystemConfig
    from .conic import embed_hermitian
    from .linalg import eig_hermitian, herm, rank_one_factor

    rng = np.random.default_rng(seed)
    failures = []

    def check(name: str, ok: bool) -> None:
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    n = 5
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = herm(a)
    w, u = eig_hermitian(a)
    check(
        "eigen reconstruction",
        np.linalg.norm(u @ np.diag(w) @ u.conj().T - a) <= 1e-10 * (1 + np.linalg.norm(a)),
    )
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    xr = rank_one_factor(np.outer(x, x.conj()))
    check("rank-one factor round trip",
          np.linalg.norm(np.outer(xr, xr.conj()) - np.outer(x, x.conj())) <= 1e-8 * np.linalg.norm(x) ** 2)

    config = SystemConfig()
    _, chans = ch.draw_scenario(config, trial=0)
    m_mats = sysm.m_matrices(chans, np.exp(2j * np.pi * rng.uniform(size=chans.m_total)))
    w0 = np.stack([herm(np.eye(config.n_t) * 0.01) for _ in range(config.k_users)]).astype(complex)
    z0 = 0.01 * np.eye(config.n_t, dtype=complex)
    layout = embed_hermitian(config.n_t)
    ok_grad = True
    for _ in range(10):
        direction = herm(rng.standard_normal((config.n_t, config.n_t))
                         + 1j * rng.standard_normal((config.n_t, config.n_t)))
        hstep = 1e-6
        d_plus, _, _ = bf.d1_value_and_gradients(w0, z0 + hstep * direction, m_mats, chans.sigma2_l)
        d_minus, _, _ = bf.d1_value_and_gradients(w0, z0 - hstep * direction, m_mats, chans.sigma2_l)
        _, grad_z, _ = bf.d1_value_and_gradients(w0, z0, m_mats, chans.sigma2_l)
        fd = (d_plus - d_minus) / (2 * hstep)
        an = float(np.real(np.trace(grad_z.conj().T @ direction)))
        if abs(fd - an) > 1e-4 * max(1.0, abs(fd)):
            ok_grad = False
    check("rate-gradient finite differences", ok_grad)

    trace = run_ao(chans, config, np.random.default_rng(seed))
    rates = trace.sum_rates
    check("AO monotone sum-rate", all(b >= a - 1e-6 for a, b in zip(rates, rates[1:])))
    check("AO produced a solution", trace.solution is not None)
    if trace.solution is not None:
        gaps = [r.rank_gap for r in trace.records if np.isfinite(r.rank_gap)]
        check("lifted phase iterates near rank one", all(g <= 1e-3 for g in gaps))

    print(f"selftest: {5 + 1 - len(failures)}/6 suites passed" if failures else "selftest: all 6 suites passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsec",
        description="Robust secure IRS-assisted downlink experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec (JSON)")
    p_run.add_argument("spec", help="path to the experiment spec file")
    p_validate = sub.add_parser("validate", help="validate an experiment spec")
    p_validate.add_argument("spec", help="path to the experiment spec file")
    p_demo = sub.add_parser("demo", help="run a small built-in scenario")
    p_demo.add_argument("scenario", choices=SCENARIOS)
    sub.add_parser("selftest", help="run the built-in property suites")

    for p in (p_run, p_demo):
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    for p in (p_run, p_demo, p_validate):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)

    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            spec = _apply_flags(_load_spec(args.spec), args)
            spec.validate()
            print(f"spec ok: scenario={spec.scenario} sweep={list(spec.sweep)} "
                  f"trials={spec.trials} schemes={list(spec.schemes)}")
            return 0
        if args.command == "selftest":
            return _selftest(seed=0)
        if args.command == "run":
            spec = _apply_flags(_load_spec(args.spec), args)
        else:  # demo
            spec = demo_spec(args.scenario, seed=args.seed if args.seed is not None else 0)
            if args.trials is not None:
                import dataclasses

                spec = dataclasses.replace(spec, trials=args.trials)
    except ConfigError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2

    try:
        rows, summary = run_experiment(spec, workers=args.workers)
        written = _write_results(rows, summary, args.out, args.format)
        n_failed = sum(1 for r in rows if r.status != "ok")
        print(f"{len(rows)} rows ({n_failed} non-ok); wrote {', '.join(written)}")
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
