"""Alternating optimization driver: beamforming/AN block, then phase block.

Each outer iteration runs one SCA beamforming step at the current phases and
one penalized SCA phase step at the new (W, Z), then extracts the unit-modulus
phase vector. A phase update is accepted only if the extracted phases do not
reduce the sum-rate and keep a certified leakage margin; otherwise the
previous phases are retained, which stalls the relative-change criterion and
ends the loop. After convergence one extra beamforming solve runs at the
final phases so the returned solution carries solver-certified leakage LMIs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import beamforming as bf
from . import phase as ph
from . import robust, system
from .channels import ChannelSet
from .config import SystemConfig

PHASE_ACCEPT_RATE_SLACK = 1e-9   # tolerated sum-rate loss when accepting phases
PHASE_ACCEPT_LMI_TOL = 1e-6      # certified margin required of extracted phases
DIVERGENCE_GUARD = 1e-4          # a decrease beyond this flags a defect


class TrialInfeasible(RuntimeError):
    """No feasible initialization exists for this trial."""


@dataclass
class IterationRecord:
    index: int
    sum_rate: float
    sum_rate_after_beamforming: float
    surrogate_beamforming: float
    surrogate_phase: float
    rank_gap: float
    phase_accepted: bool
    beamforming_status: str
    phase_status: str
    wall_time: float
    rho: float
    pre_projection_dev: float = np.nan
    recovery: dict = field(default_factory=dict)


@dataclass
class AoTrace:
    records: list[IterationRecord] = field(default_factory=list)
    solution: system.Solution | None = None
    converged: bool = False
    iterations: int = 0
    flags: list[str] = field(default_factory=list)
    rank_one_fraction: float = np.nan   # how often the raw SDP solution was rank one
    final_lifted: np.ndarray | None = None      # last accepted lifted phase matrix
    final_rank_gap: float = np.nan
    final_pre_projection_dev: float = np.nan

    @property
    def sum_rates(self) -> list[float]:
        return [r.sum_rate for r in self.records]


def _phase_margins_ok(
    channels: ChannelSet,
    v: np.ndarray,
    w: np.ndarray,
    z: np.ndarray,
    config: SystemConfig,
) -> bool:
    tau = config.tau_matrix()
    for k in range(channels.k_users):
        for j in range(channels.j_eves):
            _, margin = robust.best_slack_margin(channels, v, w[k], z, k, j, tau[k, j])
            if margin < -PHASE_ACCEPT_LMI_TOL:
                return False
    return True


def run_ao(
    channels: ChannelSet,
    config: SystemConfig,
    rng: np.random.Generator,
    optimize_phases: bool = True,
) -> AoTrace:
    """Run Algorithm-style alternating optimization to a stationary point.

    ``optimize_phases=False`` keeps the initial phases fixed and runs the
    beamforming block only (used by the no-IRS baseline at Phi = I).
    """
    trace = AoTrace()
    m = channels.m_total
    if optimize_phases:
        v = np.exp(2j * np.pi * rng.uniform(size=m))
    else:
        v = np.ones(m, dtype=complex)

    iterate = bf.initial_iterate(channels, config, v)
    rate_prev = iterate.sum_rate
    rank_one_hits: list[bool] = []

    if config.max_ao_iter == 0:
        trace.solution = system.Solution(
            w=iterate.w, z=iterate.z, v=v, slack=iterate.p
        )
        trace.converged = False
        return trace

    rho_extra = 1.0  # further tightening applied when the rank gap stagnates
    for t in range(1, config.max_ao_iter + 1):
        # penalty continuation: weight 1/(2 rho) grows geometrically until the
        # terminal (Table-style) factor is reached, then stays there
        rho = max(
            max(config.rho, config.rho_init * config.rho_decay ** (t - 1)) * rho_extra,
            1e-8,
        )
        t0 = time.perf_counter()
        try:
            iterate_new = bf.solve_beamforming_step(channels, v, iterate, config)
        except bf.StageError as exc:
            trace.flags.append(f"beamforming failure at iteration {t}: {exc}")
            break
        rank_one_hits.extend(iterate_new.recovery.get("already_rank_one", []))
        rate_bf = iterate_new.sum_rate
        if rate_bf < rate_prev - DIVERGENCE_GUARD:
            trace.flags.append(
                f"sum-rate dropped by {rate_prev - rate_bf:.3e} in beamforming step {t}"
            )
            break
        if rate_bf < rate_prev - 1e-6:
            # stalled within tolerance: keep the previous iterate and stop
            trace.flags.append("beamforming stall")
            trace.converged = True
            break
        iterate = iterate_new

        phase_accepted = False
        surrogate_phase = np.nan
        rank_gap = np.nan
        pre_dev = np.nan
        phase_status = "skipped"
        rate_t = rate_bf
        if optimize_phases and m > 1:
            v_ref = np.outer(v, v.conj())
            ref = ph.PhaseIterate(
                v_lifted=v_ref, p=iterate.p, rank_gap=0.0, surrogate=np.nan
            )
            try:
                step = ph.solve_phase_step(channels, iterate.w, iterate.z, ref, config, rho=rho)
                surrogate_phase = step.surrogate
                rank_gap = step.rank_gap
                phase_status = step.solver_status
                v_new, pre_dev = ph.extract_phases(step.v_lifted, config.rank_tol)
                candidate = system.Solution(w=iterate.w, z=iterate.z, v=v_new)
                rate_new = system.sum_rate(channels, candidate)
                if rate_new >= rate_bf - PHASE_ACCEPT_RATE_SLACK and _phase_margins_ok(
                    channels, v_new, iterate.w, iterate.z, config
                ):
                    v = v_new
                    rate_t = rate_new
                    phase_accepted = True
                    trace.final_lifted = step.v_lifted
                    trace.final_rank_gap = step.rank_gap
                    trace.final_pre_projection_dev = pre_dev
            except ph.RankGapError as exc:
                phase_status = f"rank_gap ({exc.gap:.2e})"
                rho_extra *= 0.5
            except RuntimeError as exc:
                phase_status = f"failed ({exc})"

        trace.records.append(
            IterationRecord(
                index=t,
                sum_rate=rate_t,
                sum_rate_after_beamforming=rate_bf,
                surrogate_beamforming=iterate.surrogate,
                surrogate_phase=surrogate_phase,
                rank_gap=rank_gap,
                phase_accepted=phase_accepted,
                beamforming_status=iterate.solver_status,
                phase_status=phase_status,
                wall_time=time.perf_counter() - t0,
                rho=rho,
                pre_projection_dev=pre_dev,
                recovery=iterate.recovery,
            )
        )
        trace.iterations = t
        denom = max(abs(rate_prev), 1e-12)
        if (rate_t - rate_prev) / denom <= config.eps_conv and t > 1:
            trace.converged = True
            rate_prev = rate_t
            break
        rate_prev = rate_t

    # final refinement: certify (W, Z, p) at the phases actually returned
    try:
        final = bf.solve_beamforming_step(channels, v, iterate, config, strict_descent=False)
        if final.solver_status != "rejected" and final.sum_rate >= rate_prev - 1e-6:
            iterate = final
    except bf.StageError as exc:
        trace.flags.append(f"final refinement failed: {exc}")

    trace.rank_one_fraction = (
        float(np.mean(rank_one_hits)) if rank_one_hits else np.nan
    )
    trace.solution = system.Solution(
        w=iterate.w,
        z=iterate.z,
        v=v,
        v_lifted=trace.final_lifted if trace.final_lifted is not None
        else np.outer(v, v.conj()),
        slack=iterate.p,
    )
    return trace


@dataclass
class StationarityReport:
    beamforming_improvement: float
    phase_improvement: float
    threshold: float

    @property
    def is_stationary(self) -> bool:
        return (
            self.beamforming_improvement <= self.threshold
            and self.phase_improvement <= self.threshold
        )


def stationarity_report(
    trace: AoTrace,
    channels: ChannelSet,
    config: SystemConfig,
    threshold: float = 1e-5,
) -> StationarityReport:
    """Fixed-point check: re-solve both blocks once at the final point.

    Reports the sum-rate improvements; at a stationary point both are at
    noise level.
    """
    sol = trace.solution
    iterate = bf.BeamformingIterate(
        w=sol.w, z=sol.z, p=sol.slack, surrogate=np.nan,
        sum_rate=system.sum_rate(channels, sol),
    )
    step = bf.solve_beamforming_step(channels, sol.v, iterate, config)
    bf_gain = step.sum_rate - iterate.sum_rate

    phase_gain = 0.0
    if channels.m_total > 1:
        ref = ph.PhaseIterate(
            v_lifted=np.outer(sol.v, sol.v.conj()), p=sol.slack,
            rank_gap=0.0, surrogate=np.nan,
        )
        try:
            pstep = ph.solve_phase_step(channels, step.w, step.z, ref, config)
            v_new, _ = ph.extract_phases(pstep.v_lifted, config.rank_tol)
            cand = system.Solution(w=step.w, z=step.z, v=v_new)
            phase_gain = system.sum_rate(channels, cand) - step.sum_rate
        except (ph.RankGapError, RuntimeError):
            phase_gain = np.nan
    return StationarityReport(
        beamforming_improvement=float(bf_gain),
        phase_improvement=float(phase_gain),
        threshold=threshold,
    )
