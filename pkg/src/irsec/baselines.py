"""Comparison schemes: fixed-direction power allocation and the no-IRS system.

Baseline 1 keeps maximum-ratio-transmission directions, an isotropic AN
covariance and one random phase draw per trial, optimizing only the scalar
powers (per-user and AN) under the same robust leakage LMIs; the allocation
is convex in the scalars once directions are fixed, so it is solved exactly
with the shared conic machinery (a short SCA loop handles the d.c. rate).

Baseline 2 removes the IRSs: users fall back to blocked (NLoS) direct links,
eavesdroppers keep LoS direct links, and the beamforming block runs alone on
a ChannelSet with G = I, the IRS dimension replaced by the antenna count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic, robust, system
from .ao import AoTrace, run_ao
from .channels import ChannelSet
from .config import SystemConfig
from .conic import LN2, ConicProblem, LogTerm, PsdBlock


@dataclass
class Baseline1Solution:
    rho_power: np.ndarray     # (K,) per-user powers
    p_an: float               # AN power
    directions: np.ndarray    # (K, N_t) unit MRT vectors
    v: np.ndarray             # (M,) random phases used
    slack: np.ndarray         # (K, J)
    sum_rate: float
    feasible: bool

    def as_solution(self, n_t: int) -> system.Solution:
        k = self.directions.shape[0]
        w = np.stack(
            [self.rho_power[i] * np.outer(self.directions[i], self.directions[i].conj())
             for i in range(k)]
        )
        z = (self.p_an / n_t) * np.eye(n_t, dtype=complex)
        return system.Solution(w=w, z=z, v=self.v, slack=self.slack)


def _scalar_allocation_problem(
    channels: ChannelSet,
    v: np.ndarray,
    dirs: np.ndarray,
    rho_ref: np.ndarray,
    p_an_ref: float,
    config: SystemConfig,
) -> ConicProblem:
    """SCA subproblem in (rho_1..rho_K, P_an, slacks) at fixed directions."""
    k_users = channels.k_users
    j_eves = channels.j_eves
    n_t = channels.n_t
    tau = config.tau_matrix()
    m_mats = system.m_matrices(channels, v)
    u_mats = np.stack([np.outer(dirs[i], dirs[i].conj()) for i in range(k_users)])

    # gain[i, j] = Tr(U_i M_j); an_gain[j] = Tr(M_j)/N_t
    gain = np.real(np.einsum("iab,jba->ij", u_mats, m_mats))
    an_gain = np.real(np.einsum("jaa->j", m_mats)) / n_t

    n_vars = k_users + 1 + k_users * j_eves

    def slack_idx(k: int, j: int) -> int:
        return k_users + 1 + k * j_eves + j

    denom_ref = np.empty(k_users)
    for j in range(k_users):
        denom_ref[j] = (
            p_an_ref * an_gain[j]
            + channels.sigma2_l[j]
            + sum(rho_ref[i] * gain[i, j] for i in range(k_users) if i != j)
        )

    # objective: N1 exact (log terms) minus tangent of D1 in the scalars
    c = np.zeros(n_vars)
    for j in range(k_users):
        c[k_users] -= an_gain[j] / (LN2 * denom_ref[j])
        for i in range(k_users):
            if i != j:
                c[i] -= gain[i, j] / (LN2 * denom_ref[j])
    c *= -1.0  # gradients of D1 are negative of the above; minimize N1 - <grad, x>

    log_terms = []
    for j in range(k_users):
        lin = np.zeros(n_vars)
        lin[:k_users] = gain[:, j]
        lin[k_users] = an_gain[j]
        log_terms.append(LogTerm(weight=1.0 / LN2, lin=lin, offset=float(channels.sigma2_l[j])))

    power_row = np.zeros(n_vars)
    power_row[: k_users + 1] = 1.0

    psd_blocks = []
    phi_g = v[:, None] * channels.g
    n_r, m = channels.n_r, channels.m_total
    for j in range(j_eves):
        s_full = robust.s_matrix(channels, j)
        for k in range(k_users):
            gamma = 2.0 ** tau[k, j] - 1.0
            a_scale = robust.leakage_scale(channels, j, tau[k, j])
            if channels.eps[j] > 0.0:
                e_mat = s_full @ phi_g
                ee = e_mat @ e_mat.conj().T
                eue = e_mat @ u_mats[k] @ e_mat.conj().T
                const = np.zeros((n_r + m, n_r + m), dtype=complex)
                const[:n_r, :n_r] = a_scale * np.eye(n_r)
                slack_coeff = np.diag(
                    np.concatenate([-np.ones(n_r), np.full(m, channels.eps[j] ** -2.0)])
                ).astype(complex)
                var_idx = np.array([k, k_users, slack_idx(k, j)])
                coeffs = np.stack([-eue, (gamma / n_t) * ee, slack_coeff])
                psd_blocks.append(PsdBlock(n_r + m, const, var_idx, coeffs, label=f"b1c4[{k},{j}]"))
            else:
                e_mat = channels.h_bar[j] @ phi_g
                ee = e_mat @ e_mat.conj().T
                eue = e_mat @ u_mats[k] @ e_mat.conj().T
                const = a_scale * np.eye(n_r, dtype=complex)
                var_idx = np.array([k, k_users])
                coeffs = np.stack([-eue, (gamma / n_t) * ee])
                psd_blocks.append(PsdBlock(n_r, const, var_idx, coeffs, label=f"b1c4nom[{k},{j}]"))

    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    for k in range(k_users):
        for j in range(j_eves):
            if channels.eps[j] == 0.0:
                ub[slack_idx(k, j)] = 0.0

    return ConicProblem(
        n_vars=n_vars,
        c=c,
        psd_blocks=psd_blocks,
        log_terms=log_terms,
        a_ub=power_row[None, :],
        b_ub=np.array([config.p_max]),
        lb=lb,
        ub=ub,
    )


def solve_baseline1(
    channels: ChannelSet,
    config: SystemConfig,
    rng: np.random.Generator,
    max_passes: int = 20,
) -> Baseline1Solution:
    """MRT directions, isotropic AN, random phases; exact scalar allocation."""
    k_users = channels.k_users
    v = np.exp(2j * np.pi * rng.uniform(size=channels.m_total))
    dirs = np.zeros((k_users, channels.n_t), dtype=complex)
    for k in range(k_users):
        heff = system.effective_user_channel(channels, v, k)
        norm = np.linalg.norm(heff)
        dirs[k] = heff / norm if norm > 0 else 0.0

    # feasibility back-off of an equal split, as in the main initialization
    rho = np.full(k_users, 0.5 * config.p_max / k_users)
    p_an = 0.5 * config.p_max
    tau = config.tau_matrix()

    def feasible(scale: float) -> tuple[bool, np.ndarray]:
        slack = np.zeros((k_users, channels.j_eves))
        z = (scale * p_an / channels.n_t) * np.eye(channels.n_t, dtype=complex)
        for k in range(k_users):
            wk = scale * rho[k] * np.outer(dirs[k], dirs[k].conj())
            for j in range(channels.j_eves):
                p_kj, margin = robust.best_slack_margin(channels, v, wk, z, k, j, tau[k, j])
                slack[k, j] = p_kj
                if margin < -1e-9:
                    return False, slack
        return True, slack

    scale = 1.0
    ok, slack = feasible(scale)
    if not ok and channels.j_eves:
        lo, hi = 0.0, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            ok_mid, slack_mid = feasible(mid)
            if ok_mid:
                lo, slack = mid, slack_mid
            else:
                hi = mid
        scale = lo
    rho = rho * scale
    p_an = p_an * scale

    sol = Baseline1Solution(
        rho_power=rho, p_an=p_an, directions=dirs, v=v, slack=slack,
        sum_rate=0.0, feasible=scale > 0.0,
    )
    if not sol.feasible:
        # no positive power satisfies the caps along these directions
        sol.rho_power = np.zeros(k_users)
        sol.p_an = 0.0
        sol.sum_rate = 0.0
        return sol

    rate_prev = system.sum_rate(channels, sol.as_solution(channels.n_t))
    for _ in range(max_passes):
        problem = _scalar_allocation_problem(channels, v, dirs, rho, p_an, config)
        res = conic.solve(problem, config.solver)
        if not res.ok:
            break
        rho_new = np.maximum(res.x[:k_users], 0.0)
        p_an_new = max(float(res.x[k_users]), 0.0)
        cand = Baseline1Solution(
            rho_power=rho_new, p_an=p_an_new, directions=dirs, v=v,
            slack=res.x[k_users + 1:].reshape(k_users, channels.j_eves)
            if channels.j_eves else np.zeros((k_users, 0)),
            sum_rate=0.0, feasible=True,
        )
        rate_new = system.sum_rate(channels, cand.as_solution(channels.n_t))
        if rate_new < rate_prev - 1e-9:
            break
        rho, p_an, slack = cand.rho_power, cand.p_an, cand.slack
        if rate_new - rate_prev <= 1e-6 * max(rate_prev, 1.0):
            rate_prev = rate_new
            break
        rate_prev = rate_new

    sol = Baseline1Solution(
        rho_power=rho, p_an=p_an, directions=dirs, v=v, slack=slack,
        sum_rate=rate_prev, feasible=True,
    )
    return sol


def solve_baseline2(
    direct_channels: ChannelSet,
    config: SystemConfig,
    rng: np.random.Generator,
) -> AoTrace:
    """No-IRS scheme: the beamforming block alone on the direct-link system."""
    return run_ao(direct_channels, config, rng, optimize_phases=False)
