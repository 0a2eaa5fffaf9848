"""Rate, leakage, secrecy and feasibility evaluation.

This module is the objective and feasibility oracle for all optimization
stages: user rates in lifted trace form, eavesdropper capacities in both
log-det and quadratic form, the clamped secrecy rate, the energy-efficiency
metric, and a two-sided (certified + sampled) feasibility report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import robust
from .channels import ChannelSet, sample_uncertainty
from .config import PowerModel, SystemConfig
from .linalg import herm, min_eig, rank_one_factor


@dataclass(frozen=True)
class Solution:
    """One AO iterate: lifted beamformers, AN covariance and phase vector."""

    w: np.ndarray            # (K, N_t, N_t) PSD, ideally rank one
    z: np.ndarray            # (N_t, N_t) PSD
    v: np.ndarray            # (M,) unit-modulus phase entries
    v_lifted: np.ndarray | None = None   # (M, M) lifted matrix, if available
    slack: np.ndarray | None = None      # (K, J) S-procedure multipliers

    @property
    def total_power(self) -> float:
        return float(np.real(np.trace(self.z)) + sum(np.real(np.trace(wk)) for wk in self.w))

    def beamformers(self, tol: float = 1e-5) -> list[np.ndarray]:
        return [rank_one_factor(wk, tol) for wk in self.w]


def zero_solution(channels: ChannelSet) -> Solution:
    n_t, m = channels.n_t, channels.m_total
    return Solution(
        w=np.zeros((channels.k_users, n_t, n_t), dtype=complex),
        z=np.zeros((n_t, n_t), dtype=complex),
        v=np.ones(m, dtype=complex),
    )


# -- effective channels ------------------------------------------------------

def effective_user_channel(channels: ChannelSet, v: np.ndarray, k: int) -> np.ndarray:
    """G^H Phi^H h_k, the N_t-dim channel seen by user k through the IRSs."""
    return channels.g.conj().T @ (np.conj(v) * channels.h[k])


def m_matrix(channels: ChannelSet, v: np.ndarray, k: int) -> np.ndarray:
    """Rank-one user Gram matrix G^H Phi^H h_k h_k^H Phi G."""
    heff = effective_user_channel(channels, v, k)
    return np.outer(heff, heff.conj())


def m_matrices(channels: ChannelSet, v: np.ndarray) -> np.ndarray:
    return np.stack([m_matrix(channels, v, k) for k in range(channels.k_users)])


def l_matrix(channels: ChannelSet, k: int) -> np.ndarray:
    """diag(h_k^H) G, the M x N_t map used by the lifted phase formulation."""
    return channels.h[k].conj()[:, None] * channels.g


def eve_cascade(channels: ChannelSet, v: np.ndarray, j: int, delta_h: np.ndarray | None = None) -> np.ndarray:
    """(H_bar_j + Delta) Phi G, the N_r x N_t cascade to eavesdropper j."""
    h_j = channels.h_bar[j] if delta_h is None else channels.h_bar[j] + delta_h
    return (h_j * v[None, :]) @ channels.g


# -- rates and leakage -------------------------------------------------------

def rate_user(channels: ChannelSet, solution: Solution, k: int) -> float:
    """Achievable rate of user k in the lifted trace form (bits/s/Hz)."""
    mk = m_matrix(channels, solution.v, k)
    signal = float(np.real(np.trace(mk @ solution.w[k])))
    interference = sum(
        float(np.real(np.trace(mk @ solution.w[i])))
        for i in range(channels.k_users)
        if i != k
    )
    denom = float(np.real(np.trace(mk @ solution.z))) + channels.sigma2_l[k] + interference
    return float(np.log2(1.0 + max(signal, 0.0) / denom))


def sum_rate(channels: ChannelSet, solution: Solution) -> float:
    return sum(rate_user(channels, solution, k) for k in range(channels.k_users))


def leakage_capacity(
    channels: ChannelSet,
    solution: Solution,
    k: int,
    j: int,
    delta_h: np.ndarray | None = None,
) -> float:
    """log2 det(I + Q_j^-1 A W_k A^H) with A the (perturbed) eavesdropper cascade."""
    a = eve_cascade(channels, solution.v, j, delta_h)
    q = herm(a @ solution.z @ a.conj().T) + channels.sigma2_e[j] * np.eye(channels.n_r)
    s = herm(a @ solution.w[k] @ a.conj().T)
    _, logdet_q = np.linalg.slogdet(q)
    _, logdet_qs = np.linalg.slogdet(q + s)
    return float((logdet_qs - logdet_q) / np.log(2.0))


def leakage_capacity_quadratic(
    channels: ChannelSet,
    w_k: np.ndarray,
    solution: Solution,
    j: int,
    delta_h: np.ndarray | None = None,
) -> float:
    """log2(1 + w^H A^H Q^-1 A w): the rank-one specialization of the log-det form."""
    a = eve_cascade(channels, solution.v, j, delta_h)
    q = herm(a @ solution.z @ a.conj().T) + channels.sigma2_e[j] * np.eye(channels.n_r)
    aw = a @ w_k
    return float(np.log2(1.0 + np.real(aw.conj() @ np.linalg.solve(q, aw))))


def eve_sinr(
    channels: ChannelSet,
    w_k: np.ndarray,
    solution: Solution,
    j: int,
    delta_h: np.ndarray | None = None,
) -> float:
    """Post-interference-cancellation SINR of eavesdropper j on user k's stream."""
    a = eve_cascade(channels, solution.v, j, delta_h)
    q = herm(a @ solution.z @ a.conj().T) + channels.sigma2_e[j] * np.eye(channels.n_r)
    aw = a @ w_k
    return float(np.real(aw.conj() @ np.linalg.solve(q, aw)))


def secrecy_rate(
    channels: ChannelSet,
    solution: Solution,
    worst_leakages: np.ndarray,
) -> float:
    """sum_k [R_k - max_j C_{j,k}]^+ given precomputed worst-case leakages (K,J)."""
    worst = np.asarray(worst_leakages, dtype=float)
    total = 0.0
    for k in range(channels.k_users):
        ceiling = float(worst[k].max()) if worst.size else 0.0
        total += max(rate_user(channels, solution, k) - ceiling, 0.0)
    return total


def energy_efficiency(sum_rate_bits: float, p_max: float, n_t: int, model: PowerModel) -> float:
    """Sum-rate over total consumed power (bits/J/Hz), linear power model."""
    consumed = p_max / model.amp_efficiency + n_t * model.antenna_power
    consumed += model.static_power + model.irs_controller_power
    return sum_rate_bits / consumed


# -- feasibility -------------------------------------------------------------

@dataclass
class FeasibilityReport:
    power_ok: bool
    psd_ok: bool
    unit_modulus_ok: bool
    leakage_ok: bool
    power_margin: float                 # P - used power
    min_w_eig: float
    min_z_eig: float
    max_unit_modulus_dev: float
    cert_min_eig: np.ndarray            # (K, J) best-slack LMI min-eigenvalues
    sampled_worst_leakage: np.ndarray   # (K, J) max leakage over sampled Delta-H
    leakage_caps: np.ndarray            # (K, J)

    @property
    def all_ok(self) -> bool:
        return self.power_ok and self.psd_ok and self.unit_modulus_ok and self.leakage_ok


def check_feasibility(
    channels: ChannelSet,
    solution: Solution,
    config: SystemConfig,
    rng: np.random.Generator,
    n_samples: int = 200,
    boundary_fraction: float = 0.8,
    leakage_slack: float = 1e-3,
) -> FeasibilityReport:
    """Check C1-C4; C4 both LMI-certified and empirically over sampled errors.

    The sampled check emphasizes the sphere ||Delta||_F = eps (the generic
    binding point of the robust constraint) with ``boundary_fraction`` of the
    draws.
    """
    tau = config.tau_matrix()
    k_users, j_eves = channels.k_users, channels.j_eves

    used = solution.total_power
    power_margin = config.p_max - used
    power_ok = power_margin >= -1e-8 * config.p_max

    min_w = min((min_eig(wk) for wk in solution.w), default=0.0)
    min_z = min_eig(solution.z)
    psd_scale = max(1.0, config.p_max)
    psd_ok = min_w >= -1e-7 * psd_scale and min_z >= -1e-7 * psd_scale

    unit_dev = float(np.max(np.abs(np.abs(solution.v) - 1.0))) if solution.v.size else 0.0
    unit_modulus_ok = unit_dev <= 1e-9

    cert = np.zeros((k_users, j_eves))
    sampled = np.zeros((k_users, j_eves))
    leakage_ok = True
    n_boundary = int(round(boundary_fraction * n_samples))
    for j in range(j_eves):
        deltas = [
            sample_uncertainty(channels.h_bar[j], channels.eps[j], rng, boundary=i < n_boundary)
            for i in range(n_samples)
        ]
        for k in range(k_users):
            _, margin = robust.best_slack_margin(
                channels, solution.v, solution.w[k], solution.z, k, j, tau[k, j]
            )
            cert[k, j] = margin
            worst = max(leakage_capacity(channels, solution, k, j, d) for d in deltas)
            sampled[k, j] = worst
            if margin < -config.lmi_tol or worst > tau[k, j] + leakage_slack:
                leakage_ok = False

    return FeasibilityReport(
        power_ok=power_ok,
        psd_ok=psd_ok,
        unit_modulus_ok=unit_modulus_ok,
        leakage_ok=leakage_ok,
        power_margin=power_margin,
        min_w_eig=min_w,
        min_z_eig=min_z,
        max_unit_modulus_dev=unit_dev,
        cert_min_eig=cert,
        sampled_worst_leakage=sampled,
        leakage_caps=tau,
    )
