"""Penalized SCA step for the lifted IRS phase matrix at fixed (W, Z).

The unit-modulus phase design is lifted to a PSD matrix V with unit diagonal;
rank(V) = 1 is rewritten as ||V||_* - ||V||_2 <= 0 and moved into the
objective with weight 1/(2 rho). Under the PSD and unit-diagonal constraints
the nuclear norm is the constant Tr(V) = M, so the d.c. structure lives
entirely in the spectral-norm term, linearized at the leading eigenvector of
the reference. N2 stays exact as concave-log hypograph terms, making each
accepted step a descent step of the penalized objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import conic, robust, system
from .channels import ChannelSet
from .config import SystemConfig
from .conic import LN2, ConicProblem, LogTerm, PsdBlock, embed_hermitian
from .linalg import herm, nuclear_and_spectral_norm

logger = logging.getLogger(__name__)

EIG_DEGENERACY_GAP = 1e-8


class RankGapError(RuntimeError):
    """The lifted iterate is not numerically rank one.

    The nuclear-minus-spectral gap exceeded the configured threshold; a
    smaller penalty factor rho (stronger penalty weight) closes it.
    """

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


@dataclass
class PhaseIterate:
    v_lifted: np.ndarray       # (M, M) PSD with unit diagonal
    p: np.ndarray              # (K, J)
    rank_gap: float            # ||V||_* - ||V||_2
    surrogate: float
    solver_status: str = "init"


@dataclass
class _Layout:
    m: int
    k_users: int
    j_eves: int

    @property
    def m2(self) -> int:
        return self.m * self.m

    @property
    def v_coords(self) -> np.ndarray:
        return np.arange(self.m2)

    def slack_index(self, k: int, j: int) -> int:
        return self.m2 + k * self.j_eves + j

    @property
    def n_vars(self) -> int:
        return self.m2 + self.k_users * self.j_eves


def _lifted_totals_matrix(channels: ChannelSet, q: np.ndarray, k: int) -> np.ndarray:
    """Conjugated L_k Q L_k^H so that its Hermitian functional equals Tr(. V^T)."""
    l_k = system.l_matrix(channels, k)
    return herm(np.conj(l_k @ q @ l_k.conj().T))


def d2tilde_value_and_gradient(
    v_lifted: np.ndarray,
    w: np.ndarray,
    z: np.ndarray,
    channels: ChannelSet,
    rho: float,
) -> tuple[float, np.ndarray]:
    """D2 + spectral-norm/(2 rho) and its gradient at V.

    The spectral-norm subgradient is the leading eigenvector outer product;
    a (near-)degenerate leading eigenvalue is logged, any leading eigenvector
    being a valid subgradient choice.
    """
    k_users = channels.k_users
    d2 = 0.0
    grad = np.zeros_like(v_lifted)
    for k in range(k_users):
        q_int = z + sum(w[i] for i in range(k_users) if i != k)
        a_int = _lifted_totals_matrix(channels, q_int, k)
        denom = float(np.real(np.sum(a_int.conj() * v_lifted))) + float(channels.sigma2_l[k])
        d2 -= np.log2(denom)
        grad -= a_int / (LN2 * denom)
    lam, u = np.linalg.eigh(herm(v_lifted))
    if lam.size > 1 and lam[-1] - lam[-2] < EIG_DEGENERACY_GAP * max(1.0, lam[-1]):
        logger.info("near-degenerate leading eigenvalue in spectral-norm subgradient")
    lead = u[:, -1]
    grad += np.outer(lead, lead.conj()) / (2.0 * rho)
    value = d2 + lam[-1] / (2.0 * rho)
    return value, herm(grad)


def penalized_objective(
    v_lifted: np.ndarray,
    w: np.ndarray,
    z: np.ndarray,
    channels: ChannelSet,
    rho: float,
) -> float:
    """(N2 - D2) + (||V||_* - ||V||_2)/(2 rho), the true penalized objective."""
    k_users = channels.k_users
    val = 0.0
    for k in range(k_users):
        q_tot = z + sum(w[i] for i in range(k_users))
        q_int = q_tot - w[k]
        a_tot = _lifted_totals_matrix(channels, q_tot, k)
        a_int = _lifted_totals_matrix(channels, q_int, k)
        tot = float(np.real(np.sum(a_tot.conj() * v_lifted))) + float(channels.sigma2_l[k])
        intf = float(np.real(np.sum(a_int.conj() * v_lifted))) + float(channels.sigma2_l[k])
        val += -np.log2(tot) + np.log2(intf)
    nuc, spec = nuclear_and_spectral_norm(v_lifted)
    return val + (nuc - spec) / (2.0 * rho)


def _phase_leakage_blocks(
    channels: ChannelSet,
    w: np.ndarray,
    z: np.ndarray,
    tau: np.ndarray,
    layout: _Layout,
    herm_m,
) -> list[PsdBlock]:
    """Lifted C4 LMIs: P_kj + S_j (R_k o V) S_j^H, affine in (V, p_kj)."""
    basis = herm_m.basis()
    n_r, m = channels.n_r, channels.m_total
    blocks = []
    for j in range(channels.j_eves):
        s_full = robust.s_matrix(channels, j)
        for k in range(channels.k_users):
            r_op = robust.RkOperator.from_matrix(
                robust.rk_matrix(channels, w[k], z, tau[k, j])
            )
            core = r_op.hadamard_core
            had = basis * core[None, :, :]
            a_scale = robust.leakage_scale(channels, j, tau[k, j])
            if channels.eps[j] > 0.0:
                coeff_v = np.einsum("ab,tbc,dc->tad", s_full, had, s_full.conj())
                const = np.zeros((n_r + m, n_r + m), dtype=complex)
                const[:n_r, :n_r] = a_scale * np.eye(n_r)
                slack_coeff = np.diag(
                    np.concatenate([-np.ones(n_r), np.full(m, channels.eps[j] ** -2.0)])
                ).astype(complex)
                var_idx = np.concatenate([layout.v_coords, [layout.slack_index(k, j)]])
                coeffs = np.concatenate([coeff_v, slack_coeff[None]])
                blocks.append(
                    PsdBlock(n_r + m, const, var_idx, coeffs, label=f"c4v[{k},{j}]")
                )
            else:
                hbar = channels.h_bar[j]
                coeff_v = np.einsum("ab,tbc,dc->tad", hbar, had, hbar.conj())
                const = a_scale * np.eye(n_r, dtype=complex)
                blocks.append(
                    PsdBlock(n_r, const, layout.v_coords, coeff_v, label=f"c4vnom[{k},{j}]")
                )
    return blocks


def build_phase_subproblem(
    channels: ChannelSet,
    w: np.ndarray,
    z: np.ndarray,
    v_ref: np.ndarray,
    config: SystemConfig,
    rho: float | None = None,
) -> tuple[ConicProblem, _Layout]:
    """Convex lifted phase subproblem at reference V_ref."""
    rho = config.rho if rho is None else rho
    layout = _Layout(channels.m_total, channels.k_users, channels.j_eves)
    herm_m = embed_hermitian(channels.m_total)
    tau = config.tau_matrix()

    _, grad = d2tilde_value_and_gradient(v_ref, w, z, channels, rho)

    c = np.zeros(layout.n_vars)
    # nuclear norm of a PSD V is Tr(V); with unit diagonal it is constant but
    # kept so reported surrogates match the penalized objective
    c[layout.v_coords] = herm_m.functional(
        np.eye(channels.m_total, dtype=complex) / (2.0 * rho)
    )
    c[layout.v_coords] -= herm_m.functional(grad)

    log_terms = []
    for k in range(channels.k_users):
        q_tot = z + sum(w[i] for i in range(channels.k_users))
        a_tot = _lifted_totals_matrix(channels, q_tot, k)
        lin = np.zeros(layout.n_vars)
        lin[layout.v_coords] = herm_m.functional(a_tot)
        log_terms.append(LogTerm(weight=1.0 / LN2, lin=lin, offset=float(channels.sigma2_l[k])))

    a_eq = np.zeros((channels.m_total, layout.n_vars))
    for i in range(channels.m_total):
        a_eq[i, layout.v_coords[i]] = 1.0
    b_eq = np.ones(channels.m_total)

    basis = herm_m.basis()
    psd_blocks = [
        PsdBlock(channels.m_total,
                 np.zeros((channels.m_total, channels.m_total), complex),
                 layout.v_coords, basis, label="V")
    ]
    psd_blocks.extend(_phase_leakage_blocks(channels, w, z, tau, layout, herm_m))

    lb = np.full(layout.n_vars, -np.inf)
    ub = np.full(layout.n_vars, np.inf)
    for k in range(channels.k_users):
        for j in range(channels.j_eves):
            lb[layout.slack_index(k, j)] = 0.0
            if channels.eps[j] == 0.0:
                ub[layout.slack_index(k, j)] = 0.0

    problem = ConicProblem(
        n_vars=layout.n_vars,
        c=c,
        psd_blocks=psd_blocks,
        log_terms=log_terms,
        a_eq=a_eq,
        b_eq=b_eq,
        lb=lb,
        ub=ub,
    )
    return problem, layout


def solve_phase_step(
    channels: ChannelSet,
    w: np.ndarray,
    z: np.ndarray,
    reference: PhaseIterate,
    config: SystemConfig,
    rho: float | None = None,
) -> PhaseIterate:
    """One penalized SCA step on the lifted phase matrix."""
    rho = config.rho if rho is None else rho
    problem, layout = build_phase_subproblem(
        channels, w, z, reference.v_lifted, config, rho=rho
    )
    sol = conic.solve(problem, config.solver)
    if not sol.ok:
        raise RuntimeError(f"phase subproblem failed: {sol.raw_status}")
    herm_m = embed_hermitian(channels.m_total)
    v_lifted = herm(herm_m.from_reals(sol.x[layout.v_coords]))
    p = np.zeros((channels.k_users, channels.j_eves))
    for k in range(channels.k_users):
        for j in range(channels.j_eves):
            p[k, j] = sol.x[layout.slack_index(k, j)]
    nuc, spec = nuclear_and_spectral_norm(v_lifted)
    return PhaseIterate(
        v_lifted=v_lifted,
        p=p,
        rank_gap=nuc - spec,
        surrogate=sol.objective,
        solver_status=sol.status,
    )


def extract_phases(
    v_lifted: np.ndarray,
    rank_tol: float = 1e-4,
) -> tuple[np.ndarray, float]:
    """Unit-modulus phase vector from a (near) rank-one lifted matrix.

    Returns (v, pre-projection modulus deviation). Raises
    :class:`RankGapError` when the nuclear-minus-spectral gap exceeds
    rank_tol * ||V||_2; entries are projected to the unit circle (zeros map
    to 1) and the global phase is fixed by a real-positive first entry.
    """
    nuc, spec = nuclear_and_spectral_norm(v_lifted)
    gap = nuc - spec
    if spec == 0.0 or gap > rank_tol * spec:
        raise RankGapError(
            f"lifted matrix is not rank one: gap {gap:.3e} > {rank_tol:.1e} * {spec:.3e}",
            gap,
        )
    lam, u = np.linalg.eigh(herm(v_lifted))
    v = np.sqrt(max(lam[-1], 0.0)) * u[:, -1]
    pre_dev = float(np.max(np.abs(np.abs(v) - 1.0)))
    mags = np.abs(v)
    v = np.where(mags > 0, v / np.where(mags > 0, mags, 1.0), 1.0 + 0j)
    pivot = v[0]
    if abs(pivot) > 0:
        v = v * (pivot.conjugate() / abs(pivot))
    return v, pre_dev
