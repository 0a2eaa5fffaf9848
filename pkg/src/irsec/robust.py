"""Robust leakage constraints as finite LMIs (S-procedure form).

The semi-infinite worst-case leakage constraint over the Frobenius ball of
channel errors is equivalent to one (N_r+M) x (N_r+M) LMI per (user,
eavesdropper) pair with a nonnegative multiplier p:

    blkdiag([sigma_e^2 (2^tau - 1) - p] I_Nr, p eps^-2 I_M)
        + S_j Phi R_k Phi^H S_j^H  >= 0,

with S_j = [H_bar_j; I_M] and R_k = G[(2^tau - 1) Z - W_k] G^H. Since
Phi R Phi^H = R o (v v^H) entrywise, the lifted phase form replaces v v^H by V
and stays affine in V. The eps = 0 uncertainty set degenerates to the single
nominal constraint at Delta-H = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .channels import ChannelSet, sample_uncertainty
from .linalg import herm, min_eig, rank_one_factor, svd_general

SVD_TRUNCATION_RTOL = 1e-12


def rk_matrix(channels: ChannelSet, w_k: np.ndarray, z: np.ndarray, tau_kj: float) -> np.ndarray:
    """R_k = G [(2^tau - 1) Z - W_k] G^H, the M x M core of the leakage LMI."""
    inner = (2.0 ** tau_kj - 1.0) * z - w_k
    return herm(channels.g @ inner @ channels.g.conj().T)


def s_matrix(channels: ChannelSet, j: int) -> np.ndarray:
    """S_j = [H_bar_j; I_M], stacking the channel estimate over the identity."""
    m = channels.m_total
    return np.vstack([channels.h_bar[j], np.eye(m, dtype=complex)])


@dataclass(frozen=True)
class RkOperator:
    """Truncated SVD factors of R_k used by the lifted phase assembly.

    ``left[i] @ right[i]^H`` sums back to R_k within the truncation tolerance;
    ``hadamard_core`` is that reconstruction, so the lifted constraint block is
    S_j (hadamard_core o V) S_j^H.
    """

    left: np.ndarray   # (r, M) rows sigma_i * u_i
    right: np.ndarray  # (r, M) rows v_i

    @staticmethod
    def from_matrix(r_k: np.ndarray, rtol: float = SVD_TRUNCATION_RTOL) -> "RkOperator":
        u, s, v = svd_general(r_k)
        if s.size == 0 or s[0] == 0.0:
            return RkOperator(left=np.zeros((0, r_k.shape[0]), dtype=complex),
                              right=np.zeros((0, r_k.shape[0]), dtype=complex))
        keep = s > rtol * s[0]
        return RkOperator(left=(u[:, keep] * s[keep]).T, right=v[:, keep].T)

    @property
    def rank(self) -> int:
        return self.left.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.left.T @ self.right.conj()

    @property
    def hadamard_core(self) -> np.ndarray:
        return self.reconstruct()


def leakage_scale(channels: ChannelSet, j: int, tau_kj: float) -> float:
    """sigma_e^2 (2^tau - 1), the constant top-left weight of the LMI."""
    return float(channels.sigma2_e[j] * (2.0 ** tau_kj - 1.0))


def c4_block_beamforming(
    channels: ChannelSet,
    v: np.ndarray,
    w_k: np.ndarray,
    z: np.ndarray,
    p: float,
    k: int,
    j: int,
    tau_kj: float,
) -> np.ndarray:
    """Numeric value of the robust-leakage LMI block at a given point."""
    if channels.eps[j] == 0.0:
        raise ValueError("eps = 0 has no S-procedure block; use nominal_block")
    r = rk_matrix(channels, w_k, z, tau_kj)
    core = r * np.outer(v, v.conj())
    s = s_matrix(channels, j)
    block = herm(s @ core @ s.conj().T)
    a = leakage_scale(channels, j, tau_kj)
    n_r, m = channels.n_r, channels.m_total
    block[:n_r, :n_r] += (a - p) * np.eye(n_r)
    block[n_r:, n_r:] += (p / channels.eps[j] ** 2) * np.eye(m)
    return block


def c4_block_phase(
    channels: ChannelSet,
    w_k: np.ndarray,
    z: np.ndarray,
    v_lifted: np.ndarray,
    p: float,
    k: int,
    j: int,
    tau_kj: float,
    rk_op: RkOperator | None = None,
) -> np.ndarray:
    """Lifted-V value of the same LMI; equals the beamforming form at V = v v^H."""
    if channels.eps[j] == 0.0:
        raise ValueError("eps = 0 has no S-procedure block; use nominal_block")
    if rk_op is None:
        rk_op = RkOperator.from_matrix(rk_matrix(channels, w_k, z, tau_kj))
    core = rk_op.hadamard_core * v_lifted
    s = s_matrix(channels, j)
    block = herm(s @ core @ s.conj().T)
    a = leakage_scale(channels, j, tau_kj)
    n_r, m = channels.n_r, channels.m_total
    block[:n_r, :n_r] += (a - p) * np.eye(n_r)
    block[n_r:, n_r:] += (p / channels.eps[j] ** 2) * np.eye(m)
    return block


def nominal_block(
    channels: ChannelSet,
    v: np.ndarray,
    w_k: np.ndarray,
    z: np.ndarray,
    j: int,
    tau_kj: float,
    v_lifted: np.ndarray | None = None,
) -> np.ndarray:
    """Deterministic constraint at Delta-H = 0 (the eps -> 0 limit of the LMI)."""
    r = rk_matrix(channels, w_k, z, tau_kj)
    core = r * (np.outer(v, v.conj()) if v_lifted is None else v_lifted)
    hbar = channels.h_bar[j]
    a = leakage_scale(channels, j, tau_kj)
    return herm(hbar @ core @ hbar.conj().T) + a * np.eye(channels.n_r)


def sprocedure_certificate_check(
    block_value: np.ndarray, p: float, tol: float = 1e-7
) -> tuple[bool, float]:
    """LMI-side verdict of the S-procedure: block PSD (within tol) and p >= 0."""
    margin = min_eig(block_value)
    return (margin >= -tol) and (p >= 0.0), margin


def best_slack_margin(
    channels: ChannelSet,
    v: np.ndarray,
    w_k: np.ndarray,
    z: np.ndarray,
    k: int,
    j: int,
    tau_kj: float,
    v_lifted: np.ndarray | None = None,
) -> tuple[float, float]:
    """(p*, margin*) maximizing the LMI minimum eigenvalue over p >= 0.

    The minimum eigenvalue is concave in the scalar p, so a bounded scalar
    search certifies robust feasibility without a full SDP solve. For eps = 0
    the nominal constraint margin is returned with p* = 0.
    """
    if channels.eps[j] == 0.0:
        return 0.0, min_eig(nominal_block(channels, v, w_k, z, j, tau_kj, v_lifted))

    r = rk_matrix(channels, w_k, z, tau_kj)
    core = r * (np.outer(v, v.conj()) if v_lifted is None else v_lifted)
    s = s_matrix(channels, j)
    base = herm(s @ core @ s.conj().T)
    a = leakage_scale(channels, j, tau_kj)
    n_r, m = channels.n_r, channels.m_total
    base[:n_r, :n_r] += a * np.eye(n_r)
    d_diag = np.concatenate([-np.ones(n_r), np.full(m, channels.eps[j] ** -2.0)])

    def margin(p: float) -> float:
        return float(np.linalg.eigvalsh(base + np.diag(p * d_diag))[0])

    p_hi = a + max(0.0, float(np.linalg.eigvalsh(base)[-1])) + 1.0
    res = minimize_scalar(
        lambda p: -margin(p), bounds=(0.0, p_hi), method="bounded",
        options={"xatol": 1e-12 * p_hi},
    )
    p_star = float(res.x)
    candidates = [(0.0, margin(0.0)), (p_star, margin(p_star))]
    return max(candidates, key=lambda t: t[1])


@dataclass
class Prop1Report:
    """Sampled two-sided view of the rank-one leakage equivalence."""

    max_leakage: float
    cap: float
    worst_min_eig: float
    n_samples: int
    n_disagreements: int

    @property
    def agree(self) -> bool:
        return self.n_disagreements == 0


def prop1_equivalence_check(
    channels: ChannelSet,
    solution,
    k: int,
    j: int,
    rng: np.random.Generator,
    n_samples: int = 500,
    tau_kj: float | None = None,
    tol: float = 1e-9,
) -> Prop1Report:
    """Verify per-sample that C_{j,k} <= tau matches PSD-ness of the rate LMI.

    For rank-one W_k the leakage cap and the matrix inequality
    (2^tau - 1) Q_j - A w w^H A^H >= 0 are algebraically equivalent at every
    sampled channel error; disagreements beyond ``tol`` indicate a defect.
    """
    from .system import leakage_capacity_quadratic  # local import, no cycle

    if tau_kj is None:
        raise ValueError("tau_kj required")
    w_vec = rank_one_factor(solution.w[k], tol=1e-4)
    w_mat = np.outer(w_vec, w_vec.conj())
    max_leak = -np.inf
    worst_eig = np.inf
    disagreements = 0
    gamma = 2.0 ** tau_kj - 1.0
    for i in range(n_samples):
        delta = sample_uncertainty(
            channels.h_bar[j], channels.eps[j], rng, boundary=(i % 5 != 0)
        )
        a = ((channels.h_bar[j] + delta) * solution.v[None, :]) @ channels.g
        q = herm(a @ solution.z @ a.conj().T) + channels.sigma2_e[j] * np.eye(channels.n_r)
        lhs = gamma * q - herm(a @ w_mat @ a.conj().T)
        eig = min_eig(lhs)
        leak = leakage_capacity_quadratic(channels, w_vec, solution, j, delta)
        max_leak = max(max_leak, leak)
        worst_eig = min(worst_eig, eig)
        leak_ok = leak <= tau_kj + tol
        eig_ok = eig >= -tol * max(1.0, gamma)
        if leak_ok != eig_ok:
            # both sides sit on the boundary together; a margin band absorbs ties
            if abs(leak - tau_kj) > 1e-7 or abs(eig) > 1e-7 * max(1.0, gamma):
                disagreements += 1
    return Prop1Report(
        max_leakage=float(max_leak),
        cap=float(tau_kj),
        worst_min_eig=float(worst_eig),
        n_samples=n_samples,
        n_disagreements=disagreements,
    )


# -- abstract generalized S-procedure instances (for oracle testing) ---------

def lemma1_lmi(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray, p: float) -> np.ndarray:
    """[[C, B^H], [B, A]] - p [[I, 0], [0, -D]] for the abstract QMI."""
    m, n = b.shape
    top = np.hstack([c - p * np.eye(n), b.conj().T])
    bot = np.hstack([b, a + p * d])
    return herm(np.vstack([top, bot]))


def lemma1_feasible(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray
) -> tuple[bool, float, float]:
    """Search p >= 0 maximizing the LMI margin; verdict at tolerance 0.

    Returns (feasible, p*, best margin). The margin is concave in p.
    """
    def margin(p: float) -> float:
        return min_eig(lemma1_lmi(a, b, c, d, p))

    scale = max(np.linalg.norm(a), np.linalg.norm(c), 1.0)
    p_hi = 10.0 * scale + 10.0
    res = minimize_scalar(
        lambda p: -margin(p), bounds=(0.0, p_hi), method="bounded",
        options={"xatol": 1e-13 * p_hi},
    )
    cands = [(0.0, margin(0.0)), (float(res.x), margin(float(res.x)))]
    p_star, best = max(cands, key=lambda t: t[1])
    return best >= 0.0, p_star, best
