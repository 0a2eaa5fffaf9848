"""SCA step for transmit beamforming and artificial noise at fixed phases.

Each step minimizes N1 - <grad D1, (W, Z)> subject to the power budget, PSD
constraints and the robust leakage LMIs, where N1 - D1 is the exact negative
sum-rate in lifted (trace) form and D1 is replaced by its tangent at the
reference iterate. N1 stays exact as concave-log hypograph terms, so every
accepted step can only raise the true sum-rate. The relaxed SDP solution is
then restored to rank one by the constructive tightness argument (signal-space
projection; the discarded PSD remainder moves into the AN covariance, which
changes neither the objective nor any constraint).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic, robust, system
from .channels import ChannelSet
from .config import SystemConfig
from .conic import LN2, ConicProblem, LogTerm, PsdBlock, embed_hermitian
from .linalg import herm, min_eig, rank_one_defect


class StageError(RuntimeError):
    """A subproblem solve failed beyond retry."""


class ConstructionError(RuntimeError):
    """Rank-one recovery violated a postcondition; carries the spectra."""

    def __init__(self, message: str, spectra: dict):
        super().__init__(message)
        self.spectra = spectra


@dataclass
class BeamformingIterate:
    w: np.ndarray               # (K, N_t, N_t)
    z: np.ndarray               # (N_t, N_t)
    p: np.ndarray               # (K, J) S-procedure multipliers
    surrogate: float            # solver objective (bits-scale, minimization)
    sum_rate: float             # true lifted sum-rate at this iterate
    solver_status: str = "init"
    recovery: dict = field(default_factory=dict)


@dataclass
class _Layout:
    """Variable offsets of the beamforming subproblem's real decision vector."""

    n_t: int
    k_users: int
    j_eves: int

    @property
    def nt2(self) -> int:
        return self.n_t * self.n_t

    def w_coords(self, k: int) -> np.ndarray:
        return np.arange(k * self.nt2, (k + 1) * self.nt2)

    @property
    def z_coords(self) -> np.ndarray:
        return np.arange(self.k_users * self.nt2, (self.k_users + 1) * self.nt2)

    def slack_index(self, k: int, j: int) -> int:
        return (self.k_users + 1) * self.nt2 + k * self.j_eves + j

    @property
    def n_vars(self) -> int:
        return (self.k_users + 1) * self.nt2 + self.k_users * self.j_eves


def d1_value_and_gradients(
    w: np.ndarray,
    z: np.ndarray,
    m_mats: np.ndarray,
    sigma2_l: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """D1 and its matrix gradients at (W, Z).

    D1 = -sum_j log2(Tr(Z M_j) + sigma_j^2 + sum_{i != j} Tr(W_i M_j));
    grad_Z sums -M_j / (ln 2 * denom_j) over all j, grad_{W_k} over j != k.
    """
    k_users = m_mats.shape[0]
    denoms = np.empty(k_users)
    for j in range(k_users):
        interference = sum(
            float(np.real(np.trace(w[i] @ m_mats[j]))) for i in range(k_users) if i != j
        )
        denoms[j] = float(np.real(np.trace(z @ m_mats[j]))) + sigma2_l[j] + interference
    d1 = -float(np.sum(np.log2(denoms)))
    grad_z = -sum(m_mats[j] / denoms[j] for j in range(k_users)) / LN2
    grad_w = np.stack(
        [
            -sum(m_mats[j] / denoms[j] for j in range(k_users) if j != k) / LN2
            if k_users > 1
            else np.zeros_like(z)
            for k in range(k_users)
        ]
    )
    return d1, herm(grad_z), np.stack([herm(g) for g in grad_w])


def _leakage_blocks(
    channels: ChannelSet,
    v: np.ndarray,
    tau: np.ndarray,
    layout: _Layout,
    herm_nt,
    grad_scale: float = 1.0,
) -> list[PsdBlock]:
    """Robust C4 LMIs, affine in (W_k, Z, p_kj); nominal N_r block when eps=0."""
    del grad_scale
    basis = herm_nt.basis()
    n_r, m = channels.n_r, channels.m_total
    phi_g = v[:, None] * channels.g
    blocks = []
    for j in range(channels.j_eves):
        s_full = robust.s_matrix(channels, j)
        for k in range(channels.k_users):
            gamma = 2.0 ** tau[k, j] - 1.0
            a_scale = robust.leakage_scale(channels, j, tau[k, j])
            if channels.eps[j] > 0.0:
                e_mat = s_full @ phi_g  # (N_r + M, N_t)
                ebe = np.einsum("ab,tbc,dc->tad", e_mat, basis, e_mat.conj())
                const = np.zeros((n_r + m, n_r + m), dtype=complex)
                const[:n_r, :n_r] = a_scale * np.eye(n_r)
                slack_coeff = np.diag(
                    np.concatenate(
                        [-np.ones(n_r), np.full(m, channels.eps[j] ** -2.0)]
                    )
                ).astype(complex)
                var_idx = np.concatenate(
                    [layout.z_coords, layout.w_coords(k), [layout.slack_index(k, j)]]
                )
                coeffs = np.concatenate([gamma * ebe, -ebe, slack_coeff[None]])
                blocks.append(
                    PsdBlock(n_r + m, const, var_idx, coeffs, label=f"c4[{k},{j}]")
                )
            else:
                e_mat = channels.h_bar[j] @ phi_g  # (N_r, N_t) nominal cascade
                ebe = np.einsum("ab,tbc,dc->tad", e_mat, basis, e_mat.conj())
                const = a_scale * np.eye(n_r, dtype=complex)
                var_idx = np.concatenate([layout.z_coords, layout.w_coords(k)])
                coeffs = np.concatenate([gamma * ebe, -ebe])
                blocks.append(
                    PsdBlock(n_r, const, var_idx, coeffs, label=f"c4nom[{k},{j}]")
                )
    return blocks


def build_subproblem(
    channels: ChannelSet,
    v: np.ndarray,
    w_ref: np.ndarray,
    z_ref: np.ndarray,
    config: SystemConfig,
    grad_scale: float = 1.0,
) -> tuple[ConicProblem, _Layout]:
    """Convex SCA subproblem at reference (W_ref, Z_ref) and fixed phases."""
    k_users = channels.k_users
    layout = _Layout(channels.n_t, k_users, channels.j_eves)
    herm_nt = embed_hermitian(channels.n_t)
    tau = config.tau_matrix()
    m_mats = system.m_matrices(channels, v)

    _, grad_z, grad_w = d1_value_and_gradients(w_ref, z_ref, m_mats, channels.sigma2_l)

    c = np.zeros(layout.n_vars)
    c[layout.z_coords] = -grad_scale * herm_nt.functional(grad_z)
    for k in range(k_users):
        c[layout.w_coords(k)] = -grad_scale * herm_nt.functional(grad_w[k])

    log_terms = []
    for k in range(k_users):
        fvec = herm_nt.functional(m_mats[k])
        lin = np.zeros(layout.n_vars)
        lin[layout.z_coords] = fvec
        for i in range(k_users):
            lin[layout.w_coords(i)] = fvec
        log_terms.append(LogTerm(weight=1.0 / LN2, lin=lin, offset=float(channels.sigma2_l[k])))

    power_row = np.zeros(layout.n_vars)
    diag_idx = np.arange(channels.n_t)
    for k in range(k_users):
        power_row[layout.w_coords(k)[diag_idx]] = 1.0
    power_row[layout.z_coords[diag_idx]] = 1.0

    basis = herm_nt.basis()
    psd_blocks = [
        PsdBlock(channels.n_t, np.zeros((channels.n_t, channels.n_t), complex),
                 layout.z_coords, basis, label="Z")
    ]
    for k in range(k_users):
        psd_blocks.append(
            PsdBlock(channels.n_t, np.zeros((channels.n_t, channels.n_t), complex),
                     layout.w_coords(k), basis, label=f"W[{k}]")
        )
    psd_blocks.extend(_leakage_blocks(channels, v, tau, layout, herm_nt))

    lb = np.full(layout.n_vars, -np.inf)
    for k in range(k_users):
        for j in range(channels.j_eves):
            if channels.eps[j] > 0.0:
                lb[layout.slack_index(k, j)] = 0.0
            else:
                lb[layout.slack_index(k, j)] = 0.0  # unused slack pinned at 0

    ub = np.full(layout.n_vars, np.inf)
    for k in range(k_users):
        for j in range(channels.j_eves):
            if channels.eps[j] == 0.0:
                ub[layout.slack_index(k, j)] = 0.0

    problem = ConicProblem(
        n_vars=layout.n_vars,
        c=c,
        psd_blocks=psd_blocks,
        log_terms=log_terms,
        a_ub=power_row[None, :],
        b_ub=np.array([config.p_max]),
        lb=lb,
        ub=ub,
    )
    return problem, layout


def _extract(x: np.ndarray, layout: _Layout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    herm_nt = embed_hermitian(layout.n_t)
    w = np.stack([herm_nt.from_reals(x[layout.w_coords(k)]) for k in range(layout.k_users)])
    z = herm_nt.from_reals(x[layout.z_coords])
    p = np.zeros((layout.k_users, layout.j_eves))
    for k in range(layout.k_users):
        for j in range(layout.j_eves):
            p[k, j] = x[layout.slack_index(k, j)]
    return w, z, p


def recover_rank_one(
    w_star: np.ndarray,
    z_star: np.ndarray,
    p_star: np.ndarray,
    channels: ChannelSet,
    v: np.ndarray,
    config: SystemConfig,
    problem: ConicProblem | None = None,
    x_star: np.ndarray | None = None,
    layout: _Layout | None = None,
    rank_tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Constructive rank-one restoration of the relaxed optimum.

    Nearly rank-one blocks are truncated to the leading eigenpair; otherwise
    W_k is projected onto its component along the effective user channel
    (W h)(h^H W h)^{-1}(W h)^H. Either way the PSD remainder is added to the
    AN covariance, preserving the total power identity exactly and leaving the
    subproblem objective and all constraints intact. Postconditions are
    verified at runtime.
    """
    k_users = channels.k_users
    tau = config.tau_matrix()
    w_tilde = np.empty_like(w_star)
    z_tilde = z_star.astype(complex).copy()
    defects_before = []
    starved = []
    starved_floor = 1e-8 * max(1.0, config.p_max)
    for k in range(k_users):
        wk = herm(w_star[k])
        defect = rank_one_defect(wk)
        defects_before.append(defect)
        trace = float(np.real(np.trace(wk)))
        heff = system.effective_user_channel(channels, v, k)
        wh = wk @ heff
        signal = float(np.real(heff.conj() @ wh))
        if trace <= starved_floor or signal <= 1e-8:
            # noise-floor beamformer or one orthogonal to its user: rank 0
            # satisfies the rank constraint and all of it becomes AN
            w_new = np.zeros_like(wk)
        else:
            # signal-space projection: exactly rank one, annihilated by the
            # moved remainder (delta h = 0), and equal to the leading
            # eigenpair whenever W* is already (near) rank one
            w_new = np.outer(wh, wh.conj()) / signal
        # move only the PSD part of the remainder into Z: the leakage LMIs
        # see an exactly-PSD shift (solver eigen-noise, though tiny, would be
        # amplified by the channel congruence), while the leftover noise stays
        # inside W_k where it is harmless; the power identity remains exact
        remainder = herm(wk - herm(w_new))
        lam_r, u_r = np.linalg.eigh(remainder)
        pos = lam_r > 0.0
        delta_plus = herm((u_r[:, pos] * lam_r[pos]) @ u_r[:, pos].conj().T)
        w_tilde[k] = herm(wk - delta_plus)
        z_tilde += delta_plus
        starved.append(float(np.real(np.trace(w_tilde[k]))) <= starved_floor)
    z_tilde = herm(z_tilde)

    power_identity_gap = float(
        np.linalg.norm((z_tilde + w_tilde.sum(axis=0)) - (z_star + w_star.sum(axis=0)))
    )
    stats = {
        "defects_before": defects_before,
        "defects_after": [
            0.0 if starved[k] else rank_one_defect(w_tilde[k]) for k in range(k_users)
        ],
        "already_rank_one": [d <= rank_tol for d in defects_before],
        "power_identity_gap": power_identity_gap,
    }

    # postconditions: rank, power identity, PSD, leakage LMIs, objective
    power_gap = power_identity_gap
    failures = []
    if any(d > rank_tol for d in stats["defects_after"]):
        failures.append("rank-one condition")
    if power_gap > 1e-10 * max(1.0, config.p_max):
        failures.append(f"power identity (gap {power_gap:.2e})")
    # recovery must not degrade PSD-ness beyond what the solver delivered
    input_defect = max(0.0, -min_eig(z_star)) + sum(
        max(0.0, -min_eig(w_star[k])) for k in range(k_users)
    )
    if min_eig(z_tilde) < -(2.0 * input_defect + 1e-9 * max(1.0, config.p_max)):
        failures.append("Z PSD")
    for k in range(k_users):
        for j in range(channels.j_eves):
            if channels.eps[j] > 0.0:
                block = robust.c4_block_beamforming(
                    channels, v, w_tilde[k], z_tilde, p_star[k, j], k, j, tau[k, j]
                )
            else:
                block = robust.nominal_block(channels, v, w_tilde[k], z_tilde, j, tau[k, j])
            ok, _ = robust.sprocedure_certificate_check(block, max(p_star[k, j], 0.0), tol=1e-6)
            if not ok:
                failures.append(f"leakage LMI ({k},{j})")
    if problem is not None and x_star is not None and layout is not None:
        x_new = x_star.copy()
        herm_nt = embed_hermitian(layout.n_t)
        for k in range(k_users):
            x_new[layout.w_coords(k)] = herm_nt.to_reals(w_tilde[k])
        x_new[layout.z_coords] = herm_nt.to_reals(z_tilde)
        obj_old = problem.objective_value(x_star)
        obj_new = problem.objective_value(x_new)
        rel = abs(obj_new - obj_old) / max(1.0, abs(obj_old))
        stats["objective_change_rel"] = rel
        if rel > 1e-6:
            failures.append(f"objective drift {rel:.2e}")
    if failures:
        raise ConstructionError(
            "rank-one recovery postcondition failed: " + "; ".join(failures),
            spectra={
                "w_eigs": [np.linalg.eigvalsh(w_star[k]).tolist() for k in range(k_users)],
                "z_eigs": np.linalg.eigvalsh(z_star).tolist(),
            },
        )
    return w_tilde, z_tilde, p_star.copy(), stats


def reference_vector(reference: BeamformingIterate, layout: _Layout) -> np.ndarray:
    herm_nt = embed_hermitian(layout.n_t)
    x = np.zeros(layout.n_vars)
    for k in range(layout.k_users):
        x[layout.w_coords(k)] = herm_nt.to_reals(reference.w[k])
    x[layout.z_coords] = herm_nt.to_reals(reference.z)
    for k in range(layout.k_users):
        for j in range(layout.j_eves):
            x[layout.slack_index(k, j)] = max(float(reference.p[k, j]), 0.0)
    return x


def solve_beamforming_step(
    channels: ChannelSet,
    v: np.ndarray,
    reference: BeamformingIterate,
    config: SystemConfig,
    strict_descent: bool = True,
) -> BeamformingIterate:
    """One SCA step: solve the subproblem at the reference, restore rank one.

    Under ``strict_descent`` the returned point must satisfy the verifiable
    descent condition of the majorize-minimize step (surrogate value no worse
    than at the reference); a solve that fails it (reduced-accuracy exit) is
    rejected and the reference is kept, which stalls the outer loop into
    clean convergence.
    """
    attempt_scales = (1.0, 0.5)  # second try damps the objective linearization
    last = None
    accepted = None
    surrogate_ref = np.nan
    for scale in attempt_scales:
        problem, layout = build_subproblem(
            channels, v, reference.w, reference.z, config, grad_scale=scale
        )
        if scale == 1.0:
            surrogate_ref = problem.objective_value(reference_vector(reference, layout))
        sol = conic.solve(problem, config.solver)
        last = sol
        if not sol.ok:
            continue
        if not strict_descent:
            accepted = sol
            break
        slack = 1e-7 * max(1.0, abs(surrogate_ref))
        if scale == 1.0 and sol.objective <= surrogate_ref + slack:
            accepted = sol
            break
        if scale != 1.0:
            # damped retry: accept only if it still improves the true surrogate
            full_obj = build_subproblem(
                channels, v, reference.w, reference.z, config, grad_scale=1.0
            )[0].objective_value(sol.x)
            if full_obj <= surrogate_ref + slack:
                accepted = sol
                break
    if last is None or (not last.ok and accepted is None):
        raise StageError(
            f"beamforming subproblem failed: {last.raw_status if last else 'no solve'}"
        )
    if accepted is None:
        # solver converged loosely to a non-improving point: keep the reference
        return BeamformingIterate(
            w=reference.w,
            z=reference.z,
            p=reference.p,
            surrogate=surrogate_ref,
            sum_rate=system.sum_rate(
                channels, system.Solution(w=reference.w, z=reference.z, v=v)
            ),
            solver_status="rejected",
            recovery={},
        )
    last = accepted

    w_star, z_star, p_star = _extract(last.x, layout)
    w_t, z_t, p_t, stats = recover_rank_one(
        w_star, z_star, p_star, channels, v, config,
        problem=problem, x_star=last.x, layout=layout,
    )
    solution = system.Solution(w=w_t, z=z_t, v=v, slack=p_t)
    return BeamformingIterate(
        w=w_t,
        z=z_t,
        p=p_t,
        surrogate=last.objective,
        sum_rate=system.sum_rate(channels, solution),
        solver_status=last.status,
        recovery=stats,
    )


def initial_iterate(
    channels: ChannelSet,
    config: SystemConfig,
    v: np.ndarray,
) -> BeamformingIterate:
    """Scaled MRT + isotropic-AN start, power-backed-off into C4 feasibility.

    Directions are kept and a common power factor is bisected down until every
    robust leakage LMI admits a nonnegative multiplier: leakage vanishes with
    transmit power, so a feasible scale always exists when tau > 0.
    """
    k_users = channels.k_users
    zeta = config.init_power_split
    tau = config.tau_matrix()
    w0 = np.zeros((k_users, channels.n_t, channels.n_t), dtype=complex)
    for k in range(k_users):
        heff = system.effective_user_channel(channels, v, k)
        norm = np.linalg.norm(heff)
        if norm == 0.0:
            continue
        u = heff / norm
        w0[k] = (zeta * config.p_max / k_users) * np.outer(u, u.conj())
    z0 = ((1.0 - zeta) * config.p_max / channels.n_t) * np.eye(channels.n_t, dtype=complex)

    def margins(scale: float) -> tuple[np.ndarray, float]:
        p = np.zeros((k_users, channels.j_eves))
        worst = np.inf
        for k in range(k_users):
            for j in range(channels.j_eves):
                p_kj, margin = robust.best_slack_margin(
                    channels, v, scale * w0[k], scale * z0, k, j, tau[k, j]
                )
                p[k, j] = p_kj
                worst = min(worst, margin)
        return p, worst

    scale = 1.0
    p0, worst = margins(scale)
    if worst < -1e-9 and channels.j_eves:
        lo, hi = 0.0, 1.0
        p_lo = p0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            p_mid, worst_mid = margins(mid)
            if worst_mid >= -1e-9:
                lo, p_lo = mid, p_mid
            else:
                hi = mid
        scale, p0 = lo, p_lo
        if scale <= 0.0:
            from .ao import TrialInfeasible

            raise TrialInfeasible(
                "no positive power scale satisfies the leakage constraints"
            )
    solution = system.Solution(w=scale * w0, z=scale * z0, v=v, slack=p0)
    return BeamformingIterate(
        w=scale * w0,
        z=herm(scale * z0),
        p=p0,
        surrogate=np.nan,
        sum_rate=system.sum_rate(channels, solution),
        solver_status="init",
    )
