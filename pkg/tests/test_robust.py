import numpy as np
import pytest

from irsec import SystemConfig
from irsec import robust
from irsec import system as sysm
from irsec.channels import ChannelSet, sample_uncertainty
from irsec.linalg import min_eig

from conftest import random_psd


def _rank_one(rng, n, power):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x *= np.sqrt(power) / np.linalg.norm(x)
    return np.outer(x, x.conj())


def _feasible_point(channels, rng, tau, k=0, j=0):
    """Scale a random (W, Z) until the best-slack LMI margin is nonnegative."""
    v = np.exp(2j * np.pi * rng.uniform(size=channels.m_total))
    w = _rank_one(rng, channels.n_t, 0.05)
    z = random_psd(rng, channels.n_t, scale=0.01)
    scale = 1.0
    for _ in range(60):
        p, margin = robust.best_slack_margin(channels, v, scale * w, scale * z, k, j, tau)
        if margin >= 0.0:
            return v, scale * w, scale * z, p
        scale *= 0.5
    pytest.fail("could not scale into feasibility")


class TestBlockAssembly:
    def test_zero_point_structure(self, desk_channels):
        # W = Z = 0, p = 0: block reduces to sigma^2 (2^tau - 1) blkdiag(I, 0)
        tau = 1.0
        n_r, m = desk_channels.n_r, desk_channels.m_total
        v = np.ones(m, dtype=complex)
        block = robust.c4_block_beamforming(
            desk_channels, v, np.zeros((4, 4), complex), np.zeros((4, 4), complex),
            0.0, 0, 0, tau,
        )
        a = desk_channels.sigma2_e[0] * (2.0 ** tau - 1.0)
        expected = np.zeros((n_r + m, n_r + m), dtype=complex)
        expected[:n_r, :n_r] = a * np.eye(n_r)
        assert np.allclose(block, expected, atol=1e-14)
        assert min_eig(block) >= 0.0

    def test_zero_tolerance_limit(self, desk_channels, rng):
        # tau = 0, Z = 0: a PSD block forces (near-)zero leakage power
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        w = _rank_one(rng, desk_channels.n_t, 0.05)
        _, margin = robust.best_slack_margin(desk_channels, v, w, np.zeros((4, 4), complex),
                                             0, 0, 0.0)
        assert margin < -1e-6  # nonzero beamformer leaks, so tau = 0 is infeasible

    def test_sprocedure_forward_implication(self, desk_channels, rng):
        # LMI feasible with p >= 0 implies every sampled channel error obeys the cap
        tau = 1.0
        v, w, z, p = _feasible_point(desk_channels, rng, tau)
        sol = sysm.Solution(w=w[None], z=z, v=v)
        for i in range(2000):
            delta = sample_uncertainty(
                desk_channels.h_bar[0], desk_channels.eps[0], rng, boundary=(i % 5 != 0)
            )
            leak = sysm.leakage_capacity(desk_channels, sol, 0, 0, delta)
            assert leak <= tau + 1e-7

    def test_affinity_of_assembly(self, desk_channels, rng):
        tau = 1.3
        w1, z1, p1 = _rank_one(rng, 4, 0.02), random_psd(rng, 4, 0.01), 0.4
        w2, z2, p2 = _rank_one(rng, 4, 0.05), random_psd(rng, 4, 0.02), 0.1
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        theta = 0.3
        blend = robust.c4_block_beamforming(
            desk_channels, v,
            theta * w1 + (1 - theta) * w2,
            theta * z1 + (1 - theta) * z2,
            theta * p1 + (1 - theta) * p2, 0, 0, tau,
        )
        parts = theta * robust.c4_block_beamforming(
            desk_channels, v, w1, z1, p1, 0, 0, tau
        ) + (1 - theta) * robust.c4_block_beamforming(desk_channels, v, w2, z2, p2, 0, 0, tau)
        assert np.allclose(blend, parts, atol=1e-12)

    def test_block_dimension(self, desk_channels):
        block = robust.c4_block_beamforming(
            desk_channels, np.ones(desk_channels.m_total, complex),
            np.zeros((4, 4), complex), np.zeros((4, 4), complex), 0.1, 0, 0, 1.0,
        )
        assert block.shape == (desk_channels.n_r + desk_channels.m_total,) * 2


class TestPhaseForm:
    def test_matches_beamforming_form(self, desk_channels, rng):
        tau = 0.8
        w = _rank_one(rng, 4, 0.05)
        z = random_psd(rng, 4, 0.02)
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        p = 0.23
        bf_block = robust.c4_block_beamforming(desk_channels, v, w, z, p, 0, 0, tau)
        ph_block = robust.c4_block_phase(
            desk_channels, w, z, np.outer(v, v.conj()), p, 0, 0, tau
        )
        assert np.linalg.norm(ph_block - bf_block) <= 1e-9 * max(1.0, np.linalg.norm(bf_block))

    def test_single_element_irs(self, rng):
        chans = ChannelSet(
            g=rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3)),
            h=rng.standard_normal((1, 1)) + 1j * rng.standard_normal((1, 1)),
            h_bar=rng.standard_normal((1, 2, 1)) + 1j * rng.standard_normal((1, 2, 1)),
            eps=np.array([0.4]),
            sigma2_l=np.ones(1),
            sigma2_e=np.ones(1),
            irs_sizes=(1,),
        )
        w = _rank_one(rng, 3, 0.1)
        z = random_psd(rng, 3, 0.05)
        bf_block = robust.c4_block_beamforming(chans, np.ones(1, complex), w, z, 0.3, 0, 0, 1.0)
        ph_block = robust.c4_block_phase(chans, w, z, np.ones((1, 1), complex), 0.3, 0, 0, 1.0)
        assert np.allclose(bf_block, ph_block, atol=1e-12)

    def test_zero_core_independent_of_v(self, desk_channels, rng):
        # R_k = 0 leaves only the constant part
        z = np.zeros((4, 4), complex)
        w = np.zeros((4, 4), complex)
        v1 = np.outer(*(lambda x: (x, x.conj()))(np.exp(2j * np.pi * rng.uniform(size=4))))
        block1 = robust.c4_block_phase(desk_channels, w, z, v1, 0.2, 0, 0, 1.0)
        block2 = robust.c4_block_phase(desk_channels, w, z, np.eye(4, dtype=complex), 0.2, 0, 0, 1.0)
        assert np.allclose(block1, block2, atol=1e-13)

    def test_rk_operator_reconstruction(self, desk_channels, rng):
        r = robust.rk_matrix(desk_channels, _rank_one(rng, 4, 0.1), random_psd(rng, 4, 0.1), 1.0)
        op = robust.RkOperator.from_matrix(r)
        assert np.linalg.norm(op.reconstruct() - r) <= 1e-10 * np.linalg.norm(r)
        assert op.rank <= np.linalg.matrix_rank(r, tol=1e-12) + 1


class TestCertificates:
    def test_identity_feasible(self):
        ok, margin = robust.sprocedure_certificate_check(np.eye(3, dtype=complex), 1.0)
        assert ok and margin == pytest.approx(1.0)

    def test_indefinite_infeasible(self):
        ok, _ = robust.sprocedure_certificate_check(np.diag([1.0, -1.0]).astype(complex), 0.5)
        assert not ok

    def test_negative_multiplier_rejected(self):
        ok, _ = robust.sprocedure_certificate_check(np.eye(2, dtype=complex), -0.1)
        assert not ok


class TestLemma1Oracle:
    @staticmethod
    def _worst_over_directions(a, b, c, d, alphas, phis):
        """min over gridded directions x of min_{Y in ellipsoid} x^H h(Y) x.

        For each unit x the inner minimum over Y is attained at rank one
        (Y = z x^H / ||x||^2 with z = Y x), giving an exactly solvable
        trust-region problem in u = D^{1/2} z via the KKT secular equation;
        the whole grid is processed with vectorized bisection on the
        multiplier.
        """
        d_half = np.linalg.cholesky(d)
        d_half_inv = np.linalg.inv(d_half)
        a_p = d_half_inv.conj().T @ a @ d_half_inv
        lam, q = np.linalg.eigh(0.5 * (a_p + a_p.conj().T))

        aa, pp = np.meshgrid(alphas, phis, indexing="ij")
        x = np.stack(
            [np.cos(aa).ravel(), (np.sin(aa) * np.exp(1j * pp)).ravel()], axis=1
        )
        c0 = np.real(np.einsum("ni,ij,nj->n", x.conj(), c, x))
        beta = (q.conj().T @ (d_half_inv.conj().T @ (b @ x.T))).T  # (N, 2)

        mu_floor = max(0.0, -float(lam[0])) + 1e-14
        beta_norm = np.linalg.norm(beta, axis=1)

        def norm_sq(mu):
            return np.sum(np.abs(beta) ** 2 / (lam[None, :] + mu[:, None]) ** 2, axis=1)

        mu_lo = np.full(len(x), mu_floor)
        interior = norm_sq(mu_lo) <= 1.0
        mu_hi = mu_floor + beta_norm + 1.0
        lo, hi = mu_lo.copy(), mu_hi
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            too_big = norm_sq(mid) > 1.0
            lo = np.where(too_big, mid, lo)
            hi = np.where(too_big, hi, mid)
        mu = np.where(interior, mu_floor, 0.5 * (lo + hi))
        denom = lam[None, :] + mu[:, None]
        u = -beta / np.where(np.abs(denom) < 1e-13, np.inf, denom)
        vals = (
            np.sum(lam[None, :] * np.abs(u) ** 2, axis=1)
            + 2.0 * np.real(np.sum(u.conj() * beta, axis=1))
            + c0
        )
        if lam[0] < 0:
            # hard case: top up with a null-space component to reach the sphere
            slack = np.clip(1.0 - np.sum(np.abs(u) ** 2, axis=1), 0.0, None)
            vals = vals + np.where(interior, lam[0] * slack, 0.0)
        idx = int(np.argmin(vals))
        return float(vals[idx]), (float(aa.ravel()[idx]), float(pp.ravel()[idx]))

    def _brute_force_qmi(self, a, b, c, d, n_alpha=160, n_phi=320, refine=3):
        """Grid search over the sphere parametrization, refined to 1e-3."""
        best, best_pt = self._worst_over_directions(
            a, b, c, d, np.linspace(0.0, np.pi / 2, n_alpha),
            np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False),
        )
        da, dp = np.pi / 2 / n_alpha, 2 * np.pi / n_phi
        while max(da, dp) > 1e-3:
            a0, p0 = best_pt
            val, pt = self._worst_over_directions(
                a, b, c, d,
                np.clip(np.linspace(a0 - da, a0 + da, 41), 0.0, np.pi / 2),
                np.linspace(p0 - dp, p0 + dp, 41),
            )
            if val < best:
                best, best_pt = val, pt
            da /= 10.0
            dp /= 10.0
        return best

    def test_scalar_grid_oracle(self, rng):
        # 1-D instances: grid the disk directly
        for _ in range(25):
            a = float(rng.standard_normal())
            b = rng.standard_normal() + 1j * rng.standard_normal()
            c = float(np.abs(rng.standard_normal()) * 2)
            d = float(np.abs(rng.standard_normal()) + 0.3)
            a_m, b_m = np.array([[a]], complex), np.array([[b]], complex)
            c_m, d_m = np.array([[c]], complex), np.array([[d]], complex)
            feasible, _, margin = robust.lemma1_feasible(a_m, b_m, c_m, d_m)
            radii = np.linspace(0, 1 / np.sqrt(d), 140)
            phases = np.linspace(0, 2 * np.pi, 280, endpoint=False)
            rr, pp = np.meshgrid(radii, phases)
            y = rr * np.exp(1j * pp)
            worst = np.min(a * rr ** 2 + 2 * np.real(np.conj(y) * b) + c)
            if abs(margin) > 1e-6 and abs(worst) > 1e-6:
                assert feasible == (worst >= 0.0), (margin, worst)

    def test_matrix_instances_match_brute_force(self, rng):
        mismatches = 0
        for _ in range(12):
            a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            a = 0.5 * (a + a.conj().T)
            b = 0.6 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
            c = random_psd(rng, 2, scale=1.5) + 0.2 * np.eye(2)
            d = random_psd(rng, 2, scale=1.0) + 0.5 * np.eye(2)
            feasible, _, margin = robust.lemma1_feasible(a, b, c, d)
            worst = self._brute_force_qmi(a, b, c, d)
            if abs(margin) <= 1e-6 or abs(worst) <= 1e-6:
                continue  # margin band: both sides on the boundary
            if feasible != (worst >= 0.0):
                mismatches += 1
        assert mismatches == 0


class TestProp1Equivalence:
    def test_degenerate_epsilon(self, desk_config, rng):
        import dataclasses

        from conftest import random_psd as _rp

        chans_zero = None
        from irsec.channels import build_channel_set, child_rng, sample_geometry, scenario_seed_tree

        cfg = desk_config.with_updates(kappa=0.0)
        root = scenario_seed_tree(cfg, 0)
        geo = sample_geometry(cfg, child_rng(root, 0))
        chans_zero = build_channel_set(cfg, geo, root)
        v = np.ones(chans_zero.m_total, complex)
        w = _rank_one(rng, 4, 1e-4)
        z = _rp(rng, 4, 1e-4)
        p, margin = robust.best_slack_margin(chans_zero, v, w, z, 0, 0, 1.0)
        nominal = robust.nominal_block(chans_zero, v, w, z, 0, 1.0)
        assert margin == pytest.approx(min_eig(nominal))
        assert p == 0.0

    def test_co_violation(self, desk_channels, rng):
        # deliberately boosted power: both the sampled capacity and the
        # sampled matrix inequality flag the same violation
        tau = 0.5
        v, w, z, _ = _feasible_point(desk_channels, rng, tau)
        sol = sysm.Solution(w=(400.0 * w)[None], z=z, v=v)
        report = robust.prop1_equivalence_check(
            desk_channels, sol, 0, 0, rng, n_samples=200, tau_kj=tau
        )
        assert report.max_leakage > tau
        assert report.worst_min_eig < 0
        assert report.agree

    def test_feasible_point_agrees(self, desk_channels, rng):
        tau = 1.0
        v, w, z, _ = _feasible_point(desk_channels, rng, tau)
        sol = sysm.Solution(w=w[None], z=z, v=v)
        report = robust.prop1_equivalence_check(
            desk_channels, sol, 0, 0, rng, n_samples=300, tau_kj=tau
        )
        assert report.max_leakage <= tau + 1e-9
        assert report.worst_min_eig >= -1e-9
        assert report.agree
