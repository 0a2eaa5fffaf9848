import numpy as np
import pytest

from irsec import SystemConfig, dbm_to_watts
from irsec import beamforming as bf
from irsec import system as sysm
from irsec.channels import build_channel_set, child_rng, sample_geometry, scenario_seed_tree
from irsec.linalg import herm, rank_one_defect

from conftest import random_hermitian, random_psd


def _channels_for(config, trial=0):
    root = scenario_seed_tree(config, trial)
    geometry = sample_geometry(config, child_rng(root, 0))
    return build_channel_set(config, geometry, root)


class TestD1Gradients:
    def test_single_user_w_gradient_empty(self, desk_channels, rng):
        m_mats = sysm.m_matrices(desk_channels, np.ones(desk_channels.m_total, complex))[:1]
        w = random_psd(rng, 4, scale=0.01)[None]
        z = random_psd(rng, 4, scale=0.01)
        _, _, grad_w = bf.d1_value_and_gradients(w, z, m_mats, desk_channels.sigma2_l[:1])
        assert np.allclose(grad_w[0], 0.0)

    def test_value_at_zero(self, desk_channels):
        k = desk_channels.k_users
        m_mats = sysm.m_matrices(desk_channels, np.ones(desk_channels.m_total, complex))
        zeros = np.zeros((k, 4, 4), complex)
        d1, _, _ = bf.d1_value_and_gradients(zeros, zeros[0], m_mats, desk_channels.sigma2_l)
        assert d1 == pytest.approx(-np.sum(np.log2(desk_channels.sigma2_l)))

    def test_finite_differences(self, desk_channels, rng):
        k_users = desk_channels.k_users
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        m_mats = sysm.m_matrices(desk_channels, v)
        w = np.stack([random_psd(rng, 4, scale=0.02) for _ in range(k_users)])
        z = random_psd(rng, 4, scale=0.02)
        _, grad_z, grad_w = bf.d1_value_and_gradients(w, z, m_mats, desk_channels.sigma2_l)
        h = 1e-6
        for _ in range(10):
            direction = random_hermitian(rng, 4, scale=0.01)
            dplus, _, _ = bf.d1_value_and_gradients(w, z + h * direction, m_mats, desk_channels.sigma2_l)
            dminus, _, _ = bf.d1_value_and_gradients(w, z - h * direction, m_mats, desk_channels.sigma2_l)
            fd = (dplus - dminus) / (2 * h)
            an = float(np.real(np.trace(grad_z.conj().T @ direction)))
            assert fd == pytest.approx(an, rel=1e-4, abs=1e-9)
            k = int(rng.integers(k_users))
            w_plus, w_minus = w.copy(), w.copy()
            w_plus[k] = w[k] + h * direction
            w_minus[k] = w[k] - h * direction
            dplus, _, _ = bf.d1_value_and_gradients(w_plus, z, m_mats, desk_channels.sigma2_l)
            dminus, _, _ = bf.d1_value_and_gradients(w_minus, z, m_mats, desk_channels.sigma2_l)
            fd = (dplus - dminus) / (2 * h)
            an = float(np.real(np.trace(grad_w[k].conj().T @ direction)))
            assert fd == pytest.approx(an, rel=1e-4, abs=1e-9)


class TestSubproblem:
    def test_no_eavesdroppers_saturates_power(self, rng):
        config = SystemConfig(j_eves=0, p_max=dbm_to_watts(20.0))
        chans = _channels_for(config)
        v = np.exp(2j * np.pi * rng.uniform(size=chans.m_total))
        it = bf.initial_iterate(chans, config, v)
        for _ in range(4):
            it = bf.solve_beamforming_step(chans, v, it, config)
        used = float(np.real(np.trace(it.z)) + sum(np.real(np.trace(w)) for w in it.w))
        assert used == pytest.approx(config.p_max, rel=1e-5)

    def test_huge_tau_matches_unconstrained(self, rng):
        base = SystemConfig(p_max=dbm_to_watts(20.0))
        free = base.with_updates(j_eves=0)
        capped = base.with_updates(tau=30.0)
        chans_free = _channels_for(free)
        chans_capped = _channels_for(capped)
        v = np.exp(2j * np.pi * rng.uniform(size=4))
        it_f = bf.initial_iterate(chans_free, free, v)
        it_c = bf.initial_iterate(chans_capped, capped, v)
        for _ in range(6):
            it_f = bf.solve_beamforming_step(chans_free, v, it_f, free)
            it_c = bf.solve_beamforming_step(chans_capped, v, it_c, capped)
        assert it_c.sum_rate == pytest.approx(it_f.sum_rate, abs=1e-5)

    def test_single_user_mrt(self, rng):
        # K = 1, J = 0: the optimum is full-power transmission along the
        # dominant direction of the effective channel Gram matrix
        config = SystemConfig(k_users=1, j_eves=0, p_max=dbm_to_watts(10.0))
        chans = _channels_for(config)
        v = np.exp(2j * np.pi * rng.uniform(size=chans.m_total))
        it = bf.initial_iterate(chans, config, v)
        for _ in range(5):
            it = bf.solve_beamforming_step(chans, v, it, config)
        m1 = sysm.m_matrix(chans, v, 0)
        lam, u = np.linalg.eigh(m1)
        w_expected = config.p_max * np.outer(u[:, -1], u[:, -1].conj())
        assert np.real(np.trace(it.z)) <= 1e-6 * config.p_max
        assert np.linalg.norm(it.w[0] - w_expected) <= 1e-4 * config.p_max

    def test_fixed_point(self, desk_channels, desk_config, rng):
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        it = bf.initial_iterate(desk_channels, desk_config, v)
        for _ in range(12):
            it = bf.solve_beamforming_step(desk_channels, v, it, desk_config)
        again = bf.solve_beamforming_step(desk_channels, v, it, desk_config)
        assert abs(again.sum_rate - it.sum_rate) <= 1e-6 * max(1.0, it.sum_rate)

    def test_monotone_steps(self, desk_channels, desk_config, rng):
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        it = bf.initial_iterate(desk_channels, desk_config, v)
        rates = [it.sum_rate]
        for _ in range(4):
            it = bf.solve_beamforming_step(desk_channels, v, it, desk_config)
            rates.append(it.sum_rate)
        assert all(b >= a - 1e-9 for a, b in zip(rates, rates[1:]))
        assert rates[-1] > rates[0]

    def test_power_nesting(self, desk_channels, desk_config, rng):
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))

        def converged_rate(config):
            it = bf.initial_iterate(desk_channels, config, v)
            for _ in range(8):
                it = bf.solve_beamforming_step(desk_channels, v, it, config)
            return it.sum_rate

        low = converged_rate(desk_config)
        high = converged_rate(desk_config.with_updates(p_max=2 * desk_config.p_max))
        assert high >= low - 1e-6

    def test_sca_minorant(self, desk_channels, desk_config, rng):
        # the surrogate upper-bounds the true objective with equality at ref
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        it = bf.initial_iterate(desk_channels, desk_config, v)
        problem, layout = bf.build_subproblem(desk_channels, v, it.w, it.z, desk_config)
        m_mats = sysm.m_matrices(desk_channels, v)
        d1_ref, _, _ = bf.d1_value_and_gradients(it.w, it.z, m_mats, desk_channels.sigma2_l)
        x_ref = bf.reference_vector(it, layout)
        const = problem.objective_value(x_ref) - (
            -sysm.sum_rate(desk_channels, sysm.Solution(w=it.w, z=it.z, v=v))
        )
        for _ in range(6):
            w_pt = np.stack([random_psd(rng, 4, scale=0.01) for _ in range(layout.k_users)])
            z_pt = random_psd(rng, 4, scale=0.01)
            probe = bf.BeamformingIterate(
                w=w_pt, z=z_pt, p=it.p, surrogate=np.nan, sum_rate=np.nan
            )
            x_pt = bf.reference_vector(probe, layout)
            surrogate = problem.objective_value(x_pt) - const
            true_obj = -sysm.sum_rate(desk_channels, sysm.Solution(w=w_pt, z=z_pt, v=v))
            assert surrogate >= true_obj - 1e-9


class TestRecovery:
    def test_identity_on_rank_one(self, desk_channels, desk_config, rng):
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        x *= np.sqrt(0.01) / np.linalg.norm(x)
        w = np.stack([np.outer(x, x.conj()), np.outer(x, x.conj()) * 0.5])
        z = random_psd(rng, 4, scale=0.001)
        p = np.full((2, 1), 0.2)
        v = np.ones(desk_channels.m_total, complex)
        w_t, z_t, p_t, stats = bf.recover_rank_one(
            w, herm(z), p, desk_channels, v, desk_config
        )
        assert np.allclose(w_t, w, atol=1e-12)
        assert np.allclose(z_t, z, atol=1e-12)
        assert np.array_equal(p_t, p)
        assert all(stats["already_rank_one"])

    def test_full_pipeline_properties(self, desk_channels, desk_config, rng):
        v = np.exp(2j * np.pi * rng.uniform(size=desk_channels.m_total))
        it = bf.initial_iterate(desk_channels, desk_config, v)
        for _ in range(3):
            problem, layout = bf.build_subproblem(desk_channels, v, it.w, it.z, desk_config)
            from irsec import conic

            sol = conic.solve(problem, desk_config.solver)
            w_star, z_star, p_star = bf._extract(sol.x, layout)
            w_t, z_t, p_t, stats = bf.recover_rank_one(
                w_star, z_star, p_star, desk_channels, v, desk_config,
                problem=problem, x_star=sol.x, layout=layout,
            )
            # power identity exact, rates preserved, rank restored
            gap = np.linalg.norm((z_t + w_t.sum(axis=0)) - (z_star + w_star.sum(axis=0)))
            assert gap <= 1e-10
            floor = 1e-8 * max(1.0, desk_config.p_max)
            for k in range(desk_channels.k_users):
                if np.real(np.trace(w_t[k])) > floor:
                    assert rank_one_defect(w_t[k]) <= 1e-6
            assert all(d <= 1e-6 for d in stats["defects_after"])
            rate_star = sysm.sum_rate(desk_channels, sysm.Solution(w=w_star, z=z_star, v=v))
            rate_t = sysm.sum_rate(desk_channels, sysm.Solution(w=w_t, z=z_t, v=v))
            assert rate_t == pytest.approx(rate_star, rel=1e-5)
            assert stats.get("objective_change_rel", 0.0) <= 1e-6
            it = bf.BeamformingIterate(
                w=w_t, z=z_t, p=p_t, surrogate=sol.objective, sum_rate=rate_t
            )


class TestInitialization:
    def test_feasible_and_deterministic(self, desk_channels, desk_config):
        from irsec import robust

        v = np.ones(desk_channels.m_total, complex)
        a = bf.initial_iterate(desk_channels, desk_config, v)
        b = bf.initial_iterate(desk_channels, desk_config, v)
        assert np.array_equal(a.w, b.w) and np.array_equal(a.z, b.z)
        tau = desk_config.tau_matrix()
        for k in range(desk_channels.k_users):
            for j in range(desk_channels.j_eves):
                _, margin = robust.best_slack_margin(
                    desk_channels, v, a.w[k], a.z, k, j, tau[k, j]
                )
                assert margin >= -1e-9

    def test_respects_power_budget(self, desk_channels, desk_config):
        v = np.ones(desk_channels.m_total, complex)
        it = bf.initial_iterate(desk_channels, desk_config, v)
        used = float(np.real(np.trace(it.z)) + sum(np.real(np.trace(w)) for w in it.w))
        assert used <= desk_config.p_max * (1 + 1e-12)
