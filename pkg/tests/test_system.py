import numpy as np
import pytest

from irsec import SystemConfig
from irsec.channels import ChannelSet
from irsec.config import PowerModel
from irsec.linalg import rank_one_factor
from irsec import system as sysm

from conftest import random_psd


def _tiny_channels(n_t=1, m=1, k=1, j=1, n_r=1, sigma2=1.0):
    """Hand-built channel set with unit entries (evaluation is config-free)."""
    return ChannelSet(
        g=np.ones((m, n_t), dtype=complex),
        h=np.ones((k, m), dtype=complex),
        h_bar=np.ones((j, n_r, m), dtype=complex),
        eps=np.zeros(j),
        sigma2_l=np.full(k, sigma2),
        sigma2_e=np.full(j, sigma2),
        irs_sizes=(m,),
    )


def _random_solution(channels, rng, power=0.5):
    k, n_t = channels.k_users, channels.n_t
    w = np.zeros((k, n_t, n_t), dtype=complex)
    for i in range(k):
        x = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
        x *= np.sqrt(power / k) / np.linalg.norm(x)
        w[i] = np.outer(x, x.conj())
    z = random_psd(rng, n_t, scale=power / (4 * n_t))
    v = np.exp(2j * np.pi * rng.uniform(size=channels.m_total))
    return sysm.Solution(w=w, z=z, v=v)


class TestRateUser:
    def test_zero_beamformer(self, desk_channels):
        sol = sysm.zero_solution(desk_channels)
        assert sysm.rate_user(desk_channels, sol, 0) == 0.0

    def test_scalar_awgn(self):
        # single user, unit channels, M = N_t = 1, P = 1: log2(1 + P / sigma^2)
        chans = _tiny_channels(sigma2=0.5)
        sol = sysm.Solution(
            w=np.ones((1, 1, 1), dtype=complex),
            z=np.zeros((1, 1), dtype=complex),
            v=np.ones(1, dtype=complex),
        )
        assert sysm.rate_user(chans, sol, 0) == pytest.approx(np.log2(1 + 1 / 0.5))

    def test_matches_vector_form(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        for k in range(desk_channels.k_users):
            w_vec = rank_one_factor(sol.w[k], tol=1e-8)
            heff = sysm.effective_user_channel(desk_channels, sol.v, k)
            signal = abs(np.vdot(heff, w_vec)) ** 2
            interference = sum(
                abs(np.vdot(heff, rank_one_factor(sol.w[i], tol=1e-8))) ** 2
                for i in range(desk_channels.k_users)
                if i != k
            )
            denom = (
                np.real(heff.conj() @ sol.z @ heff)
                + desk_channels.sigma2_l[k]
                + interference
            )
            direct = np.log2(1 + signal / denom)
            assert sysm.rate_user(desk_channels, sol, k) == pytest.approx(direct, abs=1e-9)

    def test_common_phase_rotation_invariance(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        rotated = sysm.Solution(w=sol.w, z=sol.z, v=np.exp(1j * 0.7) * sol.v)
        for k in range(desk_channels.k_users):
            assert sysm.rate_user(desk_channels, sol, k) == pytest.approx(
                sysm.rate_user(desk_channels, rotated, k), rel=1e-12
            )


class TestLeakage:
    def test_zero_beamformer(self, desk_channels):
        sol = sysm.zero_solution(desk_channels)
        assert sysm.leakage_capacity(desk_channels, sol, 0, 0) == pytest.approx(0.0, abs=1e-12)

    def test_miso_wiretap_reduction(self, rng):
        # N_r = 1, Z = 0: log2(1 + |h_e^H Phi G w|^2 / sigma_e^2)
        chans = _tiny_channels(n_t=3, m=2, k=1, j=1, n_r=1, sigma2=0.8)
        chans = ChannelSet(
            g=rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)),
            h=chans.h,
            h_bar=rng.standard_normal((1, 1, 2)) + 1j * rng.standard_normal((1, 1, 2)),
            eps=np.zeros(1),
            sigma2_l=chans.sigma2_l,
            sigma2_e=np.array([0.8]),
            irs_sizes=(2,),
        )
        w_vec = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        v = np.exp(2j * np.pi * rng.uniform(size=2))
        sol = sysm.Solution(
            w=np.outer(w_vec, w_vec.conj())[None], z=np.zeros((3, 3), complex), v=v
        )
        cascade = ((chans.h_bar[0] * v[None, :]) @ chans.g).ravel()
        expected = float(np.log2(1 + abs(np.vdot(cascade.conj(), w_vec)) ** 2 / 0.8))
        assert sysm.leakage_capacity(chans, sol, 0, 0) == pytest.approx(expected, rel=1e-10)

    def test_det_vs_quadratic(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        for k in range(desk_channels.k_users):
            w_vec = rank_one_factor(sol.w[k], tol=1e-8)
            det_form = sysm.leakage_capacity(desk_channels, sol, k, 0)
            quad_form = sysm.leakage_capacity_quadratic(desk_channels, w_vec, sol, 0)
            assert det_form == pytest.approx(quad_form, abs=1e-10)

    def test_monotone_in_an(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        prev = sysm.leakage_capacity(desk_channels, sol, 0, 0)
        for c in (0.01, 0.05, 0.2):
            bigger = sysm.Solution(
                w=sol.w, z=sol.z + c * np.eye(desk_channels.n_t), v=sol.v
            )
            cur = sysm.leakage_capacity(desk_channels, bigger, 0, 0)
            assert cur <= prev + 1e-12
            prev = cur


class TestSecrecy:
    def test_clamped(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        worst = np.full((desk_channels.k_users, desk_channels.j_eves), 100.0)
        assert sysm.secrecy_rate(desk_channels, sol, worst) == 0.0

    def test_zero_leakage_equals_sum_rate(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        worst = np.zeros((desk_channels.k_users, desk_channels.j_eves))
        assert sysm.secrecy_rate(desk_channels, sol, worst) == pytest.approx(
            sysm.sum_rate(desk_channels, sol)
        )

    def test_bounds(self, desk_channels, rng):
        sol = _random_solution(desk_channels, rng)
        worst = np.abs(rng.standard_normal((desk_channels.k_users, desk_channels.j_eves)))
        s = sysm.secrecy_rate(desk_channels, sol, worst)
        assert 0.0 <= s <= sysm.sum_rate(desk_channels, sol) + 1e-12


class TestEnergyEfficiency:
    def test_reference_constants(self):
        # linear power model values: mu = 0.32, 35 mW/antenna, 34 mW static, 20 mW IRS
        model = PowerModel()
        ee = sysm.energy_efficiency(2.0, 0.1, 4, model)
        denom = 0.1 / 0.32 + 4 * 0.035 + 0.034 + 0.020
        assert ee == pytest.approx(2.0 / denom)

    def test_zero_rate(self):
        assert sysm.energy_efficiency(0.0, 0.1, 4, PowerModel()) == 0.0

    def test_monotone_in_antennas(self):
        model = PowerModel()
        assert sysm.energy_efficiency(2.0, 0.1, 8, model) < sysm.energy_efficiency(
            2.0, 0.1, 4, model
        )


class TestFeasibilityReport:
    def test_zero_solution_passes(self, desk_channels, desk_config, rng):
        report = sysm.check_feasibility(
            desk_channels, sysm.zero_solution(desk_channels), desk_config, rng, n_samples=40
        )
        assert report.power_ok and report.psd_ok and report.leakage_ok

    def test_power_violation_detected(self, desk_channels, desk_config, rng):
        n_t = desk_channels.n_t
        p = desk_config.p_max
        w = np.zeros((desk_channels.k_users, n_t, n_t), dtype=complex)
        w[0] = (1.01 * p / n_t) * np.eye(n_t)
        sol = sysm.Solution(w=w, z=np.zeros((n_t, n_t), complex),
                            v=np.ones(desk_channels.m_total, complex))
        report = sysm.check_feasibility(desk_channels, sol, desk_config, rng, n_samples=10)
        assert not report.power_ok
        assert report.power_margin == pytest.approx(-0.01 * p, rel=1e-9)
