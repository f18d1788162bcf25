import numpy as np
import pytest

from rismimo.channel import sample_batch, overall_channel_stacked
from rismimo.errors import ConfigError
from rismimo.estimation import (OverallEstimator, PilotPlan, ShortTermEstimator,
                                error_covariance_mc, lmmse_error_cov, lmmse_filter,
                                overall_second_moment, simulate_pilot_rx_long,
                                simulate_pilot_rx_short, subsurface_sums,
                                subsurface_tiles, sufficient_stats_long,
                                sufficient_stats_short)
from rismimo.linalg import complex_normal
from tests.conftest import rand_psd, toy_stats


def short_pipeline(stats, plan, sigma2, rng, size):
    batch = sample_batch(stats, rng, size)
    sums = subsurface_sums(batch.G, batch.f, plan)
    y = simulate_pilot_rx_short(batch.h, sums, plan, sigma2, rng)
    z_h, z_H = sufficient_stats_short(y, plan)
    return batch, sums, z_h, z_H


class TestPilotPlan:
    def test_ue_pilots_orthonormal(self):
        plan = PilotPlan.build(4, 2, 2, 2, 2, eta=0.1, tau_dot=3)
        gram = plan.ue_pilots.conj().T @ plan.ue_pilots
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)

    def test_schedule_orthogonality(self):
        plan = PilotPlan.build(2, 2, 4, 4, 4, eta=0.1, tau_dot=1)
        t = plan.intervals
        psi = plan.ris_schedule.reshape(-1, t)
        np.testing.assert_allclose(psi @ psi.conj().T, t * np.eye(8), atol=1e-9)
        np.testing.assert_allclose(psi.sum(axis=1), 0, atol=1e-9)
        np.testing.assert_allclose(np.abs(psi), 1.0, atol=1e-12)

    def test_minimal_schedule_is_plus_minus_one(self):
        plan = PilotPlan.build(1, 1, 1, 1, 1, eta=1.0, tau_dot=1)
        np.testing.assert_allclose(plan.ris_schedule[0, 0], [1.0, -1.0], atol=1e-12)

    def test_tiles_partition_square_blocks(self):
        groups = subsurface_tiles(4, 4, 4, "tiles")
        assert len(groups) == 4 and all(g.size == 4 for g in groups)
        assert sorted(np.concatenate(groups).tolist()) == list(range(16))
        # first tile is the lower-left 2x2 square: vertical index fastest
        np.testing.assert_array_equal(groups[0], [0, 1, 4, 5])

    def test_contiguous_fallback(self):
        groups = subsurface_tiles(2, 3, 3, "tiles")  # 2 per group, not square
        np.testing.assert_array_equal(groups[0], [0, 1])

    def test_indivisible_rejected(self):
        with pytest.raises(ConfigError):
            subsurface_tiles(2, 2, 3)


class TestDespreading:
    def test_noiseless_direct_despread_exact(self, rng):
        stats = toy_stats(rng, K=1, L=0 or 1, M=3, N=2)
        plan = PilotPlan.build(1, 1, 1, 2, 2, eta=0.8, tau_dot=1)
        batch, sums, z_h, z_H = short_pipeline(stats, plan, 0.0, rng, 2)
        np.testing.assert_allclose(z_h / plan.short_scale, batch.h,
                                   atol=1e-12 * np.abs(batch.h).max())

    def test_noiseless_subsurface_despread_exact(self, rng):
        stats = toy_stats(rng, K=2, L=2, M=3, N=4)
        plan = PilotPlan.build(2, 2, 2, 2, 2, eta=0.8, tau_dot=1)
        batch, sums, z_h, z_H = short_pipeline(stats, plan, 0.0, rng, 2)
        for ell in range(2):
            for r in range(2):
                np.testing.assert_allclose(
                    z_H[:, :, ell, r] / plan.short_scale, sums[:, :, ell, r],
                    atol=1e-12 * np.abs(sums).max())

    def test_pilot_orthogonality_removes_other_ues(self, rng):
        # build a received block with only UE 1 active and despread for UE 0
        stats = toy_stats(rng, K=2, L=1, M=3, N=2)
        plan = PilotPlan.build(2, 1, 1, 2, 2, eta=0.5, tau_dot=1)
        batch = sample_batch(stats, rng, 1)
        batch.h[:, 0] = 0
        sums = subsurface_sums(batch.G, batch.f, plan)
        sums[:, 0] = 0
        y = simulate_pilot_rx_short(batch.h, sums, plan, 0.0, rng)
        z_h, _ = sufficient_stats_short(y, plan)
        assert np.abs(z_h[0, 0]).max() < 1e-12 * np.abs(z_h[0, 1]).max()

    def test_despread_noise_is_white(self, rng):
        stats = toy_stats(rng, K=2, L=1, M=2, N=2)
        plan = PilotPlan.build(2, 1, 1, 2, 2, eta=0.5, tau_dot=1)
        sigma2 = 0.7
        draws = 100_000
        zeros_h = np.zeros((draws, 2, 2), dtype=complex)
        zeros_sums = np.zeros((draws, 2, 1, 2, 2), dtype=complex)
        y = simulate_pilot_rx_short(zeros_h, zeros_sums, plan, sigma2, rng)
        z_h, z_H = sufficient_stats_short(y, plan)
        cov = np.einsum("bm,bn->mn", z_h[:, 0], z_h[:, 0].conj()) / draws
        np.testing.assert_allclose(cov, sigma2 * np.eye(2), atol=0.02)
        cov_h = np.einsum("bm,bn->mn", z_H[:, 0, 0, 0], z_H[:, 0, 0, 0].conj()) / draws
        np.testing.assert_allclose(cov_h, sigma2 * np.eye(2), atol=0.02)


class TestLmmseFilter:
    def test_zero_prior_gives_zero(self):
        w = lmmse_filter(np.zeros((3, 3)), 2.0, 0.5)
        np.testing.assert_array_equal(w, np.zeros((3, 3)))

    def test_noiseless_invertible_is_inverse_scaling(self, rng):
        rbar = rand_psd(rng, 3, 2.0) + np.eye(3)
        w = lmmse_filter(rbar, 3.0, 0.0)
        np.testing.assert_allclose(w, np.eye(3) / 3.0, atol=1e-10)

    def test_error_cov_psd_and_consistent(self, rng):
        rbar = rand_psd(rng, 4, 1.5)
        w = lmmse_filter(rbar, 2.0, 0.3)
        c = lmmse_error_cov(rbar, w, 2.0)
        lam = np.linalg.eigvalsh(c)
        assert lam.min() > -1e-10

    def test_orthogonality_principle_mc(self, rng):
        # E{(x - x_hat) z^H} = 0 for the closed-form filter
        rbar = rand_psd(rng, 3, 1.0)
        scale, sigma2 = 1.7, 0.4
        w = lmmse_filter(rbar, scale, sigma2)
        sqrt = np.linalg.cholesky(rbar + 1e-12 * np.eye(3))
        draws = 200_000
        x = complex_normal(rng, (draws, 3)) @ sqrt.conj().T
        z = scale * x + np.sqrt(sigma2) * complex_normal(rng, (draws, 3))
        xhat = z @ w.conj().T
        cross = np.einsum("bm,bn->mn", x - xhat, z.conj()) / draws
        assert np.abs(cross).max() < 0.02


class TestShortTermEstimator:
    def test_mse_ordering_lmmse_vs_ls(self, rng):
        stats = toy_stats(rng, K=2, L=1, M=3, N=4)
        plan = PilotPlan.build(2, 1, 2, 2, 2, eta=0.3, tau_dot=1)
        sigma2 = 0.5
        batch, sums, z_h, z_H = short_pipeline(stats, plan, sigma2, rng, 4000)
        lmmse = ShortTermEstimator(stats, plan, sigma2)
        ls = ShortTermEstimator(stats, plan, sigma2, ls=True)
        h_true = np.einsum("blmn,bkln->bklmn", batch.G, batch.f)
        for est_a, est_b in [(lmmse, ls)]:
            ha, Ha = est_a.estimate(z_h, z_H)
            hb, Hb = est_b.estimate(z_h, z_H)
            mse_a = np.mean(np.abs(ha - batch.h) ** 2)
            mse_b = np.mean(np.abs(hb - batch.h) ** 2)
            assert mse_a <= mse_b * 1.001
            cmse_a = np.mean(np.abs(Ha - h_true) ** 2)
            cmse_b = np.mean(np.abs(Hb - h_true) ** 2)
            assert cmse_a <= cmse_b * 1.001

    def test_ls_exact_when_separated_and_noiseless(self, rng):
        stats = toy_stats(rng, K=2, L=1, M=3, N=2)
        plan = PilotPlan.build(2, 1, 1, 2, 2, eta=0.3, tau_dot=1)  # R = N
        batch, sums, z_h, z_H = short_pipeline(stats, plan, 0.0, rng, 3)
        est = ShortTermEstimator(stats, plan, 0.0, ls=True)
        hhat, hcasc = est.estimate(z_h, z_H)
        h_true = np.einsum("blmn,bkln->bklmn", batch.G, batch.f)
        np.testing.assert_allclose(hhat, batch.h, atol=1e-10 * np.abs(batch.h).max())
        np.testing.assert_allclose(hcasc, h_true, atol=1e-10 * np.abs(h_true).max())

    def test_ls_equal_split_residual_bounded_below(self, rng):
        # grouped columns force the equal split to miss the per-column spread
        stats = toy_stats(rng, K=1, L=1, M=3, N=4)
        plan = PilotPlan.build(1, 1, 2, 2, 1, eta=0.5, tau_dot=1)  # R=1, 4 cols/sub
        batch, sums, z_h, z_H = short_pipeline(stats, plan, 0.0, rng, 500)
        est = ShortTermEstimator(stats, plan, 0.0, ls=True)
        _, hcasc = est.estimate(z_h, z_H)
        h_true = np.einsum("blmn,bkln->bklmn", batch.G, batch.f)
        resid = np.mean(np.abs(hcasc - h_true) ** 2, axis=(0, 1, 2, 3))
        spread = np.mean(
            np.abs(h_true - h_true.mean(axis=-1, keepdims=True)) ** 2,
            axis=(0, 1, 2, 3))
        # equal attribution cannot beat the intra-group spread on average
        assert resid.sum() >= 0.99 * spread.sum()

    def test_noiseless_separated_recovery(self, rng):
        stats = toy_stats(rng, K=2, L=2, M=3, N=4)
        plan = PilotPlan.build(2, 2, 2, 2, 4, eta=0.3, tau_dot=1)  # R = N
        batch, sums, z_h, z_H = short_pipeline(stats, plan, 0.0, rng, 3)
        est = ShortTermEstimator(stats, plan, 0.0)
        hhat, hcasc = est.estimate(z_h, z_H)
        h_true = np.einsum("blmn,bkln->bklmn", batch.G, batch.f)
        assert np.abs(hhat - batch.h).max() < 1e-9 * np.abs(batch.h).max()
        assert np.abs(hcasc - h_true).max() < 1e-9 * np.abs(h_true).max()

    def test_sample_lmmse_oracle_direct(self, rng):
        stats = toy_stats(rng, K=1, L=1, M=2, N=2)
        plan = PilotPlan.build(1, 1, 1, 2, 2, eta=0.4, tau_dot=1)
        sigma2 = 0.6
        est = ShortTermEstimator(stats, plan, sigma2)
        draws = 100_000
        batch, sums, z_h, z_H = short_pipeline(stats, plan, sigma2, rng, draws)
        z = z_h[:, 0]
        rzz = np.einsum("bm,bn->mn", z, z.conj()) / draws
        rxz = np.einsum("bm,bn->mn", batch.h[:, 0], z.conj()) / draws
        w_sample = rxz @ np.linalg.inv(rzz)
        rel = np.linalg.norm(w_sample - est.w_direct[0]) / np.linalg.norm(est.w_direct[0])
        assert rel < 0.03


class TestOverallEstimator:
    def test_reduces_to_direct_without_ris(self, rng):
        stats = toy_stats(rng, K=2, L=1, M=3, N=2)
        plan = PilotPlan.build(2, 1, 1, 2, 2, eta=0.4, tau_dot=3)
        sigma2 = 0.2
        est = OverallEstimator(stats, None, plan, sigma2)
        w_direct = lmmse_filter(stats.direct[0].rbar, plan.long_scale, sigma2)
        np.testing.assert_allclose(est.w[0], w_direct, atol=1e-12)

    def test_noiseless_recovery(self, rng):
        stats = toy_stats(rng, K=2, L=2, M=3, N=4)
        plan = PilotPlan.build(2, 2, 2, 2, 2, eta=0.4, tau_dot=2)
        diag = np.exp(1j * rng.uniform(0, 2 * np.pi, (2, 4)))
        batch = sample_batch(stats, rng, 3)
        b = overall_channel_stacked(batch.h, batch.f, batch.G, diag)
        y = simulate_pilot_rx_long(b, plan, 0.0, rng)
        z = sufficient_stats_long(y, plan)
        est = OverallEstimator(stats, diag, plan, 0.0)
        bhat = est.estimate(z)
        assert np.abs(bhat - b).max() < 1e-9 * np.abs(b).max()

    def test_second_moment_matches_mc(self, rng):
        stats = toy_stats(rng, K=1, L=1, M=3, N=3)
        diag = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 3)))
        draws = 100_000
        batch = sample_batch(stats, rng, draws)
        b = overall_channel_stacked(batch.h, batch.f, batch.G, diag)
        emp = np.einsum("bm,bn->mn", b[:, 0], b[:, 0].conj()) / draws
        rbar = overall_second_moment(stats, diag, 0)
        assert np.linalg.norm(emp - rbar) / np.linalg.norm(rbar) < 0.05

    def test_sample_lmmse_oracle_overall(self, rng):
        stats = toy_stats(rng, K=1, L=1, M=2, N=2)
        plan = PilotPlan.build(1, 1, 1, 2, 2, eta=0.4, tau_dot=2)
        sigma2 = 0.5
        diag = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 2)))
        est = OverallEstimator(stats, diag, plan, sigma2)
        draws = 100_000
        batch = sample_batch(stats, rng, draws)
        b = overall_channel_stacked(batch.h, batch.f, batch.G, diag)
        y = simulate_pilot_rx_long(b, plan, sigma2, rng)
        z = sufficient_stats_long(y, plan)
        rzz = np.einsum("bm,bn->mn", z[:, 0], z[:, 0].conj()) / draws
        rxz = np.einsum("bm,bn->mn", b[:, 0], z[:, 0].conj()) / draws
        w_sample = rxz @ np.linalg.inv(rzz)
        rel = np.linalg.norm(w_sample - est.w[0]) / np.linalg.norm(est.w[0])
        assert rel < 0.03

    def test_error_cov_closed_form_vs_mc(self, rng):
        stats = toy_stats(rng, K=1, L=1, M=3, N=2)
        plan = PilotPlan.build(1, 1, 1, 2, 2, eta=0.4, tau_dot=2)
        sigma2 = 0.5
        diag = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 2)))
        est = OverallEstimator(stats, diag, plan, sigma2)

        def stream():
            for _ in range(20):
                batch = sample_batch(stats, rng, 5000)
                b = overall_channel_stacked(batch.h, batch.f, batch.G, diag)
                y = simulate_pilot_rx_long(b, plan, sigma2, rng)
                bhat = est.estimate(sufficient_stats_long(y, plan))
                yield b, bhat

        c_mc = error_covariance_mc(stream(), 1, 3)
        rel = np.linalg.norm(c_mc[0] - est.err_cov[0]) / np.linalg.norm(est.err_cov[0])
        assert rel < 0.05

    def test_error_cov_mc_perfect_estimator_is_zero(self, rng):
        def stream():
            for _ in range(3):
                b = complex_normal(rng, (100, 1, 3))
                yield b, b.copy()

        c = error_covariance_mc(stream(), 1, 3)
        assert np.abs(c).max() == 0.0

    def test_error_trace_decreases_with_pilot_power(self, rng):
        stats = toy_stats(rng, K=1, L=1, M=3, N=2)
        diag = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 2)))
        traces = []
        for eta in (0.05, 0.2, 0.8, 3.0):
            plan = PilotPlan.build(1, 1, 1, 2, 2, eta=eta, tau_dot=2)
            est = OverallEstimator(stats, diag, plan, 0.5)
            traces.append(np.trace(est.err_cov[0]).real)
        assert all(a > b for a, b in zip(traces, traces[1:]))
