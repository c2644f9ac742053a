import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afdstc.errors import CapabilityError, DomainError
from afdstc.network import ChannelRealization, NetworkConfig, PowerAllocation, sample_channel, sample_channel_batch
from afdstc.powerctl import (
    RelayReference,
    SchemeId,
    allocate,
    allocate_batch,
    allocate_dstc_uniform,
    allocate_full_opportunism,
    allocate_opportunistic_relay,
    allocate_opportunistic_source,
    average_snr_two_phase,
    optimal_tau,
    relay_metric_batch,
    selection_metrics,
)
from afdstc.stc import instantaneous_snr


def _total(alloc):
    return sum(alloc.p1_per_antenna) + sum(alloc.p2_per_relay)


def _grid_argmax(cfg):
    """Two-stage grid search at 1e-5 resolution."""
    coarse = np.arange(1, 1000) / 1000.0
    vals = [average_snr_two_phase(cfg, t) for t in coarse]
    t0 = coarse[int(np.argmax(vals))]
    fine = t0 + np.arange(-100, 101) * 1e-5
    fine = fine[(fine > 0) & (fine < 1)]
    vals = [average_snr_two_phase(cfg, t) for t in fine]
    return fine[int(np.argmax(vals))]


class TestUniform:
    def test_two_by_two(self):
        a = allocate_dstc_uniform(NetworkConfig(2, 2, 1, total_power=4.0))
        assert a.tau == 0.5 and a.p1_per_antenna == (1.0, 1.0) and a.p2_per_relay == (1.0, 1.0)

    def test_four_relays(self):
        a = allocate_dstc_uniform(NetworkConfig(4, 1, 1, total_power=8.0))
        assert a.p2_per_relay == (1.0,) * 4

    @pytest.mark.parametrize("scheme", list(SchemeId))
    def test_budget_identity(self, scheme):
        cfg = NetworkConfig(2, 2, 2, total_power=7.3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            alloc = allocate(scheme, cfg, sample_channel(cfg, rng))
            assert _total(alloc) == pytest.approx(cfg.total_power, rel=1e-12)
            alloc.check(cfg)


class TestOpportunisticRelay:
    def test_dominant_relay_selected(self):
        cfg = NetworkConfig(3, 2, 1, total_power=10.0)
        f = np.array([[1.0, 0.5, 0.2], [1.0, 0.5, 0.2]])
        g = np.ones((3, 1))
        _, r = allocate_opportunistic_relay(cfg, ChannelRealization(f, g))
        assert r == 0
        _, r = allocate_opportunistic_relay(cfg, ChannelRealization(f[:, ::-1], g))
        assert r == 2

    def test_tie_goes_to_lowest_index(self):
        cfg = NetworkConfig(3, 1, 1)
        alloc, r = allocate_opportunistic_relay(cfg, ChannelRealization(np.ones((1, 3)), np.ones((3, 1))))
        assert r == 0 and alloc.p2_per_relay == (0.5, 0.0, 0.0)

    def test_degenerate_zero_channels(self):
        cfg = NetworkConfig(2, 1, 1)
        _, r = allocate_opportunistic_relay(cfg, ChannelRealization(np.zeros((1, 2)), np.zeros((2, 1))))
        assert r == 0

    def test_metric_equals_single_relay_snr(self):
        cfg = NetworkConfig(3, 2, 2, total_power=20.0)
        rng = np.random.default_rng(1)
        chan = sample_channel(cfg, rng)
        lam = selection_metrics(cfg, chan).lambda_per_relay
        for r in range(3):
            p2 = [0.0] * 3
            p2[r] = 10.0
            alloc = PowerAllocation(0.5, (5.0, 5.0), tuple(p2))
            assert lam[r] == pytest.approx(instantaneous_snr(cfg, alloc, chan), rel=1e-12)

    def test_beats_random_power_vectors(self):
        cfg = NetworkConfig(3, 2, 2).with_snr_db(12.0)
        rng = np.random.default_rng(2)
        f, g = sample_channel_batch(cfg, rng, 1000)
        P1, P2 = cfg.total_power / 2, cfg.total_power / 2
        best = np.max(relay_metric_batch(cfg, f, g), axis=1)
        # SNR of an arbitrary split q (sum P2) is (sum q a) / (sum q b + c).
        f2 = np.sum(np.abs(f) ** 2, axis=1)
        g2 = np.sum(np.abs(g) ** 2, axis=2)
        unit_rho2 = 1.0 / (cfg.sigma_f_array * P1 + cfg.noise1)
        a = P1 / cfg.src_antennas * f2 * unit_rho2 * g2
        b = unit_rho2 * g2 * cfg.noise1
        c = cfg.dst_antennas * cfg.noise2
        q = rng.dirichlet(np.ones(3), size=1000) * P2
        snr = (a @ q.T) / (b @ q.T + c)
        assert np.all(snr <= best[:, None] * (1 + 1e-12))

    @given(c=st.floats(0.1, 10.0), seed=st.integers(0, 10_000))
    @settings(max_examples=40)
    def test_joint_rescaling_invariance(self, c, seed):
        cfg = NetworkConfig(3, 2, 2, total_power=30.0)
        chan = sample_channel(cfg, np.random.default_rng(seed))
        scaled_cfg = NetworkConfig(3, 2, 2, sigma_f_sq=c * c, sigma_g_sq=c * c, total_power=30.0 / c ** 2)
        scaled = ChannelRealization(chan.f * c, chan.g * c)
        lam = selection_metrics(cfg, chan).lambda_per_relay
        lam_s = selection_metrics(scaled_cfg, scaled).lambda_per_relay
        assert lam_s == pytest.approx(lam, rel=1e-10)
        assert allocate_opportunistic_relay(cfg, chan)[1] == allocate_opportunistic_relay(scaled_cfg, scaled)[1]

    @given(seed=st.integers(0, 10_000), bump=st.floats(1.0, 5.0))
    @settings(max_examples=40)
    def test_dominance(self, seed, bump):
        cfg = NetworkConfig(2, 2, 2, total_power=10.0)
        chan = sample_channel(cfg, np.random.default_rng(seed))
        f = chan.f.copy()
        g = chan.g.copy()
        f[:, 0] = f[:, 1] * math.sqrt(bump)
        g[0] = g[1] * math.sqrt(bump)
        lam = selection_metrics(cfg, ChannelRealization(f, g)).lambda_per_relay
        assert lam[0] >= lam[1]


def _pair_snr(cfg, chan, r, n, ref):
    P1 = P2 = cfg.total_power / 2
    p1 = [0.0] * cfg.src_antennas
    p2 = [0.0] * cfg.num_relays
    p1[n], p2[r] = P1, P2
    alloc = PowerAllocation(0.5, tuple(p1), tuple(p2), tuple(ref))
    return instantaneous_snr(cfg, alloc, chan)


class TestFullOpportunism:
    @pytest.mark.parametrize("reference", list(RelayReference))
    def test_matches_exhaustive_pair_search(self, reference):
        cfg = NetworkConfig(3, 2, 2).with_snr_db(10.0)
        rng = np.random.default_rng(3)
        for _ in range(1000):
            chan = sample_channel(cfg, rng)
            alloc, r, n = allocate_full_opportunism(cfg, chan, relay_reference=reference)
            ref = alloc.input_var(cfg)
            snrs = np.array([[_pair_snr(cfg, chan, rr, nn, ref) for nn in range(2)] for rr in range(3)])
            assert (r, n) == np.unravel_index(np.argmax(snrs), snrs.shape)

    def test_single_antenna_reduces_to_relay_selection(self):
        cfg = NetworkConfig(3, 1, 2).with_snr_db(10.0)
        rng = np.random.default_rng(4)
        for _ in range(300):
            chan = sample_channel(cfg, rng)
            assert allocate_full_opportunism(cfg, chan)[1] == allocate_opportunistic_relay(cfg, chan)[1]

    def test_single_relay(self):
        cfg = NetworkConfig(1, 3, 1)
        f = np.array([[0.1], [2.0], [0.5]])
        _, r, n = allocate_full_opportunism(cfg, ChannelRealization(f, np.ones((1, 1))))
        assert (r, n) == (0, 1)

    def test_reference_variance_is_carried(self):
        cfg = NetworkConfig(2, 2, 1)
        chan = sample_channel(cfg, np.random.default_rng(0))
        alloc, *_ = allocate_full_opportunism(cfg, chan, relay_reference="sigma_xi")
        assert alloc.input_var(cfg) == pytest.approx([1.5, 1.5])

    def test_dominates_relay_selection_per_realization(self):
        cfg = NetworkConfig(2, 2, 2).with_snr_db(10.0)
        rng = np.random.default_rng(5)
        for _ in range(500):
            chan = sample_channel(cfg, rng)
            full = instantaneous_snr(cfg, allocate_full_opportunism(cfg, chan)[0], chan)
            relay = instantaneous_snr(cfg, allocate_opportunistic_relay(cfg, chan)[0], chan)
            assert full >= relay * (1 - 1e-12) >= 0


class TestOpportunisticSource:
    def test_single_antenna_equals_uniform(self):
        cfg = NetworkConfig(2, 1, 1, total_power=4.0)
        alloc, n = allocate_opportunistic_source(cfg, sample_channel(cfg, np.random.default_rng(0)))
        assert n == 0 and alloc == allocate_dstc_uniform(cfg)

    def test_dominant_antenna(self):
        cfg = NetworkConfig(2, 2, 1)
        f = np.array([[1.0, 1.0], [0.1, 0.1]])
        _, n = allocate_opportunistic_source(cfg, ChannelRealization(f, np.ones((2, 1))))
        assert n == 0

    def test_matches_vertex_enumeration(self):
        cfg = NetworkConfig(3, 2, 2, sigma_f_sq=[1.0, 0.5, 2.0]).with_snr_db(8.0)
        rng = np.random.default_rng(6)
        P1, P2 = cfg.total_power / 2, cfg.total_power / 2
        for _ in range(1000):
            chan = sample_channel(cfg, rng)
            _, n = allocate_opportunistic_source(cfg, chan)
            vals = []
            for m in range(2):
                p1 = [0.0, 0.0]
                p1[m] = P1
                vals.append(instantaneous_snr(cfg, PowerAllocation(0.5, tuple(p1), (P2 / 3,) * 3), chan))
            assert n == int(np.argmax(vals))


class TestBatchAgreesWithSingle:
    @pytest.mark.parametrize("scheme", list(SchemeId))
    def test_same_decisions(self, scheme):
        cfg = NetworkConfig(2, 2, 2).with_snr_db(5.0)
        f, g = sample_channel_batch(cfg, np.random.default_rng(7), 200)
        p1, p2, _ = allocate_batch(scheme, cfg, f, g)
        for i in range(200):
            alloc = allocate(scheme, cfg, ChannelRealization(f[i], g[i]))
            assert np.allclose(alloc.p1_per_antenna, p1[i]) and np.allclose(alloc.p2_per_relay, p2[i])


class TestPhaseSplit:
    def test_half_in_symmetric_case(self):
        assert optimal_tau(NetworkConfig(2, 2, 1, total_power=100.0)) == 0.5
        assert optimal_tau(NetworkConfig(1, 1, 1, sigma_f_sq=4.0, sigma_g_sq=1.0, noise1=2.0, noise2=0.5)) == 0.5

    def test_near_symmetric_neighbourhood(self):
        cfg = NetworkConfig(1, 1, 1, sigma_f_sq=1.0 + 1e-11, total_power=10.0)
        assert optimal_tau(cfg) == pytest.approx(0.5, abs=1e-8)

    def test_grid_oracle_printed_example(self):
        cfg = NetworkConfig(1, 1, 1, sigma_f_sq=4.0, sigma_g_sq=1.0, total_power=10.0)
        assert optimal_tau(cfg) == pytest.approx(_grid_argmax(cfg), abs=1e-4)

    def test_grid_oracle_random_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            cfg = NetworkConfig(1, 1, 1, sigma_f_sq=10 ** rng.uniform(-1, 1), sigma_g_sq=10 ** rng.uniform(-1, 1),
                                noise1=10 ** rng.uniform(-1, 1), noise2=10 ** rng.uniform(-1, 1),
                                total_power=10 ** rng.uniform(0, 3))
            assert optimal_tau(cfg) == pytest.approx(_grid_argmax(cfg), abs=1e-4)

    def test_edges_vanish(self):
        cfg = NetworkConfig(1, 1, 1, total_power=10.0)
        assert average_snr_two_phase(cfg, 1e-9) < 1e-7
        assert average_snr_two_phase(cfg, 1 - 1e-9) < 1e-7

    def test_concave_around_half(self):
        cfg = NetworkConfig(1, 1, 1, sigma_f_sq=2.0, sigma_g_sq=2.0, total_power=10.0)
        mid = average_snr_two_phase(cfg, 0.5)
        assert mid >= average_snr_two_phase(cfg, 0.3) and mid >= average_snr_two_phase(cfg, 0.7)

    def test_ratio_of_means_oracle(self):
        cfg = NetworkConfig(2, 2, 2, sigma_f_sq=1.5, sigma_g_sq=0.7, noise2=0.5, total_power=20.0)
        tau = 0.35
        P1, P2 = tau * cfg.total_power, (1 - tau) * cfg.total_power
        f, g = sample_channel_batch(cfg, np.random.default_rng(9), 1_000_000)
        rho2 = (P2 / 2) / (1.5 * P1 + cfg.noise1)
        g2 = np.sum(np.abs(g) ** 2, axis=2)
        num = P1 / 2 * np.sum(np.abs(f) ** 2 * (rho2 * g2)[:, None, :], axis=(1, 2))
        den = rho2 * np.sum(g2, axis=1) * cfg.noise1 + 2 * cfg.noise2
        assert np.mean(num) / np.mean(den) == pytest.approx(average_snr_two_phase(cfg, tau), rel=0.01)

    def test_requires_homogeneous(self):
        cfg = NetworkConfig(2, 1, 1, sigma_f_sq=[1.0, 2.0])
        with pytest.raises(CapabilityError):
            optimal_tau(cfg)
        with pytest.raises(CapabilityError):
            average_snr_two_phase(cfg, 0.5)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.2, 1.5])
    def test_tau_domain(self, tau):
        with pytest.raises(DomainError):
            average_snr_two_phase(NetworkConfig(1, 1, 1), tau)
