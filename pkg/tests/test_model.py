import math

import numpy as np
import pytest

from mecsim import model
from mecsim.config import SimConfig
from mecsim.errors import AllZeroThroughput, ZeroArrivalRate
from mecsim.model import Decision, QueueState


def make_decision(n_dev, n_srv, c=0.0):
    return Decision(
        c=np.full(n_dev, c),
        x=np.zeros((n_dev, n_srv), dtype=np.int64),
        alpha=np.zeros((n_dev, n_srv)),
        p_tx=np.zeros(n_dev),
        f=np.zeros(n_dev),
    )


def make_record(t, cfg, bits_local, bits_offload, energy_local, energy_offload,
                q_pre=None, q_post=None, arrivals=None, c=0.0, eta=0.0):
    u = cfg.num_devices
    zeros = np.zeros(u)
    q_pre = zeros if q_pre is None else q_pre
    q_post = zeros if q_post is None else q_post
    return model.SlotRecord(
        t=t, arrivals=zeros if arrivals is None else arrivals,
        positions=np.zeros((u, 2)), decision=make_decision(u, cfg.num_servers, c),
        bits_local=np.asarray(bits_local, dtype=float),
        bits_offload=np.asarray(bits_offload, dtype=float),
        energy_local=np.asarray(energy_local, dtype=float),
        energy_offload=np.asarray(energy_offload, dtype=float),
        q_local_pre=q_pre, q_offload_pre=q_pre,
        q_local_post=q_post, q_offload_post=q_post,
        eta_pre=eta, objective=0.0, gain_max=0.0,
    )


class TestRatesAndEnergies:
    def test_offload_rate_zero_share_is_zero(self):
        cfg = SimConfig()
        assert model.offload_rate(1e-8, 1.0, 0.0, cfg) == 0.0

    def test_offload_rate_matches_shannon_form(self):
        cfg = SimConfig()
        h, p, a = 3e-9, 0.4, 0.3
        noise = cfg.interference + a * cfg.bandwidth * cfg.noise_psd
        expected = a * cfg.bandwidth * math.log2(1.0 + h * p / noise)
        assert math.isclose(model.offload_rate(h, p, a, cfg), expected,
                            rel_tol=1e-12)

    def test_offload_rate_increasing_in_power(self):
        cfg = SimConfig()
        rates = [model.offload_rate(1e-9, p, 0.5, cfg) for p in (0.0, 0.1, 1.0)]
        assert rates[0] == 0.0
        assert rates[0] < rates[1] < rates[2]

    def test_local_bits_and_energy_closed_forms(self):
        cfg = SimConfig()
        f = np.array([0.0, 1e9, cfg.f_max])
        np.testing.assert_allclose(model.local_bits(f, cfg),
                                   cfg.tau * f / cfg.cycles_per_bit, rtol=1e-15)
        np.testing.assert_allclose(model.local_energy(f, cfg),
                                   cfg.tau * cfg.kappa * f ** 3, rtol=1e-15)

    def test_offload_energy(self):
        cfg = SimConfig()
        np.testing.assert_allclose(model.offload_energy(np.array([0.0, 0.5]), cfg),
                                   np.array([0.0, 0.5 * cfg.tau]), rtol=1e-15)


class TestQueueUpdate:
    def test_truncation_absorbs_overshoot(self):
        # Q^l=100 served 150 admitted 30 -> 30
        q = QueueState(np.array([100.0]), np.array([50.0]))
        dec = make_decision(1, 1, c=1.0)
        q2 = model.advance_queues(q, dec, np.array([150.0]), np.array([0.0]),
                                  np.array([30.0]))
        assert q2.q_local[0] == 30.0
        assert q2.q_offload[0] == 50.0

    def test_plain_depletion(self):
        # Q^o=100 served 40 admitted 0 -> 60
        q = QueueState(np.array([0.0]), np.array([100.0]))
        dec = make_decision(1, 1, c=1.0)
        q2 = model.advance_queues(q, dec, np.array([0.0]), np.array([40.0]),
                                  np.array([0.0]))
        assert q2.q_offload[0] == 60.0

    def test_split_admission(self):
        q = QueueState(np.array([0.0]), np.array([0.0]))
        dec = make_decision(1, 1, c=0.25)
        q2 = model.advance_queues(q, dec, np.array([0.0]), np.array([0.0]),
                                  np.array([1000.0]))
        assert q2.q_local[0] == 250.0
        assert q2.q_offload[0] == 750.0

    def test_eta_accumulators(self):
        q = QueueState.empty(2)
        assert q.eta_ee == 0.0
        q = model.update_eta(q, 2e-3, 1e3)
        q = model.update_eta(q, 1e-3, 2e3)
        assert math.isclose(q.eta_ee, 3e-3 / 3e3, rel_tol=1e-15)


class TestMetrics:
    def test_network_ee_is_total_ratio(self):
        cfg = SimConfig(num_devices=1)
        records = [
            make_record(0, cfg, [100.0], [0.0], [2e-6], [0.0]),
            make_record(1, cfg, [0.0], [300.0], [0.0], [6e-6]),
        ]
        assert math.isclose(model.network_ee(records), 8e-6 / 400.0,
                            rel_tol=1e-12)

    def test_network_ee_rejects_zero_throughput(self):
        cfg = SimConfig(num_devices=1)
        with pytest.raises(AllZeroThroughput):
            model.network_ee([make_record(0, cfg, [0.0], [0.0], [0.0], [0.0])])

    def test_network_ee_rejects_empty(self):
        with pytest.raises(ValueError):
            model.network_ee([])

    def test_average_delay_littles_law(self):
        cfg = SimConfig(num_devices=2, arrival_min=1000.0, arrival_max=2000.0)
        q_post = np.array([600.0, 900.0])
        records = [make_record(0, cfg, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0],
                               [0.0, 0.0], q_post=q_post)]
        # total backlog 2*1500 bits, aggregate rate 3000 bits/slot -> 1 slot
        assert math.isclose(model.average_delay(records, cfg), cfg.tau,
                            rel_tol=1e-12)

    def test_average_delay_rejects_zero_rate(self):
        cfg = SimConfig(num_devices=1, arrival_min=0.0, arrival_max=0.0)
        with pytest.raises(ZeroArrivalRate):
            model.average_delay([make_record(0, cfg, [0.0], [0.0], [0.0], [0.0])],
                                cfg)


def test_decision_assoc_vector():
    x = np.array([[0, 1], [0, 0], [1, 0]], dtype=np.int64)
    dec = Decision(c=np.zeros(3), x=x, alpha=np.zeros((3, 2)),
                   p_tx=np.zeros(3), f=np.zeros(3))
    np.testing.assert_array_equal(dec.assoc, [1, -1, 0])
