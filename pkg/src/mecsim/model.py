"""Deterministic arithmetic of the system model.

Queue evolution, local-computing and offloading rates/energies, and the
network-level energy-efficiency and delay metrics. Everything here is a pure
function of its inputs; the stochastic parts live in `environment`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import SimConfig
from .errors import AllZeroThroughput, ZeroArrivalRate


@dataclass(frozen=True)
class QueueState:
    """Per-device backlogs plus the running energy-efficiency accumulators."""

    q_local: np.ndarray      # bits awaiting local processing, shape (U,)
    q_offload: np.ndarray    # bits awaiting offloading, shape (U,)
    energy_sum: float = 0.0  # total J spent so far
    bits_sum: float = 0.0    # total bits processed so far

    @property
    def eta_ee(self) -> float:
        """Running energy per bit; 0 until any bits have been processed."""
        return self.energy_sum / self.bits_sum if self.bits_sum > 0 else 0.0

    @staticmethod
    def empty(num_devices: int) -> "QueueState":
        return QueueState(np.zeros(num_devices), np.zeros(num_devices))


@dataclass(frozen=True)
class Decision:
    """Per-slot control tuple: split fractions, association, radio, CPU."""

    c: np.ndarray       # local fraction of each arrival, shape (U,)
    x: np.ndarray       # binary association matrix, shape (U, M)
    alpha: np.ndarray   # bandwidth shares, shape (U, M)
    p_tx: np.ndarray    # transmit powers, W, shape (U,)
    f: np.ndarray       # CPU frequencies, Hz, shape (U,)

    @property
    def assoc(self) -> np.ndarray:
        """Server index per device, -1 when unassociated."""
        has = self.x.sum(axis=1) > 0
        return np.where(has, self.x.argmax(axis=1), -1)


@dataclass(frozen=True)
class SlotRecord:
    """Outcome of one simulated slot."""

    t: int
    arrivals: np.ndarray        # bits, shape (U,)
    positions: np.ndarray       # device coordinates, shape (U, 2), m
    decision: Decision
    bits_local: np.ndarray      # shape (U,)
    bits_offload: np.ndarray    # shape (U,)
    energy_local: np.ndarray    # J, shape (U,)
    energy_offload: np.ndarray  # J, shape (U,)
    q_local_pre: np.ndarray
    q_offload_pre: np.ndarray
    q_local_post: np.ndarray
    q_offload_post: np.ndarray
    eta_pre: float              # running EE used by this slot's decision
    objective: float            # realized per-slot drift-penalty objective
    gain_max: float             # largest channel gain seen this slot

    @property
    def energy_total(self) -> float:
        return float(self.energy_local.sum() + self.energy_offload.sum())

    @property
    def bits_total(self) -> float:
        return float(self.bits_local.sum() + self.bits_offload.sum())


def offload_rate(h_gain: float, p: float, alpha: float, cfg: SimConfig) -> float:
    """Uplink rate in bits/s for one device-server pair.

    Zero bandwidth share means no subcarrier at all, so the rate is zero by
    definition rather than by a limit.
    """
    if alpha <= 0.0:
        return 0.0
    noise = cfg.interference + alpha * cfg.bandwidth * cfg.noise_psd
    return alpha * cfg.bandwidth * math.log2(1.0 + h_gain * p / noise)


def local_bits(f: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Bits processed locally in one slot at CPU frequency f."""
    return cfg.tau * np.asarray(f) / cfg.cycles_per_bit


def local_energy(f: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Energy in J for one slot of local computing at frequency f."""
    return cfg.tau * cfg.kappa * np.asarray(f) ** 3


def offload_energy(p_tx: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Transmit energy in J for one slot at power p_tx."""
    return np.asarray(p_tx) * cfg.tau


def advance_queues(
    q: QueueState,
    dec: Decision,
    bits_local: np.ndarray,
    bits_offload: np.ndarray,
    arrivals: np.ndarray,
) -> QueueState:
    """One-slot backlog update: serve first (truncated at zero), then admit.

    Served bits may exceed the backlog within a slot; the truncation absorbs
    the overshoot.
    """
    q_local = np.maximum(q.q_local - bits_local, 0.0) + dec.c * arrivals
    q_offload = np.maximum(q.q_offload - bits_offload, 0.0) + (1.0 - dec.c) * arrivals
    return replace(q, q_local=q_local, q_offload=q_offload)


def update_eta(q: QueueState, energy: float, bits: float) -> QueueState:
    """Fold one slot's totals into the running energy-per-bit estimate."""
    return replace(q, energy_sum=q.energy_sum + energy, bits_sum=q.bits_sum + bits)


def network_ee(records: Sequence[SlotRecord]) -> float:
    """Long-run energy per bit over a record sequence, in J/bit."""
    if not records:
        raise ValueError("need a nonempty record sequence")
    total_bits = sum(r.bits_total for r in records)
    if total_bits <= 0.0:
        raise AllZeroThroughput("no bits were processed in any slot")
    total_energy = sum(r.energy_total for r in records)
    return total_energy / total_bits


def average_delay(records: Sequence[SlotRecord], cfg: SimConfig) -> float:
    """Mean service delay in seconds via Little's law.

    Time-averaged total backlog divided by the aggregate mean arrival rate
    gives the delay in slots; scaled by the slot length.
    """
    if not records:
        raise ValueError("need a nonempty record sequence")
    rate = cfg.mean_arrival * cfg.num_devices  # bits per slot
    if rate <= 0.0:
        raise ZeroArrivalRate("mean arrival rate is zero")
    mean_queue = float(
        np.mean([r.q_local_post.sum() + r.q_offload_post.sum() for r in records])
    )
    return mean_queue / rate * cfg.tau
