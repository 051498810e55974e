"""Theoretical diagnostics and sweep aggregation.

Implements the per-slot drift-penalty upper bound and the 1/V-vs-V
performance bounds as numerical checkers over realized runs, plus the
grouping of raw runs into plot-ready sweep points.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import SimConfig
from .controller import RunResult
from .errors import DegenerateDenominator
from .model import SlotRecord, offload_rate


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the drift and performance bounds, in bits^2 / bits / J."""

    c1: float          # 1/2 * sum of squared per-device service caps
    c2: float          # A_max^2 / 2
    dl_min: float      # extremes of the network-total served bits per slot
    do_min: float
    dl_max: float
    do_max: float
    e_min: float = 0.0  # an idle slot is always feasible

    @staticmethod
    def from_records(records: Sequence[SlotRecord], cfg: SimConfig) -> "BoundConstants":
        """Realized-horizon constants: the offload cap uses the largest gain
        actually observed, since the fading distribution is unbounded."""
        dl_cap = cfg.tau * cfg.f_max / cfg.cycles_per_bit
        gain_cap = max(r.gain_max for r in records)
        do_cap = cfg.tau * offload_rate(gain_cap, cfg.p_max, 1.0, cfg)
        dl_sums = np.array([r.bits_local.sum() for r in records])
        do_sums = np.array([r.bits_offload.sum() for r in records])
        return BoundConstants(
            c1=0.5 * cfg.num_devices * (dl_cap ** 2 + do_cap ** 2),
            c2=0.5 * cfg.arrival_max ** 2,
            dl_min=float(dl_sums.min()), do_min=float(do_sums.min()),
            dl_max=float(dl_sums.max()), do_max=float(do_sums.max()),
        )


def drift_plus_penalty_check(record: SlotRecord, v_weight: float,
                             constants: BoundConstants):
    """Realized drift-plus-penalty against its slot-wise upper bound.

    Returns (lhs, rhs, ok) with ok = lhs <= rhs within 1e-6 relative slack.
    """
    ql0, qo0 = record.q_local_pre, record.q_offload_pre
    ql1, qo1 = record.q_local_post, record.q_offload_post
    drift = 0.5 * float((ql1 ** 2 - ql0 ** 2 + qo1 ** 2 - qo0 ** 2).sum())
    eta = record.eta_pre
    energy = record.energy_total
    lhs = drift + v_weight * (energy - eta * record.bits_total)

    c = record.decision.c
    a = record.arrivals
    rhs = (
        constants.c1
        + v_weight * energy
        - float(((v_weight * eta + ql0) * record.bits_local).sum())
        - float(((v_weight * eta + qo0) * record.bits_offload).sum())
        + float((qo0 * a).sum())
        + float(((ql0 * c - qo0 * c + c * c * a + 0.5 * a - c * a) * a).sum())
    )
    return lhs, rhs, lhs <= rhs + 1e-6 * abs(rhs)


def drift_bound_margins(records: Sequence[SlotRecord], v_weight: float,
                        constants: BoundConstants) -> np.ndarray:
    """rhs - lhs of the drift bound for every slot (negative = violation)."""
    return np.array([
        (lambda lhs, rhs, ok: rhs - lhs)(*drift_plus_penalty_check(r, v_weight, constants))
        for r in records
    ])


def performance_bounds(constants: BoundConstants, v_weight: float,
                       eta_star_proxy: float, epsilon_proxy: float):
    """EE-gap and backlog bounds: O(1/V) and O(V) in the control weight.

    The optimality gap proxy and the service-slack proxy are configuration
    inputs; the outputs are shape diagnostics, not ground truth.
    """
    d_min = constants.dl_min + constants.do_min
    if v_weight <= 0.0 or d_min <= 0.0 or epsilon_proxy <= 0.0:
        raise DegenerateDenominator("bound denominator is not positive")
    ee_gap = (constants.c1 + constants.c2) / (v_weight * d_min)
    queue_bound = (
        constants.c1 + constants.c2
        + v_weight * eta_star_proxy * (constants.dl_max + constants.do_max)
        - constants.e_min
    ) / epsilon_proxy
    return ee_gap, queue_bound


@dataclass(frozen=True)
class SweepPoint:
    """One aggregated point of an experiment grid (mean over seeds)."""

    v_weight: float
    arrival_min: float
    arrival_max: float
    num_devices: int
    num_servers: int
    policy: str
    num_seeds: int
    seeds: tuple[int, ...]
    network_ee: float
    avg_delay_s: float
    avg_energy_per_slot: float
    avg_bits_per_slot: float
    avg_queue_bits: float

    @property
    def axis_key(self):
        return (self.v_weight, self.arrival_min, self.arrival_max,
                self.num_devices, self.num_servers, self.policy)


def aggregate_sweep(results: Iterable[RunResult]) -> list[SweepPoint]:
    """Group runs by axis tuple and average their summaries over seeds."""
    groups: dict[tuple, list[RunResult]] = defaultdict(list)
    for res in results:
        cfg = res.cfg
        key = (cfg.v_weight, cfg.arrival_min, cfg.arrival_max,
               cfg.num_devices, cfg.num_servers, res.policy.kind.value)
        groups[key].append(res)
    points = []
    for key in sorted(groups):
        runs = groups[key]
        if any(r.summary is None for r in runs):
            raise ValueError("cannot aggregate a run with an empty horizon")
        mean = lambda attr: float(np.mean([getattr(r.summary, attr) for r in runs]))
        points.append(SweepPoint(
            v_weight=key[0], arrival_min=key[1], arrival_max=key[2],
            num_devices=key[3], num_servers=key[4], policy=key[5],
            num_seeds=len(runs),
            seeds=tuple(sorted(r.cfg.seed for r in runs)),
            network_ee=mean("network_ee"),
            avg_delay_s=mean("avg_delay_s"),
            avg_energy_per_slot=mean("avg_energy_per_slot"),
            avg_bits_per_slot=mean("avg_bits_per_slot"),
            avg_queue_bits=mean("avg_queue_bits"),
        ))
    return points
