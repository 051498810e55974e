"""One full simulation run: online control loop and the baseline policies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model, solvers
from .config import SimConfig
from .environment import Environment, substreams
from .errors import AllZeroThroughput, MecsimError, SolverError
from .model import Decision, QueueState, SlotRecord


class PolicyKind(str, enum.Enum):
    """The online controller plus the four benchmark decision rules."""

    LYAPUNOV = "lyapunov"          # drift-plus-penalty control, full stack
    ALL_LOCAL = "all-local"        # every task computed on-device
    ALL_OFFLOAD = "all-offload"    # every task sent to a server
    RANDOM_SPLIT = "random-split"  # each arrival fully local or fully offloaded, 50/50
    RANDOM_ASSOC = "random-assoc"  # random server choice, optimal radio/CPU


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind

    @staticmethod
    def of(name) -> "Policy":
        return Policy(PolicyKind(name))


@dataclass(frozen=True)
class RunSummary:
    network_ee: float          # J/bit over the whole run
    avg_delay_s: float
    avg_energy_per_slot: float  # J
    avg_bits_per_slot: float
    avg_queue_bits: float       # time-averaged total backlog
    final_q_local: np.ndarray
    final_q_offload: np.ndarray


@dataclass
class RunResult:
    cfg: SimConfig
    policy: Policy
    records: list[SlotRecord]
    summary: Optional[RunSummary]
    gs_traces: Optional[list[np.ndarray]] = None

    def sample_digest(self) -> str:
        """Hash of the exogenous randomness, for common-random-number checks."""
        import hashlib

        h = hashlib.sha256()
        for r in self.records:
            h.update(r.arrivals.tobytes())
        return h.hexdigest()


def summarize(records: list[SlotRecord], cfg: SimConfig) -> Optional[RunSummary]:
    if not records:
        return None
    try:
        ee = model.network_ee(records)
    except AllZeroThroughput:
        ee = math.nan
    queue = float(np.mean([r.q_local_post.sum() + r.q_offload_post.sum()
                           for r in records]))
    last = records[-1]
    return RunSummary(
        network_ee=ee,
        avg_delay_s=model.average_delay(records, cfg),
        avg_energy_per_slot=float(np.mean([r.energy_total for r in records])),
        avg_bits_per_slot=float(np.mean([r.bits_total for r in records])),
        avg_queue_bits=queue,
        final_q_local=last.q_local_post.copy(),
        final_q_offload=last.q_offload_post.copy(),
    )


def p3_objective(ctx: solvers.SolverContext, c, bits_local, bits_offload,
                 energy_total: float) -> float:
    """Realized value of the per-slot drift-penalty surrogate objective."""
    cfg = ctx.cfg
    v = ctx.v_weight
    local_w = ctx.q_local + v * ctx.eta_ee
    off_w = ctx.q_offload + v * ctx.eta_ee
    a = ctx.arrivals
    split_cost = float(np.sum(
        (ctx.q_local * c - ctx.q_offload * c + c * c * a - c * a) * a
    ))
    return (v * energy_total
            - float(np.sum(local_w * bits_local))
            - float(np.sum(off_w * bits_offload))
            + split_cost)


def audit_decision(dec: Decision, cfg: SimConfig) -> None:
    """Assert the per-slot feasibility constraints; raises on violation."""
    tol = cfg.bandwidth_tol
    if not np.isin(dec.x, (0, 1)).all():
        raise MecsimError("association matrix is not binary")
    if (dec.x.sum(axis=1) > 1).any():
        raise MecsimError("a device is associated with multiple servers")
    if (dec.x.sum(axis=0) > cfg.n_max).any():
        raise MecsimError("a server exceeds its device capacity")
    if ((dec.c < 0) | (dec.c > 1)).any():
        raise MecsimError("partition fraction outside [0, 1]")
    if ((dec.f < 0) | (dec.f > cfg.f_max * (1 + 1e-12))).any():
        raise MecsimError("CPU frequency outside [0, f_max]")
    if ((dec.p_tx < 0) | (dec.p_tx > cfg.p_max * (1 + 1e-12))).any():
        raise MecsimError("transmit power outside [0, p_max]")
    assoc_mask = dec.x > 0
    if (dec.alpha[assoc_mask] < cfg.alpha_floor - 1e-15).any():
        raise MecsimError("an associated device fell below the bandwidth floor")
    per_server = np.where(assoc_mask, dec.alpha, 0.0).sum(axis=0)
    if (per_server > 1.0 + tol).any():
        raise MecsimError("bandwidth shares of a server exceed 1")


def _decide(policy: Policy, ctx: solvers.SolverContext,
            rng: np.random.Generator) -> tuple[Decision, np.ndarray]:
    """Produce this slot's Decision; returns (decision, objective trace)."""
    cfg = ctx.cfg
    n_dev, n_srv = cfg.num_devices, cfg.num_servers
    kind = policy.kind
    zeros_dev = np.zeros(n_dev)
    trace = np.zeros(1)

    if kind is PolicyKind.ALL_LOCAL:
        c = np.ones(n_dev)
    elif kind is PolicyKind.ALL_OFFLOAD:
        c = zeros_dev
    elif kind is PolicyKind.RANDOM_SPLIT:
        c = rng.integers(0, 2, size=n_dev).astype(float)
    else:
        c = solvers.solve_partition(ctx.q_local, ctx.q_offload, ctx.arrivals)

    if kind is PolicyKind.ALL_OFFLOAD:
        f = zeros_dev
    else:
        f = solvers.solve_frequency(ctx.q_local, ctx.eta_ee, ctx.v_weight, cfg)

    if kind is PolicyKind.ALL_LOCAL:
        x = np.zeros((n_dev, n_srv), dtype=np.int64)
        alpha = np.zeros((n_dev, n_srv))
        p = zeros_dev
    elif kind is PolicyKind.RANDOM_ASSOC:
        assoc = solvers.random_feasible_assoc(n_dev, n_srv, cfg.n_max, rng)
        x, alpha, p = solvers.alternate_power_bandwidth(ctx, assoc)
    else:
        x, alpha, p, trace = solvers.gauss_seidel_offload(ctx, rng)

    return Decision(c=c, x=x, alpha=alpha, p_tx=p, f=f), trace


def run(cfg: SimConfig, policy: Policy, audit: bool = False,
        collect_traces: bool = False) -> RunResult:
    """Simulate the full horizon under one policy.

    The environment stream depends only on the seed and config, never on the
    policy, so runs with different policies see identical randomness.
    """
    streams = substreams(cfg.seed)
    rng_policy = streams["policy"]
    env = Environment(cfg, streams)
    q = QueueState.empty(cfg.num_devices)
    records: list[SlotRecord] = []
    traces: list[np.ndarray] = [] if collect_traces else None

    for t in range(cfg.horizon):
        sample = env.step()
        ctx = solvers.SolverContext(
            q_local=q.q_local, q_offload=q.q_offload, eta_ee=q.eta_ee,
            v_weight=cfg.v_weight, arrivals=sample.arrivals,
            gains=sample.gains, cfg=cfg,
        )
        try:
            dec, gs_trace = _decide(policy, ctx, rng_policy)
        except MecsimError as exc:
            raise SolverError(str(exc), slot=t) from exc
        if audit:
            audit_decision(dec, cfg)
        if collect_traces:
            traces.append(gs_trace)

        bits_local = model.local_bits(dec.f, cfg)
        assoc = dec.assoc
        rates = np.array([
            model.offload_rate(sample.gains[u, m], dec.p_tx[u], dec.alpha[u, m], cfg)
            if m >= 0 else 0.0
            for u, m in enumerate(assoc)
        ])
        bits_offload = rates * cfg.tau
        energy_local = model.local_energy(dec.f, cfg)
        energy_offload = model.offload_energy(dec.p_tx, cfg)
        energy_total = float(energy_local.sum() + energy_offload.sum())
        bits_total = float(bits_local.sum() + bits_offload.sum())

        objective = p3_objective(ctx, dec.c, bits_local, bits_offload, energy_total)
        q_next = model.advance_queues(q, dec, bits_local, bits_offload,
                                      sample.arrivals)
        q_next = model.update_eta(q_next, energy_total, bits_total)

        records.append(SlotRecord(
            t=t, arrivals=sample.arrivals, positions=sample.positions, decision=dec,
            bits_local=bits_local, bits_offload=bits_offload,
            energy_local=energy_local, energy_offload=energy_offload,
            q_local_pre=q.q_local, q_offload_pre=q.q_offload,
            q_local_post=q_next.q_local, q_offload_post=q_next.q_offload,
            eta_pre=q.eta_ee, objective=objective,
            gain_max=float(sample.gains.max()),
        ))
        q = q_next

    return RunResult(cfg=cfg, policy=policy, records=records,
                     summary=summarize(records, cfg), gs_traces=traces)
