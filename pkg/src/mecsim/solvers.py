"""Per-slot subproblem solvers and the alternating offload optimizer.

Five solvers: task partition (closed form), CPU frequency (closed form),
transmit power (closed form), bandwidth shares (Lagrangian bisection), and
server association (greedy over two partition matroids). The offload triple
(association, bandwidth, power) is coupled, so it is optimized by cyclic
block minimization with a monotonicity guard.

The hot kernels are numba-compiled; the public functions are thin wrappers
that unpack the config and validate inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import SimConfig
from .errors import BracketFailure, NoAssociation, SolverError

_LN2 = math.log(2.0)

# ---------------------------------------------------------------------------
# closed-form solvers


def solve_partition(q_local, q_offload, arrivals):
    """Optimal local fraction of each arrival, elementwise in [0, 1].

    Sends everything to whichever queue is shorter; in the transition band the
    quadratic cost gives a linear interpolation. Zero arrivals get 0 by
    convention (the objective is constant in c then).
    """
    q_local = np.asarray(q_local, dtype=float)
    q_offload = np.asarray(q_offload, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = (q_offload + arrivals - q_local) / (2.0 * arrivals)
    c = np.clip(interior, 0.0, 1.0)
    return np.where(arrivals > 0.0, c, 0.0)


def solve_frequency(q_local, eta_ee, v_weight, cfg: SimConfig):
    """Optimal CPU frequency per device: stationary point capped at f_max."""
    if v_weight <= 0.0:
        raise ValueError("frequency solver needs a positive control weight")
    q_local = np.asarray(q_local, dtype=float)
    stationary = np.sqrt(
        (q_local + v_weight * eta_ee)
        / (3.0 * cfg.kappa * v_weight * cfg.cycles_per_bit)
    )
    return np.minimum(stationary, cfg.f_max)


def solve_power(gamma: float, bit_weight: float, v_weight: float, cfg: SimConfig) -> float:
    """Optimal transmit power for one device given its effective channel.

    `gamma` is the SINR slope (1/W) of the associated link, `bit_weight` the
    backlog-plus-penalty weight times the allocated bandwidth.
    """
    if gamma <= 0.0:
        raise NoAssociation("device has no associated server")
    if v_weight >= bit_weight * gamma / _LN2:
        return 0.0
    return min(cfg.p_max, bit_weight / (v_weight * _LN2) - 1.0 / gamma)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _rate_bps(h, p, a, omega, sigma2, chi):
    if a <= 0.0:
        return 0.0
    noise = chi + a * omega * sigma2
    return a * omega * np.log2(1.0 + h * p / noise)


@njit(cache=True)
def _drate_dalpha(h, p, a, omega, sigma2, chi):
    noise = chi + a * omega * sigma2
    s = h * p
    term = np.log2(1.0 + s / noise)
    curv = a * s * omega * sigma2 / (_LN2 * noise * (noise + s))
    return omega * (term - curv)


@njit(cache=True)
def _power_kernel(gains, alpha, assoc, weights, v_weight, omega, sigma2, chi, p_max):
    n = gains.shape[0]
    p = np.zeros(n)
    for u in range(n):
        m = assoc[u]
        if m < 0:
            continue
        a = alpha[u, m]
        gamma = gains[u, m] / (chi + a * omega * sigma2)
        bit_weight = weights[u] * a * omega
        if gamma <= 0.0 or v_weight >= bit_weight * gamma / _LN2:
            continue
        p[u] = min(p_max, bit_weight / (v_weight * _LN2) - 1.0 / gamma)
    return p


@njit(cache=True)
def _share_of_lambda(h, p, wt, lam, eps_m, omega, sigma2, chi):
    # root of wt * dr/dalpha = lam, clamped to [eps_m, 1]
    if wt * _drate_dalpha(h, p, eps_m, omega, sigma2, chi) <= lam:
        return eps_m
    if wt * _drate_dalpha(h, p, 1.0, omega, sigma2, chi) >= lam:
        return 1.0
    lo = eps_m
    hi = 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if wt * _drate_dalpha(h, p, mid, omega, sigma2, chi) > lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _bandwidth_kernel(gains, powers, weights, tau, omega, sigma2, chi,
                      eps_m, zeta, max_iter):
    """Shares for the devices of one server. Returns (alpha, lambda, status).

    status: 0 ok, 1 bracket failure.
    """
    n = gains.shape[0]
    alpha = np.full(n, eps_m)
    active = np.zeros(n, np.bool_)
    n_act = 0
    for u in range(n):
        if gains[u] * powers[u] > 0.0 and weights[u] > 0.0:
            active[u] = True
            n_act += 1
    if n_act == 0:
        return alpha, 0.0, 0
    if n_act == 1:
        for u in range(n):
            if active[u]:
                alpha[u] = 1.0 - (n - 1) * eps_m
                lam = weights[u] * tau * _drate_dalpha(
                    gains[u], powers[u], alpha[u], omega, sigma2, chi
                )
                return alpha, lam, 0
    lam_lo = 1e300
    lam_hi = 0.0
    for u in range(n):
        if active[u]:
            wt = weights[u] * tau
            d1 = wt * _drate_dalpha(gains[u], powers[u], 1.0, omega, sigma2, chi)
            de = wt * _drate_dalpha(gains[u], powers[u], eps_m, omega, sigma2, chi)
            lam_lo = min(lam_lo, d1)
            lam_hi = max(lam_hi, de)
    # verify the bracket straddles sum(alpha) = 1, expanding geometrically
    ok = False
    for _ in range(6):
        s_lo = 0.0
        s_hi = 0.0
        for u in range(n):
            if active[u]:
                wt = weights[u] * tau
                s_lo += _share_of_lambda(gains[u], powers[u], wt, lam_lo,
                                         eps_m, omega, sigma2, chi)
                s_hi += _share_of_lambda(gains[u], powers[u], wt, lam_hi,
                                         eps_m, omega, sigma2, chi)
            else:
                s_lo += eps_m
                s_hi += eps_m
        if s_lo >= 1.0 - zeta and s_hi <= 1.0 + zeta:
            ok = True
            break
        if s_lo < 1.0 - zeta:
            lam_lo *= 0.1
        if s_hi > 1.0 + zeta:
            lam_hi *= 10.0
    if not ok:
        return alpha, 0.0, 1
    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(max_iter):
        lam = 0.5 * (lam_lo + lam_hi)
        total = 0.0
        for u in range(n):
            if active[u]:
                wt = weights[u] * tau
                alpha[u] = _share_of_lambda(gains[u], powers[u], wt, lam,
                                            eps_m, omega, sigma2, chi)
            total += alpha[u]
        if abs(total - 1.0) <= zeta:
            break
        if total > 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
    return alpha, lam, 0


@njit(cache=True)
def _bandwidth_all(gains, powers, assoc, weights, alpha, tau, omega, sigma2,
                   chi, eps_m, zeta, max_iter):
    """Re-solve every server's shares in place. Returns worst status."""
    n_dev, n_srv = gains.shape
    status = 0
    idx = np.empty(n_dev, np.int64)
    for m in range(n_srv):
        count = 0
        for u in range(n_dev):
            if assoc[u] == m:
                idx[count] = u
                count += 1
        if count == 0:
            continue
        g = np.empty(count)
        p = np.empty(count)
        w = np.empty(count)
        for i in range(count):
            g[i] = gains[idx[i], m]
            p[i] = powers[idx[i]]
            w[i] = weights[idx[i]]
        shares, _, st = _bandwidth_kernel(g, p, w, tau, omega, sigma2, chi,
                                          eps_m, zeta, max_iter)
        if st != 0:
            status = st
        for i in range(count):
            alpha[idx[i], m] = shares[i]
    return status


@njit(cache=True)
def _greedy_kernel(weight_matrix, n_max):
    """Max-weight greedy respecting both partition limits.

    Ties break toward the lowest device index, then the lowest server index.
    """
    n_dev, n_srv = weight_matrix.shape
    assoc = np.full(n_dev, -1, np.int64)
    load = np.zeros(n_srv, np.int64)
    for _ in range(n_dev):
        best = 0.0
        best_u = -1
        best_m = -1
        for u in range(n_dev):
            if assoc[u] >= 0:
                continue
            for m in range(n_srv):
                if load[m] >= n_max:
                    continue
                if weight_matrix[u, m] > best:
                    best = weight_matrix[u, m]
                    best_u = u
                    best_m = m
        if best_u < 0:
            break
        assoc[best_u] = best_m
        load[best_m] += 1
    return assoc


@njit(cache=True)
def _objective_kernel(gains, alpha, powers, assoc, weights, v_weight, tau,
                      omega, sigma2, chi):
    total = 0.0
    for u in range(gains.shape[0]):
        total += v_weight * powers[u] * tau
        m = assoc[u]
        if m >= 0:
            rate = _rate_bps(gains[u, m], powers[u], alpha[u, m], omega, sigma2, chi)
            total -= weights[u] * rate * tau
    return total


@njit(cache=True)
def _converge_continuous(gains, weights, assoc, alpha, v_weight, tau, omega,
                         sigma2, chi, p_max, eps_m, zeta, bw_max_iter,
                         max_iter, rel_tol):
    """Alternate power and bandwidth for a fixed association until the
    objective stalls. Mutates alpha; returns (powers, objective, status)."""
    status = 0
    powers = np.zeros(gains.shape[0])
    obj = np.inf
    for _ in range(max_iter):
        powers = _power_kernel(gains, alpha, assoc, weights, v_weight, omega,
                               sigma2, chi, p_max)
        st = _bandwidth_all(gains, powers, assoc, weights, alpha, tau, omega,
                            sigma2, chi, eps_m, zeta, bw_max_iter)
        if st != 0:
            status = st
        new_obj = _objective_kernel(gains, alpha, powers, assoc, weights,
                                    v_weight, tau, omega, sigma2, chi)
        if np.isfinite(obj) and abs(new_obj - obj) <= rel_tol * max(abs(obj), 1e-30):
            obj = new_obj
            break
        obj = new_obj
    return powers, obj, status


@njit(cache=True)
def _gauss_seidel_kernel(gains, weights, v_weight, tau, omega, sigma2, chi,
                         p_max, eps_m, zeta, bw_max_iter, n_max, max_rounds,
                         rel_tol, assoc0):
    n_dev, n_srv = gains.shape
    provisional = 1.0 / n_max
    alpha = np.full((n_dev, n_srv), provisional)
    assoc = assoc0.copy()
    powers, obj, status = _converge_continuous(
        gains, weights, assoc, alpha, v_weight, tau, omega, sigma2, chi,
        p_max, eps_m, zeta, bw_max_iter, max_rounds, rel_tol)
    trace = np.empty(max_rounds + 1)
    trace[0] = obj
    n_trace = 1
    for _ in range(max_rounds):
        # candidate weights: every pair on the same footing, the provisional
        # share and that pair's own optimal power, so that a currently silent
        # device can re-enter and a bad incumbent link is not sticky
        rate_weight = np.empty((n_dev, n_srv))
        for u in range(n_dev):
            for m in range(n_srv):
                a = provisional
                gamma = gains[u, m] / (chi + a * omega * sigma2)
                bit_weight = weights[u] * a * omega
                if gamma <= 0.0 or v_weight >= bit_weight * gamma / _LN2:
                    p = 0.0
                else:
                    p = min(p_max, bit_weight / (v_weight * _LN2) - 1.0 / gamma)
                rate_weight[u, m] = tau * _rate_bps(
                    gains[u, m], p, a, omega, sigma2, chi
                )
        candidate = _greedy_kernel(rate_weight, n_max)
        assoc_prev = assoc.copy()
        alpha_prev = alpha.copy()
        powers_prev = powers.copy()
        assoc = candidate
        for u in range(n_dev):
            for m in range(n_srv):
                if assoc[u] != m:
                    alpha[u, m] = provisional
        powers, new_obj, st = _converge_continuous(
            gains, weights, assoc, alpha, v_weight, tau, omega, sigma2, chi,
            p_max, eps_m, zeta, bw_max_iter, max_rounds, rel_tol)
        if st != 0:
            status = st
        if new_obj > obj + 1e-9 * abs(obj):
            # the greedy re-association did not pay off: keep the incumbent
            assoc = assoc_prev
            alpha = alpha_prev
            powers = powers_prev
            break
        trace[n_trace] = new_obj
        n_trace += 1
        if abs(new_obj - obj) <= rel_tol * max(abs(obj), 1e-30):
            obj = new_obj
            break
        obj = new_obj
    return assoc, alpha, powers, trace[:n_trace].copy(), status


# ---------------------------------------------------------------------------
# public surface


@dataclass(frozen=True)
class SolverContext:
    """Everything the per-slot solvers need, frozen for one slot."""

    q_local: np.ndarray
    q_offload: np.ndarray
    eta_ee: float
    v_weight: float
    arrivals: np.ndarray
    gains: np.ndarray
    cfg: SimConfig

    @property
    def offload_weights(self) -> np.ndarray:
        """Backlog-plus-penalty weight of each device's offloaded bits."""
        return self.q_offload + self.v_weight * self.eta_ee


@dataclass(frozen=True)
class MatroidGroundSet:
    """Association actions (device, server) with their marginal gains.

    The two partitions are implicit in the matrix layout: rows limit each
    device to one server, columns limit each server to `n_max` devices.
    """

    weights: np.ndarray  # shape (U, M), nonnegative bits
    n_max: int


def association_value(selected: np.ndarray, ground: MatroidGroundSet) -> float:
    """Total weight of a selected binary association matrix."""
    return float((np.asarray(selected) * ground.weights).sum())


def solve_association(ground: MatroidGroundSet) -> np.ndarray:
    """Greedy max-weight selection feasible in both partition matroids."""
    weights = np.ascontiguousarray(ground.weights, dtype=float)
    if np.any(weights < 0.0):
        raise SolverError("association weights must be nonnegative")
    assoc = _greedy_kernel(weights, ground.n_max)
    x = np.zeros(weights.shape, dtype=np.int64)
    for u, m in enumerate(assoc):
        if m >= 0:
            x[u, m] = 1
    return x


def solve_bandwidth(gains, powers, q_offload, eta_ee, v_weight, cfg: SimConfig,
                    return_multiplier: bool = False):
    """Bandwidth shares for the devices associated with one server.

    Shares are floored at `alpha_floor`; when any device can use bandwidth the
    shares sum to 1 within `bandwidth_tol`. Devices that cannot transmit
    (zero power or zero weight) sit at the floor.
    """
    gains = np.ascontiguousarray(gains, dtype=float)
    powers = np.ascontiguousarray(powers, dtype=float)
    weights = np.ascontiguousarray(q_offload, dtype=float) + v_weight * eta_ee
    if gains.size == 0:
        raise SolverError("bandwidth solver needs at least one device")
    alpha, lam, status = _bandwidth_kernel(
        gains, powers, weights, cfg.tau, cfg.bandwidth, cfg.noise_psd,
        cfg.interference, cfg.alpha_floor, cfg.bandwidth_tol,
        cfg.bandwidth_max_iter,
    )
    if status != 0:
        raise BracketFailure("multiplier bracket failed to straddle the root")
    if return_multiplier:
        return alpha, lam
    return alpha


def random_feasible_assoc(num_devices: int, num_servers: int, n_max: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Random association vector feasible in both matroids.

    Devices are visited in random order and pick uniformly among servers with
    spare capacity; a device finding none stays unassociated.
    """
    assoc = np.full(num_devices, -1, dtype=np.int64)
    load = np.zeros(num_servers, dtype=np.int64)
    for u in rng.permutation(num_devices):
        open_servers = np.flatnonzero(load < n_max)
        if open_servers.size == 0:
            continue
        m = open_servers[rng.integers(open_servers.size)]
        assoc[u] = m
        load[m] += 1
    return assoc


def gauss_seidel_offload(ctx: SolverContext, rng: np.random.Generator,
                         assoc0: np.ndarray | None = None):
    """Jointly optimize (association, bandwidth, power) for one slot.

    Cyclic block minimization from a random feasible association. Each round
    re-associates greedily, then re-solves power and bandwidth; a round that
    fails to improve the objective is rolled back and iteration stops.

    Returns (x, alpha, p_tx, objective_trace). The trace is non-increasing;
    a violation beyond 1e-9 relative indicates a solver bug and raises.
    """
    cfg = ctx.cfg
    if assoc0 is None:
        assoc0 = random_feasible_assoc(cfg.num_devices, cfg.num_servers,
                                       cfg.n_max, rng)
    assoc, alpha, powers, trace, status = _gauss_seidel_kernel(
        np.ascontiguousarray(ctx.gains, dtype=float),
        np.ascontiguousarray(ctx.offload_weights, dtype=float),
        ctx.v_weight, cfg.tau, cfg.bandwidth, cfg.noise_psd, cfg.interference,
        cfg.p_max, cfg.alpha_floor, cfg.bandwidth_tol, cfg.bandwidth_max_iter,
        cfg.n_max, cfg.gs_max_iter, cfg.gs_rel_tol,
        np.ascontiguousarray(assoc0, dtype=np.int64),
    )
    if status != 0:
        raise BracketFailure("bandwidth multiplier bracket failed during descent")
    diffs = np.diff(trace)
    if diffs.size and np.any(diffs > 1e-9 * np.abs(trace[:-1])):
        raise SolverError("offload objective increased beyond tolerance")
    x = np.zeros(ctx.gains.shape, dtype=np.int64)
    masked_alpha = np.zeros_like(alpha)
    for u, m in enumerate(assoc):
        if m >= 0:
            x[u, m] = 1
            masked_alpha[u, m] = alpha[u, m]
    return x, masked_alpha, powers, trace


def alternate_power_bandwidth(ctx: SolverContext, assoc: np.ndarray):
    """Optimize power and bandwidth for a fixed association.

    Used by policies that pick the association by some external rule: the
    continuous resources still get the full alternating treatment so that
    only the discrete choice differs from the online controller.
    """
    cfg = ctx.cfg
    gains = np.ascontiguousarray(ctx.gains, dtype=float)
    weights = np.ascontiguousarray(ctx.offload_weights, dtype=float)
    assoc = np.ascontiguousarray(assoc, dtype=np.int64)
    alpha = np.full(gains.shape, 1.0 / cfg.n_max)
    powers, _, status = _converge_continuous(
        gains, weights, assoc, alpha, ctx.v_weight, cfg.tau, cfg.bandwidth,
        cfg.noise_psd, cfg.interference, cfg.p_max, cfg.alpha_floor,
        cfg.bandwidth_tol, cfg.bandwidth_max_iter, cfg.gs_max_iter,
        cfg.gs_rel_tol)
    if status != 0:
        raise BracketFailure("bandwidth multiplier bracket failed")
    x = np.zeros(gains.shape, dtype=np.int64)
    masked_alpha = np.zeros_like(alpha)
    for u, m in enumerate(assoc):
        if m >= 0:
            x[u, m] = 1
            masked_alpha[u, m] = alpha[u, m]
    return x, masked_alpha, powers


def offload_objective(gains, alpha, powers, x, q_offload, eta_ee, v_weight,
                      cfg: SimConfig) -> float:
    """Per-slot offload objective: penalty-weighted energy minus served bits."""
    assoc = np.where(np.asarray(x).sum(axis=1) > 0,
                     np.asarray(x).argmax(axis=1), -1)
    weights = np.asarray(q_offload, dtype=float) + v_weight * eta_ee
    return _objective_kernel(
        np.ascontiguousarray(gains, dtype=float),
        np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(powers, dtype=float),
        np.ascontiguousarray(assoc, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=float),
        v_weight, cfg.tau, cfg.bandwidth, cfg.noise_psd, cfg.interference,
    )
