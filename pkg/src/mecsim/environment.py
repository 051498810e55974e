"""Exogenous randomness: mobility, fading channels, and task arrivals.

One master seed is split into named substreams so that the environment a
policy sees is identical across policies and control-knob settings (common
random numbers); only the policy's own randomness differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig

# Fixed substream order; appending is fine, reordering breaks reproducibility.
_STREAMS = ("placement", "mobility", "fading", "arrivals", "policy")


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Named, independent generators derived deterministically from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(seq) for name, seq in zip(_STREAMS, children)}


@dataclass(frozen=True)
class SlotSample:
    """Everything the world decides before the controller acts in a slot."""

    positions: np.ndarray  # device coordinates, shape (U, 2), m
    gains: np.ndarray      # channel power gains, shape (U, M), linear
    arrivals: np.ndarray   # task sizes, shape (U,), bits


def reflect(coords: np.ndarray, side: float) -> np.ndarray:
    """Fold coordinates back into [0, side] as if walls were mirrors."""
    folded = np.abs(np.mod(coords, 2.0 * side))
    return side - np.abs(folded - side)


def step_mobility(positions: np.ndarray, rng: np.random.Generator, cfg: SimConfig) -> np.ndarray:
    """Advance every device one random-walk step with reflective walls.

    Uniform direction, uniform step length in [0, step_max].
    """
    n = positions.shape[0]
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    length = rng.uniform(0.0, cfg.step_max, size=n)
    step = length[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return reflect(positions + step, cfg.area_side)


def sample_channel(
    positions: np.ndarray,
    server_positions: np.ndarray,
    rng: np.random.Generator,
    cfg: SimConfig,
) -> np.ndarray:
    """Draw the (U, M) gain matrix: unit-mean fading times distance path loss.

    Distances are floored at the reference distance so the path-loss law never
    blows up when a device sits on top of a server.
    """
    diff = positions[:, None, :] - server_positions[None, :, :]
    dist = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), cfg.ref_distance)
    path = cfg.path_loss_ref * (cfg.ref_distance / dist) ** cfg.path_loss_exp
    fading = rng.exponential(1.0, size=dist.shape)
    return fading * path


def sample_arrivals(rng: np.random.Generator, cfg: SimConfig) -> np.ndarray:
    """Per-device task sizes, i.i.d. uniform on [arrival_min, arrival_max]."""
    return rng.uniform(cfg.arrival_min, cfg.arrival_max, size=cfg.num_devices)


class Environment:
    """Stateful sampler that yields one SlotSample per slot.

    Server positions are drawn once from the placement stream and stay fixed;
    device positions start uniform in the area and then random-walk.
    """

    def __init__(self, cfg: SimConfig, streams: dict[str, np.random.Generator] | None = None):
        self.cfg = cfg
        rngs = streams if streams is not None else substreams(cfg.seed)
        self.rng_mobility = rngs["mobility"]
        self.rng_fading = rngs["fading"]
        self.rng_arrivals = rngs["arrivals"]
        self.server_positions = rngs["placement"].uniform(
            0.0, cfg.area_side, size=(cfg.num_servers, 2)
        )
        self.positions = self.rng_mobility.uniform(
            0.0, cfg.area_side, size=(cfg.num_devices, 2)
        )

    def step(self) -> SlotSample:
        """Advance mobility and draw this slot's channel gains and arrivals."""
        self.positions = step_mobility(self.positions, self.rng_mobility, self.cfg)
        gains = sample_channel(
            self.positions, self.server_positions, self.rng_fading, self.cfg
        )
        arrivals = sample_arrivals(self.rng_arrivals, self.cfg)
        return SlotSample(positions=self.positions, gains=gains, arrivals=arrivals)
