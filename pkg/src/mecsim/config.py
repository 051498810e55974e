"""Simulation configuration: physical constants, algorithm knobs, unit helpers.

All quantities are stored in linear SI units (W, Hz, J, s, bits). dB/dBm
inputs are converted once at parse time so the numeric core never sees
logarithmic units.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ValidationError


def db_to_linear(db: float) -> float:
    """Convert a dB power ratio to a linear ratio."""
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_w_per_hz(dbm: float) -> float:
    """Convert a power spectral density in dBm/Hz to W/Hz."""
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class SimConfig:
    """All constants of one simulation run.

    Defaults are the desk-scale setup: 3 servers and 10 devices moving in a
    100 m x 100 m area, 1 ms slots, 1 MHz uplink, uniform task arrivals of
    1-2 kbit per slot.
    """

    num_servers: int = 3
    num_devices: int = 10
    n_max: int = 4                     # max devices one server serves per slot
    area_side: float = 100.0           # m
    tau: float = 1e-3                  # slot length, s
    bandwidth: float = 1e6             # uplink bandwidth, Hz
    noise_psd: float = dbm_per_hz_to_w_per_hz(-174.0)   # W/Hz
    interference: float = 1e-13        # constant inter-cell interference, W
    path_loss_ref: float = db_to_linear(-40.0)          # linear gain at d0
    ref_distance: float = 1.0          # m
    path_loss_exp: float = 4.0
    kappa: float = 1e-28               # switched capacitance, J*s^2/cycle^3
    cycles_per_bit: float = 737.5
    f_max: float = 2.15e9              # Hz
    p_max: float = 1.0                 # W
    arrival_min: float = 1000.0        # bits
    arrival_max: float = 2000.0        # bits
    v_weight: float = 1e11             # drift-plus-penalty control knob
    horizon: int = 20000               # slots
    seed: int = 0
    step_max: float = 1.0              # mobility step length bound, m/slot
    alpha_floor: float = 1e-4          # minimum bandwidth share per device
    bandwidth_tol: float = 1e-7        # |sum(alpha) - 1| termination tolerance
    bandwidth_max_iter: int = 200      # outer bisection iterations
    gs_max_iter: int = 20              # alternating-minimization iterations
    gs_rel_tol: float = 1e-6           # relative objective-change stop rule

    def __post_init__(self):
        positive = (
            "n_max", "area_side", "tau", "bandwidth", "noise_psd",
            "interference", "path_loss_ref", "ref_distance", "kappa",
            "cycles_per_bit", "f_max", "p_max", "bandwidth_tol",
            "bandwidth_max_iter", "gs_max_iter", "gs_rel_tol",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.num_servers < 1 or self.num_devices < 1:
            raise ValidationError("num_servers and num_devices must be >= 1")
        if self.n_max * self.num_servers < 1:
            raise ValidationError("n_max * num_servers must be >= 1")
        if self.arrival_min < 0 or self.arrival_min > self.arrival_max:
            raise ValidationError("need 0 <= arrival_min <= arrival_max")
        if not 0.0 < self.alpha_floor < 1.0 / self.n_max:
            raise ValidationError("alpha_floor must lie in (0, 1/n_max)")
        if self.path_loss_exp < 2.0:
            raise ValidationError("path_loss_exp must be >= 2")
        if self.v_weight < 0 or self.step_max < 0:
            raise ValidationError("v_weight and step_max must be >= 0")
        if self.horizon < 0:
            raise ValidationError("horizon must be >= 0")

    @property
    def mean_arrival(self) -> float:
        """Per-device mean arrival in bits per slot."""
        return 0.5 * (self.arrival_min + self.arrival_max)

    def with_(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


# Keys accepted in the [sim] table of a config file. The *_db / *_dbm_per_hz
# variants are converted to linear units and must not be given together with
# their linear counterpart.
_UNIT_VARIANTS = {
    "noise_psd_dbm_per_hz": ("noise_psd", dbm_per_hz_to_w_per_hz),
    "path_loss_ref_db": ("path_loss_ref", db_to_linear),
}
_FIELD_NAMES = {f.name for f in fields(SimConfig)}


def sim_config_from_dict(raw: dict) -> SimConfig:
    """Build a SimConfig from a flat key/value mapping, rejecting unknown keys."""
    from .errors import ParseError

    kwargs = {}
    for key, value in raw.items():
        if key in _UNIT_VARIANTS:
            target, conv = _UNIT_VARIANTS[key]
            if target in raw:
                raise ParseError(f"give either '{key}' or '{target}', not both")
            kwargs[target] = conv(float(value))
        elif key in _FIELD_NAMES:
            kwargs[key] = value
        else:
            raise ParseError(f"unknown config key '{key}'")
    return SimConfig(**kwargs)
