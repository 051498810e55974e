"""Experiment harness: config files, sweep execution, deterministic CSV output.

A sweep is the cross product of the configured axes (control weight, arrival
range, device count, server count, policy) with a list of seeds. Runs are
independent; outputs are written once, in sorted axis order, so a repeated
invocation produces byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import BoundConstants, aggregate_sweep, drift_bound_margins, performance_bounds
from .config import SimConfig, sim_config_from_dict
from .controller import Policy, PolicyKind, RunResult, run
from .errors import DegenerateDenominator, ParseError, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_TOP_LEVEL_TABLES = {"sim", "sweep", "output"}
_SWEEP_KEYS = {"v_values", "arrival_ranges", "device_counts", "server_counts",
               "policies", "seeds"}
_OUTPUT_KEYS = {"directory", "trace"}

SUMMARY_COLUMNS = [
    "v_weight", "arrival_min_bits", "arrival_max_bits", "num_devices",
    "num_servers", "policy", "num_seeds", "energy_per_slot_j",
    "bits_per_slot", "network_ee_j_per_bit", "avg_delay_s", "avg_queue_bits",
]
BOUNDS_COLUMNS = [
    "v_weight", "arrival_min_bits", "arrival_max_bits", "num_devices",
    "num_servers", "policy", "seed", "drift_bound_min_margin",
    "drift_bound_violations", "ee_gap_bound", "queue_bound", "avg_queue_bits",
]
TRACE_COLUMNS = [
    "run", "t", "device", "x_m", "y_m", "arrival_bits", "q_local_bits",
    "q_offload_bits", "local_fraction", "server", "p_tx_w", "f_hz",
]


def fmt(value) -> str:
    """Canonical CSV cell: 17 significant digits for floats, str otherwise."""
    if isinstance(value, float) or isinstance(value, np.floating):
        return format(float(value), ".17g")
    return str(value)


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated sweep description."""

    base: SimConfig
    v_values: tuple[float, ...]
    arrival_ranges: tuple[tuple[float, float], ...]
    device_counts: tuple[int, ...]
    server_counts: tuple[int, ...]
    policies: tuple[PolicyKind, ...]
    seeds: tuple[int, ...]
    output_dir: Path
    trace: bool = False
    jobs: int = 1
    eta_star_proxy: float = 0.0   # 0 means "use best EE observed in the sweep"
    epsilon_proxy: float = 100.0  # service-over-arrival slack, bits/slot

    def __post_init__(self):
        for name in ("v_values", "arrival_ranges", "device_counts",
                     "server_counts", "policies", "seeds"):
            if not getattr(self, name):
                raise ValidationError(f"sweep axis '{name}' must be nonempty")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    def run_configs(self):
        """All (config, policy) pairs of the grid, in sorted axis order."""
        out = []
        for v in sorted(self.v_values):
            for lo, hi in sorted(self.arrival_ranges):
                for n_dev in sorted(self.device_counts):
                    for n_srv in sorted(self.server_counts):
                        for policy in sorted(p.value for p in self.policies):
                            for seed in sorted(self.seeds):
                                cfg = self.base.with_(
                                    v_weight=v, arrival_min=lo, arrival_max=hi,
                                    num_devices=n_dev, num_servers=n_srv,
                                    seed=seed,
                                )
                                out.append((cfg, Policy.of(policy)))
        return out


def parse_config(path, overrides: dict | None = None) -> ExperimentSpec:
    """Read a TOML experiment file, apply flag overrides, validate fully.

    Unknown tables or keys are rejected so that typos cannot silently fall
    back to defaults.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    unknown = set(raw) - _TOP_LEVEL_TABLES
    if unknown:
        raise ParseError(f"unknown config table(s): {sorted(unknown)}")

    base = sim_config_from_dict(raw.get("sim", {}))

    sweep = dict(raw.get("sweep", {}))
    bad = set(sweep) - _SWEEP_KEYS
    if bad:
        raise ParseError(f"unknown sweep key(s): {sorted(bad)}")
    output = dict(raw.get("output", {}))
    bad = set(output) - _OUTPUT_KEYS
    if bad:
        raise ParseError(f"unknown output key(s): {sorted(bad)}")

    spec_kwargs = dict(
        base=base,
        v_values=tuple(float(v) for v in sweep.get("v_values", [base.v_weight])),
        arrival_ranges=tuple(
            (float(lo), float(hi))
            for lo, hi in sweep.get("arrival_ranges",
                                    [[base.arrival_min, base.arrival_max]])
        ),
        device_counts=tuple(sweep.get("device_counts", [base.num_devices])),
        server_counts=tuple(sweep.get("server_counts", [base.num_servers])),
        policies=tuple(PolicyKind(p) for p in
                       sweep.get("policies", [PolicyKind.LYAPUNOV.value])),
        seeds=tuple(int(s) for s in sweep.get("seeds", [base.seed])),
        output_dir=Path(output.get("directory", ".")),
        trace=bool(output.get("trace", False)),
    )
    if overrides:
        spec_kwargs.update(overrides)
    try:
        return ExperimentSpec(**spec_kwargs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _one_run(args) -> RunResult:
    cfg, policy = args
    return run(cfg, policy)


def execute(spec: ExperimentSpec) -> list[RunResult]:
    """Run the whole grid, optionally fanning out across processes."""
    tasks = spec.run_configs()
    if spec.jobs == 1:
        return [_one_run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
        return list(pool.map(_one_run, tasks))


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _bounds_rows(results: list[RunResult], eta_star: float, epsilon: float):
    rows = []
    for res in results:
        cfg = res.cfg
        if not res.records:
            continue
        constants = BoundConstants.from_records(res.records, cfg)
        margins = drift_bound_margins(res.records, cfg.v_weight, constants)
        rel = margins / np.maximum(np.abs(margins).max(), 1e-300)
        violations = int((rel < -1e-6).sum())
        try:
            ee_gap, queue_bound = performance_bounds(constants, cfg.v_weight,
                                                     eta_star, epsilon)
        except DegenerateDenominator:
            ee_gap, queue_bound = float("inf"), float("inf")
        rows.append([
            cfg.v_weight, cfg.arrival_min, cfg.arrival_max, cfg.num_devices,
            cfg.num_servers, res.policy.kind.value, cfg.seed,
            float(margins.min()), violations, ee_gap, queue_bound,
            res.summary.avg_queue_bits if res.summary else float("nan"),
        ])
    rows.sort(key=lambda r: r[:7])
    return rows


def _trace_rows(results: list[RunResult]):
    for res in results:
        cfg = res.cfg
        label = (f"{res.policy.kind.value}/V={fmt(cfg.v_weight)}"
                 f"/A=[{fmt(cfg.arrival_min)},{fmt(cfg.arrival_max)}]"
                 f"/seed={cfg.seed}")
        for rec in res.records:
            assoc = rec.decision.assoc
            for u in range(cfg.num_devices):
                yield [
                    label, rec.t, u, rec.positions[u, 0], rec.positions[u, 1],
                    rec.arrivals[u], rec.q_local_post[u], rec.q_offload_post[u],
                    rec.decision.c[u], int(assoc[u]), rec.decision.p_tx[u],
                    rec.decision.f[u],
                ]


def run_experiment(spec: ExperimentSpec) -> dict[str, Path]:
    """Execute the grid and write summary.csv, bounds.csv, manifest.json
    (and trace.csv when enabled) into the output directory."""
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    results = execute(spec)

    points = aggregate_sweep(results)
    summary_rows = [
        [p.v_weight, p.arrival_min, p.arrival_max, p.num_devices,
         p.num_servers, p.policy, p.num_seeds, p.avg_energy_per_slot,
         p.avg_bits_per_slot, p.network_ee, p.avg_delay_s, p.avg_queue_bits]
        for p in points
    ]
    paths = {"summary": spec.output_dir / "summary.csv",
             "bounds": spec.output_dir / "bounds.csv",
             "manifest": spec.output_dir / "manifest.json"}
    _write_csv(paths["summary"], SUMMARY_COLUMNS, summary_rows)

    eta_star = spec.eta_star_proxy
    if eta_star <= 0.0:
        finite = [p.network_ee for p in points if np.isfinite(p.network_ee)]
        eta_star = min(finite) if finite else 0.0
    _write_csv(paths["bounds"], BOUNDS_COLUMNS,
               _bounds_rows(results, eta_star, spec.epsilon_proxy))

    if spec.trace:
        paths["trace"] = spec.output_dir / "trace.csv"
        _write_csv(paths["trace"], TRACE_COLUMNS, _trace_rows(results))

    manifest = {
        "version": __version__,
        "config_hash": config_hash(spec),
        "seeds": sorted(spec.seeds),
        "num_runs": len(results),
        "summary_rows": len(summary_rows),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


def config_hash(spec: ExperimentSpec) -> str:
    """Stable hash of everything that determines the outputs."""
    payload = dataclasses.asdict(spec)
    payload["base"] = dataclasses.asdict(spec.base)
    payload["output_dir"] = None  # location does not affect content
    payload["jobs"] = None        # parallelism does not affect content
    payload["policies"] = sorted(p.value for p in spec.policies)
    canon = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.sha256(canon.encode()).hexdigest()
