"""Command-line entry point.

`mecsim run` simulates one configuration and prints its summary;
`mecsim sweep` executes a full experiment grid and writes the CSV outputs.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import SimConfig
from .controller import Policy, PolicyKind, run as run_sim
from .errors import MecsimError
from .experiment import fmt, parse_config, run_experiment

_POLICY_NAMES = [k.value for k in PolicyKind]


def _csv_floats(text):
    return tuple(float(v) for v in text.split(","))


def _csv_ints(text):
    return tuple(int(v) for v in text.split(","))


@click.group()
def main():
    """Simulator and experiment harness for MEC offloading control."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML config; defaults apply when omitted.")
@click.option("--policy", type=click.Choice(_POLICY_NAMES),
              default=PolicyKind.LYAPUNOV.value, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--horizon", type=int, default=None, help="Override the slot count.")
@click.option("--v-weight", type=float, default=None,
              help="Override the EE/delay control weight.")
def run_cmd(config_path, policy, seed, horizon, v_weight):
    """Simulate one configuration and print the summary metrics."""
    cfg = parse_config(config_path).base if config_path else SimConfig()
    overrides = {k: v for k, v in
                 (("seed", seed), ("horizon", horizon), ("v_weight", v_weight))
                 if v is not None}
    if overrides:
        cfg = cfg.with_(**overrides)
    try:
        result = run_sim(cfg, Policy.of(policy))
    except MecsimError as exc:
        raise click.ClickException(str(exc))
    if result.summary is None:
        click.echo("empty horizon: no slots simulated")
        return
    s = result.summary
    click.echo(f"policy            {policy}")
    click.echo(f"slots             {cfg.horizon}")
    click.echo(f"energy/slot [J]   {fmt(s.avg_energy_per_slot)}")
    click.echo(f"bits/slot         {fmt(s.avg_bits_per_slot)}")
    click.echo(f"EE [J/bit]        {fmt(s.network_ee)}")
    click.echo(f"delay [s]         {fmt(s.avg_delay_s)}")
    click.echo(f"mean queue [bit]  {fmt(s.avg_queue_bits)}")


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir",
              envvar="MECSIM_OUTPUT_DIR", type=click.Path(), default=None,
              help="Output directory (env MECSIM_OUTPUT_DIR); config value otherwise.")
@click.option("--seeds", default=None, help="Comma-separated seed list override.")
@click.option("--v-values", default=None, help="Comma-separated V axis override.")
@click.option("--policies", default=None, help="Comma-separated policy override.")
@click.option("--trace/--no-trace", default=None,
              help="Write the per-slot per-device trace.csv.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel worker processes.")
def sweep_cmd(config_path, out_dir, seeds, v_values, policies, trace, jobs):
    """Run an experiment grid and write summary/bounds/manifest files."""
    overrides = {"jobs": jobs}
    if out_dir is not None:
        overrides["output_dir"] = Path(out_dir)
    if seeds is not None:
        overrides["seeds"] = _csv_ints(seeds)
    if v_values is not None:
        overrides["v_values"] = _csv_floats(v_values)
    if policies is not None:
        overrides["policies"] = tuple(PolicyKind(p) for p in policies.split(","))
    if trace is not None:
        overrides["trace"] = trace
    try:
        spec = parse_config(config_path, overrides)
        paths = run_experiment(spec)
    except MecsimError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    main()
