"""Command-line entry points for the laboratory.

Every compute subcommand takes a TOML configuration (see `dtnlab.harness`
for the schema), runs one pipeline, and writes CSV tables plus a
`manifest.json` into the output directory.  `plots` post-processes such a
directory into renderer-agnostic plot scripts.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import LabError
from .harness import RunManifest, emit_plots, load_config, run_experiment


@click.group()
@click.version_option()
def main() -> None:
    """Numerical laboratory for weighted extensions, boundary maps, and the
    vertical-integral reduction between the nonlocal and local problems."""


_CONFIG = click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=False, dir_okay=False),
    help="TOML experiment configuration.",
)
_OUT = click.option(
    "--out",
    "out_dir",
    default=None,
    type=click.Path(file_okay=False),
    help="Output directory (default: the config's `out`).",
)
_SEED = click.option(
    "--seed", default=None, type=click.IntRange(min=0), help="Override the config seed."
)
_REFINE = click.option(
    "--refine",
    default=0,
    type=click.IntRange(min=0),
    show_default=True,
    help="Refinement level of the declared family (`reduce` runs the whole "
    "ladder up to this level).",
)


def _execute(kind: str, config_path: str, out_dir, seed, refine) -> RunManifest:
    try:
        config = load_config(config_path)
        config = config.with_overrides(kind=kind, seed=seed)
        manifest = run_experiment(config, out_dir=out_dir, refine=refine)
    except LabError as exc:
        raise click.ClickException(str(exc)) from exc
    target = Path(out_dir) if out_dir is not None else Path(config.out)
    click.echo(f"{kind}: wrote {len(manifest.files)} files to {target}")
    for stage in manifest.stages:
        click.echo(f"  {stage.name}: {stage.seconds:.2f}s")
    return manifest


def _register(kind: str, help_text: str):
    @main.command(name=kind, help=help_text)
    @_CONFIG
    @_OUT
    @_SEED
    @_REFINE
    def command(config_path, out_dir, seed, refine, _kind=kind):
        manifest = _execute(_kind, config_path, out_dir, seed, refine)
        if _kind == "selftest" and manifest.budget.get("failures", 0):
            click.echo(f"selftest failures: {manifest.budget['failures']}", err=True)
            sys.exit(1)

    return command


_register(
    "solve-extension",
    "Solve the mixed exterior-data problem; write trace, flux, and potential tables.",
)
_register(
    "dtn",
    "Assemble the fractional and local boundary maps; write matrices and spectra.",
)
_register(
    "reduce",
    "Vertical-integral reduction diagnostics: divergence residual and "
    "Cauchy-graph gap over a refinement ladder.",
)
_register("tails", "Truncation-tail and vertical-decay slope fits.")
_register(
    "runge",
    "Restricted-map SVD, spectral-cutoff controls, and the cost-vs-error curve.",
)
_register(
    "smallness",
    "Three-balls exponents over a seeded family of exterior solutions "
    "(optionally propagated along a ball chain).",
)
_register(
    "stability",
    "Coefficient-amplitude sweep: nonlocal vs local discrepancy ladder "
    "with monotonicity and rank-correlation verdicts.",
)
_register("selftest", "Run the quick invariant battery; exit 1 on any failure.")


@main.command()
@click.option(
    "--out",
    "run_dir",
    required=True,
    type=click.Path(file_okay=False),
    help="Run directory containing manifest.json and CSV tables.",
)
def plots(run_dir) -> None:
    """Emit plot scripts for a completed run directory."""
    try:
        written = emit_plots(run_dir)
    except LabError as exc:
        raise click.ClickException(str(exc)) from exc
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
