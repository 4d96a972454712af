"""
lml - command-line entry point

Usage:
    python lml.py <mode> --config <file> [--out <dir>] [--seed <u64>] [--threads <k>]
    python lml.py compare RECORD_A RECORD_B
"""
import logging
import os
import sys

import click

from lagrangian.errors import LmlError, SchemaError, exit_code_for
from lagrangian.reports import MODES, ExperimentConfig, RunRecord, compare_runs, run, validate_config, verify_manifest
from utils.config import SCHEMA_VERSION, get_output_dir
from utils.file_handler import write_json
from utils.setup_logging import setup_logging
from utils.version import get_version

logger = logging.getLogger('lml')

MAX_SEED = 2 ** 64 - 1


def _banner(title):
    click.echo("=" * 60)
    click.echo(title)
    click.echo("=" * 60)


def _fail(error):
    """Report an error on stderr and exit with its code."""
    click.echo(f"✗ {type(error).__name__}: {error}", err=True)
    for line in getattr(error, 'diagnostics', []):
        click.echo(f"  {line}", err=True)
    sys.exit(exit_code_for(error))


def _load_config(mode, config_path):
    if config_path is None:
        if mode != 'selfcheck':
            raise click.UsageError(f"--config is required for mode '{mode}'")
        doc = {"schema_version": SCHEMA_VERSION, "mode": "selfcheck"}
        validate_config(doc)
        return ExperimentConfig.from_dict(doc)
    config = ExperimentConfig.load(config_path)
    if config.mode != mode:
        raise SchemaError(
            f"Config mode '{config.mode}' does not match the requested mode '{mode}'",
            [f"mode: expected '{mode}'"],
        )
    return config


def _print_record(record, out_dir):
    _banner(f"lml {record.mode} - {'PASSED' if record.passed else 'FAILED'}")
    for name, ok in sorted(record.checks.items()):
        click.echo(f"  {'✓' if ok else '✗'} {name}")
    if record.error:
        click.echo(f"  ✗ {record.error['type']}: {record.error['message']}")
        click.echo(f"    report: {os.path.join(out_dir, record.error['report'])}")
    click.echo()
    click.echo(f"Artifacts: {len(record.artifacts)} file(s) in {out_dir}")
    click.echo(f"Exit code: {record.exit_code}")


def _make_mode_command(mode):
    @click.command(name=mode, help=f"Run the {mode} study.")
    @click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                  default=None, help='Experiment config JSON.')
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                  help='Output directory (default: LML_OUTPUT_DIR or ./output).')
    @click.option('--seed', type=click.IntRange(0, MAX_SEED), default=None, help='Sampling seed.')
    @click.option('--threads', type=click.IntRange(min=1), envvar='LML_THREADS', default=None,
                  help='Worker threads (fallback: LML_THREADS).')
    def command(config_path, out_dir, seed, threads):
        try:
            config = _load_config(mode, config_path)
        except LmlError as e:
            _fail(e)
        if seed is not None:
            config.seed = seed
        out_dir = out_dir or config.output_dir or get_output_dir()
        setup_logging(out_dir)
        logger.info(f"lml {get_version()} mode={mode} config={config_path}")

        record = run(config, out_dir=out_dir, threads=threads)
        _print_record(record, out_dir)
        sys.exit(record.exit_code)

    return command


@click.group()
@click.version_option(get_version(), prog_name='lml')
def cli():
    """Barriers, Dirichlet solves and radial studies for the Lagrangian phase equation."""


for _mode in MODES:
    cli.add_command(_make_mode_command(_mode))


@cli.command(name='compare')
@click.argument('record_a', type=click.Path(exists=True, dir_okay=False))
@click.argument('record_b', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default=None,
              help='Write the diff report as JSON.')
def compare(record_a, record_b, out_path):
    """Compare two run records and re-hash their artifacts."""
    try:
        rec_a = RunRecord.load(record_a)
        rec_b = RunRecord.load(record_b)
        report = compare_runs(rec_a, rec_b)
    except LmlError as e:
        _fail(e)

    problems = []
    for path, rec in ((record_a, rec_a), (record_b, rec_b)):
        problems.extend(f"{path}: {p}" for p in verify_manifest(rec, os.path.dirname(os.path.abspath(path))))
    report['manifest_problems'] = problems

    _banner(f"lml compare ({report['mode']})")
    if not report['diffs']:
        click.echo("  ✓ no differences")
    for diff in report['diffs']:
        mark = '✓' if diff['ok'] else '✗'
        click.echo(f"  {mark} {diff['path']}: {diff['a']} vs {diff['b']} (tol {diff['tolerance']})")
    for row in report.get('convergence', []):
        click.echo(f"  s_level={row['s_level']:g}: h {row['h_a']:g} -> {row['h_b']:g}, "
                   f"factor {row['factor']:.3f}, order {row['order']:.2f}")
    for problem in problems:
        click.echo(f"  ✗ {problem}")
    if out_path:
        write_json(report, out_path)
    sys.exit(0 if report['within_tolerance'] and not problems else 1)


if __name__ == '__main__':
    cli()
