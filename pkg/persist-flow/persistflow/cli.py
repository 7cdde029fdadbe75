# -*- coding: utf-8 -*-
"""
persist-flow: two-phase, two-component porous media flow with
persistent variables, and checks of its discrete estimates.

Usage:
    persist-flow run <config> [options]
    persist-flow verify <config> [options]
    persist-flow sweep <config> --axis=<axis> --values=<values> [options]
    persist-flow curves <config> [options]
    persist-flow check-solubility <config> [options]
    persist-flow validate <config> [options]
    persist-flow (-h | --help)
    persist-flow --version

Options:
    --axis=<axis>        Sweep axis: eta, eps, dt or N.
    --values=<values>    Comma separated axis values. dt values may be
                         written as T/<n>, N values as "full".
    --output=<dir>       Output directory (default: taken from the config,
                         under $PERSISTFLOW_OUTPUT_ROOT or ./runs).
    --seed=<seed>        Seed recorded in meta.json [default: 0].
    --jobs=<n>           Parallel sweep members [default: 1].
    --progress           Show progress bars.
    --log-level=<level>  Logging level [default: INFO].

Exit codes: 0 success, 2 configuration error, 3 solver error,
4 failed verification.
"""
import sys
import logging
from pathlib import Path
from typing import List, Optional

from docopt import docopt  # type: ignore
import numpy as np  # type: ignore

import persistflow
from persistflow import diagnostics, settings
from persistflow.config import ConfigError, RunConfig, load_config
from persistflow.constitutive import (
    DomainError, holder_fits, low_solubility_check, validate_assumptions,
)
from persistflow.expressions import ExpressionError
from persistflow.fem import LinearSolveError
from persistflow.global_pressure import TableBuildError, build_tables
from persistflow.mesh import MeshError
from persistflow.outputs import (
    RunWriter, write_curves, write_meta, write_sweep_table,
)
from persistflow.solver import FlowProblem, StepFailure, run
from persistflow.spectral import BasisError


logger = logging.getLogger(__name__)

CONFIG_ERRORS = (ConfigError, MeshError, DomainError, ExpressionError)
SOLVER_ERRORS = (StepFailure, LinearSolveError, TableBuildError, BasisError)


def parse_axis_values(axis: str, text: str, final_time: float) -> List:
    """
    >>> parse_axis_values('dt', 'T/25, T/50', 1.0)
    [0.04, 0.02]
    >>> parse_axis_values('N', '4,8,full', 1.0)
    [4, 8, 'full']
    """
    values = []  # type: List
    for item in (v.strip() for v in text.split(',')):
        if not item:
            continue
        if axis == 'dt' and item.upper().startswith('T/'):
            values.append(final_time / float(item[2:]))
        elif axis == 'N':
            values.append('full' if item == 'full' else int(item))
        else:
            values.append(float(item))
    if not values:
        raise ConfigError([(0, "--values is empty")])
    return values


def _command(args) -> str:
    return " ".join(sys.argv) if sys.argv else repr(args)


def _run_directory(config: RunConfig, args, suffix: str = '') -> Path:
    path = config.output_directory(args['--output'])
    return path.parent / (path.name + suffix) if suffix else path


def cmd_run(config: RunConfig, args, check: bool = False) -> int:
    directory = _run_directory(config, args)
    directory.mkdir(parents=True, exist_ok=True)
    write_meta(directory, config, _command(args), seed=int(args['--seed']))
    tables = _tables(config)
    writer = RunWriter(directory, config,
                       FlowProblem.from_config(config, tables=tables))
    try:
        result = run(config, tables=tables, on_step=writer.on_step,
                     progress=args['--progress'])
    except StepFailure as e:
        writer.finish(e.partial)
        raise
    writer.finish(result)
    print("Results path: %s" % directory)
    if not check:
        return 0

    summary = diagnostics.verify(result)
    for key, value in sorted(summary.checks.items()):
        print("{:>20}: {:.6g}".format(key, value))
    if summary.passed:
        print("verification passed")
        return 0
    for reason in summary.reasons:
        print("FAILED: {}".format(reason))
    return settings.EXIT_VERIFICATION_FAILED


def cmd_sweep(config: RunConfig, args) -> int:
    axis = args['--axis']
    if axis not in diagnostics.AXES:
        raise ConfigError([(0, "unsupported axis {!r}; use one of {}".format(
            axis, ", ".join(diagnostics.AXES)))])
    values = parse_axis_values(axis, args['--values'], config.final_time)
    table = diagnostics.sweep(config, axis, values, jobs=int(args['--jobs']),
                              progress=args['--progress'])
    directory = _run_directory(config, args, '-sweep-' + axis)
    directory.mkdir(parents=True, exist_ok=True)
    write_meta(directory, config, _command(args), seed=int(args['--seed']),
               axis=axis, values=[str(v) for v in values])
    path = write_sweep_table(directory / 'stability.csv', config.config_hash,
                             table)
    for row in table.rows:
        print("{}={}: {}".format(axis, row.value, "ok" if row.completed
                                 else "FAILED ({})".format(row.error)))
    for key, ratio in sorted(table.ratios.items()):
        print("max/min {}: {:.4g}".format(key, ratio))
    print("Stability table: %s" % path)
    if not any(row.completed for row in table.rows):
        return settings.EXIT_SOLVER_ERROR
    return 0


def _tables(config: RunConfig):
    return build_tables(config.curves, config.params.mu_l, config.params.mu_g,
                        config.table_resolution, config.table_tol)


def cmd_curves(config: RunConfig, args) -> int:
    tables = _tables(config)
    directory = _run_directory(config, args, '-curves')
    paths = write_curves(directory, config.config_hash, tables)
    for path in paths:
        print(path)
    return 0


def cmd_check_solubility(config: RunConfig, args) -> int:
    report = low_solubility_check(config.params, config.curves, config.z)
    print("required bound: {:.6g}".format(report.required_bound))
    print("  density branch: {:.6g}".format(report.density_branch))
    print("  viscosity branch: {:.6g}".format(report.viscosity_branch))
    print("1/M_g: {:.6g}".format(report.one_over_Mg))
    print("c_D: {:.6g}".format(report.c_D))
    print("z: {:.6g}".format(report.z))
    print("pass" if report.passed else "FAIL")
    return 0 if report.passed else settings.EXIT_VERIFICATION_FAILED


def cmd_validate(config: RunConfig, args) -> int:
    violations = validate_assumptions(config.curves, params=config.params)
    for v in violations:
        print("{}: {} (measured {:.6g}, bound {:.6g})".format(
            v.assumption_id, v.description, v.measured_value, v.bound))
    fits = holder_fits(config.curves, config.params)
    for key, value in sorted(fits.items()):
        print("fitted exponent {}: {:.4g}".format(key, value))
    for key, value in sorted(config.curves.describe().items()):
        print("{}: {:.6g}".format(key, value))
    if violations:
        return settings.EXIT_VERIFICATION_FAILED
    print("all assumptions hold")
    return 0


def main(args) -> int:
    logging.basicConfig(
        level=getattr(logging, str(args['--log-level']).upper(), logging.INFO),
        format='%(asctime)s [%(name)s] %(levelname)s: %(message)s')
    np.random.seed(int(args['--seed']))
    try:
        config = load_config(args['<config>'])
        if args['run'] or args['verify']:
            return cmd_run(config, args, check=args['verify'])
        if args['sweep']:
            return cmd_sweep(config, args)
        if args['curves']:
            return cmd_curves(config, args)
        if args['check-solubility']:
            return cmd_check_solubility(config, args)
        if args['validate']:
            return cmd_validate(config, args)
    except CONFIG_ERRORS as e:
        print("configuration error:\n{}".format(e), file=sys.stderr)
        return settings.EXIT_CONFIG_ERROR
    except SOLVER_ERRORS as e:
        print("solver error: {}".format(e), file=sys.stderr)
        return settings.EXIT_SOLVER_ERROR
    raise AssertionError("no subcommand matched")


def entry(argv: Optional[List[str]] = None) -> int:
    return main(docopt(__doc__, argv=argv,
                       version='persist-flow %s' % persistflow.__version__))
