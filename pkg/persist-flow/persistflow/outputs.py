# -*- coding: utf-8 -*-
"""
Run directory layout::

    <run dir>/
        meta.json              command, timestamp, seed, config hash, version
        config.cfg             the configuration text as loaded
        timeseries.csv         one row per accepted step
        snapshots/step-NNNNNN.csv
        final_state.joblib     final State and the step reports

Every CSV file starts with ``# persist-flow <version> config-sha256 <hash>``.
"""
import csv
import json
import time
import logging
from pathlib import Path
from typing import Dict, List, Optional

import joblib  # type: ignore
import numpy as np  # type: ignore

import persistflow
from persistflow.solver import FlowProblem, RunResult, State, StepReport


logger = logging.getLogger(__name__)

TIME_SERIES_COLUMNS = [
    'step', 'time', 'dt_effective', 'picard_iters', 'min_pg', 'max_pg',
    'min_S', 'max_S', 'water_mass', 'gas_mass', 'E_eps_total', 'diss_l',
    'diss_g', 'diss_u', 'diss_eps', 'diss_eta', 'grad_p_norm',
    'grad_beta_norm', 'mass_defect',
]


def header_line(config_hash: str) -> str:
    return "# persist-flow {} config-sha256 {}\n".format(
        persistflow.__version__, config_hash)


def write_meta(path: Path, config, command: str, seed: Optional[int] = None,
               **extra) -> None:
    meta = {
        'command': command,
        'ts': str(int(time.time())),
        'config': config.name,
        'config_hash': config.config_hash,
        'version': persistflow.__version__,
        'seed': seed,
        'scheme': config.scheme.as_dict(),
        'scheme_overrides': config.overrides,
    }
    meta.update(extra)
    path.joinpath('meta.json').write_text(json.dumps(meta, indent=4))


def time_series_row(report: StepReport) -> Dict[str, object]:
    row = {
        'step': report.step,
        'time': report.time,
        'dt_effective': report.dt,
        'picard_iters': report.picard_iterations,
        'min_pg': report.min_p_g,
        'max_pg': report.max_p_g,
        'min_S': report.saturation_range[0],
        'max_S': report.saturation_range[1],
    }  # type: Dict[str, object]
    if report.mass is not None:
        row['water_mass'] = report.mass.water_mass
        row['gas_mass'] = report.mass.gas_mass
        row['mass_defect'] = report.mass.relative_defect
    if report.energy is not None:
        terms = report.energy.as_dict()
        for key in TIME_SERIES_COLUMNS:
            if key in terms:
                row[key] = terms[key]
    return row


def snapshot_rows(problem: FlowProblem, state: State):
    """ Header and per-node rows of a snapshot """
    sec = problem.secondary(state)
    x, y = problem.mesh.coordinates()
    coords = [x] if problem.mesh.dim == 1 else [x, y]
    names = ['x'] if problem.mesh.dim == 1 else ['x', 'y']
    p = sec.p if sec.p is not None else np.full_like(x, np.nan)
    beta = sec.beta_S if sec.beta_S is not None else np.full_like(x, np.nan)
    columns = coords + [state.p_l, state.p_g, sec.S, sec.u, sec.rho_g, p, beta]
    header = names + ['p_l', 'p_g', 'S', 'u', 'rho_g', 'p', 'beta_S']
    return header, np.column_stack(columns)


class RunWriter:
    """
    Writes the outputs of one run as it goes. Pass :meth:`on_step` to
    :func:`persistflow.solver.run` and call :meth:`finish` at the end.
    """
    def __init__(self, directory: Path, config, problem: Optional[FlowProblem] = None,
                 snapshot_every: Optional[int] = None) -> None:
        self.directory = Path(directory)
        self.config = config
        self.problem = problem
        self.snapshot_every = (config.output.snapshot_every
                               if snapshot_every is None else snapshot_every)
        self.header = header_line(config.config_hash)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.directory.joinpath('snapshots').mkdir(exist_ok=True)
        self.directory.joinpath('config.cfg').write_text(config.text)
        self._fp = self.directory.joinpath('timeseries.csv').open('w', newline='')
        self._fp.write(self.header)
        self._writer = csv.DictWriter(self._fp, fieldnames=TIME_SERIES_COLUMNS,
                                      restval='')
        self._writer.writeheader()
        self.n_snapshots = 0

    def on_step(self, state: State, report: StepReport) -> None:
        self._writer.writerow(time_series_row(report))
        self._fp.flush()
        if (self.problem is not None and self.snapshot_every > 0 and
                report.step % self.snapshot_every == 0):
            self.write_snapshot(report.step, state)

    def write_snapshot(self, step: int, state: State) -> Path:
        assert self.problem is not None
        header, data = snapshot_rows(self.problem, state)
        path = self.directory / 'snapshots' / 'step-{:06d}.csv'.format(step)
        with path.open('w', newline='') as f:
            f.write(self.header)
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(data.tolist())
        self.n_snapshots += 1
        return path

    def finish(self, result: Optional[RunResult]) -> None:
        self._fp.close()
        if result is None:
            return
        if self.problem is None:
            self.problem = result.problem
        self.write_snapshot(len(result.reports), result.final)
        joblib.dump({'final': result.final, 'reports': result.reports,
                     'completed': result.completed,
                     'config_hash': self.config.config_hash},
                    str(self.directory / 'final_state.joblib'), compress=3)
        logger.info("outputs written to {}".format(self.directory))


def write_table(path: Path, config_hash: str, header: List[str],
                rows: List[List[object]], footer: Optional[List[str]] = None
                ) -> Path:
    """ A CSV table with the version header and optional ``#`` footer lines """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as f:
        f.write(header_line(config_hash))
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
        for line in footer or []:
            f.write("# {}\n".format(line))
    return path


def write_sweep_table(path: Path, config_hash: str, table) -> Path:
    """ One row per axis value, ratios and Cauchy differences in the footer """
    keys = sorted({k for row in table.rows for k in row.norms})
    rows = []
    for row in table.rows:
        rows.append([row.value, 'ok' if row.completed else 'FAILED'] +
                    [row.norms.get(k, '') for k in keys] + [row.error])
    footer = ["max/min {} = {:.6g}".format(k, v)
              for k, v in sorted(table.ratios.items())]
    footer.append("cauchy differences: {}".format(
        " ".join("{:.6e}".format(c) for c in table.cauchy)))
    if table.identity_distance is not None:
        footer.append("distance to identity projection: {}".format(
            " ".join("{:.6e}".format(d) for d in table.identity_distance)))
    footer.append("uniform (ratio <= {:g}): {}".format(table.threshold,
                                                        table.uniform))
    footer.append("cauchy decreasing: {}".format(table.cauchy_decreasing))
    return write_table(path, config_hash,
                       [table.axis, 'status'] + keys + ['error'], rows, footer)


def write_curves(directory: Path, config_hash: str, tables) -> List[Path]:
    """ Two-column exports of the constitutive and global pressure tables """
    paths = []
    for name in ('capillary', 'alpha', 'beta', 'pbar', 'phat'):
        S, values = tables.export(name)
        paths.append(write_table(Path(directory) / '{}.csv'.format(name),
                                 config_hash, ['S', name],
                                 np.column_stack([S, values]).tolist()))
    return paths


def load_final_state(path) -> Dict:
    return joblib.load(str(path))
