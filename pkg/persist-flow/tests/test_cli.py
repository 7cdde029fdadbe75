# -*- coding: utf-8 -*-
import json

import pytest  # type: ignore

from persistflow import __version__
from persistflow.cli import entry, parse_axis_values
from persistflow.config import ConfigError
from persistflow.outputs import TIME_SERIES_COLUMNS, load_final_state
from tests.utils import modified_scenario, scenario, scenario_path


def test_check_solubility(capsys):
    assert entry(['check-solubility', str(scenario_path('paper_remark'))]) == 0
    out = capsys.readouterr().out
    assert "required bound: 30000" in out
    assert out.splitlines()[-1] == "pass"


def test_verify_writes_run_directory(tmp_path, capsys):
    out_dir = tmp_path / 'zero'
    code = entry(['verify', str(scenario_path('zero')),
                  '--output', str(out_dir), '--seed', '3'])
    assert code == 0
    out = capsys.readouterr().out
    assert "verification passed" in out
    assert "Results path: {}".format(out_dir) in out

    config = scenario('zero')
    header = "# persist-flow {} config-sha256 {}".format(
        __version__, config.config_hash)
    lines = (out_dir / 'timeseries.csv').read_text().splitlines()
    assert lines[0] == header
    assert lines[1].split(',') == TIME_SERIES_COLUMNS
    assert len(lines) == 2 + 100

    meta = json.loads((out_dir / 'meta.json').read_text())
    assert meta['seed'] == 3
    assert meta['config_hash'] == config.config_hash
    assert (out_dir / 'config.cfg').read_text() == config.text

    snapshots = sorted(p.name for p in (out_dir / 'snapshots').iterdir())
    assert snapshots == ['step-000050.csv', 'step-000100.csv']
    snapshot = (out_dir / 'snapshots' / 'step-000100.csv').read_text()
    assert snapshot.splitlines()[0] == header
    assert snapshot.splitlines()[1] == 'x,p_l,p_g,S,u,rho_g,p,beta_S'

    final = load_final_state(out_dir / 'final_state.joblib')
    assert final['completed']
    assert final['final'].time == pytest.approx(1.0)
    assert len(final['reports']) == 100


def test_config_error_exit_code(tmp_path, capsys):
    path = modified_scenario('zero', [('p_g = 0', 'p_g = -1')], tmp_path)
    assert entry(['run', str(path), '--output', str(tmp_path / 'out')]) == 2
    assert 'H7' in capsys.readouterr().err


def test_solver_error_exit_code(tmp_path, capsys):
    path = modified_scenario('water_injection', [
        ('picard_tol = 1e-12',
         'picard_tol = 1e-12\npicard_max = 1\nmax_halvings = 0')], tmp_path)
    out_dir = tmp_path / 'out'
    assert entry(['run', str(path), '--output', str(out_dir)]) == 3
    assert 'solver error' in capsys.readouterr().err
    lines = (out_dir / 'timeseries.csv').read_text().splitlines()
    assert len(lines) == 2
    assert not (out_dir / 'final_state.joblib').exists() or \
        not load_final_state(out_dir / 'final_state.joblib')['completed']


def test_validate(tmp_path, capsys):
    assert entry(['validate', str(scenario_path('zero'))]) == 0
    assert "all assumptions hold" in capsys.readouterr().out
    path = modified_scenario('zero', [('rho_l_std = 10.0', 'rho_l_std = 1.0')],
                             tmp_path)
    assert entry(['validate', str(path)]) == 4
    assert capsys.readouterr().out.startswith('H5:')


def test_curves(tmp_path, capsys):
    out_dir = tmp_path / 'zero'
    assert entry(['curves', str(scenario_path('zero')),
                  '--output', str(out_dir)]) == 0
    curves_dir = tmp_path / 'zero-curves'
    names = sorted(p.name for p in curves_dir.iterdir())
    assert names == ['alpha.csv', 'beta.csv', 'capillary.csv', 'pbar.csv',
                     'phat.csv']
    lines = (curves_dir / 'beta.csv').read_text().splitlines()
    assert lines[0].startswith('# persist-flow')
    assert lines[1] == 'S,beta'


def test_sweep(tmp_path, capsys):
    path = modified_scenario('zero', [('steps = 100', 'steps = 4')], tmp_path)
    out_dir = tmp_path / 'z'
    assert entry(['sweep', str(path), '--axis=eta', '--values=1e-3,0',
                  '--output', str(out_dir)]) == 0
    table = (tmp_path / 'z-sweep-eta' / 'stability.csv').read_text()
    lines = table.splitlines()
    assert lines[1].startswith('eta,status,')
    assert lines[2].startswith('0.001,ok')
    assert lines[3].startswith('0.0,ok')
    assert "# cauchy decreasing: True" in lines
    meta = json.loads((tmp_path / 'z-sweep-eta' / 'meta.json').read_text())
    assert meta['axis'] == 'eta'


def test_unsupported_axis(capsys):
    assert entry(['sweep', str(scenario_path('zero')), '--axis=mu',
                  '--values=1']) == 2
    assert 'unsupported axis' in capsys.readouterr().err


def test_parse_axis_values():
    assert parse_axis_values('eta', '1e-3, 0', 1.0) == [1e-3, 0.0]
    assert parse_axis_values('dt', 't/4', 2.0) == [0.5]
    with pytest.raises(ConfigError):
        parse_axis_values('eps', ' , ', 1.0)
