# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest  # type: ignore

from persistflow import diagnostics
from persistflow.diagnostics import (
    DISSIPATION_KEYS, dual_norm, energy_step_report, mass_balance,
    mass_defect_bound, positivity_and_bounds_monitor, sweep, sweep_config,
    verify,
)
from persistflow.solver import (
    FlowProblem, State, initial_state, run, time_step,
)
from tests.utils import scenario


@pytest.fixture(scope='module')
def injection_run():
    return run(scenario('water_injection'))


def test_monitor_flags_negative_gas_pressure(curves):
    series = [State(np.zeros(3), np.zeros(3), 0.0),
              State(np.zeros(3), np.array([0.0, -1e-3, 0.0]), 0.1)]
    report = positivity_and_bounds_monitor(series, curves)
    assert not report.passed
    assert len(report.failures) == 1
    assert report.rows[1].min_p_g == -1e-3
    assert report.rows[0].max_S == 1.0
    assert positivity_and_bounds_monitor(series[:1], curves).passed


def test_monitor_flags_clamps(curves):
    series = [State(np.zeros(2), np.array([0.5, 3.0]), 0.0)]
    report = positivity_and_bounds_monitor(series, curves)
    assert report.rows[0].clamp_events == 1
    assert not report.passed
    assert positivity_and_bounds_monitor(series, curves,
                                         allow_clamps=True).passed


def test_mass_defect_bound():
    assert mass_defect_bound(1e-12) == 1e-8
    assert mass_defect_bound(1e-6) == pytest.approx(1e-5)


def test_dual_norm():
    problem = FlowProblem.from_config(scenario('zero'))
    n = problem.mesh.n_nodes
    assert dual_norm(problem, np.zeros(n)) == 0.0
    assert dual_norm(problem, np.ones(n)) == pytest.approx(np.sqrt(1 / 12),
                                                           rel=1e-2)
    assert dual_norm(problem, 2 * np.ones(n)) == pytest.approx(
        2 * dual_norm(problem, np.ones(n)))


def test_zero_scenario_diagnostics():
    result = run(scenario('zero', n_steps=5))
    for report in result.reports:
        energy = report.energy
        assert energy.dE == 0.0
        assert energy.discrete_dissipation == 0.0
        assert energy.E_total == pytest.approx(-0.5)
        assert all(energy.dissipation_terms[k] == 0 for k in DISSIPATION_KEYS)
        assert not energy.violated()
        assert report.mass.water_mass == pytest.approx(10.0)
        assert report.mass.gas_mass == 0.0
        assert report.mass.relative_defect == 0.0
        assert report.dual_norms == {'dS_dt': 0.0, 'dr_dt': 0.0}
    summary = verify(result)
    assert summary.passed, summary.reasons
    assert summary.checks['steps'] == 5
    assert summary.checks['min_p_g'] == 0.0



def test_energy_inequality_rejects_non_solutions():
    config = scenario('water_injection')
    reg = config.scheme
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    solution, _ = time_step(problem, prev, reg, step=1)
    energy = energy_step_report(problem, prev, solution, reg)
    assert not energy.violated()

    rng = np.random.RandomState(0)
    n = problem.mesh.n_nodes
    noise = State(problem.zero_dirichlet(rng.uniform(-5, 5, n)),
                  problem.zero_dirichlet(rng.uniform(0, 5, n)), reg.dt)
    energy = energy_step_report(problem, prev, noise, reg)
    assert energy.discrete_dissipation > 0
    assert energy.lhs > energy.rhs
    assert energy.violated()
    assert energy.rhs_bound_terms['gravity'] == 0.0

@pytest.mark.slow
def test_water_injection_verifies(injection_run):
    assert injection_run.completed
    summary = verify(injection_run)
    assert summary.passed, summary.reasons
    assert summary.checks['min_p_g'] >= -1e-8
    assert summary.checks['max_mass_defect'] <= 1e-8
    for report in injection_run.reports:
        assert report.energy.dissipation_nonnegative
        assert report.energy.identity_residual <= 1e-10


@pytest.mark.slow
def test_mass_ledger_arithmetic(injection_run):
    ledger = mass_balance(injection_run)
    assert len(ledger.rows) == 50
    water, gas = diagnostics.component_masses(injection_run.problem,
                                              injection_run.series[0])
    for row in ledger.rows:
        assert row.water_sources == pytest.approx(20.0)
        assert row.water_mass - water == pytest.approx(
            row.dt * (row.water_sources + row.water_boundary_flux),
            abs=1e-8 * row.water_mass)
        assert row.gas_mass - gas == pytest.approx(
            row.dt * (row.gas_sources + row.gas_boundary_flux),
            abs=1e-8 * max(row.gas_mass, 1.0))
        water, gas = row.water_mass, row.gas_mass
    assert ledger.max_relative_defect <= 1e-8
    assert ledger.rows[-1].gas_mass < ledger.rows[0].gas_mass


@pytest.mark.slow
def test_gas_pocket_dissolves():
    result = run(scenario('dissolution'))
    summary = verify(result)
    assert summary.passed, summary.reasons
    problem = result.problem
    center = int(np.argmin(np.abs(problem.mesh.coordinates()[0] - 0.5)))
    S0 = problem.secondary(result.series[0]).S
    S1 = problem.secondary(result.final).S
    assert S0[center] == pytest.approx(0.7)
    assert S1[center] == 1.0


def test_sweep_config():
    config = scenario('water_injection')
    assert sweep_config(config, 'eta', 0.0).scheme.eta == 0.0
    member = sweep_config(config, 'dt', 0.5 / 20)
    assert member.scheme.n_steps == 20
    assert member.final_time == pytest.approx(config.final_time)
    member = sweep_config(config, 'N', 'full')
    assert member.scheme.projection == 'spectral'
    assert member.scheme.modes == 39
    with pytest.raises(ValueError):
        sweep_config(config, 'mu', 1.0)
    with pytest.raises(ValueError):
        sweep(config, 'mu', [1.0])


@pytest.mark.slow
def test_dt_sweep():
    config = scenario('water_injection')
    table = sweep(config, 'dt', [0.05, 0.025, 0.0125])
    assert table.completed
    assert [row.value for row in table.rows] == [0.05, 0.025, 0.0125]
    assert set(table.ratios) == set(diagnostics.SWEEP_NORMS)
    assert table.uniform
    assert len(table.cauchy) == 2
    assert table.cauchy_decreasing
    assert table.identity_distance is None


@pytest.mark.slow
def test_eta_sweep_drops_eta_term():
    config = scenario('water_injection', n_steps=5)
    table = sweep(config, 'eta', [1e-3, 0.0])
    assert table.completed
    assert 'int_eta_term' in table.rows[0].norms
    assert 'int_eta_term' not in table.rows[1].norms
    assert 'int_eta_term' not in table.ratios


@pytest.mark.slow
def test_full_mode_sweep_matches_identity():
    config = scenario('water_injection', n_steps=3)
    table = sweep(config, 'N', ['full'])
    assert table.completed
    assert table.cauchy == []
    assert table.identity_distance[0] <= 1e-8


@pytest.mark.slow
def test_dissolution_mode_sweep():
    config = scenario('dissolution', n_steps=10)
    table = sweep(config, 'N', [4, 8, 16, 'full'])
    assert [row.value for row in table.rows] == [4, 8, 16, 'full']
    assert table.rows[-1].completed
    assert table.identity_distance[-1] <= 1e-8
    done = [row for row in table.rows if row.completed]
    assert len(table.identity_distance) == len(done)
    assert len(table.cauchy) == len(done) - 1
    assert all(ratio >= 1.0 for ratio in table.ratios.values())


@pytest.mark.slow
def test_dissolution_eta_sweep():
    config = scenario('dissolution', n_steps=10)
    table = sweep(config, 'eta', [1e-3, 1e-2, 0.0])
    assert table.rows[0].completed
    assert 'int_eta_term' in table.rows[0].norms
    if table.rows[2].completed:
        assert 'int_eta_term' not in table.rows[2].norms
        assert 'int_eta_term' not in table.ratios
    assert table.identity_distance is None


@pytest.mark.slow
def test_dissolution_eps_sweep():
    config = scenario('dissolution', n_steps=10)
    table = sweep(config, 'eps', [1e-4, 1e-5, 1e-6])
    assert table.rows[-1].completed
    done = [row for row in table.rows if row.completed]
    assert len(table.cauchy) == len(done) - 1
    for row in done:
        assert set(row.norms) == set(diagnostics.SWEEP_NORMS)
        assert all(np.isfinite(v) and v >= 0 for v in row.norms.values())
