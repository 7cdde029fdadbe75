# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest  # type: ignore

from persistflow import solver
from persistflow.solver import (
    Coefficients, FlowProblem, PicardStall, RegularizationParams, State,
    StepFailure, gas_system, initial_state, liquid_system, picard_map,
    regularized_fluxes, run, stabilized_map, time_step, update_norm,
    weak_residuals,
)
from tests.utils import modified_scenario, scenario


def test_regularization_params_checks():
    reg = RegularizationParams(dt=0.1, n_steps=10)
    assert reg.final_time == pytest.approx(1.0)
    assert reg.pressure_scale == 1.0
    with pytest.raises(ValueError):
        RegularizationParams(dt=0.1, n_steps=10, projection='fourier')
    with pytest.raises(ValueError):
        RegularizationParams(dt=0.1, n_steps=10, projection='spectral')
    with pytest.raises(ValueError):
        RegularizationParams(dt=0.1, n_steps=10, eta=-1.0)
    with pytest.raises(ValueError):
        RegularizationParams(dt=0.0, n_steps=10)
    with pytest.raises(ValueError):
        RegularizationParams(dt=0.1, n_steps=10, relaxation=0.0)
    with pytest.raises(ValueError):
        reg.replace(omega=0.5)
    assert reg.replace(eta=0.0).eta == 0.0
    assert reg.eta == pytest.approx(1e-3)


def test_zero_data_stays_zero():
    result = run(scenario('zero'))
    assert result.completed
    assert len(result.series) == 101
    for state in result.series:
        assert np.abs(state.p_l).max() <= 1e-12
        assert np.abs(state.p_g).max() <= 1e-12
    assert all(r.picard_iterations == 1 for r in result.reports)
    assert result.final.time == pytest.approx(1.0)


def test_initial_state_is_zero_on_dirichlet_nodes():
    config = modified_scenario('zero', [('p_l = 0', 'p_l = 1')])
    problem = FlowProblem.from_config(config)
    state = initial_state(problem, config)
    assert state.p_l[problem.dirichlet_nodes].tolist() == [0.0, 0.0]
    assert state.p_l[problem.mesh.free_nodes].tolist() == [1.0] * 31
    assert state.time == 0.0


def test_forcing_is_time_averaged():
    config = modified_scenario('water_injection',
                               [('injection = 2', 'injection = 2*t + x')])
    problem = FlowProblem.from_config(config)
    x, _ = problem.mesh.coordinates()
    forcing = problem.forcing(0.2, 0.1)
    assert forcing.injection == pytest.approx(0.5 + x)
    assert not forcing.production.any()


def test_update_norm():
    problem = FlowProblem.from_config(scenario('zero'))
    n = problem.mesh.n_nodes
    a = State(np.zeros(n), np.zeros(n), 0.0)
    b = State(np.zeros(n), np.ones(n), 0.0)
    assert update_norm(problem, a, a) == 0.0
    assert update_norm(problem, a, b) == pytest.approx(1.0)
    assert update_norm(problem, a, b, p_scale=4.0) == pytest.approx(0.25)


def test_converged_step_has_small_residuals():
    config = scenario('water_injection')
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    new, report = time_step(problem, prev, config.scheme, step=1)
    assert report.picard_iterations > 1
    assert report.final_update_norm < config.scheme.picard_tol
    assert new.time == pytest.approx(config.scheme.dt)
    liquid, gas = weak_residuals(problem, prev, new, config.scheme)
    free = problem.mesh.free_nodes
    assert np.abs(liquid.total[free]).max() <= 1e-8
    assert np.abs(gas.total[free]).max() <= 1e-8
    assert np.abs(liquid.source[free]).max() > 0


def test_picard_failure_keeps_partial_result():
    config = scenario('water_injection', picard_max=1, max_halvings=0)
    with pytest.raises(StepFailure) as e:
        run(config, diagnose=False)
    assert e.value.step == 1
    partial = e.value.partial
    assert partial is not None
    assert not partial.completed
    assert len(partial.series) == 1
    assert partial.reports == []


def test_full_spectral_basis_matches_identity():
    config = scenario('water_injection', n_steps=3)
    identity = run(config, diagnose=False)
    n_free = len(config.mesh.free_nodes)
    spectral = run(config.with_scheme(projection='spectral', modes=n_free),
                   diagnose=False)
    assert spectral.basis is not None and spectral.basis.is_complete
    assert np.abs(spectral.final.p_g - identity.final.p_g).max() <= 1e-8
    assert np.abs(spectral.final.p_l - identity.final.p_l).max() <= 1e-8


def test_reconstructions():
    config = scenario('water_injection', n_steps=2)
    result = run(config, diagnose=False)
    rec = result.reconstruction()
    t0, t1, t2 = rec.times
    mid = (t0 + t1) / 2
    assert rec.piecewise_constant(mid).tolist() == rec.S[1].tolist()
    assert rec.piecewise_constant(t0).tolist() == rec.S[0].tolist()
    assert rec.piecewise_linear(mid) == pytest.approx((rec.S[0] + rec.S[1]) / 2)
    assert rec.piecewise_linear(t2, 'r_g') == pytest.approx(rec.r_g[2])
    with pytest.raises(ValueError):
        rec.piecewise_linear(t2 + 1.0)


def test_on_step_callback():
    seen = []
    config = scenario('zero', n_steps=3)
    run(config, on_step=lambda state, report: seen.append(report.step),
        diagnose=False)
    assert seen == [1, 2, 3]


def test_converged_step_is_a_fixed_point():
    config = scenario('water_injection', eps=1e-2)
    assert config.scheme.stabilize
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    new, _ = time_step(problem, prev, config.scheme, step=1)
    again = picard_map(problem, prev, new, config.scheme)
    assert update_norm(problem, again, new) <= 1e-7


def test_regularized_fluxes():
    config = scenario('water_injection')
    problem = FlowProblem.from_config(config)
    n = problem.mesh.n_nodes
    uniform = State(np.full(n, 0.3), np.full(n, 0.5), 0.0)
    Q_w, Q_h = regularized_fluxes(problem, uniform, config.scheme)
    assert Q_w.shape == (problem.mesh.n_elements, 2, 1)
    assert not Q_w.any() and not Q_h.any()

    state = initial_state(problem, config)
    eta = config.scheme.eta
    Q_w, Q_h = regularized_fluxes(problem, state, config.scheme)
    Q_w0, Q_h0 = regularized_fluxes(problem, state,
                                    config.scheme.replace(eta=0.0))
    grad = problem.space.gradients(state.p_g - state.p_l)
    assert Q_w - Q_w0 == pytest.approx(eta * grad)
    rho_g = problem.curves.density(problem.space.values(state.p_g))
    u = problem.curves.solubility(problem.space.values(state.p_g))
    assert Q_h - Q_h0 == pytest.approx(-eta * (rho_g - u)[..., None] * grad)


def test_picard_map_solves_the_frozen_equations():
    config = scenario('water_injection')
    reg = config.scheme
    assert reg.stabilize
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    forcing = problem.forcing(prev.time, reg.dt)
    new = picard_map(problem, prev, prev, reg)
    co = Coefficients(problem, prev, prev, reg, None, reg.dt, forcing)
    free = problem.mesh.free_nodes

    A, b = liquid_system(problem, co, reg)
    residual = (A @ new.p_l - b)[free]
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(b[free])
    A, b = gas_system(problem, co, reg, new.p_l)
    residual = (A @ new.p_g - b)[free]
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(b[free])

    stabilized = stabilized_map(problem, prev, prev, reg)
    assert update_norm(problem, stabilized, new) > 0


def _contracting_map(fixed: State, factor: float):
    def step_map(problem, prev, iterate, reg, basis=None, *, dt=None,
                 forcing=None, relaxation=None):
        return State(fixed.p_l + factor * (iterate.p_l - fixed.p_l),
                     fixed.p_g + factor * (iterate.p_g - fixed.p_g),
                     prev.time + dt)
    return step_map


def _sine_state(problem: FlowProblem) -> State:
    x, _ = problem.mesh.coordinates()
    return State(0.5 * np.sin(np.pi * x), np.sin(np.pi * x), 0.0)


def test_oscillating_convergence_is_not_a_stall(monkeypatch):
    config = scenario('zero', picard_tol=1e-6, picard_max=400)
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    fixed = _sine_state(problem)
    monkeypatch.setattr(solver, 'picard_map', _contracting_map(fixed, -0.9))
    new, report = time_step(problem, prev, config.scheme, step=1)
    assert report.picard_iterations > 100
    assert report.final_update_norm < 1e-6
    assert new.p_g == pytest.approx(fixed.p_g, abs=1e-5)


def test_alternating_iterates_stall(monkeypatch):
    config = scenario('zero', picard_max=400)
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    fixed = _sine_state(problem)
    monkeypatch.setattr(solver, 'picard_map', _contracting_map(fixed, -1.0))
    with pytest.raises(PicardStall) as e:
        time_step(problem, prev, config.scheme, step=1)
    assert 'alternate' in str(e.value)
    first, second = e.value.candidates
    assert first.p_g + second.p_g == pytest.approx(2 * fixed.p_g)


def test_slow_contraction_stops_the_iteration(monkeypatch):
    config = scenario('zero', picard_max=400)
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    fixed = _sine_state(problem)
    monkeypatch.setattr(solver, 'picard_map',
                        _contracting_map(fixed, 0.99999))
    with pytest.raises(PicardStall) as e:
        time_step(problem, prev, config.scheme, step=1)
    assert 'stopped contracting' in str(e.value)


@pytest.mark.slow
def test_halved_steps_agree_to_first_order():
    config = scenario('water_injection')
    reg = config.scheme
    problem = FlowProblem.from_config(config)
    prev = initial_state(problem, config)
    gaps = []
    for dt in (0.02, 0.01, 0.005):
        full, _ = time_step(problem, prev, reg, dt=dt, step=1)
        mid, _ = time_step(problem, prev, reg, dt=dt / 2, step=1)
        halves, _ = time_step(problem, mid, reg, dt=dt / 2, step=2)
        assert halves.time == pytest.approx(full.time)
        gaps.append(update_norm(problem, full, halves))
    assert gaps[0] > 0
    assert gaps[1] <= 0.6 * gaps[0]
    assert gaps[2] <= 0.6 * gaps[1]


def _column(cells: str, dim: int):
    replacements = [('cells = 40', cells)]
    if dim == 2:
        replacements += [('dim = 1', 'dim = 2'),
                         ('lengths = 1.0', 'lengths = 1.0, 0.5')]
    return modified_scenario('water_injection', replacements).with_scheme(
        n_steps=5)


@pytest.mark.slow
def test_rectangle_run_matches_column():
    column = run(_column('cells = 10', 1))
    plane = run(_column('cells = 10, 5', 2))
    assert plane.completed and column.completed
    assert plane.problem.mesh.dim == 2
    x1 = column.problem.mesh.coordinates()[0]
    x2 = plane.problem.mesh.coordinates()[0]
    order = np.argsort(x1)
    for field in ('p_l', 'p_g'):
        expected = np.interp(x2, x1[order], getattr(column.final, field)[order])
        assert getattr(plane.final, field) == pytest.approx(expected, abs=1e-6)
    assert all(not r.energy.violated() for r in plane.reports)


@pytest.mark.slow
def test_gravity_run():
    base = scenario('water_injection', n_steps=10)
    heavy = modified_scenario('water_injection', [
        ('rho_l_std = 10.0', 'rho_l_std = 10.0\ngravity = -0.1'),
    ]).with_scheme(n_steps=10)
    assert heavy.params.gravity.tolist() == [-0.1]
    flat = run(base)
    result = run(heavy)
    assert result.completed
    assert result.problem.has_gravity
    assert any(r.energy.rhs_bound_terms['gravity'] != 0 for r in result.reports)
    assert all(not r.energy.violated() for r in result.reports)
    assert np.abs(result.final.p_l - flat.final.p_l).max() > 1e-3
