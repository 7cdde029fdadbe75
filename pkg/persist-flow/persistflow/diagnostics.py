# -*- coding: utf-8 -*-
"""
Diagnostics
===========

Numerical checks run on computed solutions.

Energy inequality
-----------------

With the nodal test functions :math:`\\varphi = p_l - N^\\varepsilon(p_g)`
and :math:`\\psi = M^\\varepsilon(p_g)` (both zero on the Dirichlet
boundary) a solution of the discrete equations satisfies

.. math::

    \\frac{1}{\\delta t}\\sum_i m_i\\Phi_i (E_i - E_i^*) + D_h \\le I + G

where :math:`D_h` pairs the test functions with the discrete fluxes
without their gravity part, :math:`I` with the sources and :math:`G` with
the gravity loads. It follows from the convexity of :math:`E^\\varepsilon`
in :math:`(S, r_g)` once the equations are used to trade the accumulation
terms for fluxes and sources. A state which does not solve the equations
breaks it in general. The pairing of the test functions with the
equation residuals is reported but takes no part in the check.

The dissipation integrals of the continuous estimate are reported next to
it; all of them are integrals of nonnegative quadratic forms.

Mass balance
------------

Testing the discrete equations with the constant function 1 removes the
flux terms; the residuals left at Dirichlet nodes are the boundary flux,
the ones at free nodes the conservation defect.
"""
import logging
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np  # type: ignore
from joblib import Parallel, delayed  # type: ignore

from persistflow import settings
from persistflow.fem import (
    FEMSpace, assemble_load, assemble_weighted_stiffness, solve,
)
from persistflow.global_pressure import (
    EnergyTables, energy_functional, fundamental_identity_residual,
    identity_gradients,
)
from persistflow.mesh import build_interval, build_rectangle
from persistflow.solver import (
    FlowProblem, RegularizationParams, RunResult, State, StepFailure,
    StepReport, run, update_norm, weak_residuals,
)
from persistflow.spectral import EigenBasis
from persistflow.utils import max_min_ratio, safe_ratio, is_decreasing


logger = logging.getLogger(__name__)

DISSIPATION_KEYS = ('diss_l', 'diss_g', 'diss_u', 'diss_eps', 'diss_eta')


def diffusion_coercivity(problem: FlowProblem) -> float:
    """
    :math:`c_D = (\\Phi D)_{max}^2 \\mu_l / ((\\rho_l^{std})^2 k_m a_l)`
    """
    params = problem.params
    return (params.max_phi_d ** 2 * params.mu_l /
            (params.rho_l_std ** 2 * params.k_min * problem.curves.a_l))


# ---- energy --------------------------------------------------------------------

class EnergyReport:
    """
    Terms of the energy inequality for one step.

    Attributes
    ----------
    dE : float
        Change of :math:`\\int \\Phi E^\\varepsilon` over the step.
    E_total : float
        :math:`\\int \\Phi E^\\varepsilon` at the new level.
    dissipation_terms : dict
        ``diss_l, diss_g, diss_u, diss_eps, diss_eta``.
    rhs_bound_terms : dict
        Source and gravity pairings ``injection, production_l,
        production_g, gravity``.
    discrete_dissipation : float
        Test functions paired with the fluxes without gravity.
    residual_pairing : float
        Test functions paired with the equation residuals; not part of
        the inequality.
    global_pressure_norm, beta_norm : float
        :math:`\\|\\nabla p\\|^2` and :math:`\\|\\nabla\\beta(S)\\|^2`.
    """
    def __init__(self, *, dt: float, dE: float, E_total: float,
                 dissipation_terms: Dict[str, float],
                 rhs_bound_terms: Dict[str, float],
                 discrete_dissipation: float,
                 residual_pairing: float, global_pressure_norm: float,
                 beta_norm: float, identity_residual: float,
                 grad_u_norm: float, scale: float) -> None:
        self.dt = dt
        self.dE = dE
        self.E_total = E_total
        self.dissipation_terms = dissipation_terms
        self.rhs_bound_terms = rhs_bound_terms
        self.discrete_dissipation = discrete_dissipation
        self.residual_pairing = residual_pairing
        self.global_pressure_norm = global_pressure_norm
        self.beta_norm = beta_norm
        self.identity_residual = identity_residual
        self.grad_u_norm = grad_u_norm
        self.scale = scale

    @property
    def lhs(self) -> float:
        return self.dE / self.dt + self.discrete_dissipation

    @property
    def rhs(self) -> float:
        return sum(self.rhs_bound_terms.values())

    @property
    def excess(self) -> float:
        """ Relative amount by which the inequality fails (<= 0 if it holds) """
        return safe_ratio(self.lhs - self.rhs, self.scale)

    def violated(self, slack: float = settings.ENERGY_SLACK) -> bool:
        return self.excess > slack

    @property
    def dissipation_nonnegative(self) -> bool:
        return all(self.dissipation_terms[k] >= 0 for k in DISSIPATION_KEYS)

    def as_dict(self) -> Dict[str, float]:
        d = dict(self.dissipation_terms)
        d.update(self.rhs_bound_terms)
        d.update({'dE': self.dE, 'E_eps_total': self.E_total,
                  'discrete_dissipation': self.discrete_dissipation,
                  'residual_pairing': self.residual_pairing,
                  'grad_p_norm': self.global_pressure_norm,
                  'grad_beta_norm': self.beta_norm,
                  'identity_residual': self.identity_residual})
        return d


def _quadratic(space: FEMSpace, K, a, b) -> float:
    return space.integrate(np.einsum('eqi,eqij,eqj->eq', a, K, b))


def _square(space: FEMSpace, a) -> float:
    return space.integrate(np.einsum('eqi,eqi->eq', a, a))


def energy_step_report(problem: FlowProblem, prev: State, new: State,
                       reg: RegularizationParams,
                       basis: Optional[EigenBasis] = None,
                       energy_tables: Optional[EnergyTables] = None,
                       c_D: Optional[float] = None) -> EnergyReport:
    curves, space, params = problem.curves, problem.space, problem.params
    dt = new.time - prev.time
    if energy_tables is None:
        energy_tables = EnergyTables(curves, _energy_eps(problem, reg))
    if c_D is None:
        c_D = diffusion_coercivity(problem)

    w = problem.lumped * problem.porosity
    E_new = energy_functional(curves, energy_tables, new.p_l, new.p_g)
    E_prev = energy_functional(curves, energy_tables, prev.p_l, prev.p_g)
    dE = float(w @ (E_new - E_prev))

    liquid, gas = weak_residuals(problem, prev, new, reg, basis)
    phi_test = new.p_l - energy_tables.N(new.p_g)
    psi_test = energy_tables.M(new.p_g)
    forcing = problem.forcing(prev.time, dt)
    S = curves.saturation(new.p_g - new.p_l)[0]
    m = problem.lumped
    rhs_terms = {
        'injection': float(phi_test @ (m * forcing.injection)),
        'production_l': float(-phi_test @ (m * S * forcing.production)),
        'production_g': float(-psi_test @ gas.source),
        'gravity': float(phi_test @ liquid.gravity + psi_test @ gas.gravity),
    }
    discrete = float(phi_test @ (liquid.flux + liquid.gravity) +
                     psi_test @ (gas.flux + gas.gravity))
    residual_pairing = float(phi_test @ liquid.total + psi_test @ gas.total)

    pl_q, pg_q = space.values(new.p_l), space.values(new.p_g)
    S_q = curves.saturation(pg_q - pl_q)[0]
    lam_l, lam_g = curves.mobilities(S_q, params.mu_l, params.mu_g)
    grad_pl, grad_pg = space.gradients(new.p_l), space.gradients(new.p_g)
    grad_u = space.gradients(curves.solubility(new.p_g))
    K = problem.K
    grad_u_norm = _square(space, grad_u)
    dissipation = {
        'diss_l': _quadratic(space, lam_l[..., None, None] * K, grad_pl, grad_pl),
        'diss_g': _quadratic(space, lam_g[..., None, None] * K, grad_pg, grad_pg),
        'diss_u': c_D * grad_u_norm,
        'diss_eps': reg.eps * _square(space, grad_pg),
        'diss_eta': reg.eta * _square(space, grad_pg - grad_pl),
    }
    grad_p, grad_beta = identity_gradients(curves, params.mu_l, params.mu_g,
                                           S_q, grad_pl, grad_pg)
    identity = fundamental_identity_residual(
        curves, params.mu_l, params.mu_g, S_q, grad_pl, grad_pg, K,
        weights=space.weights)

    scale = (float(w @ (np.abs(E_new) + np.abs(E_prev))) / dt +
             abs(discrete) + sum(abs(v) for v in rhs_terms.values()))
    return EnergyReport(
        dt=dt, dE=dE, E_total=float(w @ E_new), dissipation_terms=dissipation,
        rhs_bound_terms=rhs_terms, discrete_dissipation=discrete,
        residual_pairing=residual_pairing,
        global_pressure_norm=_square(space, grad_p),
        beta_norm=_square(space, grad_beta), identity_residual=identity,
        grad_u_norm=grad_u_norm, scale=scale)


def _energy_eps(problem: FlowProblem, reg: RegularizationParams) -> float:
    from persistflow.global_pressure import eps_diag
    return reg.eps if reg.eps > 0 else eps_diag(problem.curves)


# ---- mass ------------------------------------------------------------------------

class MassRow(NamedTuple):
    """ One ledger row; rates are per unit time, masses in kg """
    time: float
    dt: float
    water_mass: float
    gas_mass: float
    water_sources: float
    gas_sources: float
    water_boundary_flux: float
    gas_boundary_flux: float
    water_defect: float
    gas_defect: float

    @property
    def relative_defect(self) -> float:
        return max(abs(self.water_defect), abs(self.gas_defect))


class MassLedger(NamedTuple):
    rows: List[MassRow]
    max_relative_defect: float


def component_masses(problem: FlowProblem, state: State):
    """ Water and gas component masses of a state """
    sec = problem.secondary(state)
    w = problem.lumped * problem.porosity
    water = problem.params.rho_l_std * float(w @ sec.S)
    gas = float(w @ (sec.u * sec.S + sec.rho_g * (1 - sec.S)))
    return water, gas


def mass_row(problem: FlowProblem, prev: State, new: State,
             reg: RegularizationParams,
             basis: Optional[EigenBasis] = None) -> MassRow:
    """
    Ledger row of one step. Defects are relative to the component mass
    (or to the mass exchanged, whichever is larger).
    """
    dt = new.time - prev.time
    liquid, gas = weak_residuals(problem, prev, new, reg, basis)
    free, fixed = problem.mesh.free_nodes, problem.mesh.dirichlet_nodes
    rho_std = problem.params.rho_l_std
    water_new, gas_new = component_masses(problem, new)
    water_prev, gas_prev = component_masses(problem, prev)

    def defect(parts, scale, mass_new, mass_prev):
        boundary = float(parts.total[fixed].sum()) * scale
        sources = -float(parts.source.sum()) * scale
        residual = float(parts.total[free].sum()) * scale
        exchanged = dt * (abs(sources) + abs(boundary))
        ref = max(abs(mass_new), abs(mass_prev), exchanged)
        return sources, boundary, safe_ratio(residual * dt, ref)

    ws, wb, wd = defect(liquid, rho_std, water_new, water_prev)
    gs, gb, gd = defect(gas, 1.0, gas_new, gas_prev)
    return MassRow(time=new.time, dt=dt, water_mass=water_new,
                   gas_mass=gas_new, water_sources=ws, gas_sources=gs,
                   water_boundary_flux=wb, gas_boundary_flux=gb,
                   water_defect=wd, gas_defect=gd)


def mass_balance(result: RunResult) -> MassLedger:
    """ Ledger of a finished (or partial) run """
    reg = result.config.scheme
    rows = [mass_row(result.problem, prev, new, reg, result.basis)
            for prev, new in zip(result.series, result.series[1:])]
    worst = max((r.relative_defect for r in rows), default=0.0)
    return MassLedger(rows=rows, max_relative_defect=worst)


def mass_defect_bound(picard_tol: float) -> float:
    return max(10 * picard_tol, settings.MASS_DEFECT_FLOOR)


# ---- time derivative in a dual norm --------------------------------------------

def dual_norm(problem: FlowProblem, nodal: np.ndarray) -> float:
    """
    Discrete :math:`H^{-1}` norm of a lumped nodal density ``v``:
    :math:`\\sup_\\phi (v, \\phi) / \\|\\nabla\\phi\\|` over fields vanishing
    on the Dirichlet boundary.
    """
    rhs = problem.lumped * nodal
    if not np.any(rhs[problem.mesh.free_nodes]):
        return 0.0
    z = solve(problem.unit_stiffness, rhs, problem.dirichlet_nodes)
    return float(np.sqrt(max(z @ rhs, 0.0)))


def difference_quotients(problem: FlowProblem, prev: State,
                         new: State) -> Dict[str, float]:
    """
    Dual norms of :math:`\\Phi(S - S^*)/\\delta t` and
    :math:`\\Phi(r_g - r_g^*)/\\delta t`.
    """
    dt = new.time - prev.time
    a, b = problem.secondary(prev), problem.secondary(new)
    r_a = a.u * a.S + a.rho_g * (1 - a.S)
    r_b = b.u * b.S + b.rho_g * (1 - b.S)
    phi = problem.porosity
    return {'dS_dt': dual_norm(problem, phi * (b.S - a.S) / dt),
            'dr_dt': dual_norm(problem, phi * (r_b - r_a) / dt)}


class StepDiagnostics:
    """ Fills the energy and mass fields of step reports during a run """
    def __init__(self, problem: FlowProblem, reg: RegularizationParams,
                 basis: Optional[EigenBasis] = None) -> None:
        self.problem = problem
        self.reg = reg
        self.basis = basis
        self.energy_tables = EnergyTables(problem.curves,
                                          _energy_eps(problem, reg))
        self.c_D = diffusion_coercivity(problem)

    def attach(self, prev: State, new: State, report: StepReport) -> None:
        report.energy = energy_step_report(
            self.problem, prev, new, self.reg, self.basis,
            energy_tables=self.energy_tables, c_D=self.c_D)
        report.mass = mass_row(self.problem, prev, new, self.reg, self.basis)
        report.dual_norms = difference_quotients(self.problem, prev, new)
        if report.energy.violated():
            logger.warning("step {}: energy inequality exceeded by {:.3e} "
                           "(relative)".format(report.step,
                                               report.energy.excess))


# ---- positivity ------------------------------------------------------------------

class BoundsRow(NamedTuple):
    time: float
    min_p_g: float
    min_S: float
    max_S: float
    clamp_events: int


class BoundsReport(NamedTuple):
    rows: List[BoundsRow]
    passed: bool
    failures: List[str]


def positivity_and_bounds_monitor(series: Sequence[State], curves,
                                  p_scale: float = 1.0,
                                  tol: float = settings.POSITIVITY_TOL,
                                  allow_clamps: bool = False) -> BoundsReport:
    """ min p_g, the saturation range and clamp counts of every state """
    rows, failures = [], []
    for state in series:
        S, _, clamped = curves.saturation(state.p_g - state.p_l)
        row = BoundsRow(time=state.time, min_p_g=float(state.p_g.min()),
                        min_S=float(S.min()), max_S=float(S.max()),
                        clamp_events=int(np.count_nonzero(clamped)))
        rows.append(row)
        if row.min_p_g < -tol * p_scale:
            failures.append("t={:g}: min p_g = {:.3e} < -{:g}*p_scale".format(
                row.time, row.min_p_g, tol))
        if row.min_S < 0 or row.max_S > 1:
            failures.append("t={:g}: S outside [0, 1]".format(row.time))
        if row.clamp_events and not allow_clamps:
            failures.append("t={:g}: {} saturation clamps".format(
                row.time, row.clamp_events))
    return BoundsReport(rows=rows, passed=not failures, failures=failures)


# ---- verification summary --------------------------------------------------------

class VerificationSummary(NamedTuple):
    passed: bool
    reasons: List[str]
    checks: Dict[str, float]


def verify(result: RunResult) -> VerificationSummary:
    """
    Positivity, saturation bounds, mass balance and the energy
    inequality of a finished run.
    """
    reg = result.config.scheme
    reasons = []  # type: List[str]
    bounds = positivity_and_bounds_monitor(result.series, result.problem.curves,
                                           reg.pressure_scale)
    reasons.extend(bounds.failures)

    defects = [r.mass.relative_defect for r in result.reports if r.mass]
    worst_defect = max(defects, default=0.0)
    limit = mass_defect_bound(reg.picard_tol)
    if worst_defect > limit:
        reasons.append("mass defect {:.3e} exceeds {:.1e}".format(
            worst_defect, limit))

    energies = [r.energy for r in result.reports if r.energy]
    worst_excess = max((e.excess for e in energies), default=0.0)
    if any(e.violated() for e in energies):
        reasons.append("energy inequality exceeded by {:.3e} (relative)".format(
            worst_excess))
    if not all(e.dissipation_nonnegative for e in energies):
        reasons.append("negative dissipation term")
    if not result.completed:
        reasons.append("run did not complete")

    checks = {
        'min_p_g': min(r.min_p_g for r in bounds.rows),
        'min_S': min(r.min_S for r in bounds.rows),
        'max_S': max(r.max_S for r in bounds.rows),
        'clamp_events': float(sum(r.clamp_events for r in bounds.rows)),
        'max_mass_defect': worst_defect,
        'max_energy_excess': worst_excess,
        'max_dS_dt_dual': max((r.dual_norms['dS_dt'] for r in result.reports
                               if r.dual_norms), default=0.0),
        'max_dr_dt_dual': max((r.dual_norms['dr_dt'] for r in result.reports
                               if r.dual_norms), default=0.0),
        'steps': float(len(result.reports)),
    }
    for reason in reasons:
        logger.warning("verification: {}".format(reason))
    return VerificationSummary(passed=not reasons, reasons=reasons,
                               checks=checks)


# ---- sweeps --------------------------------------------------------------------

AXES = ('eta', 'eps', 'dt', 'N')

SWEEP_NORMS = ('int_grad_p', 'int_grad_beta', 'int_grad_u', 'int_eta_term')


class SweepRow:
    def __init__(self, *, value, completed: bool, error: str = '',
                 norms: Optional[Dict[str, float]] = None,
                 final: Optional[State] = None) -> None:
        self.value = value
        self.completed = completed
        self.error = error
        self.norms = norms or {}
        self.final = final


class SweepTable:
    """
    Per-value time-integrated norms, their max/min ratios across the
    axis, and distances between consecutive endpoint states.
    """
    def __init__(self, *, axis: str, rows: List[SweepRow],
                 ratios: Dict[str, float], cauchy: List[float],
                 identity_distance: Optional[List[float]] = None,
                 threshold: float = settings.UNIFORMITY_RATIO) -> None:
        self.axis = axis
        self.rows = rows
        self.ratios = ratios
        self.cauchy = cauchy
        self.identity_distance = identity_distance
        self.threshold = threshold

    @property
    def uniform(self) -> bool:
        return all(r <= self.threshold for r in self.ratios.values())

    @property
    def cauchy_decreasing(self) -> bool:
        return is_decreasing(self.cauchy)

    @property
    def completed(self) -> bool:
        return all(r.completed for r in self.rows)


def sweep_config(base_config, axis: str, value):
    """ The member configuration of one sweep value """
    if axis == 'eta':
        return base_config.with_scheme(eta=float(value))
    if axis == 'eps':
        return base_config.with_scheme(eps=float(value))
    if axis == 'dt':
        T = base_config.final_time
        n_steps = max(1, int(round(T / float(value))))
        return base_config.with_scheme(dt=T / n_steps, n_steps=n_steps)
    if axis == 'N':
        n_free = len(base_config.mesh.free_nodes)
        modes = n_free if value == 'full' else int(value)
        return base_config.with_scheme(projection='spectral', modes=modes)
    raise ValueError("Unsupported axis: %s. Supported axes: %r" % (
        axis, list(AXES)))


def integrated_norms(result: RunResult) -> Dict[str, float]:
    """ Time integrals of the a priori norms over a run """
    reg = result.config.scheme
    norms = dict.fromkeys(SWEEP_NORMS, 0.0)
    for report in result.reports:
        e = report.energy
        norms['int_grad_p'] += report.dt * e.global_pressure_norm
        norms['int_grad_beta'] += report.dt * e.beta_norm
        norms['int_grad_u'] += report.dt * e.grad_u_norm
        norms['int_eta_term'] += report.dt * e.dissipation_terms['diss_eta']
    if reg.eta == 0:
        norms.pop('int_eta_term')
    return norms


def _sweep_member(config, axis: str, value) -> SweepRow:
    try:
        member = sweep_config(config, axis, value)
        result = run(member)
    except StepFailure as e:
        logger.warning("sweep {}={}: {}".format(axis, value, e))
        return SweepRow(value=value, completed=False, error=str(e))
    return SweepRow(value=value, completed=True,
                    norms=integrated_norms(result), final=result.final)


def sweep(base_config, axis: str, values: Sequence, jobs: int = 1,
          progress: bool = False) -> SweepTable:
    """
    Run ``base_config`` once per value of ``axis`` (``eta``, ``eps``,
    ``dt`` or ``N``); members run in parallel with joblib.
    """
    if axis not in AXES:
        raise ValueError("Unsupported axis: %s. Supported axes: %r" % (
            axis, list(AXES)))
    values = list(values)
    tasks = (delayed(_sweep_member)(base_config, axis, v) for v in values)
    rows = Parallel(n_jobs=jobs, verbose=5 if progress else 0)(tasks)

    done = [r for r in rows if r.completed]
    ratios = {}  # type: Dict[str, float]
    if done:
        common = set.intersection(*(set(r.norms) for r in done))
        ratios = {key: max_min_ratio([r.norms[key] for r in done])
                  for key in sorted(common)}

    problem = FlowProblem.from_config(base_config)
    p_scale = base_config.scheme.pressure_scale
    cauchy = [update_norm(problem, a.final, b.final, p_scale)
              for a, b in zip(done, done[1:])]
    identity_distance = None
    if axis == 'N':
        reference = run(base_config.with_scheme(projection='identity',
                                                modes=None), diagnose=False)
        identity_distance = [update_norm(problem, r.final, reference.final,
                                         p_scale) for r in done]
    table = SweepTable(axis=axis, rows=rows, ratios=ratios, cauchy=cauchy,
                       identity_distance=identity_distance)
    logger.info("sweep {}: ratios {}, cauchy {}".format(
        axis, {k: round(v, 3) for k, v in ratios.items()},
        ["{:.3e}".format(c) for c in cauchy]))
    return table


# ---- FEM verification ----------------------------------------------------------

def poisson_convergence(levels: Sequence[int] = (8, 16, 32, 64),
                        dim: int = 1) -> List[float]:
    """
    Observed L2 orders of P1/Q1 for :math:`-\\Delta u = f` with the exact
    solution :math:`u = \\prod_d \\sin(\\pi x_d)` on the unit interval /
    square, Dirichlet on the whole boundary.
    """
    errors, sizes = [], []
    for n in levels:
        if dim == 1:
            mesh = build_interval(1.0, n)
        else:
            mesh = build_rectangle(1.0, 1.0, n, n,
                                   ['left', 'right', 'bottom', 'top'])
        space = FEMSpace(mesh, order=4)

        def exact(points):
            return np.prod(np.sin(np.pi * points), axis=-1)

        def load(points):
            return dim * np.pi ** 2 * exact(points)

        A = assemble_weighted_stiffness(space, 1.0)
        b = assemble_load(space, load)
        u = solve(A, b, mesh.dirichlet_nodes)
        err = space.values(u) - exact(space.points)
        errors.append(np.sqrt(space.integrate(err ** 2)))
        sizes.append(1.0 / n)
    return [float(np.log(errors[k] / errors[k + 1]) /
                  np.log(sizes[k] / sizes[k + 1]))
            for k in range(len(levels) - 1)]


def patch_test(dim: int = 2, n: int = 4) -> float:
    """ Max nodal error for a globally linear field with exact boundary data """
    if dim == 1:
        mesh = build_interval(1.0, n)
    else:
        mesh = build_rectangle(2.0, 1.0, n, n + 1,
                               ['left', 'right', 'bottom', 'top'])
    x, y = mesh.coordinates()
    exact = 1.0 + 2.0 * x + 3.0 * y
    space = FEMSpace(mesh)
    A = assemble_weighted_stiffness(space, 1.0)
    u = solve(A, np.zeros(mesh.n_nodes), mesh.dirichlet_nodes,
              exact[mesh.dirichlet_nodes])
    return float(np.abs(u - exact).max())

