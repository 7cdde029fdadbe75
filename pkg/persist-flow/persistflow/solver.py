# -*- coding: utf-8 -*-
"""
Solver
======

Implicit Euler in time for the regularized two-phase, two-component
system in the persistent variables :math:`(p_l, p_g)`. Each time step is
a Picard iteration; one Picard map solves two linear, uncoupled elliptic
problems with coefficients frozen at the iterate
:math:`(\\bar p_l, \\bar p_g)`:

.. math::

    \\int \\Phi \\frac{\\bar S - S^*}{\\delta t}\\varphi
    + \\int \\lambda_l^\\varepsilon(\\bar S) K \\nabla p_l \\cdot \\nabla\\varphi
    - \\int \\frac{\\Phi \\bar S}{\\tilde\\rho_l} D \\nabla\\tilde u\\cdot\\nabla\\varphi
    - \\eta \\int \\nabla(\\tilde p_g - \\tilde p_l)\\cdot\\nabla\\varphi
    + \\int \\bar S F_P \\varphi
    = \\int F_I \\varphi + \\int \\bar\\rho_l \\lambda_l K g\\cdot\\nabla\\varphi

.. math::

    \\int \\Phi \\frac{\\bar r^\\varepsilon - r^{\\varepsilon *}}{\\delta t}\\psi
    + \\int \\big(\\tilde u \\lambda_l^\\varepsilon K\\nabla p_l
    + \\tilde\\rho_g^\\varepsilon \\lambda_g K \\nabla\\tilde p_g
    + \\varepsilon \\tilde\\rho_g^\\varepsilon \\nabla p_g
    + \\frac{\\Phi\\bar S\\rho_l^{std}}{\\tilde\\rho_l} D\\nabla\\tilde u
    + \\eta(\\tilde\\rho_g^\\varepsilon - \\tilde u)\\nabla(\\tilde p_g - \\tilde p_l)
    \\big)\\cdot\\nabla\\psi
    + \\int \\bar r^\\varepsilon F_P \\psi
    = \\int (\\bar\\rho_l\\tilde u\\lambda_l
    + (\\tilde\\rho_g^\\varepsilon)^2\\lambda_g) K g\\cdot\\nabla\\psi

where :math:`r^\\varepsilon = uS + \\rho_g^\\varepsilon(1 - S)`,
:math:`\\rho_g^\\varepsilon = \\hat\\rho_g + \\varepsilon`, tilde quantities
are evaluated at :math:`P_N[\\bar p_g]`, :math:`P_N[\\bar p_l]`, and the
liquid equation is solved first so the gas equation sees the new
:math:`p_l`. Accumulation and source terms are mass-lumped.

:func:`picard_map` is exactly this map. :func:`stabilized_map` adds
:math:`C(\\bar p)(p - \\bar p)` to both systems (lumped accumulation
derivative plus a diffusion matching the lagged fluxes); it has the same
fixed points and is what :func:`time_step` iterates when ``stabilize`` is
set. Residual and energy checks always use the plain equations.
"""
import logging
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np  # type: ignore
from scipy import sparse  # type: ignore
import tqdm  # type: ignore

from persistflow import settings
from persistflow.constitutive import (
    ConstitutiveSet, RockFluidParams, SecondaryState, secondary,
)
from persistflow.fem import (
    FEMSpace, LinearSolveError, assemble_advective_rhs, assemble_mass,
    assemble_weighted_stiffness, solve,
)
from persistflow.mesh import Mesh
from persistflow.spectral import EigenBasis, compute_basis, project
from persistflow.utils import log_time, rss_mb


logger = logging.getLogger(__name__)

PROJECTIONS = ('identity', 'spectral')


class StepFailure(RuntimeError):
    """ A time step could not be completed """
    def __init__(self, message: str, *, step: int, dt: float,
                 update_norm: float) -> None:
        super().__init__("step {} (dt={:g}): {} (last update norm "
                         "{:.3e})".format(step, dt, message, update_norm))
        self.step = step
        self.dt = dt
        self.update_norm = update_norm
        self.partial = None  # type: Optional[RunResult]


class PicardStall(StepFailure):
    """ Picard iterates stopped contracting; the last two are kept """
    def __init__(self, message: str, *, step: int, dt: float,
                 update_norm: float, candidates: Tuple['State', 'State']) -> None:
        super().__init__(message, step=step, dt=dt, update_norm=update_norm)
        self.candidates = candidates


class RegularizationParams:
    """
    Regularization and iteration parameters of a run.

    ``eta`` is the capillary-diffusion regularization, ``eps`` the
    mobility / density floor, ``dt`` the nominal time step. ``projection``
    is 'identity' or 'spectral' (then ``modes`` is the number of
    eigenvectors used by :math:`P_N`).
    """
    def __init__(self, *, dt: float, n_steps: int,
                 eta: float = settings.DEFAULT_ETA,
                 eps: float = settings.DEFAULT_EPS,
                 projection: str = 'identity', modes: Optional[int] = None,
                 picard_tol: float = settings.PICARD_TOL,
                 picard_max: int = settings.PICARD_MAX,
                 relaxation: float = settings.RELAXATION,
                 stabilize: bool = False, p_scale: Optional[float] = None,
                 max_halvings: int = settings.MAX_DT_HALVINGS) -> None:
        if projection not in PROJECTIONS:
            raise ValueError("Unsupported projection: %s. Supported "
                             "projections: %r" % (projection, list(PROJECTIONS)))
        if projection == 'spectral' and (modes is None or modes < 1):
            raise ValueError("spectral projection needs modes >= 1")
        if eta < 0 or eps < 0:
            raise ValueError("eta and eps must be nonnegative")
        if not dt > 0 or n_steps < 1:
            raise ValueError("dt must be positive and n_steps at least 1")
        if not picard_tol > 0 or picard_max < 1:
            raise ValueError("picard_tol must be positive and picard_max "
                             "at least 1")
        if not 0 < relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if max_halvings < 0:
            raise ValueError("max_halvings must be nonnegative")
        if p_scale is not None and not p_scale > 0:
            raise ValueError("p_scale must be positive")
        self.eta = float(eta)
        self.eps = float(eps)
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.projection = projection
        self.modes = modes
        self.picard_tol = float(picard_tol)
        self.picard_max = int(picard_max)
        self.relaxation = float(relaxation)
        self.stabilize = bool(stabilize)
        self.p_scale = p_scale
        self.max_halvings = int(max_halvings)

    @property
    def final_time(self) -> float:
        return self.dt * self.n_steps

    @property
    def pressure_scale(self) -> float:
        return 1.0 if self.p_scale is None else self.p_scale

    def as_dict(self):
        return {
            'dt': self.dt, 'n_steps': self.n_steps, 'eta': self.eta,
            'eps': self.eps, 'projection': self.projection,
            'modes': self.modes, 'picard_tol': self.picard_tol,
            'picard_max': self.picard_max, 'relaxation': self.relaxation,
            'stabilize': self.stabilize, 'p_scale': self.p_scale,
            'max_halvings': self.max_halvings,
        }

    def replace(self, **changes) -> 'RegularizationParams':
        kwargs = self.as_dict()
        for key in changes:
            if key not in kwargs:
                raise ValueError("Unsupported argument: %s. Supported "
                                 "arguments: %r" % (key, sorted(kwargs)))
        kwargs.update(changes)
        return RegularizationParams(**kwargs)

    def __repr__(self):
        return "RegularizationParams(%s)" % ", ".join(
            "%s=%r" % kv for kv in sorted(self.as_dict().items()))


class State:
    """ Nodal liquid pressure and gas pseudo-pressure at a time level """
    def __init__(self, p_l: np.ndarray, p_g: np.ndarray, time: float) -> None:
        self.p_l = np.asarray(p_l, dtype=float)
        self.p_g = np.asarray(p_g, dtype=float)
        self.time = float(time)

    def copy(self) -> 'State':
        return State(self.p_l.copy(), self.p_g.copy(), self.time)

    def __repr__(self):
        return "State(time=%g, n=%d)" % (self.time, len(self.p_l))


class StepReport:
    """ Summary of one accepted time step """
    def __init__(self, *, step: int, time: float, dt: float,
                 picard_iterations: int, final_update_norm: float,
                 min_p_g: float, max_p_g: float,
                 saturation_range: Tuple[float, float], clamp_events: int,
                 halvings: int = 0) -> None:
        self.step = step
        self.time = time
        self.dt = dt
        self.picard_iterations = picard_iterations
        self.final_update_norm = final_update_norm
        self.min_p_g = min_p_g
        self.max_p_g = max_p_g
        self.saturation_range = saturation_range
        self.clamp_events = clamp_events
        self.halvings = halvings
        # filled in by the diagnostics of a run
        self.energy = None
        self.mass = None
        self.dual_norms = None

    @property
    def energy_terms(self):
        return None if self.energy is None else self.energy.as_dict()


class Forcing(NamedTuple):
    """ Nodal source rates averaged over one time interval """
    injection: np.ndarray
    production: np.ndarray


def _nodal(values: np.ndarray, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 1:
        return np.broadcast_to(values, (n,) + values.shape[1:]).copy()
    assert values.shape[0] == n, values.shape
    return values


class FlowProblem:
    """
    Everything about a run that does not change between time steps:
    mesh, FE space, data at quadrature points, unit operators and the
    source expressions.
    """
    def __init__(self, *, mesh: Mesh, params: RockFluidParams,
                 curves: ConstitutiveSet, sources=(None, None),
                 tables=None, order: int = settings.QUADRATURE_ORDER) -> None:
        self.mesh = mesh
        self.params = params
        self.curves = curves
        self.tables = tables
        self.space = FEMSpace(mesh, order=order)
        n = mesh.n_nodes
        self.porosity = _nodal(params.porosity, n)
        self.diffusion = _nodal(params.diffusion, n)
        self.permeability = _nodal(params.permeability, n)
        self.K = self.space.quadrature_tensor(self.permeability)
        self.gravity = np.zeros(mesh.dim) + params.gravity
        self.has_gravity = bool(np.any(self.gravity != 0))
        self.lumped = self.space.lumped_measure
        self.unit_stiffness = assemble_weighted_stiffness(self.space, 1.0)
        self.unit_mass = assemble_mass(self.space, 1.0)
        self.norm_operator = (self.unit_mass + self.unit_stiffness).tocsr()
        self.injection, self.production = sources

    @classmethod
    def from_config(cls, config, tables=None) -> 'FlowProblem':
        return cls(mesh=config.mesh, params=config.params,
                   curves=config.curves, sources=config.sources,
                   tables=tables)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return self.mesh.dirichlet_nodes

    def forcing(self, t0: float, dt: float) -> Forcing:
        """ Sources averaged over ``[t0, t0 + dt]`` (3-point Gauss in time) """
        x, y = self.mesh.coordinates()
        xi, w = np.polynomial.legendre.leggauss(3)
        times = t0 + dt * (1 + xi) / 2

        def average(expr):
            if expr is None:
                return np.zeros(self.mesh.n_nodes)
            return sum(wk / 2 * expr.on_nodes(x, y, tk)
                       for wk, tk in zip(w, times))
        return Forcing(average(self.injection), average(self.production))

    def secondary(self, state: State) -> SecondaryState:
        return secondary(self.curves, self.params, state.p_l, state.p_g,
                         tables=self.tables)

    def zero_dirichlet(self, values: np.ndarray) -> np.ndarray:
        values = values.copy()
        values[self.dirichlet_nodes] = 0.0
        return values


# ---- frozen coefficients -----------------------------------------------------

class Coefficients:
    """
    Nodal and quadrature point data of one Picard map, frozen at the
    previous level ``prev`` and the iterate ``it``.
    """
    def __init__(self, problem: FlowProblem, prev: State, it: State,
                 reg: RegularizationParams, basis: Optional[EigenBasis],
                 dt: float, forcing: Forcing) -> None:
        curves, space, params = problem.curves, problem.space, problem.params
        eps = reg.eps
        self.dt = dt
        self.forcing = forcing
        self.iterate = it

        # nodal values (lumped terms)
        self.S_prev = curves.saturation(prev.p_g - prev.p_l)[0]
        self.S, dS, clamped = curves.saturation(it.p_g - it.p_l)
        self.abs_dS = np.abs(dS)
        self.clamp_events = int(np.count_nonzero(clamped))
        self.u, self.du = curves.solubility.evaluate(it.p_g)
        rho, self.drho = curves.density.evaluate(it.p_g)
        self.rho_eps = rho + eps
        u_prev = curves.solubility(prev.p_g)
        rho_prev_eps = curves.density(prev.p_g) + eps
        self.r = self.u * self.S + self.rho_eps * (1 - self.S)
        self.r_prev = u_prev * self.S_prev + rho_prev_eps * (1 - self.S_prev)

        # projected iterate
        if reg.projection == 'spectral':
            if basis is None:
                raise ValueError("spectral projection needs a basis")
            self.pg_t = project(basis, it.p_g)
            self.pl_t = project(basis, it.p_l)
        else:
            self.pg_t, self.pl_t = it.p_g, it.p_l
        u_t_nodal = curves.solubility(self.pg_t)

        # quadrature points
        pl_q, pg_q = space.values(it.p_l), space.values(it.p_g)
        self.S_q = curves.saturation(pg_q - pl_q)[0]
        self.lam_l_eps_q, self.lam_g_q = curves.mobilities(
            self.S_q, params.mu_l, params.mu_g, eps)
        self.lam_l_q = self.lam_l_eps_q - eps
        self.u_bar_q, du_bar_q = curves.solubility.evaluate(pg_q)
        self.rho_bar_eps_q = curves.density(pg_q) + eps
        self.rho_l_bar_q = params.rho_l_std + self.u_bar_q
        pgt_q = space.values(self.pg_t)
        self.u_t_q = curves.solubility(pgt_q)
        self.rho_t_eps_q = curves.density(pgt_q) + eps
        self.rho_l_t_q = params.rho_l_std + self.u_t_q
        self.phi_q = space.values(problem.porosity)
        self.D_q = space.values(problem.diffusion)
        self.phi_D_S_q = self.phi_q * self.D_q * self.S_q
        self.du_bar_q = du_bar_q
        self.grad_u_t = space.gradients(u_t_nodal)
        self.grad_pg_t = space.gradients(self.pg_t)
        self.grad_eta = space.gradients(self.pg_t - self.pl_t)


def _tensor(problem: FlowProblem, c) -> np.ndarray:
    """ K scaled by a quadrature point coefficient """
    return problem.K * c[..., None, None]


def _Kg(problem: FlowProblem) -> np.ndarray:
    return np.einsum('eqij,j->eqi', problem.K, problem.gravity)


def liquid_gravity(problem: FlowProblem, co: Coefficients) -> np.ndarray:
    """ Nodal gravity load of the liquid equation """
    if not problem.has_gravity:
        return np.zeros(problem.mesh.n_nodes)
    q = (co.rho_l_bar_q * co.lam_l_q)[..., None] * _Kg(problem)
    return assemble_advective_rhs(problem.space, q)


def gas_gravity(problem: FlowProblem, co: Coefficients) -> np.ndarray:
    """ Nodal gravity load of the gas equation """
    if not problem.has_gravity:
        return np.zeros(problem.mesh.n_nodes)
    c = co.rho_l_bar_q * co.u_t_q * co.lam_l_q + co.rho_t_eps_q ** 2 * co.lam_g_q
    return assemble_advective_rhs(problem.space, c[..., None] * _Kg(problem))


def liquid_flux(problem: FlowProblem, co: Coefficients,
                reg: RegularizationParams) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """ ``(A, known)``: the liquid flux form is ``A p_l - known`` """
    space = problem.space
    A = assemble_weighted_stiffness(space, _tensor(problem, co.lam_l_eps_q))
    q = (co.phi_D_S_q / co.rho_l_t_q)[..., None] * co.grad_u_t
    q = q + reg.eta * co.grad_eta
    return A, assemble_advective_rhs(space, q) + liquid_gravity(problem, co)


def gas_flux(problem: FlowProblem, co: Coefficients,
             reg: RegularizationParams,
             p_l: np.ndarray) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """ ``(A, known)``: the gas flux form is ``A p_g - known`` """
    space, eps = problem.space, reg.eps
    rho_std = problem.params.rho_l_std
    A = assemble_weighted_stiffness(space, eps * co.rho_t_eps_q)
    grad_pl = space.gradients(p_l)
    q = -np.einsum('eqij,eqj->eqi',
                   _tensor(problem, co.u_t_q * co.lam_l_eps_q), grad_pl)
    q -= np.einsum('eqij,eqj->eqi',
                   _tensor(problem, co.rho_t_eps_q * co.lam_g_q), co.grad_pg_t)
    q -= (co.phi_D_S_q * rho_std / co.rho_l_t_q)[..., None] * co.grad_u_t
    q -= (reg.eta * (co.rho_t_eps_q - co.u_t_q))[..., None] * co.grad_eta
    return A, assemble_advective_rhs(space, q) + gas_gravity(problem, co)


def liquid_system(problem: FlowProblem, co: Coefficients,
                  reg: RegularizationParams, *, stabilize: bool = False):
    """ Assembled liquid system ``(A, b)`` of one Picard map """
    m, phi, F = problem.lumped, problem.porosity, co.forcing
    A, known = liquid_flux(problem, co, reg)
    b = (known - m * phi * (co.S - co.S_prev) / co.dt +
         m * (F.injection - co.S * F.production))
    if stabilize:
        a = m * phi * co.abs_dS / co.dt
        C = sparse.diags(a) + reg.eta * problem.unit_stiffness
        A = A + C
        b = b + C @ co.iterate.p_l
    return A.tocsr(), b


def gas_system(problem: FlowProblem, co: Coefficients,
               reg: RegularizationParams, p_l: np.ndarray, *,
               stabilize: bool = False):
    """ Assembled gas system ``(A, b)``, given the new liquid pressure """
    m, phi, F = problem.lumped, problem.porosity, co.forcing
    A, known = gas_flux(problem, co, reg, p_l)
    b = known - m * phi * (co.r - co.r_prev) / co.dt - m * co.r * F.production
    if stabilize:
        it = co.iterate
        gap = co.rho_eps - co.u
        two_phase = co.abs_dS * gap
        b_coef = m * phi * np.maximum(
            co.S * co.du + (1 - co.S) * co.drho + two_phase, 0.0) / co.dt
        b = b + m * phi * two_phase * (p_l - it.p_l) / co.dt
        rho_std = problem.params.rho_l_std
        iso = (co.phi_D_S_q * rho_std / co.rho_l_bar_q * co.du_bar_q +
               reg.eta * np.maximum(co.rho_bar_eps_q - co.u_bar_q, 0.0))
        stiff = (_tensor(problem, co.rho_bar_eps_q * co.lam_g_q) +
                 iso[..., None, None] * np.eye(problem.mesh.dim))
        C = sparse.diags(b_coef) + assemble_weighted_stiffness(problem.space, stiff)
        A = A + C
        b = b + C @ it.p_g
    return A.tocsr(), b


def regularized_fluxes(problem: FlowProblem, state: State,
                       reg: RegularizationParams
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Water and gas component fluxes of a state at quadrature points,
    shape ``(n_elements, n_qp, dim)``:

    .. math::

        Q^w = -\\lambda_l K(\\nabla p_l - \\rho_l g)
              + \\frac{\\Phi S}{\\rho_l} D\\nabla u
              + \\eta\\nabla(p_g - p_l)

        Q^h = -u\\lambda_l K(\\nabla p_l - \\rho_l g)
              - \\rho_g\\lambda_g K(\\nabla p_g - \\rho_g g)
              - \\frac{\\Phi S \\rho_l^{std}}{\\rho_l} D\\nabla u
              - \\eta(\\rho_g - u)\\nabla(p_g - p_l)
    """
    curves, space, params = problem.curves, problem.space, problem.params
    pl_q, pg_q = space.values(state.p_l), space.values(state.p_g)
    S = curves.saturation(pg_q - pl_q)[0]
    lam_l, lam_g = curves.mobilities(S, params.mu_l, params.mu_g)
    u = curves.solubility(pg_q)
    rho_g = curves.density(pg_q)
    rho_l = params.rho_l_std + u

    grad_pl = space.gradients(state.p_l)
    grad_pg = space.gradients(state.p_g)
    grad_u = space.gradients(curves.solubility(state.p_g))
    g = problem.gravity
    K_drive_l = np.einsum('eqij,eqj->eqi', problem.K,
                          grad_pl - rho_l[..., None] * g)
    K_drive_g = np.einsum('eqij,eqj->eqi', problem.K,
                          grad_pg - rho_g[..., None] * g)
    diffusion = (space.values(problem.porosity) * S *
                 space.values(problem.diffusion) / rho_l)[..., None] * grad_u
    capillary = reg.eta * (grad_pg - grad_pl)

    Q_w = -lam_l[..., None] * K_drive_l + diffusion + capillary
    Q_h = (-(u * lam_l)[..., None] * K_drive_l
           - (rho_g * lam_g)[..., None] * K_drive_g
           - params.rho_l_std * diffusion
           - (rho_g - u)[..., None] * capillary)
    return Q_w, Q_h


# ---- Picard iteration --------------------------------------------------------

def _map(problem: FlowProblem, prev: State, iterate: State,
         reg: RegularizationParams, basis: Optional[EigenBasis],
         dt: Optional[float], forcing: Optional[Forcing],
         relaxation: Optional[float], stabilize: bool) -> State:
    dt = reg.dt if dt is None else dt
    if forcing is None:
        forcing = problem.forcing(prev.time, dt)
    omega = reg.relaxation if relaxation is None else relaxation
    co = Coefficients(problem, prev, iterate, reg, basis, dt, forcing)
    dirichlet = problem.dirichlet_nodes

    A, b = liquid_system(problem, co, reg, stabilize=stabilize)
    p_l = solve(A, b, dirichlet)
    A, b = gas_system(problem, co, reg, p_l, stabilize=stabilize)
    p_g = solve(A, b, dirichlet)
    if omega != 1.0:
        p_l = omega * p_l + (1 - omega) * iterate.p_l
        p_g = omega * p_g + (1 - omega) * iterate.p_g
    return State(p_l, p_g, prev.time + dt)


def picard_map(problem: FlowProblem, prev: State, iterate: State,
               reg: RegularizationParams, basis: Optional[EigenBasis] = None,
               *, dt: Optional[float] = None, forcing: Optional[Forcing] = None,
               relaxation: Optional[float] = None) -> State:
    """
    One application of the Picard map: solve the liquid equation, then
    the gas equation with the new liquid pressure, and relax towards the
    iterate. The solved systems are the discrete equations themselves,
    whatever ``reg.stabilize`` says.
    """
    return _map(problem, prev, iterate, reg, basis, dt, forcing, relaxation,
                stabilize=False)


def stabilized_map(problem: FlowProblem, prev: State, iterate: State,
                   reg: RegularizationParams,
                   basis: Optional[EigenBasis] = None, *,
                   dt: Optional[float] = None,
                   forcing: Optional[Forcing] = None,
                   relaxation: Optional[float] = None) -> State:
    """ :func:`picard_map` with the stabilizing term on both systems """
    return _map(problem, prev, iterate, reg, basis, dt, forcing, relaxation,
                stabilize=True)


def update_norm(problem: FlowProblem, a: State, b: State,
                p_scale: float = 1.0) -> float:
    """ Combined L2 + H1-seminorm distance of two states, relative to p_scale """
    N = problem.norm_operator
    d_l, d_g = a.p_l - b.p_l, a.p_g - b.p_g
    q = float(d_l @ (N @ d_l) + d_g @ (N @ d_g))
    return float(np.sqrt(max(q, 0.0) / problem.mesh.measure)) / p_scale


def time_step(problem: FlowProblem, prev: State, reg: RegularizationParams,
              basis: Optional[EigenBasis] = None, *, dt: Optional[float] = None,
              step: int = 0) -> Tuple[State, StepReport]:
    """
    Iterate the Picard map from ``prev`` until the update norm drops
    below ``picard_tol``. The iteration stalls when the update norm has
    not shrunk by ``STALL_CONTRACTION`` over the last ``STALL_WINDOW``
    iterations at a fixed relaxation.
    """
    dt = reg.dt if dt is None else dt
    forcing = problem.forcing(prev.time, dt)
    p_scale = reg.pressure_scale
    omega = reg.relaxation
    step_map = stabilized_map if reg.stabilize else picard_map
    window = settings.STALL_WINDOW
    iterate = prev
    older = None  # type: Optional[State]
    norms = []  # type: List[float]
    norm = float('inf')

    for k in range(1, reg.picard_max + 1):
        try:
            new = step_map(problem, prev, iterate, reg, basis, dt=dt,
                           forcing=forcing, relaxation=omega)
        except LinearSolveError as e:
            raise StepFailure("linear solve failed: {}".format(e), step=step,
                              dt=dt, update_norm=norm)
        norm = update_norm(problem, new, iterate, p_scale)
        if not np.isfinite(norm):
            raise StepFailure("non-finite Picard iterate", step=step, dt=dt,
                              update_norm=norm)
        if norm < reg.picard_tol:
            return new, _report(problem, new, step, dt, k, norm)
        norms.append(norm)
        if (len(norms) > window and
                norms[-1] >= settings.STALL_CONTRACTION * norms[-1 - window]):
            cycle = older is not None and \
                update_norm(problem, new, older, p_scale) < 0.1 * norm
            raise PicardStall(
                "Picard iterates alternate between two states" if cycle else
                "Picard iteration stopped contracting",
                step=step, dt=dt, update_norm=norm, candidates=(iterate, new))
        if (len(norms) > 1 and
                norm > settings.DIVERGENCE_FACTOR * norms[-2] and
                omega > settings.RELAXATION_FALLBACK):
            omega = settings.RELAXATION_FALLBACK
            norms = []
            logger.warning("step {}: Picard update grew to {:.3e}, relaxing "
                           "with {}".format(step, norm, omega))
        older, iterate = iterate, new

    logger.warning("step {}: no Picard convergence in {} iterations "
                   "(update norm {:.3e})".format(step, reg.picard_max, norm))
    raise StepFailure("Picard iteration did not converge in {} "
                      "iterations".format(reg.picard_max),
                      step=step, dt=dt, update_norm=norm)


def _report(problem: FlowProblem, state: State, step: int, dt: float,
            iterations: int, norm: float) -> StepReport:
    S, _, clamped = problem.curves.saturation(state.p_g - state.p_l)
    return StepReport(
        step=step, time=state.time, dt=dt, picard_iterations=iterations,
        final_update_norm=norm, min_p_g=float(state.p_g.min()),
        max_p_g=float(state.p_g.max()),
        saturation_range=(float(S.min()), float(S.max())),
        clamp_events=int(np.count_nonzero(clamped)))


def advance(problem: FlowProblem, prev: State, reg: RegularizationParams,
            basis: Optional[EigenBasis], dt: float, step: int,
            halvings: int = 0) -> List[Tuple[State, StepReport]]:
    """
    Advance ``prev`` by ``dt``; a failed step is retried as two steps of
    ``dt / 2``, at most ``reg.max_halvings`` times.
    """
    try:
        new, report = time_step(problem, prev, reg, basis, dt=dt, step=step)
        report.halvings = halvings
        return [(new, report)]
    except StepFailure as e:
        if halvings >= reg.max_halvings:
            raise
        logger.warning("step {} failed ({}); halving dt to {:g}".format(
            step, e, dt / 2))
    first = advance(problem, prev, reg, basis, dt / 2, step, halvings + 1)
    second = advance(problem, first[-1][0], reg, basis, dt / 2, step,
                     halvings + 1)
    return first + second


# ---- nonlinear residuals -----------------------------------------------------

class ResidualParts(NamedTuple):
    accumulation: np.ndarray
    flux: np.ndarray
    source: np.ndarray
    # gravity load, already subtracted inside ``flux``
    gravity: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.accumulation + self.flux + self.source


def weak_residuals(problem: FlowProblem, prev: State, state: State,
                   reg: RegularizationParams,
                   basis: Optional[EigenBasis] = None,
                   forcing: Optional[Forcing] = None
                   ) -> Tuple[ResidualParts, ResidualParts]:
    """
    Nodal residuals of the discrete liquid and gas equations at ``state``
    (the iterate and the unknowns both set to ``state``), split into
    accumulation, flux and source parts. At a converged step the free-node
    entries vanish up to the Picard tolerance; the Dirichlet entries carry
    the boundary flux.
    """
    dt = state.time - prev.time
    if forcing is None:
        forcing = problem.forcing(prev.time, dt)
    co = Coefficients(problem, prev, state, reg, basis, dt, forcing)
    m, phi, F = problem.lumped, problem.porosity, forcing

    A, known = liquid_flux(problem, co, reg)
    liquid = ResidualParts(
        accumulation=m * phi * (co.S - co.S_prev) / dt,
        flux=A @ state.p_l - known,
        source=m * (co.S * F.production - F.injection),
        gravity=liquid_gravity(problem, co))
    A, known = gas_flux(problem, co, reg, state.p_l)
    gas = ResidualParts(
        accumulation=m * phi * (co.r - co.r_prev) / dt,
        flux=A @ state.p_g - known,
        source=m * co.r * F.production,
        gravity=gas_gravity(problem, co))
    return liquid, gas


# ---- reconstructions in time -------------------------------------------------

class Reconstruction:
    """
    Piecewise-constant and piecewise-linear in time interpolants of the
    saturation and of the gas component content
    :math:`r_g = uS + \\rho_g(1 - S)` over a series of states.
    """
    def __init__(self, problem: FlowProblem, series: List[State]) -> None:
        self.times = np.array([s.time for s in series])
        S, r = [], []
        for state in series:
            sec = problem.secondary(state)
            S.append(sec.S)
            r.append(sec.u * sec.S + sec.rho_g * (1 - sec.S))
        self.S = np.array(S)
        self.r_g = np.array(r)

    def _check(self, t: float) -> None:
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError("t={} outside [{}, {}]".format(
                t, self.times[0], self.times[-1]))

    def piecewise_constant(self, t: float, field: str = 'S') -> np.ndarray:
        """ Value of the level closing the interval containing ``t`` """
        self._check(t)
        values = getattr(self, field)
        idx = int(np.searchsorted(self.times, t, side='left'))
        return values[idx]

    def piecewise_linear(self, t: float, field: str = 'S') -> np.ndarray:
        self._check(t)
        values = getattr(self, field)
        idx = int(np.searchsorted(self.times, t, side='left'))
        if idx == 0:
            return values[0]
        t0, t1 = self.times[idx - 1], self.times[idx]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * values[idx - 1] + w * values[idx]


# ---- driver ------------------------------------------------------------------

class RunResult:
    """ Accepted states and step reports of a (possibly partial) run """
    def __init__(self, *, config, problem: FlowProblem, series: List[State],
                 reports: List[StepReport],
                 basis: Optional[EigenBasis]) -> None:
        self.config = config
        self.problem = problem
        self.series = series
        self.reports = reports
        self.basis = basis
        self.completed = False

    @property
    def final(self) -> State:
        return self.series[-1]

    def reconstruction(self) -> Reconstruction:
        return Reconstruction(self.problem, self.series)


def initial_state(problem: FlowProblem, config) -> State:
    """ Nodal interpolants of the initial expressions """
    x, y = problem.mesh.coordinates()
    p_l = config.initial[0].on_nodes(x, y, 0.0)
    p_g = config.initial[1].on_nodes(x, y, 0.0)
    d = problem.dirichlet_nodes
    if np.any(p_l[d] != 0) or np.any(p_g[d] != 0):
        logger.warning("initial data is nonzero on Dirichlet nodes; "
                       "setting it to 0 there")
    return State(problem.zero_dirichlet(p_l), problem.zero_dirichlet(p_g), 0.0)


@log_time
def run(config, *, basis: Optional[EigenBasis] = None, tables=None,
        on_step: Optional[Callable[[State, StepReport], None]] = None,
        progress: bool = False, diagnose: bool = True) -> RunResult:
    """
    Run a configuration: ``n_steps`` implicit Euler steps of size
    ``dt``. With ``diagnose`` every report gets its energy terms and mass
    ledger row. ``on_step`` is called after each accepted step. A step
    which fails after all halvings raises :class:`StepFailure` with the
    partial result attached as ``partial``.
    """
    from persistflow import diagnostics
    from persistflow.global_pressure import build_tables

    reg = config.scheme
    if tables is None:
        tables = build_tables(config.curves, config.params.mu_l,
                              config.params.mu_g, config.table_resolution,
                              config.table_tol)
    problem = FlowProblem.from_config(config, tables=tables)
    if reg.projection == 'spectral' and basis is None:
        basis = compute_basis(config.mesh, reg.modes, problem.space)
    monitor = diagnostics.StepDiagnostics(problem, reg, basis) if diagnose else None

    state = initial_state(problem, config)
    result = RunResult(config=config, problem=problem, series=[state],
                       reports=[], basis=basis)
    steps = range(reg.n_steps)
    if progress:
        steps = tqdm.tqdm(steps, desc=config.name, unit='step')
    accepted = 0
    for n in steps:
        try:
            members = advance(problem, state, reg, basis, reg.dt, step=n + 1)
        except StepFailure as e:
            e.partial = result
            logger.error("run aborted at step {}: {}".format(n + 1, e))
            raise
        for new, report in members:
            accepted += 1
            report.step = accepted
            if monitor is not None:
                monitor.attach(state, new, report)
            result.series.append(new)
            result.reports.append(report)
            if on_step is not None:
                on_step(new, report)
            logger.info(
                "step {} t={:.6g} dt={:.4g} picard={} min_pg={:.4g} "
                "S=[{:.6f}, {:.6f}] rss={:.1f}MB".format(
                    accepted, new.time, report.dt, report.picard_iterations,
                    report.min_p_g, report.saturation_range[0],
                    report.saturation_range[1], rss_mb()))
            state = new
    result.completed = True
    return result
