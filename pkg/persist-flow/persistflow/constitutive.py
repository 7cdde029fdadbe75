# -*- coding: utf-8 -*-
"""
Constitutive relations
======================

Curve families of the two-phase water / gas model written in the
persistent variables :math:`(p_l, p_g)`:

* capillary pressure :math:`p_c(S)`, strictly decreasing, :math:`p_c(1)=0`,
  with the inverse extended by :math:`p_c^{-1}(\\sigma) = 1` for
  :math:`\\sigma \\le 0` (one-phase region);
* relative permeabilities :math:`kr_l(S)`, :math:`kr_g(S)`;
* dissolved gas concentration :math:`\\hat u(p_g)` (Henry's law with a
  smooth cap at :math:`u_{max}` and a bounded extension to negative
  pseudo-pressures);
* gas density :math:`\\hat\\rho_g(p_g)`, zero for :math:`p_g \\le 0`.

Secondary variables follow from the primary ones:

.. math::

    S = p_c^{-1}(p_g - p_l), \\quad u = \\hat u(p_g), \\quad
    \\rho_g = \\hat\\rho_g(p_g), \\quad \\rho_l = \\rho_l^{std} + u

Capped curves use the power law :math:`c \\sigma^\\theta` up to the knee
where it reaches ``CAP_KNEE * cap`` and an exponential approach to the cap
after it, matched in value and slope:

.. math::

    v(\\sigma) = cap - (cap - v_a)
        \\exp\\left(-\\frac{s_a (\\sigma - \\sigma_a)}{cap - v_a}\\right)
"""
import logging
from typing import List, NamedTuple, Optional, Tuple, Dict

import numpy as np  # type: ignore
from scipy import integrate  # type: ignore
from sklearn.linear_model import LinearRegression  # type: ignore

from persistflow import settings


logger = logging.getLogger(__name__)

# exp() arguments are clipped to this magnitude
_EXP_CLIP = 700.0


class DomainError(ValueError):
    pass


# ---- capillary pressure ------------------------------------------------------

class LinearCapillary:
    """ :math:`p_c(S) = p_e (1 - S)` """
    name = 'linear'

    def __init__(self, *, entry_pressure: float) -> None:
        assert entry_pressure > 0
        self.entry_pressure = float(entry_pressure)

    @property
    def supremum(self) -> float:
        return self.entry_pressure

    def value(self, S):
        return self.entry_pressure * (1.0 - S)

    def derivative(self, S):
        return -self.entry_pressure * np.ones_like(np.asarray(S, dtype=float))

    def inverse(self, sigma):
        return 1.0 - np.asarray(sigma, dtype=float) / self.entry_pressure

    def integral(self, S):
        """ :math:`\\int_0^S p_c` """
        return self.entry_pressure * (S - S ** 2 / 2)

    @property
    def total_integral(self) -> float:
        return self.entry_pressure / 2


class BrooksCoreyCapillary:
    """ :math:`p_c(S) = p_e (S^{-1/\\lambda_b} - 1)` """
    name = 'brooks_corey'

    def __init__(self, *, entry_pressure: float, lambda_b: float) -> None:
        assert entry_pressure > 0 and lambda_b > 0
        self.entry_pressure = float(entry_pressure)
        self.lambda_b = float(lambda_b)

    @property
    def supremum(self) -> float:
        return float('inf')

    def value(self, S):
        return self.entry_pressure * (S ** (-1.0 / self.lambda_b) - 1.0)

    def derivative(self, S):
        return (-self.entry_pressure / self.lambda_b *
                S ** (-1.0 / self.lambda_b - 1.0))

    def inverse(self, sigma):
        sigma = np.maximum(np.asarray(sigma, dtype=float), 0.0)
        return (1.0 + sigma / self.entry_pressure) ** (-self.lambda_b)

    def integral(self, S):
        if self.lambda_b <= 1:
            return np.full_like(np.asarray(S, dtype=float), np.inf)
        e = 1.0 - 1.0 / self.lambda_b
        return self.entry_pressure * (S ** e / e - S)

    @property
    def total_integral(self) -> float:
        if self.lambda_b <= 1:
            return float('inf')
        return self.entry_pressure / (self.lambda_b - 1.0)


# ---- relative permeabilities -------------------------------------------------

class QuadraticRelPerm:
    """ :math:`kr_l = S^2`, :math:`kr_g = (1-S)^2` """
    name = 'quadratic'

    def liquid(self, S):
        return S ** 2

    def gas(self, S):
        return (1.0 - S) ** 2


class PowerRelPerm:
    """
    :math:`kr_l = S^{n_l} + f S`, :math:`kr_g = (1-S)^{n_g} + f (1-S)`
    where :math:`f` is ``kr_floor``.
    """
    name = 'power'

    def __init__(self, *, n_l: float, n_g: float,
                 kr_floor: float = 0.0) -> None:
        assert n_l > 0 and n_g > 0 and kr_floor >= 0
        self.n_l = float(n_l)
        self.n_g = float(n_g)
        self.kr_floor = float(kr_floor)

    def liquid(self, S):
        return S ** self.n_l + self.kr_floor * S

    def gas(self, S):
        return (1.0 - S) ** self.n_g + self.kr_floor * (1.0 - S)


# ---- capped monotone curves --------------------------------------------------

class CappedPower:
    """
    Smoothly capped power law on :math:`\\sigma \\ge 0`; C1 at the knee,
    strictly increasing, bounded by ``cap``.
    """
    def __init__(self, *, coef: float, theta: float, cap: float,
                 knee: float = settings.CAP_KNEE) -> None:
        assert coef > 0 and 0 < theta <= 1 and cap > 0 and 0 < knee < 1
        self.coef = float(coef)
        self.theta = float(theta)
        self.cap = float(cap)
        self.v_knee = knee * self.cap
        self.sigma_knee = (self.v_knee / self.coef) ** (1.0 / self.theta)
        self.slope_knee = (self.theta * self.coef *
                           self.sigma_knee ** (self.theta - 1.0))
        self.band = (self.cap - self.v_knee) / self.slope_knee

    def evaluate(self, sigma) -> Tuple[np.ndarray, np.ndarray]:
        """ Value and derivative for ``sigma >= 0`` """
        sigma = np.asarray(sigma, dtype=float)
        low = np.clip(sigma, 1e-12 * self.sigma_knee, self.sigma_knee)
        v_low = self.coef * low ** self.theta
        d_low = self.theta * self.coef * low ** (self.theta - 1.0)
        v_low = np.where(sigma <= 0, 0.0, v_low)

        z = np.clip((sigma - self.sigma_knee) / self.band, 0.0, _EXP_CLIP)
        decay = np.exp(-z)
        v_high = self.cap - (self.cap - self.v_knee) * decay
        d_high = self.slope_knee * decay

        above = sigma > self.sigma_knee
        return np.where(above, v_high, v_low), np.where(above, d_high, d_low)

    def inverse(self, value):
        """ Inverse on ``[0, cap)`` """
        value = np.asarray(value, dtype=float)
        low = (np.clip(value, 0.0, self.v_knee) / self.coef) ** (1 / self.theta)
        gap = np.maximum(self.cap - value, 1e-300)
        high = (self.sigma_knee -
                self.band * np.log(gap / (self.cap - self.v_knee)))
        return np.where(value > self.v_knee, high, low)

    @property
    def saturation_pressure(self) -> float:
        """ Argument beyond which the curve equals the cap to ~1e-9 """
        return self.sigma_knee + 20 * self.band


class HenrySolubility:
    """
    Henry's law :math:`\\hat u(p) = C_h p` with a smooth cap at ``u_max``
    and the extension
    :math:`\\hat u(p) = -u_{min}(1 - e^{C_h p / u_{min}})` for :math:`p < 0`.
    """
    name = 'henry_capped'

    def __init__(self, *, c_h: float, u_max: float, u_min: float) -> None:
        assert c_h > 0 and u_max > 0 and u_min > 0
        self.c_h = float(c_h)
        self.u_max = float(u_max)
        self.u_min = float(u_min)
        self._capped = CappedPower(coef=c_h, theta=1.0, cap=u_max)

    @property
    def max_derivative(self) -> float:
        return self.c_h

    @property
    def pressure_scale(self) -> float:
        return self._capped.saturation_pressure

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        v_pos, d_pos = self._capped.evaluate(np.maximum(p, 0.0))
        arg = np.clip(self.c_h * np.minimum(p, 0.0) / self.u_min,
                      -_EXP_CLIP, 0.0)
        ex = np.exp(arg)
        v_neg = -self.u_min * (1.0 - ex)
        d_neg = self.c_h * ex
        neg = p < 0
        return np.where(neg, v_neg, v_pos), np.where(neg, d_neg, d_pos)

    def __call__(self, p):
        return self.evaluate(p)[0]

    def inverse(self, u):
        """ Gas pseudo-pressure for a concentration in (-u_min, u_max) """
        u = np.asarray(u, dtype=float)
        if np.any(u <= -self.u_min) or np.any(u >= self.u_max):
            raise DomainError("concentration outside (-u_min, u_max)")
        pos = self._capped.inverse(np.maximum(u, 0.0))
        neg = self.u_min / self.c_h * np.log1p(np.minimum(u, 0.0) / self.u_min)
        return np.where(u < 0, neg, pos)


class _GasDensity:
    name = ''
    integrable = False
    _capped = None  # type: CappedPower

    @property
    def rho_max(self) -> float:
        return self._capped.cap

    @property
    def pressure_scale(self) -> float:
        return self._capped.saturation_pressure

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        v, d = self._capped.evaluate(np.maximum(p, 0.0))
        neg = p <= 0
        return np.where(neg, 0.0, v), np.where(neg, 0.0, d)

    def __call__(self, p):
        return self.evaluate(p)[0]

    def inverse_scale(self, value: float) -> float:
        """ Pressure at which the density reaches ``value`` (below the knee) """
        return float(self._capped.inverse(min(value, self._capped.v_knee)))


class LinearCappedDensity(_GasDensity):
    """ Ideal gas :math:`\\hat\\rho_g(p) = C_v p`, capped at ``rho_max`` """
    name = 'linear_capped'

    def __init__(self, *, c_v: float, rho_max: float) -> None:
        self.c_v = float(c_v)
        self._capped = CappedPower(coef=c_v, theta=1.0, cap=rho_max)

    @property
    def max_derivative(self) -> float:
        return self.c_v


class PowerCappedDensity(_GasDensity):
    """
    :math:`\\hat\\rho_g(p) = C_v p^\\theta` with :math:`\\theta < 1`, capped
    at ``rho_max``; :math:`1/\\hat\\rho_g` is integrable at 0.
    """
    name = 'power_capped'
    integrable = True

    def __init__(self, *, c_v: float, theta: float, rho_max: float) -> None:
        assert 0 < theta < 1
        self.c_v = float(c_v)
        self.theta = float(theta)
        self._capped = CappedPower(coef=c_v, theta=theta, cap=rho_max)

    @property
    def max_derivative(self) -> float:
        return float('inf')


# ---- parameter sets ----------------------------------------------------------

class RockFluidParams:
    """
    Rock and fluid data. Fields are nodal arrays; ``permeability`` is
    either a scalar per node (isotropic) or a ``(n_nodes, dim, dim)``
    symmetric tensor.
    """
    def __init__(self, *, porosity, permeability, diffusion,
                 mu_l: float, mu_g: float, rho_l_std: float,
                 gravity) -> None:
        self.porosity = np.atleast_1d(np.asarray(porosity, dtype=float))
        self.permeability = np.asarray(permeability, dtype=float)
        if self.permeability.ndim == 0:
            self.permeability = self.permeability[None]
        self.diffusion = np.atleast_1d(np.asarray(diffusion, dtype=float))
        self.mu_l = float(mu_l)
        self.mu_g = float(mu_g)
        self.rho_l_std = float(rho_l_std)
        self.gravity = np.atleast_1d(np.asarray(gravity, dtype=float))
        problems = self.check()
        if problems:
            raise DomainError("; ".join(problems))

    def permeability_eigenvalues(self) -> np.ndarray:
        if self.permeability.ndim == 1:
            return self.permeability[:, None]
        return np.linalg.eigvalsh(self.permeability)

    @property
    def k_min(self) -> float:
        return float(self.permeability_eigenvalues().min())

    @property
    def k_max(self) -> float:
        return float(self.permeability_eigenvalues().max())

    @property
    def max_phi_d(self) -> float:
        return float(np.max(self.porosity * self.diffusion))

    def check(self) -> List[str]:
        """ H1 / H2 problems, as messages """
        problems = []
        if not (np.all(self.porosity > 0) and np.all(self.porosity <= 1)):
            problems.append("H1: porosity must lie in (0, 1]")
        if not np.all(self.diffusion > 0):
            problems.append("H1: diffusion must be positive")
        if self.permeability.ndim == 3:
            asym = np.abs(self.permeability -
                          self.permeability.transpose(0, 2, 1)).max()
            if asym > 1e-12 * np.abs(self.permeability).max():
                problems.append("H2: permeability must be symmetric")
        if not np.all(self.permeability_eigenvalues() > 0):
            problems.append("H2: permeability must be positive definite")
        if self.mu_l <= 0 or self.mu_g <= 0:
            problems.append("viscosities must be positive")
        if self.rho_l_std <= 0:
            problems.append("rho_l_std must be positive")
        return problems


class ConstitutiveSet:
    """
    The curve families of a run together with the structural constants
    :math:`a_l, kr_m, M_0, M_g` and the gas density slope bound
    :math:`\\rho_g^{max}`. Constants that are not given are computed
    from the curves on a dense saturation grid.
    """
    def __init__(self, *, capillary, relperm, solubility: HenrySolubility,
                 density: _GasDensity, a_l: Optional[float] = None,
                 kr_m: Optional[float] = None, m_0: Optional[float] = None,
                 m_g: Optional[float] = None,
                 rho_g_max: Optional[float] = None,
                 s_min: float = settings.S_MIN) -> None:
        self.capillary = capillary
        self.relperm = relperm
        self.solubility = solubility
        self.density = density
        self.s_min = float(s_min)

        S = np.linspace(0.0, 1.0, 10001)[1:]
        self.a_l = (float(np.min(relperm.liquid(S) / S ** 2))
                    if a_l is None else float(a_l))
        S0 = np.linspace(0.0, 1.0, 10001)
        self.kr_m = (float(np.min(relperm.liquid(S0) + relperm.gas(S0)))
                     if kr_m is None else float(kr_m))
        self.m_0 = (float(np.min(np.abs(capillary.derivative(S))))
                    if m_0 is None else float(m_0))
        self.m_g = solubility.max_derivative if m_g is None else float(m_g)
        self.rho_g_max = (density.max_derivative if rho_g_max is None
                          else float(rho_g_max))

    @property
    def m_pc(self) -> float:
        """ :math:`M_{p_c} = \\int_0^1 p_c` """
        return self.capillary.total_integral

    def saturation(self, sigma) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Saturation :math:`p_c^{-1}(\\sigma)` with the one-phase extension,
        its derivative in :math:`\\sigma` and a mask of clamped entries.
        """
        sigma = np.asarray(sigma, dtype=float)
        S = self.capillary.inverse(np.maximum(sigma, 0.0))
        clamped = S < self.s_min
        S = np.where(sigma <= 0, 1.0, np.clip(S, self.s_min, 1.0))
        two_phase = (sigma > 0) & ~clamped
        dS = np.where(two_phase,
                      1.0 / self.capillary.derivative(np.where(two_phase, S, 1.0)),
                      0.0)
        return S, dS, clamped

    def mobilities(self, S, mu_l: float, mu_g: float,
                   eps: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """ :math:`(\\lambda_l + \\varepsilon, \\lambda_g)` """
        return (self.relperm.liquid(S) / mu_l + eps,
                self.relperm.gas(S) / mu_g)

    def alpha(self, S, mu_l: float, mu_g: float) -> np.ndarray:
        """ :math:`\\alpha(S) = -\\gamma(S) p_c'(S)` """
        lam_l, lam_g = self.mobilities(S, mu_l, mu_g)
        gamma = np.sqrt(lam_l * lam_g / (lam_l + lam_g))
        return -gamma * self.capillary.derivative(S)

    def describe(self) -> Dict[str, float]:
        return {'a_l': self.a_l, 'kr_m': self.kr_m, 'M_0': self.m_0,
                'M_g': self.m_g, 'M_pc': self.m_pc,
                'rho_g_max': self.rho_g_max}


class SecondaryState:
    """ Secondary variables at the nodes of a mesh """
    def __init__(self, *, S, u, rho_g, rho_l, p=None, beta_S=None,
                 clamp_events: int = 0) -> None:
        self.S = S
        self.u = u
        self.rho_g = rho_g
        self.rho_l = rho_l
        self.p = p
        self.beta_S = beta_S
        self.clamp_events = clamp_events


# ---- operations --------------------------------------------------------------

def eval_capillary(curves: ConstitutiveSet, S) -> Tuple[np.ndarray, np.ndarray]:
    """ :math:`(p_c(S), p_c'(S))` for :math:`S \\in (0, 1]` """
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0) or np.any(S > 1):
        raise DomainError("capillary pressure is defined for S in (0, 1]; "
                          "use inv_capillary for the extension")
    return curves.capillary.value(S), curves.capillary.derivative(S)


def inv_capillary(curves: ConstitutiveSet, sigma) -> Tuple[np.ndarray, int]:
    """ Saturation for a pressure difference, and the number of clamps """
    S, _, clamped = curves.saturation(sigma)
    n_clamped = int(np.count_nonzero(clamped))
    if n_clamped:
        logger.warning("{} saturation values clamped to S_min={:g}".format(
            n_clamped, curves.s_min))
    return S, n_clamped


def rel_perm(curves: ConstitutiveSet, S) -> Tuple[np.ndarray, np.ndarray]:
    S = np.asarray(S, dtype=float)
    if np.any(S < 0) or np.any(S > 1):
        raise DomainError("relative permeabilities are defined for S in [0, 1]")
    return curves.relperm.liquid(S), curves.relperm.gas(S)


def henry_u(curves: ConstitutiveSet, p_g) -> Tuple[np.ndarray, np.ndarray]:
    return curves.solubility.evaluate(p_g)


def gas_density(curves: ConstitutiveSet, p_g) -> Tuple[np.ndarray, np.ndarray]:
    return curves.density.evaluate(p_g)


def pseudo_pressure(curves: ConstitutiveSet, u) -> np.ndarray:
    """ Inverse Henry relation: the gas pseudo-pressure of a concentration """
    return curves.solubility.inverse(u)


def secondary(curves: ConstitutiveSet, params: RockFluidParams,
              p_l: np.ndarray, p_g: np.ndarray, tables=None) -> SecondaryState:
    """
    Secondary variables of a nodal state. Global pressure and
    :math:`\\beta(S)` are filled in when global pressure ``tables`` are given.
    """
    assert p_l.shape == p_g.shape
    S, clamps = inv_capillary(curves, p_g - p_l)
    u = curves.solubility(p_g)
    rho_g = curves.density(p_g)
    state = SecondaryState(S=S, u=u, rho_g=rho_g, rho_l=params.rho_l_std + u,
                           clamp_events=clamps)
    if tables is not None:
        state.p = tables.global_pressure(p_l, S)
        state.beta_S = tables.beta(S)
    return state


class SolubilityReport(NamedTuple):
    c_D: float
    required_bound: float
    one_over_Mg: float
    passed: bool
    density_branch: float
    viscosity_branch: float
    z: float


def min_kr_g_plus_s(curves: ConstitutiveSet, resolution: int = 10001) -> float:
    S = np.linspace(0.0, 1.0, resolution)
    return float(np.min(curves.relperm.gas(S) + S))


def low_solubility_check(params: RockFluidParams, curves: ConstitutiveSet,
                         z_override: Optional[float] = None
                         ) -> SolubilityReport:
    """
    Check that dissolution is weak enough for the energy estimate:

    .. math::

        \\frac{\\Phi D}{\\rho_l^{std} k_m / \\mu_l}
        \\max\\left(\\frac{\\rho_M}{\\rho_l^{std} a_l z},
                   \\frac{\\sqrt{\\mu_g / \\mu_l}}{\\sqrt{a_l z}}\\right)
        < \\frac{1}{M_g}

    with worst-case :math:`\\Phi D` and :math:`k_m` over the domain.
    """
    z = min_kr_g_plus_s(curves) if z_override is None else float(z_override)
    if z <= 0:
        raise DomainError("z = min(kr_g(S) + S) must be positive, got %r" % z)
    if curves.a_l <= 0:
        raise DomainError("a_l must be positive, got %r" % curves.a_l)
    phi_d = params.max_phi_d
    k_m = params.k_min
    rho_std = params.rho_l_std
    lead = phi_d / (rho_std * k_m / params.mu_l)
    density_branch = curves.density.rho_max / (rho_std * curves.a_l * z)
    viscosity_branch = (np.sqrt(params.mu_g / params.mu_l) /
                        np.sqrt(curves.a_l * z))
    required = lead * max(density_branch, viscosity_branch)
    c_D = phi_d ** 2 * params.mu_l / (rho_std ** 2 * k_m * curves.a_l)
    one_over_mg = 1.0 / curves.m_g
    return SolubilityReport(
        c_D=float(c_D), required_bound=float(required),
        one_over_Mg=float(one_over_mg), passed=bool(required < one_over_mg),
        density_branch=float(lead * density_branch),
        viscosity_branch=float(lead * viscosity_branch), z=z)


# ---- assumption validator ----------------------------------------------------

class Violation(NamedTuple):
    assumption_id: str
    description: str
    measured_value: float
    bound: float


def _viscosities(params: Optional[RockFluidParams]) -> Tuple[float, float]:
    if params is None:
        return 1.0, 1.0
    return params.mu_l, params.mu_g


def _phat(curves: ConstitutiveSet, S: float, mu_l: float, mu_g: float) -> float:
    """ :math:`\\hat P(S) = \\int_S^1 (\\lambda_l/\\lambda) p_c'` by quad """
    def integrand(s):
        lam_l, lam_g = curves.mobilities(s, mu_l, mu_g)
        return lam_l / (lam_l + lam_g) * curves.capillary.derivative(s)
    value, _ = integrate.quad(integrand, S, 1.0, limit=200)
    return value


def validate_assumptions(curves: ConstitutiveSet, grid_resolution: int = 10000,
                         params: Optional[RockFluidParams] = None
                         ) -> List[Violation]:
    """
    Numerically check the structural assumptions on a dense grid.
    Returns an empty list when everything holds.
    """
    if grid_resolution < 100:
        raise ValueError("grid_resolution must be at least 100")
    out = []  # type: List[Violation]

    def flag(aid, description, measured, bound):
        out.append(Violation(aid, description, float(measured), float(bound)))

    S = np.linspace(0.0, 1.0, grid_resolution + 1)
    Sp = S[1:]
    pc = curves.capillary

    # H1, H2
    if params is not None:
        for problem in params.check():
            flag(problem.split(':')[0], problem, np.nan, np.nan)

    # H3
    kr_l, kr_g = curves.relperm.liquid(S), curves.relperm.gas(S)
    if abs(kr_l[0]) > 0 or abs(kr_g[-1]) > 0:
        flag('H3', 'kr_l(0) = 0 and kr_g(1) = 0', max(kr_l[0], kr_g[-1]), 0)
    if np.min(np.diff(kr_l)) < -1e-14:
        flag('H3', 'kr_l nondecreasing', np.min(np.diff(kr_l)), 0)
    if np.max(np.diff(kr_g)) > 1e-14:
        flag('H3', 'kr_g nonincreasing', np.max(np.diff(kr_g)), 0)
    total = kr_l + kr_g
    if curves.kr_m <= 0 or np.min(total) < curves.kr_m * (1 - 1e-12):
        flag('H3', 'kr_l + kr_g >= kr_m > 0', np.min(total), curves.kr_m)
    gap = np.min(kr_l - curves.a_l * S ** 2)
    if curves.a_l <= 0 or gap < -1e-12:
        flag('H3', 'a_l S^2 <= kr_l(S) with a_l > 0', gap, 0)

    # H4
    if abs(pc.value(1.0)) > 0:
        flag('H4', 'p_c(1) = 0', pc.value(1.0), 0)
    dpc = pc.derivative(Sp)
    if np.max(dpc) > -curves.m_0 * (1 - 1e-9) or curves.m_0 <= 0:
        flag('H4', "p_c' <= -M_0 < 0", np.min(np.abs(dpc)), curves.m_0)
    m_pc = pc.total_integral
    if np.isfinite(m_pc):
        value, err = integrate.quad(pc.value, 0.0, 1.0, limit=200)
        if not np.isfinite(value) or abs(value - m_pc) > 1e-6 * abs(m_pc):
            flag('H4', 'integral of p_c converges to M_pc', value, m_pc)
    else:
        flag('H4', 'integral of p_c is finite', m_pc, np.inf)

    # H5
    sol = curves.solubility
    p = np.linspace(-5 * sol.u_min / sol.c_h, sol.pressure_scale,
                    grid_resolution + 1)
    u, du = sol.evaluate(p)
    if abs(sol(0.0)) > 0:
        flag('H5', 'u(0) = 0', sol(0.0), 0)
    if np.min(du) <= 0 or np.min(np.diff(u)) <= 0:
        flag('H5', 'u strictly increasing', np.min(du), 0)
    if np.max(du) > curves.m_g * (1 + 1e-12):
        flag('H5', "u' <= M_g", np.max(du), curves.m_g)
    if np.max(u) > sol.u_max or np.min(u) < -sol.u_min:
        flag('H5', '-u_min <= u <= u_max', np.max(np.abs(u)),
             max(sol.u_max, sol.u_min))
    if params is not None:
        limit = params.rho_l_std * (1 - 1 / np.sqrt(2))
        if sol.u_min > limit:
            flag('H5', 'u_min <= rho_l_std (1 - 1/sqrt(2))', sol.u_min, limit)

    # H6
    dens = curves.density
    pd = np.linspace(-dens.pressure_scale, dens.pressure_scale,
                     grid_resolution + 1)
    rho = dens(pd)
    if np.any(rho[pd <= 0] != 0):
        flag('H6', 'rho_g(p) = 0 for p <= 0', np.max(rho[pd <= 0]), 0)
    if np.min(np.diff(rho[pd >= 0])) <= 0:
        flag('H6', 'rho_g strictly increasing on [0, inf)',
             np.min(np.diff(rho[pd >= 0])), 0)
    if np.max(rho) > dens.rho_max:
        flag('H6', 'rho_g <= rho_M', np.max(rho), dens.rho_max)
    slope = np.max(np.abs(dens.evaluate(pd)[1]))
    if not np.isfinite(curves.rho_g_max) or \
            slope > curves.rho_g_max * (1 + 1e-12):
        flag('H6', "|rho_g'| <= rho_g^max", slope, curves.rho_g_max)

    # H8: alpha vanishes at both ends, positive inside
    mu_l, mu_g = _viscosities(params)
    alpha_inside = curves.alpha(Sp[:-1], mu_l, mu_g)
    alpha_scale = np.max(alpha_inside)
    if np.min(alpha_inside) <= 0:
        flag('H8', 'alpha > 0 on (0, 1)', np.min(alpha_inside), 0)
    ends = curves.alpha(np.array([2.0 ** -40, 1 - 2.0 ** -40]), mu_l, mu_g)
    if not np.all(np.isfinite(ends)) or np.max(ends) > 1e-3 * alpha_scale:
        flag('H8', 'alpha(0) = alpha(1) = 0', np.max(ends), 1e-3 * alpha_scale)

    # H9: (1 - S) P_hat(S) bounded near S = 0
    near, far = 2.0 ** -40, 2.0 ** -20
    g_near = (1 - near) * abs(_phat(curves, near, mu_l, mu_g))
    g_far = (1 - far) * abs(_phat(curves, far, mu_l, mu_g))
    if not np.isfinite(g_near) or g_near > 10 * max(g_far, 1e-300):
        flag('H9', '(1 - S) P_hat(S) bounded', g_near, 10 * g_far)

    for v in out:
        logger.info("assumption violated: {}".format(v))
    return out


def _holder_fit(x: np.ndarray, y: np.ndarray) -> float:
    """ Least-squares slope of log(modulus of continuity) vs log(step) """
    deltas, moduli = [], []
    n = len(x)
    step = 1
    while step < n // 4:
        inc = np.max(np.abs(y[step:] - y[:-step]))
        if inc > 0:
            deltas.append(np.max(x[step:] - x[:-step]))
            moduli.append(inc)
        step *= 2
    if len(deltas) < 2:
        return float('nan')
    reg = LinearRegression()
    reg.fit(np.log(deltas)[:, None], np.log(moduli))
    return float(reg.coef_[0])


def holder_fits(curves: ConstitutiveSet,
                params: Optional[RockFluidParams] = None,
                resolution: int = 4096) -> Dict[str, float]:
    """
    Fitted Hölder exponents of :math:`\\beta^{-1}` and of
    :math:`(1-S)\\hat P(S)`; informational only.
    """
    mu_l, mu_g = _viscosities(params)
    S = np.concatenate([[0.0], np.geomspace(1e-12, 1.0, resolution)])
    alpha = np.nan_to_num(curves.alpha(np.maximum(S, 1e-300), mu_l, mu_g))
    alpha[0] = alpha[1]
    beta = integrate.cumulative_trapezoid(alpha, S, initial=0.0)
    b = np.linspace(0.0, beta[-1], resolution)
    beta_inv = np.interp(b, beta, S)

    lam_l, lam_g = curves.mobilities(S[1:], mu_l, mu_g)
    integrand = lam_l / (lam_l + lam_g) * curves.capillary.derivative(S[1:])
    tail = integrate.cumulative_trapezoid(integrand[::-1], S[1:][::-1],
                                          initial=0.0)[::-1]
    g = (1 - S[1:]) * tail
    S_uniform = np.linspace(0.0, 1.0, resolution)
    g_uniform = np.interp(S_uniform, S[1:], g)
    fits = {
        'beta_inverse': _holder_fit(b, beta_inv),
        'one_minus_S_phat': _holder_fit(S_uniform, g_uniform),
    }
    logger.info("Hölder fits: {}".format(fits))
    return fits
