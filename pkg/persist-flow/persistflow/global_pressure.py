# -*- coding: utf-8 -*-
"""
Global pressure
===============

Change of variables to the global pressure and the Kirchhoff transform
of the saturation:

.. math::

    p = p_l + \\bar P(S) = p_g + \\hat P(S), \\qquad
    \\bar P(S) = -\\int_S^1 \\frac{\\lambda_g}{\\lambda} p_c'(s)\\,ds, \\qquad
    \\hat P(S) = \\int_S^1 \\frac{\\lambda_l}{\\lambda} p_c'(s)\\,ds

    \\gamma = \\sqrt{\\lambda_l \\lambda_g / \\lambda}, \\qquad
    \\alpha = -\\gamma p_c', \\qquad
    \\beta(S) = \\int_0^S \\alpha(s)\\,ds

At quadrature points the gradients of :math:`p` and :math:`\\beta(S)` are

.. math::

    \\nabla p = \\frac{\\lambda_l \\nabla p_l + \\lambda_g \\nabla p_g}{\\lambda},
    \\qquad \\nabla \\beta(S) = \\gamma (\\nabla p_l - \\nabla p_g)

and satisfy the pointwise identity

.. math::

    \\lambda_l K\\nabla p_l\\cdot\\nabla p_l + \\lambda_g K\\nabla p_g\\cdot\\nabla p_g
    = \\lambda K\\nabla p\\cdot\\nabla p + K\\nabla\\beta\\cdot\\nabla\\beta

All saturation integrals are tabulated once per run (adaptive
Gauss-Legendre per cell, error estimated by halving) and interpolated by
cubic Hermite polynomials with exact slopes, limited to stay monotone.

The energy estimate uses the test functions

.. math::

    M^\\varepsilon(p_g) = \\int_0^{p_g^+} \\frac{d\\sigma}{\\hat\\rho_g(\\sigma)
    + \\varepsilon}, \\qquad
    N^\\varepsilon(p_g) = \\int_0^{p_g^+} \\frac{\\hat u(\\sigma)\\,d\\sigma}
    {\\hat\\rho_g(\\sigma) + \\varepsilon}

and the energy density

.. math::

    E^\\varepsilon = S[\\hat u M^\\varepsilon - N^\\varepsilon]
    + (1 - S)[\\hat\\rho_g^\\varepsilon M^\\varepsilon - p_g]
    - \\int_0^S p_c
"""
import logging
from typing import Callable, NamedTuple, Tuple

import numpy as np  # type: ignore
from scipy import integrate  # type: ignore
from scipy.interpolate import CubicHermiteSpline  # type: ignore

from persistflow import settings
from persistflow.constitutive import ConstitutiveSet, DomainError
from persistflow.utils import log_time


logger = logging.getLogger(__name__)


class TableBuildError(RuntimeError):
    def __init__(self, integral: str, message: str) -> None:
        super().__init__("{}: {}".format(integral, message))
        self.integral = integral


def cell_integrals(f: Callable, edges: np.ndarray, *, tol: float, name: str,
                   n_gauss: int = settings.TABLE_GAUSS_POINTS,
                   max_depth: int = settings.TABLE_MAX_DEPTH) -> np.ndarray:
    """
    Integrals of ``f`` over the cells ``[edges[k], edges[k+1]]``.
    Each cell is integrated by Gauss-Legendre and compared with the sum
    over its two halves; cells failing the relative tolerance are halved
    until they pass. ``f`` must accept 2D arrays.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)

    def gauss(a, b):
        mid, half = (a + b) / 2, (b - a) / 2
        return half * (f(mid[:, None] + half[:, None] * xg) @ wg)

    n_cells = len(edges) - 1
    a, b = edges[:-1].astype(float), edges[1:].astype(float)
    owner = np.arange(n_cells)
    coarse = gauss(a, b)
    if not np.all(np.isfinite(coarse)):
        raise TableBuildError(name, "integrand is not finite")
    scale = np.max(np.abs(coarse / (b - a)))
    result = np.zeros(n_cells)
    for depth in range(max_depth + 1):
        m = (a + b) / 2
        left, right = gauss(a, m), gauss(m, b)
        fine = left + right
        if not np.all(np.isfinite(fine)):
            raise TableBuildError(name, "integrand is not finite")
        err = np.abs(fine - coarse)
        ok = err <= tol * np.maximum(np.abs(fine), 1e-6 * scale * (b - a))
        result += np.bincount(owner[ok], weights=fine[ok], minlength=n_cells)
        if ok.all():
            return result
        bad = ~ok
        if 2 * bad.sum() > 64 * n_cells:
            break
        a, b = np.concatenate([a[bad], m[bad]]), np.concatenate([m[bad], b[bad]])
        owner = np.concatenate([owner[bad], owner[bad]])
        coarse = np.concatenate([left[bad], right[bad]])
    raise TableBuildError(name, "quadrature did not converge to tol={:g} "
                                "({} cells left)".format(tol, len(a)))


class MonotoneTable:
    """
    Cubic Hermite interpolant with the given slopes, limited
    (Fritsch-Carlson) wherever the slopes would break monotonicity.
    Arguments are clipped to the table range.
    """
    def __init__(self, x: np.ndarray, y: np.ndarray, dy: np.ndarray) -> None:
        dy = np.array(dy, dtype=float)
        h = np.diff(x)
        delta = np.diff(y) / h
        for k in range(len(h)):
            if delta[k] == 0:
                dy[k] = dy[k + 1] = 0.0
                continue
            a, b = dy[k] / delta[k], dy[k + 1] / delta[k]
            if a < 0 or b < 0:
                dy[k] = max(a, 0.0) * delta[k]
                dy[k + 1] = max(b, 0.0) * delta[k]
                a, b = max(a, 0.0), max(b, 0.0)
            r = a * a + b * b
            if r > 9:
                t = 3.0 / np.sqrt(r)
                dy[k], dy[k + 1] = t * a * delta[k], t * b * delta[k]
        self.x = x
        self.y = y
        self._spline = CubicHermiteSpline(x, y, dy, extrapolate=False)

    def __call__(self, x, nu: int = 0):
        x = np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])
        return self._spline(x, nu)

    @property
    def bounds(self) -> Tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])


def saturation_grid(resolution: int, s_min: float) -> np.ndarray:
    """ Table grid on [s_min, 1], geometric towards both ends """
    n_end = resolution // 4
    n_mid = resolution - 2 * n_end
    low = np.geomspace(s_min, 1e-2, n_end, endpoint=False)
    mid = np.linspace(1e-2, 1 - 1e-2, n_mid, endpoint=False)
    high = 1 - np.geomspace(1e-2, 1e-9, n_end)
    return np.unique(np.concatenate([low, mid, high, [1.0]]))


class GlobalPressureTables:
    """
    Tabulated :math:`\\bar P`, :math:`\\hat P` and :math:`\\beta` of a
    constitutive set; built by :func:`build_tables`.
    """
    def __init__(self, *, curves: ConstitutiveSet, mu_l: float, mu_g: float,
                 grid: np.ndarray, pbar, phat: MonotoneTable,
                 beta: MonotoneTable, quadrature_tol: float) -> None:
        self.curves = curves
        self.mu_l = mu_l
        self.mu_g = mu_g
        self.grid = grid
        self.pbar_table = pbar
        self.phat_table = phat
        self.beta_table = beta
        self.quadrature_tol = quadrature_tol
        self.s_min = float(grid[0])
        self.beta_min = float(beta.y[0])
        self.beta_max = float(beta.y[-1])

    def pbar(self, S):
        S = np.asarray(S, dtype=float)
        return np.where(S >= 1, 0.0, self.pbar_table(S))

    def phat(self, S):
        S = np.asarray(S, dtype=float)
        return np.where(S >= 1, 0.0, self.phat_table(S))

    def beta(self, S):
        """ :math:`\\beta(S)`, linear below the first table node """
        S = np.asarray(S, dtype=float)
        below = self.beta_min * np.clip(S, 0.0, None) / self.s_min
        return np.where(S < self.s_min, below, self.beta_table(S))

    def alpha(self, S):
        return self.curves.alpha(S, self.mu_l, self.mu_g)

    def beta_inverse(self, b, iterations: int = 200):
        """ Saturation with :math:`\\beta(S) = b`, by bisection on the table """
        b = np.asarray(b, dtype=float)
        if np.any(b < 0) or np.any(b > self.beta_max):
            raise DomainError("beta_inverse is defined on [0, beta(1)]")
        lo = np.zeros_like(b)
        hi = np.ones_like(b)
        for _ in range(iterations):
            mid = (lo + hi) / 2
            below = self.beta(mid) < b
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300)):
                break
        return (lo + hi) / 2

    def global_pressure(self, p_l, S):
        """ :math:`p = p_l + \\bar P(S)`; exactly :math:`p_l` where S = 1 """
        return p_l + self.pbar(S)

    def export(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """ Two-column (S, value) view of a table """
        funcs = {'pbar': self.pbar, 'phat': self.phat, 'beta': self.beta,
                 'alpha': self.alpha,
                 'capillary': self.curves.capillary.value}
        if name not in funcs:
            raise ValueError("Unsupported table: %s. Supported tables: %r" % (
                name, sorted(funcs)))
        return self.grid, funcs[name](self.grid)


@log_time
def build_tables(curves: ConstitutiveSet, mu_l: float, mu_g: float,
                 resolution: int = settings.TABLE_RESOLUTION,
                 tol: float = settings.TABLE_TOL) -> GlobalPressureTables:
    if resolution < 256:
        raise ValueError("table resolution must be at least 256")
    grid = saturation_grid(resolution, curves.s_min)
    dpc = curves.capillary.derivative

    def fractions(S):
        lam_l, lam_g = curves.mobilities(S, mu_l, mu_g)
        return lam_l / (lam_l + lam_g), lam_g / (lam_l + lam_g)

    def pbar_integrand(S):
        return fractions(S)[1] * dpc(S)

    def phat_integrand(S):
        return fractions(S)[0] * dpc(S)

    def alpha(S):
        return curves.alpha(S, mu_l, mu_g)

    def tail(cells):
        return np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])

    pbar = -tail(cell_integrals(pbar_integrand, grid, tol=tol, name='P_bar'))
    phat = tail(cell_integrals(phat_integrand, grid, tol=tol, name='P_hat'))
    beta0 = cell_integrals(alpha, np.array([0.0, grid[0]]), tol=tol,
                           name='beta')[0]
    beta = beta0 + np.concatenate(
        [[0.0], np.cumsum(cell_integrals(alpha, grid, tol=tol, name='beta'))])

    tables = GlobalPressureTables(
        curves=curves, mu_l=mu_l, mu_g=mu_g, grid=grid,
        pbar=_decreasing_table(grid, pbar, pbar_integrand(grid)),
        phat=MonotoneTable(grid, phat, -phat_integrand(grid)),
        beta=MonotoneTable(grid, beta, alpha(grid)),
        quadrature_tol=tol,
    )
    logger.info("global pressure tables: {} nodes, P_bar(S_min)={:.4g}, "
                "P_hat(S_min)={:.4g}, beta(1)={:.4g}".format(
                    len(grid), pbar[0], phat[0], beta[-1]))
    return tables


def _decreasing_table(x, y, dy) -> "_Negated":
    return _Negated(MonotoneTable(x, -y, -dy))


class _Negated:
    """ A decreasing table stored as the increasing table of ``-y`` """
    def __init__(self, table: MonotoneTable) -> None:
        self.table = table
        self.x = table.x
        self.y = -table.y

    def __call__(self, x, nu: int = 0):
        return -self.table(x, nu)


# ---- bounds on the global pressure -------------------------------------------

def gp_bounds_constants(tables: GlobalPressureTables) -> Tuple[float, float, float]:
    """
    Constants of the bounds

    .. math::

        p_g^+ \\le |p| + C_1, \\qquad |S p_l| \\le |p| + C_2, \\qquad
        |(1 - S) p_g| \\le |p| + C_3

    i.e. :math:`C_1 = \\max|\\hat P|`, :math:`C_2 = \\max S \\bar P`,
    :math:`C_3 = \\max (1 - S)|\\hat P|`, evaluated on table nodes and
    midpoints.
    """
    S = np.concatenate([tables.grid, (tables.grid[1:] + tables.grid[:-1]) / 2])
    pbar, phat = tables.pbar(S), tables.phat(S)
    return (float(np.max(np.abs(phat))), float(np.max(S * pbar)),
            float(np.max((1 - S) * np.abs(phat))))


class GPBoundsReport(NamedTuple):
    constants: Tuple[float, float, float]
    min_slack: float
    max_slack: float
    violations: int


def gp_bounds_check(tables: GlobalPressureTables, p_l, p_g,
                    rtol: float = 1e-8) -> GPBoundsReport:
    """
    Check the three global pressure bounds at every node of a state.
    A bound is violated when its slack ``|p| + C - lhs`` is below
    ``-rtol * (|p| + C)``.
    """
    p_l = np.asarray(p_l, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    S, _, _ = tables.curves.saturation(p_g - p_l)
    p = np.abs(tables.global_pressure(p_l, S))
    constants = gp_bounds_constants(tables)
    lhs = [np.maximum(p_g, 0.0), np.abs(S * p_l), np.abs((1 - S) * p_g)]
    slacks = np.stack([p + c - v for c, v in zip(constants, lhs)])
    rhs = np.stack([p + c for c in constants])
    violations = int(np.count_nonzero(slacks < -rtol * np.maximum(rhs, 1e-300)))
    if violations:
        logger.warning("{} global pressure bound violations, min slack "
                       "{:.3e}".format(violations, slacks.min()))
    return GPBoundsReport(constants=constants, min_slack=float(slacks.min()),
                          max_slack=float(slacks.max()), violations=violations)


# ---- gradient identity -------------------------------------------------------

def _kdot(K, a, b):
    return np.einsum('...i,...ij,...j->...', a, K, b)


def identity_gradients(curves: ConstitutiveSet, mu_l: float, mu_g: float,
                       S, grad_p_l, grad_p_g) -> Tuple[np.ndarray, np.ndarray]:
    """
    :math:`(\\nabla p, \\nabla\\beta(S))` from the phase pressure
    gradients; ``S`` has shape ``(...)``, gradients ``(..., dim)``.
    """
    lam_l, lam_g = curves.mobilities(S, mu_l, mu_g)
    lam = lam_l + lam_g
    grad_p = (lam_l[..., None] * grad_p_l + lam_g[..., None] * grad_p_g) / lam[..., None]
    gamma = np.sqrt(lam_l * lam_g / lam)
    grad_beta = gamma[..., None] * (grad_p_l - grad_p_g)
    return grad_p, grad_beta


def fundamental_identity_residual(curves: ConstitutiveSet, mu_l: float,
                                  mu_g: float, S, grad_p_l, grad_p_g, K,
                                  weights=None) -> float:
    """
    Largest relative residual over elements of

    .. math::

        \\lambda_l K\\nabla p_l\\cdot\\nabla p_l
        + \\lambda_g K\\nabla p_g\\cdot\\nabla p_g
        - \\lambda K\\nabla p\\cdot\\nabla p - K\\nabla\\beta\\cdot\\nabla\\beta

    ``S`` and ``weights`` have shape ``(n_el, n_q)``, gradients
    ``(n_el, n_q, dim)`` and ``K`` ``(n_el, n_q, dim, dim)``.
    """
    S = np.asarray(S, dtype=float)
    if weights is None:
        weights = np.ones_like(S)
    lam_l, lam_g = curves.mobilities(S, mu_l, mu_g)
    grad_p, grad_beta = identity_gradients(curves, mu_l, mu_g, S,
                                           grad_p_l, grad_p_g)
    lhs = lam_l * _kdot(K, grad_p_l, grad_p_l) + lam_g * _kdot(K, grad_p_g, grad_p_g)
    rhs = (lam_l + lam_g) * _kdot(K, grad_p, grad_p) + _kdot(K, grad_beta, grad_beta)
    num = np.abs(np.sum(weights * (lhs - rhs), axis=-1))
    den = np.sum(weights * (np.abs(lhs) + np.abs(rhs)), axis=-1)
    rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(rel.max()) if rel.size else 0.0


# ---- energy test functions ---------------------------------------------------

class EnergyTables:
    """
    Tables of :math:`M^\\varepsilon` and :math:`N^\\varepsilon` on
    :math:`[0, p_{max}]`; both vanish for :math:`p_g \\le 0` and are
    continued linearly beyond :math:`p_{max}`, where the curves are capped.

    ``eps = 0`` gives the unregularized :math:`M, N`; it needs a density
    with :math:`1/\\hat\\rho_g` integrable at 0.
    """
    def __init__(self, curves: ConstitutiveSet, eps: float,
                 resolution: int = settings.TEST_FUNCTION_RESOLUTION,
                 tol: float = settings.TABLE_TOL) -> None:
        density, solubility = curves.density, curves.solubility
        if eps < 0:
            raise ValueError("eps must be nonnegative, got %r" % eps)
        if eps == 0 and not density.integrable:
            raise ValueError("Unsupported density for eps=0: %s. Supported "
                             "densities: %r" % (density.name, ['power_capped']))
        self.curves = curves
        self.eps = float(eps)
        self.p_max = 2 * max(density.pressure_scale, solubility.pressure_scale)
        floor = eps if eps > 0 else eps_diag(curves)
        p_low = 1e-6 * min(density.inverse_scale(floor),
                           solubility.pressure_scale)
        grid = np.concatenate([[0.0], np.geomspace(p_low, self.p_max, resolution)])
        # the density vanishes at 0; its limit from the right is used there
        lowest = 0.0 if eps > 0 else 1e-3 * p_low

        def inv_rho(p):
            return 1.0 / (density(np.maximum(p, lowest)) + eps)

        def u_over_rho(p):
            return solubility(p) / (density(np.maximum(p, lowest)) + eps)

        m = np.concatenate([[0.0], np.cumsum(
            cell_integrals(inv_rho, grid, tol=tol, name='M_eps'))])
        n = np.concatenate([[0.0], np.cumsum(
            cell_integrals(u_over_rho, grid, tol=tol, name='N_eps'))])
        self.grid = grid
        self._m = MonotoneTable(grid, m, inv_rho(grid))
        self._n = MonotoneTable(grid, n, u_over_rho(grid))
        self._m_slope = float(inv_rho(self.p_max))
        self._n_slope = float(u_over_rho(self.p_max))
        logger.debug("test function tables: eps={:g}, p_max={:.4g}, "
                     "M(p_max)={:.4g}".format(eps, self.p_max, m[-1]))

    def _evaluate(self, table: MonotoneTable, slope: float, p):
        p = np.asarray(p, dtype=float)
        inside = table(np.clip(p, 0.0, self.p_max))
        beyond = table.y[-1] + slope * (p - self.p_max)
        return np.where(p <= 0, 0.0, np.where(p > self.p_max, beyond, inside))

    def M(self, p_g):
        return self._evaluate(self._m, self._m_slope, p_g)

    def N(self, p_g):
        return self._evaluate(self._n, self._n_slope, p_g)


def linear_density_M(c_v: float, eps: float, p_g):
    """
    Closed form of :math:`M^\\varepsilon` for :math:`\\hat\\rho_g = C_v p`
    below the cap.

    >>> float(linear_density_M(1.0, 1.0, np.e - 1))
    1.0
    """
    return np.log1p(c_v * np.maximum(p_g, 0.0) / eps) / c_v


def eps_diag(curves: ConstitutiveSet) -> float:
    """ The regularization used for energy diagnostics """
    return settings.EPS_DIAG_RELATIVE * curves.density.rho_max


def energy_functional(curves: ConstitutiveSet, tables: EnergyTables,
                      p_l, p_g) -> np.ndarray:
    """ Nodal energy density :math:`E^\\varepsilon(p_l, p_g)` """
    p_l = np.asarray(p_l, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    S, _, _ = curves.saturation(p_g - p_l)
    u = curves.solubility(p_g)
    rho_eps = curves.density(p_g) + tables.eps
    M, N = tables.M(p_g), tables.N(p_g)
    return (S * (u * M - N) + (1 - S) * (rho_eps * M - p_g) -
            curves.capillary.integral(S))


def energy_upper_constant(curves: ConstitutiveSet, eps: float) -> float:
    """
    Constant :math:`C` with :math:`E^\\varepsilon \\le C(|p_g| + 1)`,
    available when :math:`1/\\hat\\rho_g` is integrable at zero:

    .. math::

        C = (u_{max} + \\rho_M + \\varepsilon)
            \\max\\left(\\int_0^1 \\frac{d\\sigma}{\\hat\\rho_g},
                       \\frac{1}{\\hat\\rho_g(1)}\\right)
    """
    density = curves.density
    if not density.integrable:
        raise ValueError("Unsupported density: %s. Supported densities: %r" % (
            density.name, ['power_capped']))
    integral, _ = integrate.quad(lambda s: 1.0 / density(s), 0.0, 1.0,
                                 limit=200)
    c_g = max(integral, 1.0 / float(density(1.0)))
    return (curves.solubility.u_max + density.rho_max + eps) * c_g
