# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest  # type: ignore

from persistflow.constitutive import (
    BrooksCoreyCapillary, ConstitutiveSet, DomainError, HenrySolubility,
    LinearCappedDensity, PowerCappedDensity, PowerRelPerm, QuadraticRelPerm,
    RockFluidParams, eval_capillary, holder_fits, inv_capillary,
    low_solubility_check, pseudo_pressure, rel_perm, secondary,
    validate_assumptions,
)
from tests.utils import desk_curves, desk_params, scenario


def test_linear_saturation(curves):
    S, dS, clamped = curves.saturation(np.array([-1.0, 0.0, 0.5]))
    assert S.tolist() == [1.0, 1.0, 0.5]
    assert dS.tolist() == [0.0, 0.0, -1.0]
    assert not clamped.any()


def test_saturation_clamp():
    curves = ConstitutiveSet(
        capillary=BrooksCoreyCapillary(entry_pressure=1.0, lambda_b=2.0),
        relperm=QuadraticRelPerm(),
        solubility=HenrySolubility(c_h=0.2, u_max=5.0, u_min=0.5),
        density=LinearCappedDensity(c_v=1.0, rho_max=50.0), s_min=1e-3)
    S, clamps = inv_capillary(curves, np.array([0.5, 1e6]))
    assert clamps == 1
    assert S[1] == 1e-3
    assert curves.capillary.value(S[0]) == pytest.approx(0.5)


def test_brooks_corey():
    pc = BrooksCoreyCapillary(entry_pressure=2.0, lambda_b=2.0)
    S = np.array([0.1, 0.5, 1.0])
    assert pc.inverse(pc.value(S)) == pytest.approx(S)
    assert pc.value(1.0) == 0.0
    assert pc.total_integral == pytest.approx(2.0)
    assert pc.integral(1.0) == pytest.approx(pc.total_integral)


def test_eval_capillary_domain(curves):
    value, slope = eval_capillary(curves, np.array([0.5, 1.0]))
    assert value.tolist() == [0.5, 0.0]
    assert slope.tolist() == [-1.0, -1.0]
    with pytest.raises(DomainError):
        eval_capillary(curves, np.array([0.0]))
    with pytest.raises(DomainError):
        rel_perm(curves, np.array([1.5]))


def test_relperm_families():
    kr = PowerRelPerm(n_l=3.0, n_g=2.0, kr_floor=0.1)
    assert kr.liquid(0.0) == 0.0
    assert kr.gas(1.0) == 0.0
    assert kr.liquid(1.0) == pytest.approx(1.1)
    q = QuadraticRelPerm()
    assert q.liquid(0.5) + q.gas(0.5) == 0.5


def test_henry_solubility(curves):
    sol = curves.solubility
    assert sol(0.0) == 0.0
    u, du = sol.evaluate(np.array([1.0, -1.0]))
    assert u[0] == pytest.approx(0.2)
    assert du[0] == pytest.approx(0.2)
    assert -0.5 < u[1] < 0
    assert du[1] < 0.2
    assert sol(1e9) <= 5.0
    p = np.array([-3.0, 0.0, 2.0, 20.0])
    assert pseudo_pressure(curves, sol(p)) == pytest.approx(p, abs=1e-9)
    with pytest.raises(DomainError):
        sol.inverse(np.array([5.0]))
    with pytest.raises(DomainError):
        sol.inverse(np.array([-0.5]))


def test_gas_density(curves):
    rho = curves.density(np.array([-1.0, 0.0, 2.0, 1e6]))
    assert rho[:2].tolist() == [0.0, 0.0]
    assert rho[2] == pytest.approx(2.0)
    assert rho[3] <= 50.0
    power = PowerCappedDensity(c_v=1.0, theta=0.5, rho_max=50.0)
    assert power(4.0) == pytest.approx(2.0)
    assert power.integrable and not curves.density.integrable


def test_structural_constants(curves):
    assert curves.a_l == pytest.approx(1.0)
    assert curves.kr_m == pytest.approx(0.5)
    assert curves.m_0 == pytest.approx(1.0)
    assert curves.m_g == pytest.approx(0.2)
    assert curves.m_pc == pytest.approx(0.5)
    lam_l, lam_g = curves.mobilities(np.array([0.5]), 1.0, 0.1, eps=1e-3)
    assert lam_l[0] == pytest.approx(0.25 + 1e-3)
    assert lam_g[0] == pytest.approx(2.5)


def test_secondary(curves):
    p_l = np.array([0.0, 0.0, 1.0])
    p_g = np.array([0.0, 0.5, 0.5])
    sec = secondary(curves, desk_params(), p_l, p_g)
    assert sec.S.tolist() == [1.0, 0.5, 1.0]
    assert sec.u == pytest.approx([0.0, 0.1, 0.1])
    assert sec.rho_g == pytest.approx([0.0, 0.5, 0.5])
    assert sec.rho_l == pytest.approx(10.0 + sec.u)
    assert sec.p is None


def test_rock_fluid_params_checks():
    with pytest.raises(DomainError) as e:
        RockFluidParams(porosity=[0.0], permeability=[1.0], diffusion=[1.0],
                        mu_l=1.0, mu_g=0.1, rho_l_std=10.0, gravity=[0.0])
    assert 'H1' in str(e.value)
    tensor = np.array([[[1.0, 0.0], [0.0, -1.0]]])
    with pytest.raises(DomainError) as e:
        RockFluidParams(porosity=[0.5], permeability=tensor, diffusion=[1.0],
                        mu_l=1.0, mu_g=0.1, rho_l_std=10.0, gravity=[0.0, 0.0])
    assert 'H2' in str(e.value)
    params = desk_params(3)
    assert params.k_min == 1.0
    assert params.max_phi_d == 1.0


def test_low_solubility_reference_values():
    config = scenario('paper_remark')
    report = low_solubility_check(config.params, config.curves, config.z)
    assert report.required_bound == pytest.approx(3e4, rel=1e-9)
    assert report.one_over_Mg == pytest.approx(1 / 1.53e-8, rel=1e-12)
    assert report.one_over_Mg == pytest.approx(6.5e7, rel=0.01)
    assert report.passed
    assert report.z == 0.1


def test_low_solubility_desk_scenario(curves):
    report = low_solubility_check(desk_params(), curves)
    assert report.z == pytest.approx(0.75, rel=1e-6)
    assert report.required_bound == pytest.approx(0.1 * 50 / 7.5, rel=1e-5)
    assert report.passed
    with pytest.raises(DomainError):
        low_solubility_check(desk_params(), curves, z_override=0.0)


def test_validate_assumptions(curves):
    assert validate_assumptions(curves, params=desk_params()) == []


def test_validate_flags_large_u_min(curves):
    violations = validate_assumptions(curves, params=desk_params(rho_l_std=1.0))
    assert [v.assumption_id for v in violations] == ['H5']
    with pytest.raises(ValueError):
        validate_assumptions(curves, grid_resolution=10)


def test_validate_flags_brooks_corey_with_quadratic_relperm(curves):
    bc = ConstitutiveSet(
        capillary=BrooksCoreyCapillary(entry_pressure=1.0, lambda_b=2.0),
        relperm=QuadraticRelPerm(), solubility=curves.solubility,
        density=curves.density)
    ids = [v.assumption_id for v in validate_assumptions(bc, params=desk_params())]
    assert 'H8' in ids
    assert 'H4' not in ids


def test_validate_flags_capillary_slope_bound(curves):
    strict = desk_curves(m_0=2.0)
    violations = validate_assumptions(strict, params=desk_params())
    assert [v.assumption_id for v in violations] == ['H4']
    assert violations[0].measured_value == pytest.approx(1.0)
    assert violations[0].bound == 2.0


def test_validate_flags_density_slope_bound(curves):
    assert curves.rho_g_max == 1.0
    steep = desk_curves(rho_g_max=0.5)
    violations = validate_assumptions(steep, params=desk_params())
    assert [v.assumption_id for v in violations] == ['H6']
    assert violations[0].measured_value == pytest.approx(1.0)
    assert violations[0].bound == 0.5

    power = ConstitutiveSet(
        capillary=curves.capillary, relperm=curves.relperm,
        solubility=curves.solubility,
        density=PowerCappedDensity(c_v=1.0, theta=0.5, rho_max=50.0))
    violations = validate_assumptions(power, params=desk_params())
    h6 = [v for v in violations if v.assumption_id == 'H6']
    assert len(h6) == 1
    assert h6[0].bound == float('inf')
    assert np.isfinite(h6[0].measured_value)


def test_holder_fits(curves):
    fits = holder_fits(curves, desk_params())
    assert set(fits) == {'beta_inverse', 'one_minus_S_phat'}
    assert all(np.isfinite(v) and v > 0 for v in fits.values())
