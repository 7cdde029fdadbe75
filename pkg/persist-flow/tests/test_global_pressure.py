# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest  # type: ignore

from persistflow.constitutive import (
    ConstitutiveSet, DomainError, PowerCappedDensity, eval_capillary,
)
from persistflow.global_pressure import (
    EnergyTables, build_tables, energy_functional, energy_upper_constant,
    fundamental_identity_residual, gp_bounds_check, linear_density_M,
)
from tests.utils import desk_curves


@pytest.fixture(scope='module')
def tables():
    return build_tables(desk_curves(), mu_l=1.0, mu_g=0.1)


def test_pressure_split(tables):
    S = tables.grid[tables.grid > 1e-6]
    pc, _ = eval_capillary(tables.curves, S)
    assert np.abs(tables.pbar(S) - tables.phat(S) - pc).max() <= 1e-8

    rng = np.random.RandomState(0)
    S = rng.uniform(1e-3, 1.0, size=1000)
    pc, _ = eval_capillary(tables.curves, S)
    assert np.abs(tables.pbar(S) - tables.phat(S) - pc).max() <= 1e-7


def test_table_signs(tables):
    S = np.linspace(0.01, 0.99, 99)
    assert np.all(tables.pbar(S) > 0)
    assert np.all(tables.phat(S) < 0)
    assert np.all(np.diff(tables.pbar(S)) < 0)
    assert np.all(np.diff(tables.beta(S)) > 0)
    assert tables.pbar(1.0) == 0.0
    assert tables.phat(1.0) == 0.0
    assert tables.global_pressure(np.array([2.0]), np.array([1.0])).tolist() == [2.0]
    assert tables.beta(0.0) == 0.0


def test_beta_inverse(tables):
    S = np.linspace(0.05, 0.95, 19)
    assert tables.beta_inverse(tables.beta(S)) == pytest.approx(S, abs=1e-9)
    b = np.linspace(0.0, tables.beta_max, 11)
    assert tables.beta(tables.beta_inverse(b)) == pytest.approx(
        b, abs=1e-10 * tables.beta_max)
    with pytest.raises(DomainError):
        tables.beta_inverse(np.array([-1e-3]))
    with pytest.raises(DomainError):
        tables.beta_inverse(np.array([2 * tables.beta_max]))


def test_build_tables_arguments(tables):
    with pytest.raises(ValueError):
        build_tables(desk_curves(), 1.0, 0.1, resolution=100)
    with pytest.raises(ValueError):
        tables.export('lambda')
    S, values = tables.export('capillary')
    assert values == pytest.approx(1.0 - S)


def test_fundamental_identity():
    curves = desk_curves()
    rng = np.random.RandomState(42)
    shape = (100, 3)
    S = rng.uniform(0.0, 1.0, size=shape)
    gpl = rng.normal(size=shape + (2,))
    gpg = rng.normal(size=shape + (2,))
    A = rng.normal(size=(2, 2))
    K = np.broadcast_to(A @ A.T + np.eye(2), shape + (2, 2))
    residual = fundamental_identity_residual(
        curves, 1.0, 0.1, S, gpl, gpg, K, weights=np.ones(shape))
    assert residual <= 1e-10


def test_gp_bounds(tables):
    rng = np.random.RandomState(1)
    p_l = rng.uniform(-3.0, 3.0, size=1000)
    p_g = rng.uniform(-3.0, 3.0, size=1000)
    report = gp_bounds_check(tables, p_l, p_g)
    assert report.violations == 0
    assert report.min_slack > -1e-8
    assert all(c >= 0 for c in report.constants)


def test_M_matches_closed_form():
    curves = desk_curves()
    energy = EnergyTables(curves, eps=1e-3)
    p = np.concatenate([[-1.0, 0.0], np.linspace(1e-3, 40.0, 200)])
    assert energy.M(p) == pytest.approx(linear_density_M(1.0, 1e-3, p),
                                        rel=1e-6, abs=1e-10)
    assert energy.N(-2.0) == 0.0
    with pytest.raises(ValueError):
        EnergyTables(curves, eps=0.0)


def test_energy_lower_bound(curves):
    energy = EnergyTables(curves, eps=1e-3)
    rng = np.random.RandomState(7)
    p_l = rng.uniform(-20.0, 60.0, size=10000)
    p_g = rng.uniform(-20.0, 60.0, size=10000)
    E = energy_functional(curves, energy, p_l, p_g)
    assert np.all(E >= -curves.m_pc - 1e-8 * (1 + np.abs(p_g)))


def _power_curves() -> ConstitutiveSet:
    base = desk_curves()
    return ConstitutiveSet(
        capillary=base.capillary, relperm=base.relperm,
        solubility=base.solubility,
        density=PowerCappedDensity(c_v=1.0, theta=0.5, rho_max=50.0))


def test_unregularized_tables_for_integrable_density():
    energy = EnergyTables(_power_curves(), eps=0.0)
    p = np.array([1e-3, 0.5, 4.0, 100.0])
    assert energy.M(p) == pytest.approx(2 * np.sqrt(p), abs=1e-4)
    assert energy.N(4.0) == pytest.approx(0.2 * 2 / 3 * 8, rel=1e-5)
    assert energy.M(np.array([-1.0, 0.0])).tolist() == [0.0, 0.0]
    assert np.all(np.diff(energy.M(np.linspace(0.0, 50.0, 101))) > 0)
    regularized = EnergyTables(_power_curves(), eps=1e-3)
    assert np.all(regularized.M(p) < energy.M(p))


def test_energy_upper_bound():
    base = desk_curves()
    curves = _power_curves()
    eps = 1e-3
    C = energy_upper_constant(curves, eps)
    energy = EnergyTables(curves, eps=eps)
    rng = np.random.RandomState(3)
    p_l = rng.uniform(-20.0, 60.0, size=2000)
    p_g = rng.uniform(-20.0, 60.0, size=2000)
    E = energy_functional(curves, energy, p_l, p_g)
    assert np.all(E <= C * (np.abs(p_g) + 1))
    with pytest.raises(ValueError):
        energy_upper_constant(base, eps)
