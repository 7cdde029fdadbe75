# -*- coding: utf-8 -*-
from pathlib import Path

import numpy as np  # type: ignore

from persistflow.config import load_config, parse_config
from persistflow.constitutive import (
    ConstitutiveSet, HenrySolubility, LinearCappedDensity, LinearCapillary,
    QuadraticRelPerm, RockFluidParams,
)


SCENARIOS = Path(__file__).parent.parent / 'scenarios'


def scenario_path(name: str) -> Path:
    return SCENARIOS / (name + '.cfg')


def scenario(name: str, **scheme):
    config = load_config(scenario_path(name))
    return config.with_scheme(**scheme) if scheme else config


def scenario_text(name: str) -> str:
    return scenario_path(name).read_text()


def modified_scenario(name: str, replacements, tmp_path=None):
    """ Parse a scenario after textual replacements (old, new) """
    text = scenario_text(name)
    for old, new in replacements:
        assert old in text, old
        text = text.replace(old, new)
    if tmp_path is None:
        return parse_config(text, name=name)
    path = Path(tmp_path) / (name + '.cfg')
    path.write_text(text)
    return path


def desk_curves(**kwargs) -> ConstitutiveSet:
    """ The curves of the shipped non-dimensional scenarios """
    return ConstitutiveSet(
        capillary=LinearCapillary(entry_pressure=1.0),
        relperm=QuadraticRelPerm(),
        solubility=HenrySolubility(c_h=0.2, u_max=5.0, u_min=0.5),
        density=LinearCappedDensity(c_v=1.0, rho_max=50.0),
        **kwargs)


def desk_params(n_nodes: int = 1, rho_l_std: float = 10.0) -> RockFluidParams:
    return RockFluidParams(
        porosity=np.ones(n_nodes), permeability=np.ones(n_nodes),
        diffusion=np.ones(n_nodes), mu_l=1.0, mu_g=0.1, rho_l_std=rho_l_std,
        gravity=[0.0])
