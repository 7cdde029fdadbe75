# -*- coding: utf-8 -*-
"""
Run configurations.

A run is described by an INI file with the sections ``[mesh]``,
``[rock]``, ``[fluid]``, ``[curves]``, ``[scheme]``, ``[initial]``,
``[sources]`` and ``[output]``. The schema is strict: unknown sections
or keys, missing required keys and values that do not parse are all
collected (with line numbers) and raised together as one
:class:`ConfigError`.
"""
import os
import re
import copy
import json
import logging
import configparser
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np  # type: ignore

from persistflow import settings
from persistflow.constitutive import (
    BrooksCoreyCapillary, ConstitutiveSet, DomainError, HenrySolubility,
    LinearCappedDensity, LinearCapillary, PowerCappedDensity, PowerRelPerm,
    QuadraticRelPerm, RockFluidParams,
)
from persistflow.expressions import Expression, ExpressionError
from persistflow.mesh import Mesh, MeshError, build_interval, build_rectangle
from persistflow.solver import RegularizationParams
from persistflow.utils import text_hash


logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """ Schema errors; ``errors`` is a list of ``(line, message)`` """
    def __init__(self, errors: List[Tuple[int, str]],
                 path: Optional[str] = None) -> None:
        self.errors = sorted(errors)
        self.path = path
        lines = ["{}:{}: {}".format(path or '<config>', line, msg)
                 for line, msg in self.errors]
        super().__init__("\n".join(lines))


# ---- value parsers -----------------------------------------------------------

def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def _floats(text: str) -> List[float]:
    return [float(v) for v in re.split(r'[\s,]+', text.strip()) if v]


def _ints(text: str) -> List[int]:
    return [_int(v) for v in re.split(r'[\s,]+', text.strip()) if v]


def _words(text: str) -> List[str]:
    return [v for v in re.split(r'[\s,]+', text.strip()) if v]


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ('1', 'yes', 'true', 'on'):
        return True
    if value in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError("expected a boolean")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError("Unsupported value: %s. Supported values: %r" % (
                value, list(options)))
        return value
    return parse


def _str(text: str) -> str:
    return text.strip()


REQUIRED = object()

# section -> key -> (parser, default)
SCHEMA = {
    'mesh': {
        'dim': (_int, 1),
        'lengths': (_floats, REQUIRED),
        'cells': (_ints, REQUIRED),
        'dirichlet': (_words, REQUIRED),
    },
    'rock': {
        'porosity': (_float, REQUIRED),
        'permeability': (_float, REQUIRED),
        'permeability_yy': (_float, None),
        'permeability_xy': (_float, 0.0),
        'diffusion': (_float, REQUIRED),
    },
    'fluid': {
        'mu_l': (_float, REQUIRED),
        'mu_g': (_float, REQUIRED),
        'rho_l_std': (_float, REQUIRED),
        'gravity': (_floats, None),
    },
    'curves': {
        'capillary': (_choice('linear', 'brooks_corey'), 'linear'),
        'entry_pressure': (_float, REQUIRED),
        'lambda_b': (_float, 2.0),
        'relperm': (_choice('quadratic', 'power'), 'quadratic'),
        'n_l': (_float, 2.0),
        'n_g': (_float, 2.0),
        'kr_floor': (_float, 0.0),
        'henry': (_float, REQUIRED),
        'u_max': (_float, REQUIRED),
        'u_min': (_float, REQUIRED),
        'density': (_choice('linear_capped', 'power_capped'), 'linear_capped'),
        'c_v': (_float, REQUIRED),
        'theta': (_float, 0.5),
        'rho_max': (_float, REQUIRED),
        'a_l': (_float, None),
        'kr_m': (_float, None),
        'm_0': (_float, None),
        'm_g': (_float, None),
        'rho_g_max': (_float, None),
        's_min': (_float, settings.S_MIN),
        'z': (_float, None),
        'table_resolution': (_int, settings.TABLE_RESOLUTION),
        'table_tol': (_float, settings.TABLE_TOL),
    },
    'scheme': {
        'final_time': (_float, REQUIRED),
        'steps': (_int, REQUIRED),
        'eta': (_float, settings.DEFAULT_ETA),
        'eps': (_float, settings.DEFAULT_EPS),
        'projection': (_choice('identity', 'spectral'), 'identity'),
        'modes': (_int, None),
        'picard_tol': (_float, settings.PICARD_TOL),
        'picard_max': (_int, settings.PICARD_MAX),
        'relaxation': (_float, settings.RELAXATION),
        'stabilize': (_bool, False),
        'p_scale': (_float, None),
        'max_halvings': (_int, settings.MAX_DT_HALVINGS),
    },
    'initial': {
        'p_l': (Expression, REQUIRED),
        'p_g': (Expression, REQUIRED),
    },
    'sources': {
        'injection': (Expression, Expression('0')),
        'production': (Expression, Expression('0')),
    },
    'output': {
        'directory': (_str, None),
        'snapshot_every': (_int, settings.SNAPSHOT_EVERY),
    },
}  # type: Dict[str, Dict[str, Tuple[Callable, Any]]]

# sections which may be left out entirely
OPTIONAL_SECTIONS = {'sources', 'output'}


def _scan_lines(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """ Line numbers of section headers and keys """
    where = {}  # type: Dict[Tuple[str, Optional[str]], int]
    section = ''
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in '#;':
            continue
        m = re.match(r'\[([^\]]+)\]', stripped)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        m = re.match(r'([^=:\s][^=:]*?)\s*[=:]', stripped)
        if m and not line[:1].isspace():
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


class OutputSpec(NamedTuple):
    directory: str
    snapshot_every: int


class RunConfig:
    """
    A validated run configuration.

    Attributes
    ----------
    mesh : Mesh
    params : RockFluidParams
    curves : ConstitutiveSet
    scheme : RegularizationParams
    initial : (Expression, Expression)
        Initial liquid pressure and gas pseudo-pressure.
    sources : (Expression, Expression)
        Injection ``F_I`` and production ``F_P`` rates.
    output : OutputSpec
    values : dict
        Parsed values of every section, defaults included.
    overrides : dict
        Scheme parameters replaced after parsing; they enter the hash.
    """
    def __init__(self, *, name: str, text: str, values: Dict[str, Dict[str, Any]],
                 mesh: Mesh, params: RockFluidParams, curves: ConstitutiveSet,
                 scheme: RegularizationParams,
                 initial: Tuple[Expression, Expression],
                 sources: Tuple[Expression, Expression],
                 output: OutputSpec) -> None:
        self.name = name
        self.text = text
        self.values = values
        self.mesh = mesh
        self.params = params
        self.curves = curves
        self.scheme = scheme
        self.initial = initial
        self.sources = sources
        self.output = output
        self.overrides = {}  # type: Dict[str, Any]

    @property
    def config_hash(self) -> str:
        if not self.overrides:
            return text_hash(self.text)
        return text_hash(self.text + "\n# scheme overrides " + json.dumps(
            sorted(self.overrides.items()), default=str))

    @property
    def final_time(self) -> float:
        return self.scheme.dt * self.scheme.n_steps

    @property
    def table_resolution(self) -> int:
        return self.values['curves']['table_resolution']

    @property
    def table_tol(self) -> float:
        return self.values['curves']['table_tol']

    @property
    def z(self) -> Optional[float]:
        return self.values['curves']['z']

    def with_scheme(self, **changes) -> 'RunConfig':
        """ A copy with some regularization parameters replaced """
        cfg = copy.copy(self)
        cfg.scheme = self.scheme.replace(**changes)
        cfg.overrides = dict(self.overrides, **changes)
        return cfg

    def output_directory(self, override: Optional[str] = None) -> Path:
        """
        Run directory: ``override`` if given, else the configured
        directory, relative to ``$PERSISTFLOW_OUTPUT_ROOT`` (or
        ``runs``) when not absolute.
        """
        directory = override or self.output.directory or self.name
        path = Path(directory)
        if path.is_absolute() or override:
            return path
        root = os.environ.get(settings.ENV_OUTPUT_ROOT, settings.OUTPUT_ROOT)
        return Path(root) / path


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf8')
    except OSError as e:
        raise ConfigError([(0, "cannot read config: {}".format(e))], str(path))
    return parse_config(text, name=path.stem, path=str(path))


def parse_config(text: str, name: str = 'run',
                 path: Optional[str] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=('#', ';'))
    try:
        parser.read_string(text, source=path or '<config>')
    except configparser.Error as e:
        raise ConfigError([(getattr(e, 'lineno', 0) or 0, e.message)], path)

    where = _scan_lines(text)
    errors = []  # type: List[Tuple[int, str]]
    values = {}  # type: Dict[str, Dict[str, Any]]

    for section in parser.sections():
        if section not in SCHEMA:
            errors.append((where.get((section, None), 0),
                           "unknown section [{}]".format(section)))
    for section, keys in SCHEMA.items():
        present = parser.has_section(section)
        header_line = where.get((section, None), 0)
        if not present and section not in OPTIONAL_SECTIONS:
            errors.append((0, "missing section [{}]".format(section)))
        values[section] = {}
        if present:
            for key in parser.options(section):
                if key not in keys:
                    errors.append((where.get((section, key), header_line),
                                   "unknown key '{}' in [{}]".format(key, section)))
        for key, (parse, default) in keys.items():
            if present and parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = parse(raw)
                except (ValueError, ExpressionError) as e:
                    errors.append((where.get((section, key), header_line),
                                   "[{}] {}: {}".format(section, key, e)))
            elif default is REQUIRED:
                if present:
                    errors.append((header_line, "missing required key '{}' "
                                                "in [{}]".format(key, section)))
            else:
                values[section][key] = default
    if errors:
        raise ConfigError(errors, path)

    built = _build(values, where, errors)
    if errors:
        raise ConfigError(errors, path)
    mesh, params, curves, scheme, output = built
    cfg = RunConfig(
        name=name, text=text, values=values, mesh=mesh, params=params,
        curves=curves, scheme=scheme,
        initial=(values['initial']['p_l'], values['initial']['p_g']),
        sources=(values['sources']['injection'],
                 values['sources']['production']),
        output=output,
    )
    _check_data(cfg, where, errors)
    if errors:
        raise ConfigError(errors, path)
    logger.info("loaded config {} ({}), {}".format(
        path or name, cfg.config_hash[:12], mesh.summary()))
    return cfg


def _build(values, where, errors):
    def line(section, key=None):
        return where.get((section, key), where.get((section, None), 0))

    mesh = params = curves = scheme = None
    m = values['mesh']
    try:
        dim = m['dim']
        if dim not in (1, 2):
            raise MeshError("dim must be 1 or 2")
        if len(m['lengths']) != dim or len(m['cells']) != dim:
            raise MeshError("lengths and cells need {} values".format(dim))
        dirichlet = [s for s in m['dirichlet'] if s != 'none']
        if not dirichlet:
            raise MeshError("the Dirichlet side set is empty; "
                            "|Gamma_D| > 0 is required")
        if dim == 1:
            mesh = build_interval(m['lengths'][0], m['cells'][0], dirichlet)
        else:
            mesh = build_rectangle(m['lengths'][0], m['lengths'][1],
                                   m['cells'][0], m['cells'][1], dirichlet)
    except (MeshError, ValueError) as e:
        errors.append((line('mesh', 'dirichlet'), "[mesh] {}".format(e)))

    r, f = values['rock'], values['fluid']
    if mesh is not None:
        try:
            n, dim = mesh.n_nodes, mesh.dim
            if r['permeability_yy'] is None and r['permeability_xy'] == 0:
                permeability = np.full(n, r['permeability'])
            else:
                if dim != 2:
                    raise DomainError("anisotropic permeability needs dim = 2")
                kyy = r['permeability_yy']
                tensor = np.array([[r['permeability'], r['permeability_xy']],
                                   [r['permeability_xy'],
                                    r['permeability'] if kyy is None else kyy]])
                permeability = np.broadcast_to(tensor, (n, 2, 2)).copy()
            gravity = f['gravity'] if f['gravity'] is not None else [0.0] * dim
            if len(gravity) != dim:
                raise DomainError("gravity needs {} components".format(dim))
            params = RockFluidParams(
                porosity=np.full(n, r['porosity']),
                permeability=permeability,
                diffusion=np.full(n, r['diffusion']),
                mu_l=f['mu_l'], mu_g=f['mu_g'], rho_l_std=f['rho_l_std'],
                gravity=gravity)
        except DomainError as e:
            errors.append((line('rock'), "[rock] {}".format(e)))

    c = values['curves']
    try:
        if c['capillary'] == 'linear':
            capillary = LinearCapillary(entry_pressure=c['entry_pressure'])
        else:
            capillary = BrooksCoreyCapillary(entry_pressure=c['entry_pressure'],
                                             lambda_b=c['lambda_b'])
        if c['relperm'] == 'quadratic':
            relperm = QuadraticRelPerm()
        else:
            relperm = PowerRelPerm(n_l=c['n_l'], n_g=c['n_g'],
                                   kr_floor=c['kr_floor'])
        solubility = HenrySolubility(c_h=c['henry'], u_max=c['u_max'],
                                     u_min=c['u_min'])
        if c['density'] == 'linear_capped':
            density = LinearCappedDensity(c_v=c['c_v'], rho_max=c['rho_max'])
        else:
            density = PowerCappedDensity(c_v=c['c_v'], theta=c['theta'],
                                         rho_max=c['rho_max'])  # type: ignore
        curves = ConstitutiveSet(
            capillary=capillary, relperm=relperm, solubility=solubility,
            density=density, a_l=c['a_l'], kr_m=c['kr_m'], m_0=c['m_0'],
            m_g=c['m_g'], rho_g_max=c['rho_g_max'], s_min=c['s_min'])
    except (AssertionError, ValueError) as e:
        errors.append((line('curves'), "[curves] invalid curve parameters: "
                                       "{}".format(e or 'out of range')))

    s = values['scheme']
    try:
        modes = s['modes']
        if s['projection'] == 'spectral' and modes is None and mesh is not None:
            modes = len(mesh.free_nodes)
        scheme = RegularizationParams(
            eta=s['eta'], eps=s['eps'],
            dt=s['final_time'] / max(s['steps'], 1), n_steps=s['steps'],
            projection=s['projection'], modes=modes,
            picard_tol=s['picard_tol'], picard_max=s['picard_max'],
            relaxation=s['relaxation'], stabilize=s['stabilize'],
            p_scale=s['p_scale'], max_halvings=s['max_halvings'])
    except ValueError as e:
        errors.append((line('scheme'), "[scheme] {}".format(e)))

    o = values['output']
    output = OutputSpec(directory=o['directory'],
                        snapshot_every=o['snapshot_every'])
    return mesh, params, curves, scheme, output


def _check_data(cfg: RunConfig, where, errors) -> None:
    """ Sign conditions on initial data and sources (H7) """
    x, y = cfg.mesh.coordinates()
    p_g0 = cfg.initial[1].on_nodes(x, y, 0.0)
    if not np.all(np.isfinite(p_g0)) or np.min(p_g0) < 0:
        errors.append((where.get(('initial', 'p_g'), 0),
                       "H7: the initial gas pseudo-pressure p_g must be "
                       "nonnegative on mesh nodes (min {:g})".format(
                           float(np.nanmin(p_g0)))))
    p_l0 = cfg.initial[0].on_nodes(x, y, 0.0)
    if not np.all(np.isfinite(p_l0)):
        errors.append((where.get(('initial', 'p_l'), 0),
                       "initial p_l is not finite on mesh nodes"))
    for key, expr in zip(('injection', 'production'), cfg.sources):
        for t in np.linspace(0.0, cfg.final_time, 5):
            values = expr.on_nodes(x, y, t)
            if not np.all(np.isfinite(values)) or np.min(values) < 0:
                errors.append((where.get(('sources', key), 0),
                               "H7: source '{}' must be nonnegative "
                               "(min {:g} at t={:g})".format(
                                   key, float(np.nanmin(values)), t)))
                break
    if cfg.scheme.p_scale is None:
        scale = max(1.0, float(np.max(np.abs(p_l0))), float(np.max(p_g0)))
        cfg.scheme = cfg.scheme.replace(p_scale=scale)
