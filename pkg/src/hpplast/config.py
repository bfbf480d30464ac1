"""Problem configuration: INI-style ``key = value`` sections.

Example::

    [mesh]
    generator = unit_square      # or: file = path/to/mesh.txt
    n = 8
    degree = 1                   # an integer, or "mixed"
    dirichlet = left

    [material]
    lambda = 100
    mu = 100
    k = 1000
    sigma_y = 1

    [loads]
    f = 0 0
    g_right = 0.7 0.35           # one g_<side> key per loaded side
    manufactured =               # sine | poly | empty

    [solver]
    rho = 1
    tol = 1e-10
    max_iter = 50
    branch = inactive

    [study]
    levels = 3
    degree = 1
    reference = auto             # auto | manufactured | overkill

    [output]
    dir = out

    [check]
    seed = 42

Any key can be overridden by the environment variable
``HPPLAST_<SECTION>_<KEY>`` (upper case), e.g. ``HPPLAST_SOLVER_RHO=10``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .assembly import LoadData
from .benchmarks import MANUFACTURED, Problem, manufactured_elastic
from .mesh import SIDES, HpMesh, MeshError, read_mesh, unit_square
from .solver import BRANCHES, SolverConfig
from .tensors import MaterialLaw

ENV_PREFIX = "HPPLAST_"

SCHEMA = {
    "mesh": {"generator", "file", "n", "degree", "dirichlet"},
    "material": {"lambda", "mu", "k", "sigma_y"},
    "loads": {"f", "manufactured"} | {f"g_{s}" for s in SIDES},
    "solver": {"rho", "tol", "max_iter", "branch", "verbose"},
    "study": {"levels", "degree", "reference"},
    "output": {"dir"},
    "check": {"seed"},
}

DEFAULTS = {
    "mesh": {"generator": "unit_square", "n": "4", "degree": "1", "dirichlet": "left"},
    "material": {"lambda": "1", "mu": "1", "k": "1", "sigma_y": "1"},
    "loads": {"f": "0 0", "manufactured": ""},
    "solver": {"rho": "1", "tol": "1e-10", "max_iter": "50", "branch": "inactive", "verbose": "false"},
    "study": {"levels": "3", "degree": "1", "reference": "auto"},
    "output": {"dir": "out"},
    "check": {"seed": "42"},
}


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        self.key = key
        super().__init__(f"config key '{key}': {msg}")


@dataclass
class ProblemConfig:
    mesh: HpMesh
    material: MaterialLaw
    loads: LoadData
    solver: SolverConfig
    levels: int
    study_degree: int
    reference: str
    out_dir: Path
    seed: int
    manufactured: str | None = None
    raw: dict = field(default_factory=dict)

    def problem(self, mesh: HpMesh | None = None) -> Problem:
        mesh = mesh or self.mesh
        if self.manufactured:
            base = manufactured_elastic(2, 1, self.manufactured, self.material)
            return Problem(base.name, mesh, self.material, base.loads, base.exact_u, base.exact_grad)
        return Problem("config", mesh, self.material, self.loads)


def _parse_values(raw: dict, key: str, n: int | None = None) -> tuple:
    text = raw[key]
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(key, f"expected numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(key, f"expected {n} values, got {len(vals)}")
    return vals


def _get(raw, key, kind):
    text = raw[key].strip()
    try:
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind.__name__}") from None


def read_raw(path, environ=None) -> dict:
    """Flattened ``{"section.key": value}`` with defaults and environment overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"config file {str(path)!r} not found")
    try:
        parser.read(path)
    except configparser.Error as err:
        line = getattr(err, "lineno", None)
        if line is None and getattr(err, "errors", None):
            line = err.errors[0][0]
        raise ConfigError("<syntax>", f"line {line}: {type(err).__name__}") from None
    raw = {f"{s}.{k}": v for s, sec in DEFAULTS.items() for k, v in sec.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            raw[f"{section}.{key}"] = value
    environ = os.environ if environ is None else environ
    for section, keys in SCHEMA.items():
        for key in keys:
            env = f"{ENV_PREFIX}{section}_{key}".upper()
            if env in environ:
                raw[f"{section}.{key}"] = environ[env]
    raw["_dir"] = str(path.resolve().parent)
    return raw


def _degree_field(text: str, n: int):
    if text.strip() == "mixed":
        return lambda i, j: 1 + min((i + j) // 2, 2)
    return _get({"mesh.degree": text}, "mesh.degree", int)


def build_mesh(raw: dict, validate: bool = True) -> HpMesh:
    if raw.get("mesh.file"):
        path = Path(raw["mesh.file"])
        if not path.is_absolute():
            path = Path(raw["_dir"]) / path
        if not path.is_file():
            raise ConfigError("mesh.file", f"mesh file {str(path)!r} does not exist")
        try:
            return read_mesh(path, validate=validate)
        except MeshError as err:
            raise ConfigError("mesh.file", str(err)) from None
    if raw["mesh.generator"] != "unit_square":
        raise ConfigError("mesh.generator", f"unknown generator {raw['mesh.generator']!r}")
    n = _get(raw, "mesh.n", int)
    if n < 1:
        raise ConfigError("mesh.n", "must be >= 1")
    sides = tuple(raw["mesh.dirichlet"].replace(",", " ").split())
    bad = [s for s in sides if s not in SIDES]
    if bad or not sides:
        raise ConfigError("mesh.dirichlet", f"expected a subset of {SIDES}")
    deg = _degree_field(raw["mesh.degree"], n)
    if isinstance(deg, int) and deg < 1:
        raise ConfigError("mesh.degree", "must be >= 1")
    return unit_square(n, deg, dirichlet=sides)


def load_config(path, environ=None, validate_mesh: bool = True) -> ProblemConfig:
    raw = read_raw(path, environ)
    try:
        material = MaterialLaw(
            _get(raw, "material.lambda", float),
            _get(raw, "material.mu", float),
            _get(raw, "material.k", float),
            _get(raw, "material.sigma_y", float),
        )
    except ConfigError:
        raise
    except ValueError as err:  # range checks of the material law
        names = {"lame_lambda": "lambda", "lame_mu": "mu", "hardening_k": "k", "yield_sigma_y": "sigma_y"}
        field_name = str(err).split()[0]
        raise ConfigError(f"material.{names.get(field_name, field_name)}", str(err)) from None
    f = _parse_values(raw, "loads.f", 2)
    g = {s: _parse_values(raw, f"loads.g_{s}", 2) for s in SIDES if raw.get(f"loads.g_{s}")}
    manufactured = raw["loads.manufactured"].strip() or None
    if manufactured and manufactured not in MANUFACTURED:
        raise ConfigError("loads.manufactured", f"expected one of {sorted(MANUFACTURED)}")
    loads = LoadData(f=f if any(f) else None, g=g or None)
    branch = raw["solver.branch"].strip()
    if branch not in BRANCHES:
        raise ConfigError("solver.branch", f"expected one of {BRANCHES}")
    try:
        solver = SolverConfig(
            rho=_get(raw, "solver.rho", float),
            tol=_get(raw, "solver.tol", float),
            max_iter=_get(raw, "solver.max_iter", int),
            kink_branch=branch,
            verbose=_get(raw, "solver.verbose", bool),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("solver." + str(err).split()[0], str(err)) from None
    levels = _get(raw, "study.levels", int)
    if levels < 1:
        raise ConfigError("study.levels", "must be >= 1")
    study_degree = _get(raw, "study.degree", int)
    if study_degree < 1:
        raise ConfigError("study.degree", "must be >= 1")
    reference = raw["study.reference"].strip()
    if reference not in ("auto", "manufactured", "overkill"):
        raise ConfigError("study.reference", "expected auto, manufactured or overkill")
    out = Path(raw["output.dir"])
    mesh = build_mesh(raw, validate=validate_mesh)
    return ProblemConfig(
        mesh, material, loads, solver, levels, study_degree, reference, out, _get(raw, "check.seed", int), manufactured, raw
    )
