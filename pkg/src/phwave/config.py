"""JSON experiment configuration: schema validation, defaults and discretisation.

Defaults (filled when absent):

=====================  ==========================================
``boundary.gamma0``    ``["left"]``
``coefficients``       ``T11 = 1``, ``T12 = 0``, ``T22 = 1``
``h``                  ``"0"``
``initial``            ``w0 = "0"``, ``w1 = "0"``
``time``               ``dt = 0.01``, ``t_end = 1``, ``decay_points = 21``, ``certify = true``
``spectral``           ``mode = "dense"``, ``shift = 0``, ``count = 20``, ``certify = false``
``resolvent``          ``lambda = i``, ``mu = 2 + i``, ``samples = 10``
``sweep.eta``          ``0.5, 1.0, ..., 10.0``
``garding``            ``eta = [1, 5]``, ``samples = 20``
``a0``                 ``center = [0.5, 0.5]``, ``radius = 0.45``, ``rule = 7``, ``levels = 1``
``seed``               ``0``
=====================  ==========================================

Coefficients are sampled with the 3-point triangle rule and 2-point edge rule
(``a0`` uses its own ``rule``).
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict

import jsonschema

from .errors import CoefficientError, ConfigError, ExprError, MeshError
from .expr import parse_expr
from .mesh import CoefficientSet, generate_rect_mesh, read_mesh, tag_boundary
from .problem import Discretization, discretize

DEFAULTS: Dict[str, Any] = {
    "boundary": {"gamma0": ["left"]},
    "coefficients": {"T11": "1", "T12": "0", "T22": "1"},
    "h": "0",
    "initial": {"w0": "0", "w1": "0"},
    "time": {"dt": 0.01, "t_end": 1.0, "decay_points": 21, "certify": True},
    "spectral": {"mode": "dense", "shift": 0.0, "count": 20, "certify": False},
    "resolvent": {"lambda": [0.0, 1.0], "mu": [2.0, 1.0], "samples": 10},
    "sweep": {"eta": [0.5 * j for j in range(1, 21)]},
    "garding": {"eta": [1.0, 5.0], "samples": 20},
    "a0": {"center": [0.5, 0.5], "radius": 0.45, "rule": 7, "levels": 1},
    "seed": 0,
    "export_matrices": False,
}

_EXPR_FIELDS = [("coefficients", k) for k in ("rho", "T11", "T12", "T22", "k")] + \
               [("h",), ("initial", "w0"), ("initial", "w1")]


def load_schema() -> dict:
    return json.loads(resources.files("phwave").joinpath("config_schema.json").read_text())


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def _schema_error(err: jsonschema.ValidationError) -> ConfigError:
    path = list(err.absolute_path)
    if err.validator == "required":
        m = re.match(r"'([^']+)' is a required property", err.message)
        if m:
            path.append(m.group(1))
    return ConfigError(err.message, pointer=_pointer(path) or "/")


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def as_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


@dataclass(eq=False)
class Config:
    """Validated configuration plus the discretisation it describes."""

    raw: Dict[str, Any]
    source: Path
    disc: Discretization
    warnings: list

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])


def _lookup(data, path):
    for p in path:
        if not isinstance(data, dict) or p not in data:
            return None
        data = data[p]
    return data


def validate(data: dict, base_dir: Path = Path(".")) -> dict:
    """Schema check, defaults, expression parsing; returns the completed dictionary."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        raise _schema_error(errors[0])
    cfg = _merge(DEFAULTS, data)
    for path in _EXPR_FIELDS:
        val = _lookup(cfg, path)
        if val is None:
            continue
        try:
            parse_expr(str(val))
        except ExprError as exc:
            raise ConfigError(str(exc), pointer=_pointer(path)) from exc
    if "file" in cfg["mesh"]:
        p = Path(cfg["mesh"]["file"])
        cfg["mesh"]["file"] = str(p if p.is_absolute() else base_dir / p)
    else:
        cfg["mesh"].setdefault("lx", 1.0)
        cfg["mesh"].setdefault("ly", 1.0)
    return cfg


def build_discretization(cfg: dict, rule: int = 3, retag: bool = True):
    """Mesh, boundary tags and sampled coefficients for a validated configuration.

    Mesh files carry their own tags; ``retag`` replaces them by the configured selectors.
    """
    notes = []
    spec = cfg["mesh"]
    try:
        if "file" in spec:
            mesh, partition, notes = read_mesh(spec["file"])
            if retag:
                partition = tag_boundary(mesh, cfg["boundary"]["gamma0"])
        else:
            mesh = generate_rect_mesh(spec["nx"], spec["ny"], spec["lx"], spec["ly"])
            partition = tag_boundary(mesh, cfg["boundary"]["gamma0"])
    except MeshError as exc:
        raise ConfigError(str(exc), pointer="/mesh") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file: {exc}", pointer="/mesh/file") from exc
    except ConfigError as exc:
        if exc.pointer:
            raise
        raise ConfigError(str(exc), pointer="/boundary/gamma0") from exc
    c = cfg["coefficients"]
    coeffs = CoefficientSet.from_strings(
        rho=str(c["rho"]), T11=str(c["T11"]), T12=str(c["T12"]), T22=str(c["T22"]),
        k=None if c.get("k") is None else str(c["k"]))
    try:
        disc = discretize(mesh, partition, coeffs, rule=rule)
    except CoefficientError as exc:
        field = "/rho" if str(exc).startswith("rho") else ""
        raise ConfigError(str(exc), pointer="/coefficients" + field) from exc
    return disc, list(notes) + list(partition.warnings)


def load_config(path) -> Config:
    """Read, validate and discretise the configuration at ``path``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", pointer="/")
    cfg = validate(data, path.parent)
    retag = "file" not in cfg["mesh"] or "gamma0" in data.get("boundary", {})
    disc, warnings = build_discretization(cfg, retag=retag)
    return Config(cfg, path, disc, warnings)
