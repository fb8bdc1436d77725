"""Run configuration: JSON schema, defaults and validation.

A config is a JSON object with these sections (all optional except where a
subcommand needs them)::

    {
      "domain":    [[-1, 1]],
      "mesh":      {"n_per_unit": 64}            or {"coupling": "quadratic"},
      "params":    {"s": 0.5, "p": 2, "q": 1.5, "mu": 0,
                    "lambda": null, "lambda_factor": null},
      "potential": {"kind": "catalog", "name": "one", "args": {}}
                   | {"kind": "constant", "value": 1.0}
                   | {"kind": "nodal", "values": [...]},
      "solver":    {"tol": 1e-8, "max_iter": 2000, "seed": 0},
      "sweep":     {"mu_grid": [...], "s_grid": [...], "t_values": [...],
                    "p_values": [...], "workers": 1},
      "certify":   {"trials": 1000},
      "oracle":    {"k": 10},
      "output":    {"directory": "fracpq-out", "formats": ["csv", "json"]}
    }

``lambda_factor`` sets lambda relative to the discrete lambda_1 computed
on the same mesh.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .mesh import POTENTIAL_CATALOG, Domain1D, Mesh, Potential, build_mesh, catalog_potential

DEFAULT_CONFIG: dict = {
    "domain": [[-1.0, 1.0]],
    "mesh": {"n_per_unit": 64},
    "params": {"s": 0.5, "p": 2.0, "q": 1.5, "mu": 0.0, "lambda": None, "lambda_factor": None},
    "potential": {"kind": "catalog", "name": "one", "args": {}},
    "solver": {"tol": 1e-8, "max_iter": 2000, "seed": 0},
    "sweep": {
        "mu_grid": [1.0, 0.5, 0.25, 0.125, 0.0625],
        "s_grid": [0.6, 0.7, 0.8, 0.9, 0.95],
        "t_values": [10.0, 100.0, 1000.0, 10000.0],
        "p_values": [2.0, 3.0],
        "workers": 1,
    },
    "certify": {"trials": 1000},
    "oracle": {"k": 10},
    "output": {"directory": "fracpq-out", "formats": ["csv", "json"]},
}

_SECTIONS = set(DEFAULT_CONFIG)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ValidationError(f"config field {where!r}: unknown field")
        if isinstance(base[k], dict) and k != "args":
            if not isinstance(v, dict):
                raise ValidationError(f"config field {where!r}: expected an object")
            if k == "potential" or k == "mesh":
                out[k] = copy.deepcopy(v)
            else:
                out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(cfg, section, key, *, lo=None, hi=None, lo_open=False, hi_open=False, integer=False,
         allow_none=False):
    v = cfg[section].get(key)
    where = f"{section}.{key}"
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"config field {where!r}: expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ValidationError(f"config field {where!r}: expected an integer, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ValidationError(f"config field {where!r}: must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ValidationError(f"config field {where!r}: must be {'<' if hi_open else '<='} {hi}, got {v}")
    return int(v) if integer else float(v)


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        cfg = cls(_merge(DEFAULT_CONFIG, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        c = self.raw
        dom = c["domain"]
        if not isinstance(dom, list) or not dom:
            raise ValidationError("config field 'domain': empty domain")
        for k, iv in enumerate(dom):
            if not (isinstance(iv, list) and len(iv) == 2
                    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in iv)):
                raise ValidationError(f"config field 'domain[{k}]': expected [a, b]")
        self.domain = Domain1D.from_list(dom)

        mesh = c["mesh"]
        if "n_per_unit" in mesh:
            _num(c, "mesh", "n_per_unit", lo=4, integer=True)
        elif mesh.get("coupling") != "quadratic":
            raise ValidationError("config field 'mesh': give n_per_unit or coupling = 'quadratic'")

        s = _num(c, "params", "s", lo=0.0, hi=1.0, lo_open=True)
        if s >= 1.0:
            raise ValidationError("config field 'params.s': s must lie in (0, 1) (s = 1 is the local reference)")
        p = _num(c, "params", "p", lo=1.0, lo_open=True)
        q = _num(c, "params", "q", lo=1.0, lo_open=True)
        if not q < p:
            raise ValidationError(f"config field 'params.q': need 1 < q < p, got q={q}, p={p}")
        _num(c, "params", "mu", lo=0.0)
        _num(c, "params", "lambda", allow_none=True)
        _num(c, "params", "lambda_factor", lo=0.0, lo_open=True, allow_none=True)

        pot = c["potential"]
        kind = pot.get("kind")
        if kind == "catalog":
            if pot.get("name") not in POTENTIAL_CATALOG:
                raise ValidationError(
                    f"config field 'potential.name': choose from {sorted(POTENTIAL_CATALOG)}")
            if not isinstance(pot.get("args", {}), dict):
                raise ValidationError("config field 'potential.args': expected an object")
        elif kind == "constant":
            _num(c, "potential", "value")
            if not pot["value"] > 0:
                raise ValidationError("config field 'potential.value': must be positive somewhere")
        elif kind == "nodal":
            if not isinstance(pot.get("values"), list):
                raise ValidationError("config field 'potential.values': expected a list")
        else:
            raise ValidationError("config field 'potential.kind': one of catalog, constant, nodal")

        _num(c, "solver", "tol", lo=0.0, lo_open=True)
        _num(c, "solver", "max_iter", lo=1, integer=True)
        _num(c, "solver", "seed", lo=0, integer=True)
        _num(c, "sweep", "workers", lo=1, integer=True)
        _num(c, "certify", "trials", lo=1, integer=True)
        _num(c, "oracle", "k", lo=1, integer=True)
        for key in ("mu_grid", "s_grid", "t_values", "p_values"):
            g = c["sweep"][key]
            if not isinstance(g, list) or not g or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in g):
                raise ValidationError(f"config field 'sweep.{key}': expected a nonempty list of numbers")
        if any(not 0 < x < 1 for x in c["sweep"]["s_grid"]):
            raise ValidationError("config field 'sweep.s_grid': values must lie in (0, 1)")
        if any(not x > 1 for x in c["sweep"]["p_values"]):
            raise ValidationError("config field 'sweep.p_values': values must exceed 1")

    # -- accessors ------------------------------------------------------------

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def seed(self) -> int:
        return int(self.raw["solver"]["seed"])

    def with_seed(self, seed: int) -> "RunConfig":
        data = copy.deepcopy(self.raw)
        data["solver"]["seed"] = int(seed)
        return RunConfig.from_dict(data)

    def build_mesh(self, n_per_unit: int | None = None) -> Mesh:
        if n_per_unit is None:
            n_per_unit = self.raw["mesh"].get("n_per_unit")
            if n_per_unit is None:
                from .continuation import coupled_resolution
                n_per_unit = coupled_resolution(self.raw["params"]["s"], self.raw["mesh"]["coupling"])
        return build_mesh(self.domain, int(n_per_unit))

    def potential(self, mesh: Mesh) -> Potential:
        pot = self.raw["potential"]
        if pot["kind"] == "catalog":
            return catalog_potential(mesh, pot["name"], **pot.get("args", {}))
        if pot["kind"] == "constant":
            return Potential.constant(mesh, pot["value"])
        vals = pot["values"]
        if len(vals) != mesh.n:
            raise ValidationError(
                f"config field 'potential.values': expected {mesh.n} nodal values, got {len(vals)}")
        return Potential(vals, mesh)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
