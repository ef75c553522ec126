"""Experiment configuration: schema, expression evaluation and instance building.

A config is a YAML (or JSON) mapping with the sections ``grid``, ``dims``,
``kernels``, ``strategy``, ``input``, ``weights``, ``duality``, ``mc`` and
``output``.  Unknown keys are rejected.

Value conventions
-----------------
* Per-node functions (``x``, ``Xi``, ``v``, ``psi``, ``Q1``) are a number, a
  string expression in ``t``, or a nested list of those.
* Triangle functions (``A`` .. ``sigma``, ``Gamma``, ``Q2``, ``chi``) are a
  number or nested list (constant), an expression string in ``t, s``, or a
  mapping with ``type`` one of ``zero``, ``constant``, ``expression``,
  ``fractional``, ``tabulated`` or ``sum``.
* ``Q3`` is a constant or an expression in ``t, s, r`` (``r`` the level).

A bare number fills every entry of the target shape.  Expressions allow
``+ - * / **``, numeric literals, the listed variables and ``exp``.
"""
from __future__ import annotations

import ast
import copy
import json
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .ebsvie import DualityData
from .forward import InputCondition, Strategy
from .grid import GridError, PyrTensor, TimeGrid, TriField
from .io import load_trifield
from .kernels import (Constant, FractionalConvolution, Function, KernelError, KernelSet, Sum,
                      Tabulated, Zero, sample_kernel)
from .lyapunov import QuadraticWeights
from .montecarlo import McConfig


class ConfigError(ValueError):
    """Invalid configuration file or value."""


# -- expressions ---------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": np.exp}


def evaluate(expr: str, **variables):
    """Evaluate a polynomial/exponential expression over numpy arrays.

    >>> float(evaluate("1 + 2*t**2", t=1.5))
    5.5
    """
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise ConfigError(f"unknown name {node.id!r} in {expr!r}")
            return variables[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported construct {type(node).__name__} in {expr!r}")

    with np.errstate(all="ignore"):
        return ev(tree)


def _entries(value, shape, variables):
    """Broadcast a config value (number, string, nested list) to ``grid_shape + shape``."""
    ref = next(iter(variables.values()))
    gshape = np.shape(ref)

    def scalar(v):
        out = evaluate(v, **variables) if isinstance(v, str) else float(v)
        return np.broadcast_to(np.asarray(out, dtype=float), gshape)

    if not isinstance(value, list):
        base = scalar(value)
        return np.broadcast_to(base[(...,) + (None,) * len(shape)], gshape + tuple(shape)).copy()
    arr = np.asarray(value, dtype=object)
    if arr.ndim == 1 and len(shape) == 2 and shape[1] == 1:
        arr = arr[:, None]
    if arr.shape != tuple(shape):
        raise ConfigError(f"value has shape {arr.shape}, expected {tuple(shape)}")
    out = np.empty(gshape + tuple(shape))
    for idx in np.ndindex(*shape):
        out[(...,) + idx] = scalar(arr[idx])
    if not np.all(np.isfinite(out)):
        raise ConfigError("value is not finite on the grid")
    return out


def node_values(value, shape, grid: TimeGrid) -> np.ndarray:
    """Per-node function sampled at the grid nodes, shape ``(N+1,) + shape``."""
    return _entries(value, shape, {"t": grid.nodes})


# -- schema ----------------------------------------------------------------------

_SCALARISH = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_MATRIX = {"oneOf": [_SCALARISH, {"type": "array", "items": {"$ref": "#/definitions/matrix"}}]}
_KERNEL_OBJ = {
    "type": "object",
    "required": ["type"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["zero", "constant", "expression", "fractional", "tabulated", "sum"]},
        "value": {"$ref": "#/definitions/matrix"},
        "expr": {"$ref": "#/definitions/matrix"},
        "c": {"type": "number"},
        "H": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "modulation": {"$ref": "#/definitions/matrix"},
        "path": {"type": "string"},
        "terms": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/kernel"}},
    },
}


def _section(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": list(required)}


_K = {"$ref": "#/definitions/kernel"}
_M = {"$ref": "#/definitions/matrix"}
SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "definitions": {
        "matrix": _MATRIX,
        "kernel": {"oneOf": [_MATRIX, _KERNEL_OBJ]},
    },
    **_section({
        "grid": _section({"t0": {"type": "number"}, "T": {"type": "number"},
                          "N": {"type": "integer", "minimum": 1}}, ("t0", "T", "N")),
        "dims": _section({"d": {"type": "integer", "minimum": 1},
                          "l": {"type": "integer", "minimum": 1}}, ("d", "l")),
        "kernels": _section({k: _K for k in ("A", "B", "C", "D", "b", "sigma")}, ("A", "C")),
        "strategy": _section({"Xi": _M, "Gamma": _K, "v": _M}),
        "input": _section({"start": {"type": "integer", "minimum": 0}, "x": _M}, ("x",)),
        "weights": _section({"Q1": _M, "Q2": _K, "Q3": _M}),
        "duality": _section({"psi": _M, "chi": _K}),
        "mc": _section({"n_paths": {"type": "integer", "minimum": 2},
                        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                        "batch_size": {"type": "integer", "minimum": 1},
                        "antithetic": {"type": "boolean"}}),
        "output": _section({"dir": {"type": "string"},
                            "formats": {"type": "array", "items": {"enum": ["csv", "txt"]},
                                        "uniqueItems": True}}),
    }, ("grid", "dims", "kernels", "input")),
}


# -- kernel specs ----------------------------------------------------------------

def _expression_kernel(expr, shape):
    def func(T, S):
        return _entries(expr, shape, {"t": T, "s": S})
    return Function(func, *shape)


def kernel_spec(value, shape, base_dir: Path = Path(".")):
    """Translate a config kernel value into a kernel spec of matrix ``shape``."""
    shape = tuple(shape)
    if not isinstance(value, dict):
        if isinstance(value, str) or (isinstance(value, list) and _has_string(value)):
            return _expression_kernel(value, shape)
        return Constant(_entries(value, shape, {"t": np.zeros(())}))
    kind = value["type"]
    if kind == "zero":
        return Zero(*shape)
    if kind == "constant":
        return kernel_spec(value.get("value", 0.0), shape, base_dir)
    if kind == "expression":
        return _expression_kernel(value.get("expr", 0.0), shape)
    if kind == "fractional":
        if "c" not in value or "H" not in value:
            raise ConfigError("fractional kernel needs c and H")
        mod = _entries(value.get("modulation", 1.0), shape, {"t": np.zeros(())})
        return FractionalConvolution(float(value["c"]), float(value["H"]), mod)
    if kind == "tabulated":
        if "path" not in value:
            raise ConfigError("tabulated kernel needs a path")
        path = Path(value["path"])
        field = load_trifield(path if path.is_absolute() else base_dir / path)
        if field.values.shape[2:] != shape:
            raise ConfigError(f"tabulated kernel has shape {field.values.shape[2:]}, expected {shape}")
        return Tabulated(field.values)
    if kind == "sum":
        return Sum([kernel_spec(t, shape, base_dir) for t in value["terms"]])
    raise ConfigError(f"unknown kernel type {kind!r}")


def _has_string(value) -> bool:
    if isinstance(value, list):
        return any(_has_string(v) for v in value)
    return isinstance(value, str)


# -- config object ---------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """Everything a command needs on one grid."""

    grid: TimeGrid
    kernels: object
    strat: Strategy
    inp: InputCondition
    Q: Optional[QuadraticWeights]
    data: Optional[DualityData]


class ExperimentConfig:
    """Validated experiment description.

    Parameters
    ----------
    raw : dict
        Parsed config mapping; validated against :data:`SCHEMA`.
    base_dir : Path
        Directory against which relative tabulated-kernel paths resolve.
    """

    def __init__(self, raw: dict, base_dir=None):
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        self.raw = copy.deepcopy(raw)
        self.base_dir = Path(base_dir) if base_dir is not None else Path(".")
        g = raw["grid"]
        if not g["T"] > g["t0"]:
            raise ConfigError("grid: T must exceed t0")
        if raw["input"].get("start", 0) > g["N"]:
            raise ConfigError("input: start lies beyond the grid")
        try:
            self.kernel_set()
        except (KernelError, GridError) as exc:
            raise ConfigError(f"kernels: {exc}") from None

    # serialization
    @classmethod
    def from_text(cls, text: str, base_dir=None) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return cls(raw, base_dir)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        return cls.from_text(text, path.parent)

    def to_text(self, fmt: str = "yaml") -> str:
        if fmt == "json":
            return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"
        return yaml.safe_dump(self.raw, sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.raw == other.raw

    # accessors
    @property
    def N(self) -> int:
        return int(self.raw["grid"]["N"])

    @property
    def d(self) -> int:
        return int(self.raw["dims"]["d"])

    @property
    def l(self) -> int:
        return int(self.raw["dims"]["l"])

    @property
    def has_weights(self) -> bool:
        return "weights" in self.raw

    @property
    def has_duality(self) -> bool:
        return "duality" in self.raw

    def mc(self, seed: Optional[int] = None) -> McConfig:
        m = {"n_paths": 1000, "seed": 0, "batch_size": 1024, "antithetic": False}
        m.update(self.raw.get("mc", {}))
        if seed is not None:
            m["seed"] = seed
        try:
            return McConfig(**m)
        except ValueError as exc:
            raise ConfigError(f"mc: {exc}") from None

    @property
    def output_dir(self) -> Path:
        return Path(self.raw.get("output", {}).get("dir", "."))

    @property
    def formats(self):
        return tuple(self.raw.get("output", {}).get("formats", ["csv", "txt"]))

    def grid(self, N: Optional[int] = None) -> TimeGrid:
        g = self.raw["grid"]
        return TimeGrid(float(g["t0"]), float(g["T"]), int(N or g["N"]))

    def start(self, N: Optional[int] = None) -> int:
        """Start index, scaled along with refinement of the grid."""
        s = int(self.raw["input"].get("start", 0))
        return s * (N or self.N) // self.N

    def kernel_set(self) -> KernelSet:
        k, d, l, base = self.raw["kernels"], self.d, self.l, self.base_dir
        zero = {"type": "zero"}
        return KernelSet(
            A=kernel_spec(k["A"], (d, d), base), B=kernel_spec(k.get("B", zero), (d, l), base),
            C=kernel_spec(k["C"], (d, d), base), D=kernel_spec(k.get("D", zero), (d, l), base),
            b=kernel_spec(k.get("b", zero), (d, 1), base),
            sigma=kernel_spec(k.get("sigma", zero), (d, 1), base),
        )

    def build(self, N: Optional[int] = None) -> Instance:
        """Sample every section on the grid with ``N`` steps (default from the file)."""
        grid = self.grid(N)
        d, l, base = self.d, self.l, self.base_dir
        kernels = self.kernel_set().sample(grid)
        s = self.raw.get("strategy", {})
        Xi = node_values(s.get("Xi", 0.0), (l, d), grid)
        Gamma = sample_kernel(kernel_spec(s.get("Gamma", {"type": "zero"}), (l, d), base), grid)
        v = node_values(s.get("v", 0.0), (l,), grid)
        strat = Strategy(Xi, Gamma, v)
        inp = InputCondition(self.start(grid.N), node_values(self.raw["input"]["x"], (d,), grid))
        Q = data = None
        if self.has_weights:
            w = self.raw["weights"]
            Q1 = node_values(w.get("Q1", 0.0), (d, d), grid)
            Q2 = sample_kernel(kernel_spec(w.get("Q2", {"type": "zero"}), (d, d), base), grid)
            Q3 = self._pyramid(w.get("Q3", 0.0), grid)
            Q = QuadraticWeights(Q1, Q2, Q3)
        if self.has_duality:
            du = self.raw["duality"]
            psi = node_values(du.get("psi", 0.0), (d,), grid)
            chi = sample_kernel(kernel_spec(du.get("chi", {"type": "zero"}), (d, 1), base), grid)
            data = DualityData(psi, TriField(chi.values[..., 0]))
        return Instance(grid, kernels, strat, inp, Q, data)

    def _pyramid(self, value, grid: TimeGrid) -> PyrTensor:
        t = grid.nodes
        T, S, R = np.meshgrid(t, t, t, indexing="ij")
        vals = _entries(value, (self.d, self.d), {"t": T, "s": S, "r": R})
        return PyrTensor(vals, symmetric=True)
