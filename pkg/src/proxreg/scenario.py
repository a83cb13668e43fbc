"""YAML scenario files: parsing, validation and the bundled scenario library."""

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ProxRegError, ValidationError
from .geometry import set_from_dict
from .references import build_reference
from .solver import (
    IntegratorConfig,
    affine_field,
    constant_field,
    push_pull_field,
    rotation_field,
    spiral_field,
    zero_field,
)

TASKS = ("simulate", "certify", "invariance", "observe", "equivalence", "convergence", "lure")
DEFAULT_SEED = 42


@dataclass
class Scenario:
    name: str
    seed: int
    set: object
    field: object
    initial: np.ndarray
    config: IntegratorConfig
    task: dict
    reference: object = None
    source: str = None
    raw: dict = field(default_factory=dict)

    @property
    def task_type(self):
        return self.task["type"]


def _line_map(text):
    """Line numbers (1-based) of top-level keys and of keys one level down."""
    lines = {}
    root = yaml.compose(text)
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, value in root.value:
        lines[key.value] = key.start_mark.line + 1
        if isinstance(value, yaml.MappingNode):
            for sub, _ in value.value:
                lines[f"{key.value}.{sub.value}"] = sub.start_mark.line + 1
    return lines


def build_field(block, dim):
    """Field from ``{builtin: name, ...params}`` or ``{affine: {A: ..., b: ...}}``."""
    if "affine" in block:
        spec = block["affine"]
        return affine_field(spec["A"], spec.get("b"))
    name = block.get("builtin")
    params = {k: v for k, v in block.items() if k != "builtin"}
    if name == "zero":
        return zero_field(dim)
    if name == "constant":
        return constant_field(params["c"])
    if name == "rotation":
        return rotation_field(**params)
    if name == "spiral":
        return spiral_field(**params)
    if name == "linear":
        return affine_field(params["A"])
    if name == "push_pull":
        return push_pull_field(dim, **params)
    raise ValueError(f"unknown builtin field {name!r}")


def _where(lines, key):
    return f" (line {lines[key]})" if key in lines else ""


def build_scenario(data, lines=None, source=None):
    """Validate a parsed mapping and assemble a Scenario."""
    lines = lines or {}
    for key in ("name", "set", "initial", "integrator", "task"):
        if key not in data:
            raise ValidationError(key, "missing required block")
    task = data["task"]
    if isinstance(task, str):
        task = {"type": task}
    if task.get("type") not in TASKS:
        raise ValidationError("task", f"type must be one of {TASKS}{_where(lines, 'task')}")

    try:
        set_ = set_from_dict(data["set"])
    except (KeyError, TypeError, ValueError, ProxRegError) as exc:
        raise ValidationError("set", f"{exc}{_where(lines, 'set')}") from exc

    is_lure = task["type"] == "lure"
    try:
        x0 = np.atleast_1d(np.asarray(data["initial"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ValidationError("initial", f"not a vector{_where(lines, 'initial')}") from exc
    if x0.ndim != 1 or not np.all(np.isfinite(x0)):
        raise ValidationError("initial", f"not a finite vector{_where(lines, 'initial')}")

    if is_lure:
        dim = np.atleast_2d(task["A"]).shape[0]
        if x0.size != dim:
            raise ValidationError("initial", f"dimension {x0.size} != system dimension {dim}")
        Dx = np.atleast_2d(np.asarray(task["D"], dtype=float)) @ x0
        if Dx.size != set_.dim:
            raise ValidationError("task", "D does not map into the constraint space")
        if not set_.contains(Dx):
            raise ValidationError("initial", f"D x0 is not in S{_where(lines, 'initial')}")
        f = None
    else:
        dim = set_.dim
        if x0.size != dim:
            raise ValidationError("initial", f"dimension {x0.size} != set dimension {dim}"
                                  f"{_where(lines, 'initial')}")
        if not set_.contains(x0):
            raise ValidationError("initial", f"x0 = {x0.tolist()} is not in the set"
                                  f"{_where(lines, 'initial')}")
        if "field" not in data:
            raise ValidationError("field", "missing required block")
        try:
            f = build_field(data["field"], dim)
            probe = f(x0)
        except (KeyError, TypeError, ValueError, ProxRegError) as exc:
            raise ValidationError("field", f"{exc}{_where(lines, 'field')}") from exc
        if probe.shape != (dim,):
            raise ValidationError("field", f"field returns shape {probe.shape}, expected ({dim},)")

    integ = data["integrator"]
    try:
        h, T = float(integ["h"]), float(integ["T"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("integrator", f"needs numeric h and T{_where(lines, 'integrator')}") from exc
    if h > T:
        raise ValidationError("integrator", f"h = {h:g} exceeds T = {T:g}{_where(lines, 'integrator')}")
    try:
        cfg = IntegratorConfig(h, T, integ.get("scheme", "catching_up"))
    except ValueError as exc:
        raise ValidationError("integrator", f"{exc}{_where(lines, 'integrator')}") from exc

    reference = None
    if "reference" in data:
        try:
            reference = build_reference(data["reference"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("reference", f"{exc}{_where(lines, 'reference')}") from exc

    return Scenario(str(data["name"]), int(data.get("seed", DEFAULT_SEED)), set_, f, x0, cfg,
                    task, reference, None if source is None else str(source), data)


def parse_scenario(path):
    """Read and validate a scenario file."""
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else 0
        raise ParseError(line, exc.problem or str(exc)) from exc
    if not isinstance(data, dict):
        raise ParseError(1, "top level must be a mapping")
    return build_scenario(data, _line_map(text), path)


def bundled_dir():
    return Path(str(resources.files("proxreg") / "scenarios"))


def bundled_scenarios():
    """Paths of the scenario files shipped with the package, sorted by name."""
    return sorted(bundled_dir().glob("*.yaml"))


def resolve(name_or_path):
    """A path as given, or the bundled scenario with that stem."""
    p = Path(name_or_path)
    if p.exists():
        return p
    candidate = bundled_dir() / f"{p.stem}.yaml"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no scenario file {name_or_path!r}")
