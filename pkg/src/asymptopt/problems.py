"""Problem files, the bundled corpus and run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .asymptotic import AsymConfig
from .expr import ExprError, VectorObjective, from_json
from .geometry import Box, GeometryError, GridSpec, Polyhedron, PolyUnion

BUNDLED = ("example-3.1", "example-4.1", "example-4.2", "sqrt-abs")


class ProblemError(ValueError):
    """Invalid problem or configuration input."""


def _data(name: str):
    return resources.files("asymptopt").joinpath("data", name)


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        _SCHEMA = json.loads(_data("problem.schema.json").read_text())
    return _SCHEMA


@dataclass
class ProblemSpec:
    name: str
    n: int
    m: int
    objectives: list
    feasible_set: list
    closed_form: str | None = None
    alpha: float | None = None
    grid: dict | None = None
    description: str | None = None

    def objective(self) -> VectorObjective:
        return VectorObjective(tuple(from_json(o, self.n) for o in self.objectives))

    def feasible(self) -> PolyUnion:
        return PolyUnion(tuple(Polyhedron.from_json(p, self.n) for p in self.feasible_set))

    def to_json(self) -> dict:
        out = {"name": self.name, "n": self.n, "m": self.m, "objectives": self.objectives,
               "feasible_set": self.feasible_set}
        for key in ("description", "closed_form", "alpha", "grid"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


def _pointer(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def problem_from_dict(obj) -> ProblemSpec:
    errors = sorted(jsonschema.Draft202012Validator(schema()).iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ProblemError(f"schema error at {_pointer(e)}: {e.message}")
    m = obj.get("m", len(obj["objectives"]))
    if m != len(obj["objectives"]):
        raise ProblemError(f"m = {m} but {len(obj['objectives'])} objectives given")
    spec = ProblemSpec(obj["name"], obj["n"], m, obj["objectives"], obj["feasible_set"], obj.get("closed_form"),
                       obj.get("alpha"), obj.get("grid"), obj.get("description"))
    # dimension and properness checks
    try:
        spec.objective()
        spec.feasible()
    except (ExprError, GeometryError) as exc:
        raise ProblemError(f"{type(exc).__name__}: {exc}") from exc
    if spec.grid is not None and len(spec.grid["box"]) != spec.n:
        raise ProblemError(f"grid box has {len(spec.grid['box'])} intervals, expected {spec.n}")
    return spec


def parse_problem(source) -> ProblemSpec:
    """Parse a problem from a path, a bundled id or an already loaded dict."""
    if isinstance(source, dict):
        return problem_from_dict(source)
    src = str(source)
    if src in BUNDLED:
        return problem_from_dict(json.loads(_data(f"problems/{src}.json").read_text()))
    path = Path(src)
    if not path.is_file():
        raise ProblemError(f"no such problem file or bundled id: {src}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON: {exc}") from exc
    return problem_from_dict(obj)


def load_bundled(name: str) -> ProblemSpec:
    if name not in BUNDLED:
        raise ProblemError(f"unknown bundled problem {name!r}")
    return parse_problem(name)


@dataclass
class RunConfig:
    """Grid, asymptotic, sweep and solver settings for one run."""

    box: list | None = None
    h: float | None = None
    asym: AsymConfig = field(default_factory=AsymConfig)
    radii: tuple = (0.4, 0.2, 0.1, 0.05, 0.025)
    directions: int = 8
    simplex_r: int = 20
    R_list: tuple = (3.0,)
    lambda_levels: tuple = (1.0,)
    seed: int = 0
    plots: bool = True

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ProblemError("grid step h must be positive")
        if self.simplex_r < 1 or self.directions < 1:
            raise ProblemError("simplex resolution and sweep directions must be >= 1")
        if any(r <= 0 for r in self.radii):
            raise ProblemError("sweep radii must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        grid = d.pop("grid", {}) or {}
        sweep = d.pop("sweep", {}) or {}
        asym = d.pop("asym", None)
        kw = {}
        for key in ("simplex_r", "seed", "plots"):
            if key in d:
                kw[key] = d.pop(key)
        if "R_list" in d:
            kw["R_list"] = tuple(float(r) for r in d.pop("R_list"))
        if "lambda_levels" in d:
            kw["lambda_levels"] = tuple(float(r) for r in d.pop("lambda_levels"))
        d.pop("out", None)
        if d:
            raise ProblemError(f"unknown config keys: {sorted(d)}")
        try:
            asym_cfg = AsymConfig.from_dict({"seed": kw.get("seed", 0), **(asym or {})})
        except (ValueError, TypeError) as exc:
            raise ProblemError(str(exc)) from exc
        return cls(box=grid.get("box"), h=grid.get("h"), asym=asym_cfg,
                   radii=tuple(float(r) for r in sweep.get("radii", cls.radii)),
                   directions=int(sweep.get("directions", cls.directions)), **kw)

    def grid_for(self, spec: ProblemSpec) -> GridSpec:
        default = spec.grid or {}
        box = self.box if self.box is not None else default.get("box")
        h = self.h if self.h is not None else default.get("h")
        if box is None or h is None:
            raise ProblemError("no grid given: set grid.box and grid.h in the config or the problem file")
        try:
            g = GridSpec(Box.from_bounds(box), float(h))
        except GeometryError as exc:
            raise ProblemError(str(exc)) from exc
        if g.dim != spec.n:
            raise ProblemError(f"grid box dimension {g.dim} != problem dimension {spec.n}")
        return g
