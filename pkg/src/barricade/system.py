"""Dynamical systems, regions, and the on-disk problem format.

A system is the tuple (state space X, dynamics f, initial set X_I, unsafe
set X_U), continuous- or discrete-time, optionally with control inputs
that a synthesized feedback law will later substitute away.

Problem files are JSON documents:

    {
      "name": "...",
      "time_domain": "continuous" | "discrete",
      "state_vars": ["x1", ...],
      "control_vars": ["u0", ...],            # may be empty/omitted
      "dynamics": ["<expression>", ...],      # one per state var
      "state_space":  <region>,
      "initial_set":  <region>,
      "unsafe_set":   <region>
    }

where <region> is one of
    {"type": "ball", "center": [...], "radius": r}
    {"type": "rect", "lo": [...], "hi": [...]}
    {"type": "union_rects", "members": [<rect>, ...]}
    {"type": "complement_ball", "center": [...], "radius": r}
    {"type": "all"}
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import jsonschema
import numpy as np

from .expr import Expression, classify, parse_expression, to_string, variables

__all__ = [
    "Ball",
    "Rect",
    "UnionOfRects",
    "ComplementOfBall",
    "All",
    "Region",
    "DynamicalSystem",
    "ProblemFeatures",
    "SystemError",
    "region_dim",
    "region_contains",
    "region_bounding_box",
    "region_to_dict",
    "region_from_dict",
    "describe_region",
    "parse_system",
    "load_system",
    "system_to_document",
    "save_system",
    "extract_features",
    "CONTINUOUS",
    "DISCRETE",
]

CONTINUOUS = "continuous"
DISCRETE = "discrete"


class SystemError(Exception):
    """Invalid system document or region use."""


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise SystemError("ball radius must be positive")


@dataclass(frozen=True)
class Rect:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise SystemError("rect lo/hi dimension mismatch")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise SystemError("rect requires lo_i <= hi_i")


@dataclass(frozen=True)
class UnionOfRects:
    members: tuple[Rect, ...]

    def __post_init__(self):
        if not self.members:
            raise SystemError("union of rects must be nonempty")
        dims = {len(m.lo) for m in self.members}
        if len(dims) != 1:
            raise SystemError("union members must share a dimension")


@dataclass(frozen=True)
class ComplementOfBall:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise SystemError("ball radius must be positive")


@dataclass(frozen=True)
class All:
    dim: int


Region = Union[Ball, Rect, UnionOfRects, ComplementOfBall, All]


def region_dim(r: Region) -> int:
    match r:
        case Ball(center, _) | ComplementOfBall(center, _):
            return len(center)
        case Rect(lo, _):
            return len(lo)
        case UnionOfRects(members):
            return len(members[0].lo)
        case All(dim):
            return dim
    raise TypeError(f"not a region: {r!r}")


def region_contains(r: Region, point: Sequence[float]) -> bool:
    """Closed-set membership; balls use the Euclidean norm."""
    if len(point) != region_dim(r):
        raise SystemError(
            f"point dimension {len(point)} does not match region dimension {region_dim(r)}"
        )
    match r:
        case Ball(center, radius):
            return _sqdist(point, center) <= radius * radius
        case ComplementOfBall(center, radius):
            return _sqdist(point, center) >= radius * radius
        case Rect(lo, hi):
            return all(l <= p <= h for p, l, h in zip(point, lo, hi))
        case UnionOfRects(members):
            return any(region_contains(m, point) for m in members)
        case All(_):
            return True
    raise TypeError(f"not a region: {r!r}")


def _sqdist(p: Sequence[float], c: Sequence[float]) -> float:
    return sum((pi - ci) ** 2 for pi, ci in zip(p, c))


def region_bounding_box(r: Region) -> Rect | None:
    """Tight axis-aligned bounding box, or None for unbounded regions."""
    match r:
        case Ball(center, radius):
            return Rect(
                tuple(c - radius for c in center), tuple(c + radius for c in center)
            )
        case Rect(_, _):
            return r
        case UnionOfRects(members):
            lo = tuple(min(m.lo[i] for m in members) for i in range(len(members[0].lo)))
            hi = tuple(max(m.hi[i] for m in members) for i in range(len(members[0].lo)))
            return Rect(lo, hi)
        case ComplementOfBall(_, _) | All(_):
            return None
    raise TypeError(f"not a region: {r!r}")


def region_to_dict(r: Region) -> dict:
    match r:
        case Ball(center, radius):
            return {"type": "ball", "center": list(center), "radius": radius}
        case Rect(lo, hi):
            return {"type": "rect", "lo": list(lo), "hi": list(hi)}
        case UnionOfRects(members):
            return {
                "type": "union_rects",
                "members": [region_to_dict(m) for m in members],
            }
        case ComplementOfBall(center, radius):
            return {"type": "complement_ball", "center": list(center), "radius": radius}
        case All(_):
            return {"type": "all"}
    raise TypeError(f"not a region: {r!r}")


def region_from_dict(d: Mapping, dim: int | None = None) -> Region:
    kind = d.get("type")
    if kind == "ball":
        return Ball(tuple(float(v) for v in d["center"]), float(d["radius"]))
    if kind == "rect":
        return Rect(tuple(float(v) for v in d["lo"]), tuple(float(v) for v in d["hi"]))
    if kind == "union_rects":
        return UnionOfRects(tuple(region_from_dict(m) for m in d["members"]))
    if kind == "complement_ball":
        return ComplementOfBall(tuple(float(v) for v in d["center"]), float(d["radius"]))
    if kind == "all":
        if dim is None:
            raise SystemError("region 'all' needs a dimension from context")
        return All(dim)
    raise SystemError(f"unknown region type {kind!r}")


def describe_region(r: Region) -> str:
    """Human/prompt-oriented one-line description."""
    match r:
        case Ball(center, radius):
            return f"ball with center {list(center)} and radius {radius}"
        case Rect(lo, hi):
            return " x ".join(f"[{l}, {h}]" for l, h in zip(lo, hi))
        case UnionOfRects(members):
            return " union ".join(f"({describe_region(m)})" for m in members)
        case ComplementOfBall(center, radius):
            return f"complement of the ball with center {list(center)} and radius {radius}"
        case All(dim):
            return f"R^{dim}"
    raise TypeError(f"not a region: {r!r}")


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicalSystem:
    name: str
    time_domain: str
    state_vars: tuple[str, ...]
    control_vars: tuple[str, ...]
    dynamics: tuple[Expression, ...]
    state_space: Region
    initial_set: Region
    unsafe_set: Region

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def controlled(self) -> bool:
        return bool(self.control_vars)

    def dynamics_text(self) -> str:
        lhs = "d{}/dt" if self.time_domain == CONTINUOUS else "{}'"
        return ", ".join(
            f"{lhs.format(v)} = {to_string(f)}"
            for v, f in zip(self.state_vars, self.dynamics)
        )


_REGION_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "ball"},
                "center": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "center", "radius"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "rect"},
                "lo": {"type": "array", "items": {"type": "number"}},
                "hi": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type", "lo", "hi"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "union_rects"},
                "members": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"$ref": "#/$defs/rect"},
                },
            },
            "required": ["type", "members"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "complement_ball"},
                "center": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "center", "radius"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "all"}},
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

SYSTEM_SCHEMA = {
    "$defs": {
        "rect": {
            "type": "object",
            "properties": {
                "type": {"const": "rect"},
                "lo": {"type": "array", "items": {"type": "number"}},
                "hi": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type", "lo", "hi"],
            "additionalProperties": False,
        },
        "region": _REGION_SCHEMA,
    },
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "time_domain": {"enum": [CONTINUOUS, DISCRETE]},
        "state_vars": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "control_vars": {"type": "array", "items": {"type": "string"}},
        "dynamics": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "state_space": {"$ref": "#/$defs/region"},
        "initial_set": {"$ref": "#/$defs/region"},
        "unsafe_set": {"$ref": "#/$defs/region"},
    },
    "required": [
        "name",
        "time_domain",
        "state_vars",
        "dynamics",
        "state_space",
        "initial_set",
        "unsafe_set",
    ],
    "additionalProperties": False,
}

#: Points sampled when warning about overlapping initial/unsafe sets.
_DISJOINTNESS_SAMPLES = 500


def parse_system(document: str | Mapping) -> DynamicalSystem:
    """Parse and validate a system document (JSON text or mapping).

    Raises :class:`SystemError` on schema violations (with the JSON path),
    dimension mismatches, and unknown variables in the dynamics.  Emits a
    warning, not an error, if random sampling finds a point lying in both
    the initial and the unsafe set.
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SystemError(f"not valid JSON: {exc}") from None
    else:
        doc = dict(document)

    try:
        jsonschema.validate(doc, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SystemError(f"schema violation at {path}: {exc.message}") from None

    state_vars = tuple(doc["state_vars"])
    control_vars = tuple(doc.get("control_vars", ()))
    n = len(state_vars)
    if len(set(state_vars + control_vars)) != n + len(control_vars):
        raise SystemError("state/control variable names must be distinct")
    if len(doc["dynamics"]) != n:
        raise SystemError(
            f"dimension mismatch: {len(doc['dynamics'])} dynamics entries for {n} state vars"
        )

    allowed = state_vars + control_vars
    dynamics = tuple(parse_expression(text, allowed) for text in doc["dynamics"])

    regions = {}
    for field in ("state_space", "initial_set", "unsafe_set"):
        region = region_from_dict(doc[field], dim=n)
        if region_dim(region) != n:
            raise SystemError(
                f"dimension mismatch: {field} has dimension {region_dim(region)}, expected {n}"
            )
        regions[field] = region

    s = DynamicalSystem(
        name=doc["name"],
        time_domain=doc["time_domain"],
        state_vars=state_vars,
        control_vars=control_vars,
        dynamics=dynamics,
        state_space=regions["state_space"],
        initial_set=regions["initial_set"],
        unsafe_set=regions["unsafe_set"],
    )
    _warn_if_overlapping(s)
    return s


def _warn_if_overlapping(s: DynamicalSystem) -> None:
    # The theory assumes X_I and X_U are disjoint; check by sampling only,
    # since overlap merely makes a certificate impossible, not the input
    # malformed.
    from .sampler import sample_region  # deferred: sampler imports this module

    box = region_bounding_box(s.initial_set)
    if box is None:
        return
    try:
        pts = sample_region(s.initial_set, _DISJOINTNESS_SAMPLES, seed=0, fallback_box=box)
    except Exception:
        return
    for p in pts:
        if region_contains(s.unsafe_set, p):
            warnings.warn(
                f"system '{s.name}': sampled point {tuple(p)} lies in both the "
                "initial and the unsafe set; no barrier certificate can exist",
                stacklevel=3,
            )
            return


def load_system(path: str | Path) -> DynamicalSystem:
    return parse_system(Path(path).read_text(encoding="utf-8"))


def system_to_document(s: DynamicalSystem) -> dict:
    return {
        "name": s.name,
        "time_domain": s.time_domain,
        "state_vars": list(s.state_vars),
        "control_vars": list(s.control_vars),
        "dynamics": [to_string(f) for f in s.dynamics],
        "state_space": region_to_dict(s.state_space),
        "initial_set": region_to_dict(s.initial_set),
        "unsafe_set": region_to_dict(s.unsafe_set),
    }


def save_system(s: DynamicalSystem, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(system_to_document(s), indent=2) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Feature extraction for retrieval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemFeatures:
    dimension: int
    time_domain: str
    is_linear: bool
    controlled: bool
    init_topology: str
    unsafe_topology: str

    def key(self) -> tuple:
        return (
            self.dimension,
            self.time_domain,
            self.is_linear,
            self.controlled,
            self.init_topology,
            self.unsafe_topology,
        )


def _topology(r: Region, role: str) -> str:
    match r:
        case Ball(_, _):
            return "ball"
        case Rect(_, _):
            return "rect"
        case UnionOfRects(_):
            # An initial set given as a union still belongs to the rectangle
            # family for matching purposes.
            return "rect" if role == "init" else "union_rects"
        case ComplementOfBall(_, _):
            if role == "init":
                raise SystemError("complement-of-ball initial sets are not supported")
            return "complement_ball"
        case All(_):
            raise SystemError(f"'all' is not a valid {role} set topology")
    raise TypeError(f"not a region: {r!r}")


def extract_features(s: DynamicalSystem) -> ProblemFeatures:
    """Deterministic retrieval features of a system.

    Linearity means every dynamics component is a polynomial of degree
    at most one in the state and control variables.
    """
    is_linear = all(
        (info := classify(f)).is_polynomial and info.degree <= 1 for f in s.dynamics
    )
    return ProblemFeatures(
        dimension=s.n,
        time_domain=s.time_domain,
        is_linear=is_linear,
        controlled=s.controlled,
        init_topology=_topology(s.initial_set, "init"),
        unsafe_topology=_topology(s.unsafe_set, "unsafe"),
    )
