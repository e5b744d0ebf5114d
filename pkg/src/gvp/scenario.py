"""Scenario files: strict JSON schema, defaulting, and conversion to a Condenser.

A scenario is plain JSON.  Unknown keys are rejected.  ``normalized`` echoes the
scenario with every default filled in; parsing that echo again reproduces the same
condenser exactly.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .geometry import GeometryError, ProfileSpec, ShapeSpec, generate_nodes, natural_ring_count
from .kernel import KernelSpec
from .measures import Condenser, Plate, SignedMeasure, validate

SPEC_VERSION = "1"
DEFAULT_RING_SPACING = 0.5
DEFAULT_NODE_CAP = 2000

_num = {"type": "number"}
_point = {"type": "array", "items": _num, "minItems": 1}
_atom = {
    "type": "object",
    "additionalProperties": False,
    "required": ["position", "weight"],
    "properties": {"position": _point, "weight": _num},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kernel", "plates", "a"],
    "properties": {
        "spec_version": {"type": "string", "enum": [SPEC_VERSION]},
        "seed": {"type": "integer"},
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha", "dim"],
            "properties": {
                "alpha": _num,
                "dim": {"type": "integer", "minimum": 2},
                "h": {"type": ["number", "null"]},
            },
        },
        "plates": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["shape", "sign"],
                "properties": {
                    "sign": {"type": "integer"},
                    "node_count": {"oneOf": [{"type": "integer"}, {"const": "auto"}]},
                    "unbounded": {"type": "boolean"},
                    "truncation_radius": {"type": ["number", "null"]},
                    "shape": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["sphere_shell", "ball", "segment", "rotational_body"]},
                            "center": _point,
                            "radius": _num,
                            "endpoints": {"type": "array", "items": _point, "minItems": 2, "maxItems": 2},
                            "q": _num,
                            "profile": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["kind", "s"],
                                "properties": {"kind": {"enum": ["power", "exponential"]}, "s": _num},
                            },
                            "seed": {"type": "integer"},
                            "ring_spacing": {"type": ["number", "null"]},
                        },
                    },
                },
            },
        },
        "chi": {"type": "array", "items": _atom},
        "a": {"type": "array", "items": _num},
        "g": {
            "oneOf": [
                {"type": "string", "pattern": r"^constant:[-+0-9.eE]+$"},
                {"type": "array", "items": {"type": "array", "items": _num}},
            ]
        },
        "g_bounded": {"type": "boolean"},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gap_tol": _num,
                "max_iters": {"type": ["integer", "null"]},
                "sigma": _num,
                "ridge_max": _num,
                "kkt_rtol": _num,
                "verdict_rtol": _num,
                "min_gap": _num,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radii": {"type": "array", "items": _num},
                "window_radius": {"type": ["number", "null"]},
                "window_center": {"oneOf": [_point, {"type": "null"}]},
                "ring_spacing": _num,
                "node_cap": {"type": "integer", "minimum": 1},
                "ell": {"type": ["integer", "null"]},
                "a_ell_grid": {"type": "array", "items": _num},
            },
        },
        "project": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "plate": {"type": ["integer", "null"]},
                "nu": {"type": "array", "items": _atom},
            },
        },
        "equilibrium": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"plates": {"type": "array", "items": {"type": "integer"}}},
        },
        "diagnose": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"ell": {"type": ["integer", "null"]}},
        },
    },
}

SOLVER_DEFAULTS = {
    "gap_tol": 1e-9,
    "max_iters": None,
    "sigma": 0.5,
    "ridge_max": 1e-3,
    "kkt_rtol": 1e-8,
    "verdict_rtol": 1e-4,
    "min_gap": 1e-6,
}
SWEEP_DEFAULTS = {
    "radii": [],
    "window_radius": None,
    "window_center": None,
    "ring_spacing": DEFAULT_RING_SPACING,
    "node_cap": DEFAULT_NODE_CAP,
    "ell": None,
    "a_ell_grid": [],
}

# condenser validation failures and where they point in the scenario
_FAILURE_PATHS = {
    "a_length_mismatch": "$.a",
    "a_positive_violated": "$.a",
    "g_shape_mismatch": "$.g",
    "g_inf_not_positive": "$.g",
    "plates_not_separated": "$.plates",
    "chi_plus_meets_negative_plates": "$.chi",
    "chi_minus_meets_positive_plates": "$.chi",
    "dimension_mismatch": "$.plates",
    "empty_plates": "$.plates",
    "sign_invalid": "$.plates",
    "plate_without_nodes": "$.plates",
    "unbounded_plate_not_negative": "$.plates",
    "truncation_missing": "$.plates",
}


@dataclass(frozen=True)
class ScenarioIssue:
    name: str
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.name}: {self.message}"


class ScenarioError(ValueError):
    """Schema or validation failures, each carrying a JSON path."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def names(self):
        return [i.name for i in self.issues]


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass
class Scenario:
    """A parsed, defaulted and validated scenario."""

    data: dict
    kernel: KernelSpec
    condenser: Condenser
    seed: int

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def sweep(self) -> dict:
        return self.data["sweep"]

    @property
    def normalized(self) -> dict:
        return copy.deepcopy(self.data)

    def unbounded_plate(self) -> Optional[int]:
        L = self.condenser.unbounded_plates
        return L[0] if len(L) == 1 else None

    def condenser_at(self, R: float) -> Condenser:
        """The condenser with every unbounded plate truncated at R, node counts from the
        ring schedule (fixed axial spacing, at least 8 per ring, capped)."""
        d = copy.deepcopy(self.data)
        for p in d["plates"]:
            if p.get("unbounded"):
                p["truncation_radius"] = float(R)
                p["node_count"] = "auto"
        return _build(d, self.seed)[1]


def _fill_defaults(raw: dict, seed_override: Optional[int]) -> dict:
    d = copy.deepcopy(raw)
    d.setdefault("spec_version", SPEC_VERSION)
    if seed_override is not None:
        d["seed"] = int(seed_override)
    d.setdefault("seed", 0)
    d["kernel"].setdefault("h", None)
    d.setdefault("chi", [])
    d.setdefault("g", "constant:1")
    d.setdefault("g_bounded", True)
    d["solver"] = {**SOLVER_DEFAULTS, **d.get("solver", {})}
    d["sweep"] = {**SWEEP_DEFAULTS, **d.get("sweep", {})}
    d.setdefault("project", {})
    d["project"].setdefault("plate", None)
    d.setdefault("equilibrium", {})
    d.setdefault("diagnose", {})
    d["diagnose"].setdefault("ell", None)
    for p in d["plates"]:
        p.setdefault("unbounded", False)
        p.setdefault("truncation_radius", None)
        kind = p["shape"]["kind"]
        if kind == "rotational_body":
            p.setdefault("node_count", "auto")
            p["shape"].setdefault("ring_spacing", d["sweep"]["ring_spacing"])
        p["shape"].setdefault("seed", d["seed"])
    return d


def _shape_of(p: dict, dim: int, node_cap: int, path: str) -> ShapeSpec:
    s = p["shape"]
    kind = s["kind"]
    count = p.get("node_count")
    kw = dict(dim=dim, seed=s["seed"])
    if kind in ("sphere_shell", "ball"):
        kw.update(center=tuple(s.get("center", ())) or None, radius=s.get("radius"))
    elif kind == "segment":
        ep = s.get("endpoints")
        kw.update(endpoints=tuple(tuple(e) for e in ep) if ep else None)
    else:
        if "profile" not in s or "q" not in s:
            raise ScenarioError([ScenarioIssue("shape_invalid", path + ".shape", "rotational_body needs q and profile")])
        prof = ProfileSpec(s["profile"]["kind"], float(s["profile"]["s"]))
        R = p.get("truncation_radius")
        if R is None:
            raise ScenarioError([ScenarioIssue("truncation_missing", path + ".truncation_radius", "rotational_body needs a truncation radius")])
        spacing = s.get("ring_spacing") or DEFAULT_RING_SPACING
        if count in (None, "auto"):
            if R <= s["q"]:
                raise ScenarioError([ScenarioIssue("shape_invalid", path + ".truncation_radius", "truncation_radius must exceed q")])
            count = min(natural_ring_count(prof, s["q"], R, spacing), node_cap)
        kw.update(q=float(s["q"]), profile=prof, truncation_radius=float(R), ring_spacing=spacing)
    if count in (None, "auto"):
        raise ScenarioError([ScenarioIssue("node_count_missing", path + ".node_count", f"{kind} needs an integer node_count")])
    return ShapeSpec(kind, int(count), **kw)


def _build(d: dict, seed: int):
    issues = []
    try:
        kernel = KernelSpec(float(d["kernel"]["alpha"]), int(d["kernel"]["dim"]), d["kernel"]["h"])
    except ValueError as exc:
        raise ScenarioError([ScenarioIssue("kernel_invalid", "$.kernel", str(exc))])
    dim = kernel.dim
    for k, a in enumerate(d["a"]):
        if not a > 0:
            issues.append(ScenarioIssue("a_positive_violated", f"$.a[{k}]", f"a[{k}] = {a} is not > 0"))
    if issues:
        raise ScenarioError(issues)
    plates = []
    for k, p in enumerate(d["plates"]):
        path = f"$.plates[{k}]"
        if p["sign"] not in (1, -1):
            raise ScenarioError([ScenarioIssue("sign_invalid", path + ".sign", f"sign {p['sign']} is not +1 or -1")])
        if p["unbounded"] and p["shape"]["kind"] != "rotational_body":
            raise ScenarioError([ScenarioIssue(
                "unbounded_plate_not_rotational", path + ".shape.kind",
                "unbounded plates are represented by truncated rotational bodies")])
        try:
            shape = _shape_of(p, dim, d["sweep"]["node_cap"], path)
            nodes = generate_nodes(shape)
        except GeometryError as exc:
            raise ScenarioError([ScenarioIssue("shape_invalid", path + ".shape", str(exc))])
        R = p["truncation_radius"] if p["unbounded"] else None
        plates.append(Plate(nodes, p["sign"], shape, bool(p["unbounded"]), R))
    g = d["g"]
    if isinstance(g, str):
        val = float(re.match(r"^constant:(.*)$", g).group(1))
        g_values = tuple(np.full(len(p), val) for p in plates)
    else:
        g_values = tuple(np.asarray(x, dtype=float) for x in g)
    chi_atoms = d["chi"]
    if chi_atoms:
        for k, at in enumerate(chi_atoms):
            if len(at["position"]) != dim:
                raise ScenarioError([ScenarioIssue("dimension_mismatch", f"$.chi[{k}].position", f"atom is not in R^{dim}")])
        chi = SignedMeasure(np.array([at["position"] for at in chi_atoms], dtype=float),
                            np.array([at["weight"] for at in chi_atoms], dtype=float))
    else:
        chi = SignedMeasure.empty(dim)
    cond = Condenser(tuple(plates), np.asarray(d["a"], dtype=float), g_values, chi,
                     min_gap=float(d["solver"]["min_gap"]), g_bounded=bool(d["g_bounded"]))
    rep = validate(cond)
    if not rep.ok:
        raise ScenarioError([ScenarioIssue(rep.failure, _FAILURE_PATHS.get(rep.failure, "$"), rep.message)])
    return kernel, cond


def parse_scenario_dict(raw: dict, seed: Optional[int] = None) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError([ScenarioIssue("schema_violation", _json_path(e.absolute_path), e.message) for e in errors])
    d = _fill_defaults(raw, seed)
    kernel, cond = _build(d, d["seed"])
    return Scenario(d, kernel, cond, d["seed"])


def parse_scenario(path, seed: Optional[int] = None) -> Scenario:
    """Read, schema-check, default and validate a scenario file.

    Raises OSError for unreadable files and ScenarioError (with JSON paths) for
    malformed JSON, schema violations and condenser validation failures.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([ScenarioIssue("invalid_json", "$", str(exc))])
    return parse_scenario_dict(raw, seed)


def same_condenser(c1: Condenser, c2: Condenser) -> bool:
    """Exact equality of nodes, signs, charges, g samples and chi."""
    if len(c1.plates) != len(c2.plates):
        return False
    for p, q in zip(c1.plates, c2.plates):
        if p.sign != q.sign or p.unbounded != q.unbounded or not np.array_equal(p.nodes, q.nodes):
            return False
    return (
        np.array_equal(c1.a, c2.a)
        and all(np.array_equal(g, h) for g, h in zip(c1.g_values, c2.g_values))
        and np.array_equal(c1.chi.positions, c2.chi.positions)
        and np.array_equal(c1.chi.weights, c2.chi.weights)
    )
