"""Discrete scalar, signed and vector measures on a condenser."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ShapeSpec

DEFAULT_MIN_GAP = 1e-6


class ValidationError(ValueError):
    """A named violation of the condenser invariants."""

    def __init__(self, name: str, message: str, path: str = ""):
        super().__init__(f"{name}: {message}")
        self.name = name
        self.message = message
        self.path = path


@dataclass(frozen=True, eq=False)
class Plate:
    nodes: np.ndarray
    sign: int
    shape: Optional[ShapeSpec] = None
    unbounded: bool = False
    truncation_radius: Optional[float] = None

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Finite atomic signed measure: positions (k, n) and signed weights (k,)."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        pos = np.asarray(self.positions, dtype=float)
        if pos.size == 0:
            pos = pos.reshape(0, pos.shape[-1] if pos.ndim == 2 else 0)
        else:
            pos = np.atleast_2d(pos)
        if len(pos) != len(w):
            raise ValueError("positions and weights differ in length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, dim: int) -> "SignedMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self):
        return len(self.weights)

    @property
    def positive(self) -> "SignedMeasure":
        keep = self.weights > 0
        return SignedMeasure(self.positions[keep], self.weights[keep])

    @property
    def negative(self) -> "SignedMeasure":
        """Negative part, carried with nonnegative (magnitude) weights."""
        keep = self.weights < 0
        return SignedMeasure(self.positions[keep], -self.weights[keep])

    def total(self) -> float:
        return float(self.weights.sum())

    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def to_json(self) -> list:
        return [
            {"position": [float(c) for c in p], "weight": float(w)}
            for p, w in zip(self.positions, self.weights)
        ]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weights aligned with a node list; ``plate_index`` None means free."""

    weights: np.ndarray
    nodes: np.ndarray
    plate_index: Optional[int] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("discrete measure weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    def mass(self) -> float:
        return float(self.weights.sum())

    def to_json(self) -> dict:
        return {"plate_index": self.plate_index, "weights": [float(x) for x in self.weights]}


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """One nonnegative weight array per plate."""

    components: tuple

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        for c in comps:
            if np.any(c < 0):
                raise ValueError("vector measure components must be nonnegative")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, condenser: "Condenser") -> "VectorMeasure":
        return cls(tuple(np.zeros(len(p)) for p in condenser.plates))

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __add__(self, other: "VectorMeasure") -> "VectorMeasure":
        return VectorMeasure(tuple(a + b for a, b in zip(self.components, other.components)))

    def scale(self, c: float) -> "VectorMeasure":
        if c < 0:
            raise ValueError("vector measures scale by nonnegative factors only")
        return VectorMeasure(tuple(c * a for a in self.components))

    def masses(self) -> np.ndarray:
        return np.array([c.sum() for c in self.components])

    def to_json(self) -> list:
        return [
            {"plate_index": i, "weights": [float(x) for x in c]}
            for i, c in enumerate(self.components)
        ]


@dataclass(frozen=True, eq=False)
class Condenser:
    plates: tuple
    a: np.ndarray
    g_values: tuple
    chi: SignedMeasure
    min_gap: float = DEFAULT_MIN_GAP
    g_bounded: bool = True

    def __post_init__(self):
        object.__setattr__(self, "plates", tuple(self.plates))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1))
        object.__setattr__(
            self, "g_values", tuple(np.asarray(g, dtype=float).reshape(-1) for g in self.g_values)
        )

    @classmethod
    def build(cls, plates, a, chi=None, g_values=None, **kw) -> "Condenser":
        plates = tuple(plates)
        if g_values is None:
            g_values = tuple(np.ones(len(p)) for p in plates)
        if chi is None:
            dim = plates[0].nodes.shape[1] if plates else 3
            chi = SignedMeasure.empty(dim)
        return cls(plates, a, g_values, chi, **kw)

    @property
    def dim(self) -> int:
        return self.plates[0].nodes.shape[1]

    @property
    def signs(self) -> np.ndarray:
        return np.array([p.sign for p in self.plates], dtype=int)

    @property
    def positive_plates(self) -> list:
        return [i for i, p in enumerate(self.plates) if p.sign > 0]

    @property
    def negative_plates(self) -> list:
        return [i for i, p in enumerate(self.plates) if p.sign < 0]

    @property
    def unbounded_plates(self) -> list:
        return [i for i, p in enumerate(self.plates) if p.unbounded]

    @property
    def g_inf(self) -> float:
        return float(min(g.min() for g in self.g_values))

    @property
    def g_sup(self) -> float:
        return float(max(g.max() for g in self.g_values))

    def with_plate(self, i: int, plate: Plate, g: Optional[np.ndarray] = None) -> "Condenser":
        plates = list(self.plates)
        plates[i] = plate
        gs = list(self.g_values)
        gs[i] = np.ones(len(plate)) if g is None else g
        return Condenser(plates, self.a, gs, self.chi, self.min_gap, self.g_bounded)

    def with_a(self, a) -> "Condenser":
        return Condenser(self.plates, a, self.g_values, self.chi, self.min_gap, self.g_bounded)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    failure: Optional[str] = None
    message: str = ""

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationError(self.failure, self.message)


def _min_distance(p, q) -> float:
    if len(p) == 0 or len(q) == 0:
        return np.inf
    d, _ = cKDTree(q).query(p, k=1)
    return float(np.min(d))


def validate(condenser: Condenser) -> ValidationReport:
    """Check every condenser invariant; report the first one violated."""

    def fail(name, msg):
        return ValidationReport(False, name, msg)

    c = condenser
    if len(c.plates) == 0:
        return fail("empty_plates", "a condenser needs at least one plate")
    for i, p in enumerate(c.plates):
        if p.sign not in (1, -1):
            return fail("sign_invalid", f"plate {i} has sign {p.sign}")
        if len(p) == 0:
            return fail("plate_without_nodes", f"plate {i} has no nodes")
        if p.nodes.shape[1] != c.dim:
            return fail("dimension_mismatch", f"plate {i} nodes are not in R^{c.dim}")
    if len(c.a) != len(c.plates):
        return fail("a_length_mismatch", f"{len(c.a)} charges for {len(c.plates)} plates")
    bad = np.flatnonzero(~(c.a > 0) | ~np.isfinite(c.a))
    if bad.size:
        return fail("a_positive_violated", f"a[{bad[0]}] = {c.a[bad[0]]} is not > 0")
    if len(c.g_values) != len(c.plates):
        return fail("g_shape_mismatch", "one g array per plate required")
    for i, (p, g) in enumerate(zip(c.plates, c.g_values)):
        if len(g) != len(p):
            return fail("g_shape_mismatch", f"plate {i}: {len(g)} g values for {len(p)} nodes")
    if not c.g_inf > 0:
        return fail("g_inf_not_positive", f"g_inf = {c.g_inf}")
    pos = [c.plates[i].nodes for i in c.positive_plates]
    neg = [c.plates[i].nodes for i in c.negative_plates]
    a_plus = np.concatenate(pos) if pos else np.zeros((0, c.dim))
    a_minus = np.concatenate(neg) if neg else np.zeros((0, c.dim))
    gap = _min_distance(a_plus, a_minus)
    if gap < c.min_gap:
        return fail("plates_not_separated", f"dist(A+, A-) = {gap:g} < min_gap {c.min_gap:g}")
    if len(c.chi) and c.chi.positions.shape[1] != c.dim:
        return fail("dimension_mismatch", "chi atoms are not in the ambient space")
    if _min_distance(c.chi.positive.positions, a_minus) < c.min_gap:
        return fail("chi_plus_meets_negative_plates", "a chi+ atom lies on a negative plate")
    if _min_distance(c.chi.negative.positions, a_plus) < c.min_gap:
        return fail("chi_minus_meets_positive_plates", "a chi- atom lies on a positive plate")
    for i, p in enumerate(c.plates):
        if p.unbounded and p.sign > 0:
            return fail("unbounded_plate_not_negative", f"plate {i} is flagged unbounded but positive")
        if p.unbounded and p.truncation_radius is None:
            return fail("truncation_missing", f"unbounded plate {i} has no truncation radius")
    return ValidationReport(True)


def r_map(condenser: Condenser, mu: VectorMeasure) -> SignedMeasure:
    """Signed measure sum_i sign_i * mu^i, accumulating atoms at shared positions."""
    if len(mu) != len(condenser.plates):
        raise ValueError(f"{len(mu)} components for {len(condenser.plates)} plates")
    acc: dict = {}
    order = []
    for p, w in zip(condenser.plates, mu.components):
        if len(w) != len(p):
            raise ValueError("component length does not match plate node count")
        for x, wi in zip(p.nodes, w):
            if wi == 0.0:
                continue
            key = tuple(x)
            if key not in acc:
                acc[key] = 0.0
                order.append(key)
            acc[key] += p.sign * wi
    if not order:
        return SignedMeasure.empty(condenser.dim)
    return SignedMeasure(np.array(order), np.array([acc[k] for k in order]))


def g_moment(condenser: Condenser, mu: VectorMeasure, i: int) -> float:
    """<g, mu^i>."""
    return float(np.dot(condenser.g_values[i], mu.components[i]))
