"""Deterministic point-cloud discretizations of condenser plates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

SHAPE_KINDS = ("sphere_shell", "ball", "segment", "rotational_body")
PROFILE_KINDS = ("power", "exponential")

# Surface tolerance promised for every generated point.
SURFACE_TOL = 1e-10
MIN_RING_NODES = 8


class GeometryError(ValueError):
    """Invalid shape specification or degenerate point set."""


class DuplicatePointError(GeometryError):
    def __init__(self, i: int, j: int):
        super().__init__(f"duplicate points at indices {i} and {j}")
        self.pair = (i, j)


@dataclass(frozen=True)
class ProfileSpec:
    """Cross-section radius of a rotational body as a function of the axial coordinate.

    ``power``: rho(r) = r**(-s), s >= 0.  ``exponential``: rho(r) = exp(-r**s), s > 0.
    """

    kind: str
    s: float

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise GeometryError(f"unknown profile kind {self.kind!r}")
        if self.kind == "power" and self.s < 0:
            raise GeometryError("power profile needs s >= 0")
        if self.kind == "exponential" and self.s <= 0:
            raise GeometryError("exponential profile needs s > 0")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return r ** (-self.s)
        return np.exp(-(r**self.s))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return -self.s * r ** (-self.s - 1.0)
        return -self.s * r ** (self.s - 1.0) * np.exp(-(r**self.s))

    @property
    def regime(self) -> str:
        """Thinness classification of the infinite body, taken as metadata."""
        if self.kind == "power":
            return "not_thin"
        if self.s <= 1.0:
            return "thin_infinite_capacity"
        return "finite_capacity"


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    node_count: int
    dim: int = 3
    seed: int = 0
    center: Optional[tuple] = None
    radius: Optional[float] = None
    endpoints: Optional[tuple] = None
    q: Optional[float] = None
    profile: Optional[ProfileSpec] = None
    truncation_radius: Optional[float] = None
    # Axial ring spacing hint for rotational bodies; honoured when it yields node_count exactly.
    ring_spacing: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise GeometryError(f"unknown shape kind {self.kind!r}")
        if self.node_count < 1:
            raise GeometryError("node_count must be >= 1")
        if self.dim < 2:
            raise GeometryError("ambient dimension must be >= 2")
        if self.kind in ("sphere_shell", "ball"):
            if self.center is None or self.radius is None:
                raise GeometryError(f"{self.kind} needs center and radius")
            if len(self.center) != self.dim:
                raise GeometryError(
                    f"center has dimension {len(self.center)}, ambient is {self.dim}"
                )
            if self.radius <= 0:
                raise GeometryError("radius must be > 0")
        elif self.kind == "segment":
            if self.endpoints is None or len(self.endpoints) != 2:
                raise GeometryError("segment needs two endpoints")
            if any(len(p) != self.dim for p in self.endpoints):
                raise GeometryError("segment endpoint dimension mismatch")
        else:
            if self.dim != 3:
                raise GeometryError("rotational bodies live in R^3")
            if self.q is None or self.profile is None or self.truncation_radius is None:
                raise GeometryError("rotational_body needs q, profile and truncation_radius")
            if self.q <= 0:
                raise GeometryError("rotational_body offset q must be > 0")
            if self.truncation_radius <= self.q:
                raise GeometryError("truncation_radius must exceed q")
            if self.ring_spacing is not None and self.ring_spacing <= 0:
                raise GeometryError("ring_spacing must be > 0")

    def contains(self, points, tol: float = SURFACE_TOL) -> np.ndarray:
        """Boolean mask of points satisfying the shape's defining relation."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "sphere_shell":
            r = np.linalg.norm(pts - np.asarray(self.center), axis=1)
            return np.abs(r - self.radius) <= tol * max(1.0, self.radius)
        if self.kind == "ball":
            r = np.linalg.norm(pts - np.asarray(self.center), axis=1)
            return r <= self.radius * (1 + tol)
        if self.kind == "segment":
            p0, p1 = (np.asarray(p, dtype=float) for p in self.endpoints)
            d = p1 - p0
            L2 = float(d @ d)
            t = np.zeros(len(pts)) if L2 == 0 else (pts - p0) @ d / L2
            foot = p0 + np.outer(np.clip(t, 0, 1), d)
            return (np.linalg.norm(pts - foot, axis=1) <= tol) & (t >= -tol) & (t <= 1 + tol)
        x1 = pts[:, 0]
        rad2 = pts[:, 1] ** 2 + pts[:, 2] ** 2
        inside = (x1 >= self.q - tol) & (x1 <= self.truncation_radius + tol)
        rho = self.profile(np.clip(x1, self.q, None))
        return inside & (np.abs(rad2 - rho**2) <= tol)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Unit-sphere Fibonacci spiral in R^3."""
    k = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _unit_sphere(count: int, dim: int, seed: int) -> np.ndarray:
    if dim == 2:
        t = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if dim == 3:
        return fibonacci_sphere(count)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _ball(shape: ShapeSpec) -> np.ndarray:
    rng = np.random.default_rng(shape.seed)
    out = []
    need = shape.node_count
    while need > 0:
        cand = rng.uniform(-1.0, 1.0, size=(max(2 * need, 16), shape.dim))
        cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
        out.append(cand[:need])
        need -= len(out[-1])
    pts = np.concatenate(out)
    return np.asarray(shape.center, dtype=float) + shape.radius * pts


def ring_positions(q: float, R: float, spacing: float) -> np.ndarray:
    m = int(math.floor((R - q) / spacing + 1e-9)) + 1
    return q + spacing * np.arange(m)


def ring_counts(profile: ProfileSpec, x: np.ndarray, spacing: float) -> np.ndarray:
    # ceil keeps the in-ring chord strictly below the axial spacing
    circ = 2 * math.pi * profile(x)
    return np.maximum(MIN_RING_NODES, np.ceil(circ / spacing - 1e-12)).astype(int)


def natural_ring_count(profile: ProfileSpec, q: float, R: float, spacing: float) -> int:
    """Node count of the fixed-spacing ring layout on [q, R]."""
    return int(ring_counts(profile, ring_positions(q, R, spacing), spacing).sum())


def _rings_to_points(profile, x, counts) -> np.ndarray:
    rho = profile(x)
    blocks = []
    for r, (xr, k) in enumerate(zip(x, counts)):
        # alternate rings are rotated by half a step
        t = 2 * math.pi * (np.arange(k) + 0.5 * (r % 2)) / k
        blocks.append(np.column_stack([np.full(k, xr), rho[r] * np.cos(t), rho[r] * np.sin(t)]))
    return np.concatenate(blocks)


def _rotational_body(shape: ShapeSpec) -> np.ndarray:
    prof, q, R, N = shape.profile, shape.q, shape.truncation_radius, shape.node_count
    if shape.ring_spacing is not None:
        if natural_ring_count(prof, q, R, shape.ring_spacing) == N:
            x = ring_positions(q, R, shape.ring_spacing)
            return _rings_to_points(prof, x, ring_counts(prof, x, shape.ring_spacing))
    if N < 2 * MIN_RING_NODES:
        # too few nodes for two full rings
        x = np.array([q])
        return _rings_to_points(prof, x, np.array([N]))
    # largest spacing-driven layout not exceeding N, leftovers go to the widest rings
    lo, hi = 1e-6, (R - q)
    if natural_ring_count(prof, q, R, hi) > N:
        m = max(2, N // MIN_RING_NODES)
        x = np.linspace(q, R, m)
        counts = np.full(m, N // m)
    else:
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if natural_ring_count(prof, q, R, mid) > N:
                lo = mid
            else:
                hi = mid
            if hi / lo < 1 + 1e-12:
                break
        x = ring_positions(q, R, hi)
        counts = ring_counts(prof, x, hi)
    extra = N - int(counts.sum())
    order = np.argsort(-prof(x), kind="stable")
    i = 0
    while extra > 0:
        counts[order[i % len(order)]] += 1
        extra -= 1
        i += 1
    return _rings_to_points(prof, x, counts)


def generate_nodes(shape: ShapeSpec) -> np.ndarray:
    """Return exactly ``shape.node_count`` points on/in ``shape`` as an (N, dim) array.

    Sphere shells use a spiral layout (no randomness); balls use seeded rejection
    sampling; rotational bodies are sampled on the lateral surface only, with rings
    uniformly spaced along the axis.
    """
    if shape.kind == "sphere_shell":
        pts = np.asarray(shape.center, dtype=float) + shape.radius * _unit_sphere(
            shape.node_count, shape.dim, shape.seed
        )
    elif shape.kind == "ball":
        pts = _ball(shape)
    elif shape.kind == "segment":
        p0, p1 = (np.asarray(p, dtype=float) for p in shape.endpoints)
        if shape.node_count == 1:
            t = np.array([0.5])
        else:
            t = np.linspace(0.0, 1.0, shape.node_count)
        pts = p0 + np.outer(t, p1 - p0)
    else:
        pts = _rotational_body(shape)
    assert pts.shape == (shape.node_count, shape.dim)
    return pts


def lateral_area(profile: ProfileSpec, q: float, R: float, samples: int = 4001) -> float:
    """Surface area of the body's lateral surface between x1 = q and x1 = R."""
    x = np.linspace(q, R, samples)
    integrand = 2 * math.pi * profile(x) * np.sqrt(1 + profile.derivative(x) ** 2)
    return float(trapezoid(integrand, x))


def nearest_neighbor_distances(points) -> np.ndarray:
    """Distance from each point to its nearest distinct neighbour.

    Raises DuplicatePointError (carrying the offending index pair) if two points coincide.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise GeometryError("need at least 2 points")
    dist, idx = cKDTree(pts).query(pts, k=2)
    d = dist[:, 1]
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        i = int(zero[0])
        # the tree may return i itself in slot 1 when a duplicate sits in slot 0
        j = int(idx[i, 1]) if idx[i, 1] != i else int(idx[i, 0])
        raise DuplicatePointError(min(i, j), max(i, j))
    return d
