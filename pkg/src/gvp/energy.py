"""Mutual energies, the Gauss functional, weighted potentials and the strong semimetric.

Everything is evaluated in one global index space: plate nodes first (positions shared
by several plates get a single index), then chi atoms not already present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import nearest_neighbor_distances
from .kernel import DEFAULT_SIGMA, RIDGE_MAX, EnergyForm, KernelSpec, assemble_gram
from .measures import Condenser, SignedMeasure, VectorMeasure, validate

# Tolerance policy for identity checks.
IDENTITY_RTOL = 1e-10
IDENTITY_ATOL = 1e-13
NEGATIVE_RADICAND_TOL = 1e-12


class UnindexedAtomError(KeyError):
    pass


class BrokenMetricError(ArithmeticError):
    """A squared distance came out clearly negative."""


def close(a: float, b: float, rtol: float = IDENTITY_RTOL, atol: float = IDENTITY_ATOL) -> bool:
    return abs(a - b) <= max(atol, rtol * max(abs(a), abs(b)))


@dataclass(frozen=True, eq=False)
class EnergyContext:
    form: EnergyForm
    condenser: Condenser
    plate_index: tuple
    chi_index: np.ndarray
    chi_vector: np.ndarray
    lookup: dict

    @classmethod
    def build(
        cls,
        condenser: Condenser,
        kernel: KernelSpec,
        sigma: float = DEFAULT_SIGMA,
        ridge_max: float = RIDGE_MAX,
        check: bool = True,
    ) -> "EnergyContext":
        if check:
            validate(condenser).raise_if_failed()
        lookup: dict = {}
        positions = []

        def index_of(x):
            key = tuple(float(c) for c in x)
            j = lookup.get(key)
            if j is None:
                j = len(positions)
                lookup[key] = j
                positions.append(key)
            return j

        plate_index = tuple(
            np.array([index_of(x) for x in p.nodes], dtype=np.intp) for p in condenser.plates
        )
        chi_index = np.array([index_of(x) for x in condenser.chi.positions], dtype=np.intp)
        nodes = np.array(positions, dtype=float)
        nn = nearest_neighbor_distances(nodes) if len(nodes) > 1 else np.ones(1)
        form = assemble_gram(kernel, nodes, nn, sigma=sigma, ridge_max=ridge_max)
        chi_vec = np.zeros(len(nodes))
        np.add.at(chi_vec, chi_index, condenser.chi.weights)
        chi_vec.setflags(write=False)
        return cls(form, condenser, plate_index, chi_index, chi_vec, lookup)

    @property
    def gram(self) -> np.ndarray:
        return self.form.gram

    @property
    def size(self) -> int:
        return self.form.size

    @property
    def kernel(self) -> KernelSpec:
        return self.form.kernel

    @property
    def signs(self) -> np.ndarray:
        return self.condenser.signs

    def plate_nodes_union(self, plates) -> np.ndarray:
        """Sorted unique global indices of the given plates."""
        if not len(plates):
            return np.zeros(0, dtype=np.intp)
        return np.unique(np.concatenate([self.plate_index[i] for i in plates]))

    # ---- conversions into the global index space

    def signed_vector(self, nu: SignedMeasure) -> np.ndarray:
        v = np.zeros(self.size)
        for x, w in zip(nu.positions, nu.weights):
            j = self.lookup.get(tuple(float(c) for c in x))
            if j is None:
                raise UnindexedAtomError(f"atom at {tuple(x)} is not a node of this context")
            v[j] += w
        return v

    def rmap_vector(self, mu: VectorMeasure) -> np.ndarray:
        if len(mu) != len(self.plate_index):
            raise ValueError("vector measure does not conform to the condenser")
        v = np.zeros(self.size)
        for idx, s, w in zip(self.plate_index, self.signs, mu.components):
            if len(w) != len(idx):
                raise ValueError("component length does not match plate node count")
            np.add.at(v, idx, s * w)
        return v

    def vector_to_signed(self, v: np.ndarray) -> SignedMeasure:
        nz = np.flatnonzero(v)
        return SignedMeasure(self.form.nodes[nz], v[nz])

    def quad(self, u: np.ndarray, v: Optional[np.ndarray] = None) -> float:
        v = u if v is None else v
        return float(u @ (self.gram @ v))


# ---- operations


def mutual_energy(ctx: EnergyContext, nu: SignedMeasure, nu1: SignedMeasure) -> float:
    """kappa(nu, nu1) = sum_ij w_i G_ij w1_j."""
    return ctx.quad(ctx.signed_vector(nu), ctx.signed_vector(nu1))


def energy_norm(ctx: EnergyContext, nu: SignedMeasure) -> float:
    return math.sqrt(max(mutual_energy(ctx, nu, nu), 0.0))


def vector_energy(ctx: EnergyContext, mu: VectorMeasure) -> float:
    """sum_{i,j} s_i s_j kappa(mu^i, mu^j), summed block by block."""
    G = ctx.gram
    total = 0.0
    for i, (ii, si, wi) in enumerate(zip(ctx.plate_index, ctx.signs, mu.components)):
        for jj, sj, wj in zip(ctx.plate_index, ctx.signs, mu.components):
            total += si * sj * float(wi @ G[np.ix_(ii, jj)] @ wj)
    return total


def gauss_value(ctx: EnergyContext, mu: VectorMeasure) -> float:
    """G_chi(mu) = ||R mu||^2 + 2 kappa(chi, R mu)."""
    r = ctx.rmap_vector(mu)
    Gr = ctx.gram @ r
    return float(r @ Gr + 2.0 * ctx.chi_vector @ Gr)


def gauss_value_shifted(ctx: EnergyContext, mu: VectorMeasure) -> float:
    """The same functional written as -||chi||^2 + ||chi + R mu||^2."""
    u = ctx.chi_vector + ctx.rmap_vector(mu)
    return ctx.quad(u) - ctx.quad(ctx.chi_vector)


def potential_at(ctx: EnergyContext, v: np.ndarray, eval_points) -> np.ndarray:
    """kappa(x, nu) for the global vector ``v``; regularized diagonal at node coincidences."""
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    nz = np.flatnonzero(v)
    if nz.size == 0:
        return np.zeros(len(pts))
    src = ctx.form.nodes[nz]
    r = cdist(pts, src)
    hit = r == 0.0
    with np.errstate(divide="ignore"):
        K = np.power(np.where(hit, 1.0, r), ctx.kernel.exponent)
    if hit.any():
        rows, cols = np.nonzero(hit)
        K[rows, cols] = ctx.gram[nz[cols], nz[cols]]
    return K @ v[nz]


def weighted_potential(ctx: EnergyContext, mu: VectorMeasure, i: int, eval_points) -> np.ndarray:
    """W^i_mu(x) = sign_i * kappa(x, chi + R mu)."""
    u = ctx.chi_vector + ctx.rmap_vector(mu)
    return ctx.signs[i] * potential_at(ctx, u, eval_points)


def weighted_potential_nodes(ctx: EnergyContext, mu: VectorMeasure) -> list:
    """W^i at the nodes of every plate i, read off the Gram matrix."""
    Gu = ctx.gram @ (ctx.chi_vector + ctx.rmap_vector(mu))
    return [s * Gu[idx] for idx, s in zip(ctx.plate_index, ctx.signs)]


def _sqrt_checked(x: float) -> float:
    if x < -NEGATIVE_RADICAND_TOL:
        raise BrokenMetricError(f"negative squared distance {x:g}")
    return math.sqrt(max(x, 0.0))


def strong_distance(ctx: EnergyContext, mu1: VectorMeasure, mu2: VectorMeasure) -> float:
    """||R mu1 - R mu2|| in the energy metric."""
    d = ctx.rmap_vector(mu1) - ctx.rmap_vector(mu2)
    return _sqrt_checked(ctx.quad(d))


def strong_distance_double_sum(ctx: EnergyContext, mu1: VectorMeasure, mu2: VectorMeasure) -> float:
    """The same distance as the double sum over plate pairs of component differences."""
    G = ctx.gram
    total = 0.0
    diffs = [a - b for a, b in zip(mu1.components, mu2.components)]
    for ii, si, di in zip(ctx.plate_index, ctx.signs, diffs):
        for jj, sj, dj in zip(ctx.plate_index, ctx.signs, diffs):
            total += si * sj * float(di @ G[np.ix_(ii, jj)] @ dj)
    return _sqrt_checked(total)
