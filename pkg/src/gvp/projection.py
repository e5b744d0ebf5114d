"""Energy-metric projection onto nonnegative cones (discrete balayage), equilibrium
measures, capacities and Green energies.

All three problems reduce to the same nonnegative quadratic program over the target
nodes T,

    minimize  1/2 w^T Q w - c^T w   subject to  w >= 0,      Q = G[T, T],

with c = G[T, :] v for the projection of a signed vector v and c = 1 for the
equilibrium measure.  It is solved by a Lawson-Hanson active-set method working
directly on Q (never forming a factor of the full metric).
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .energy import EnergyContext, _sqrt_checked
from .measures import DiscreteMeasure, SignedMeasure

KKT_RTOL = 1e-8
COMPLEMENTARITY_RTOL = 1e-8


class ProjectionError(RuntimeError):
    """Active-set solver did not reach the KKT conditions."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class NnlsResult:
    w: np.ndarray
    passive: np.ndarray
    gradient: np.ndarray
    iterations: int
    converged: bool


class _FactorCache:
    """Cholesky factors of principal submatrices keyed by the passive mask."""

    def __init__(self, Q: np.ndarray, maxsize: int = 4):
        self.Q = Q
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()

    def factor(self, mask: np.ndarray):
        key = mask.tobytes()
        f = self._store.get(key)
        if f is None:
            idx = np.flatnonzero(mask)
            f = (idx, cho_factor(self.Q[np.ix_(idx, idx)], lower=True))
            self._store[key] = f
            if len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        else:
            self._store.move_to_end(key)
        return f

    def solve(self, mask: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        idx, f = self.factor(mask)
        return cho_solve(f, rhs[idx])


def nnls_gram(
    Q: np.ndarray,
    c: np.ndarray,
    tol: float,
    passive0: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
    cache: Optional[_FactorCache] = None,
) -> NnlsResult:
    """Minimize 1/2 w'Qw - c'w over w >= 0 (Q symmetric positive definite).

    Entering index: most negative gradient among the zero set, ties to the lowest
    index.  ``passive0`` warm-starts the passive set; indices whose unconstrained
    value is not positive are dropped until the warm start is feasible.
    Exit when every zero-set gradient is >= -tol.
    """
    n = len(c)
    if cache is None:
        cache = _FactorCache(Q)
    if max_iter is None:
        max_iter = 10 * n + 10
    w = np.zeros(n)
    P = np.zeros(n, dtype=bool)
    if passive0 is not None and passive0.any():
        P = passive0.copy()
        while P.any():
            z = cache.solve(P, c)
            if np.all(z > 0):
                w[P] = z
                break
            P[np.flatnonzero(P)[z <= 0]] = False

    it = 0
    blocked = -1
    while True:
        grad = Q[:, P] @ w[P] - c if P.any() else -c.copy()
        Z = ~P
        if blocked >= 0:
            Z[blocked] = False
        if not Z.any():
            break
        gz = np.where(Z, grad, np.inf)
        j = int(np.argmin(gz))
        if gz[j] >= -tol:
            break
        if it >= max_iter:
            return NnlsResult(w, P, grad, it, False)
        it += 1
        P[j] = True
        z = cache.solve(P, c)
        inner = 0
        while np.any(z <= 0) and inner <= n:
            inner += 1
            idx = np.flatnonzero(P)
            neg = np.flatnonzero(z <= 0)
            wi = w[idx]
            ratios = wi[neg] / (wi[neg] - z[neg])
            k = int(np.argmin(ratios))
            w[idx] = wi + ratios[k] * (z - wi)
            w[idx[neg[k]]] = 0.0
            drop = idx[w[idx] <= 0]
            w[drop] = 0.0
            P[drop] = False
            if not P.any():
                break
            z = cache.solve(P, c)
        w[:] = 0.0
        if P.any():
            w[P] = np.maximum(z, 0.0)
        # numerical degeneracy: the entering index left immediately; do not pick it again
        blocked = j if not P[j] else -1
    grad = Q[:, P] @ w[P] - c if P.any() else -c.copy()
    return NnlsResult(w, P, grad, it, True)


@dataclass
class ProjectionResult:
    projected: DiscreteMeasure
    target: np.ndarray
    distance: float
    kkt_residuals: np.ndarray
    complementarity_residual: float
    iterations: int
    converged: bool
    kkt_tol: float
    swept_mass: float = 0.0
    mass_bound: Optional[float] = None
    mass_bound_ok: Optional[bool] = None
    passive: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.projected.weights

    def kkt_ok(self) -> bool:
        w = self.weights
        r = self.kkt_residuals
        return bool(
            np.all(r >= -self.kkt_tol)
            and np.all(np.abs(r[w > 0]) <= self.kkt_tol)
        )


class ConeProjector:
    """Reusable projector onto the nonnegative cone over fixed target nodes.

    Keeps the last passive set and a small cache of Cholesky factors so repeated
    projections of nearby measures (as in the auxiliary solver) are cheap.
    """

    def __init__(self, ctx: EnergyContext, target: np.ndarray, max_iterations: Optional[int] = None):
        self.ctx = ctx
        self.target = np.asarray(target, dtype=np.intp)
        if self.target.size == 0:
            raise ValueError("target node set is empty")
        self.Q = np.ascontiguousarray(ctx.gram[np.ix_(self.target, self.target)])
        self.GT = np.ascontiguousarray(ctx.gram[self.target, :])
        self.cache = _FactorCache(self.Q)
        self.last_passive: Optional[np.ndarray] = None
        self.max_iterations = max_iterations if max_iterations is not None else 10 * len(self.target)

    def project_vector(self, v: np.ndarray, kkt_tol: Optional[float] = None, warm: bool = True) -> ProjectionResult:
        ctx = self.ctx
        Gv_T = self.GT @ v
        nv2 = float(v @ (ctx.gram @ v))
        norm_v = math.sqrt(max(nv2, 0.0))
        if kkt_tol is None:
            kkt_tol = KKT_RTOL * (1.0 + norm_v)
        passive0 = self.last_passive if warm and self.last_passive is not None else np.ones(len(self.target), dtype=bool)
        res = nnls_gram(
            self.Q, Gv_T, tol=0.1 * kkt_tol, passive0=passive0,
            max_iter=self.max_iterations, cache=self.cache,
        )
        self.last_passive = res.passive.copy()
        w = np.where(res.w > 0, res.w, 0.0)
        kkt = res.gradient  # kappa(x_j, P nu - nu) at target nodes
        r = v - self.lift(w)
        d2 = float(r @ (ctx.gram @ r))
        comp = -float(w @ kkt)
        out = ProjectionResult(
            projected=DiscreteMeasure(w, ctx.form.nodes[self.target]),
            target=self.target,
            distance=_sqrt_checked(d2),
            kkt_residuals=kkt,
            complementarity_residual=comp,
            iterations=res.iterations,
            converged=res.converged,
            kkt_tol=kkt_tol,
            swept_mass=float(w.sum()),
            passive=res.passive,
        )
        if not res.converged:
            raise ProjectionError(
                f"active-set projection did not converge in {res.iterations} iterations "
                f"(min KKT residual {kkt.min():.3e})",
                out,
            )
        return out

    def lift(self, w: np.ndarray) -> np.ndarray:
        """Global vector of a measure given by weights on the target nodes."""
        v = np.zeros(self.ctx.size)
        v[self.target] = w
        return v


def _as_vector(ctx: EnergyContext, nu: Union[SignedMeasure, np.ndarray]) -> np.ndarray:
    if isinstance(nu, SignedMeasure):
        return ctx.signed_vector(nu)
    v = np.asarray(nu, dtype=float)
    if v.shape != (ctx.size,):
        raise ValueError("global vector has the wrong length")
    return v


def project_onto_cone(
    ctx: EnergyContext,
    nu: Union[SignedMeasure, np.ndarray],
    target_nodes,
    kkt_tol: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> ProjectionResult:
    """Nearest nonnegative measure on ``target_nodes`` to ``nu`` in the energy metric."""
    v = _as_vector(ctx, nu)
    proj = ConeProjector(ctx, np.asarray(target_nodes, dtype=np.intp), max_iterations)
    return proj.project_vector(v, kkt_tol=kkt_tol, warm=False)


def balayage(
    ctx: EnergyContext,
    nu: Union[SignedMeasure, np.ndarray],
    plate: int,
    kkt_tol: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> ProjectionResult:
    """Sweep ``nu`` onto plate ``plate``; also reports swept mass against h * nu^+(X)."""
    v = _as_vector(ctx, nu)
    target = ctx.plate_index[plate]
    if np.any(v[target] != 0.0):
        raise ValueError("balayage source has atoms on the target plate")
    res = project_onto_cone(ctx, v, target, kkt_tol, max_iterations)
    h = ctx.kernel.max_principle_h
    if h is not None:
        res.mass_bound = h * float(v[v > 0].sum())
        res.mass_bound_ok = res.swept_mass <= res.mass_bound * (1 + 1e-6)
    return res


@dataclass
class EquilibriumResult:
    measure: DiscreteMeasure
    capacity: float
    energy: float
    potential_at_nodes: np.ndarray
    iterations: int
    target: np.ndarray

    def identity_ok(self, rtol: float = 1e-8) -> bool:
        return abs(self.capacity - self.energy) <= rtol * max(abs(self.capacity), 1e-300)


def equilibrium_measure(
    ctx: EnergyContext,
    target_nodes,
    tol: float = 1e-10,
    max_iterations: Optional[int] = None,
) -> EquilibriumResult:
    """Minimum-energy nonnegative measure on the target with potential >= 1 there.

    Solved as min 1/2 w'Qw - 1'w, w >= 0, whose KKT conditions are exactly
    Qw >= 1 on the target with equality on the support; hence theta(X) = ||theta||^2.
    """
    target = np.asarray(target_nodes, dtype=np.intp)
    if target.size == 0:
        raise ValueError("target node set is empty")
    Q = ctx.gram[np.ix_(target, target)]
    n = len(target)
    res = nnls_gram(
        Q, np.ones(n), tol=tol, passive0=np.ones(n, dtype=bool),
        max_iter=max_iterations if max_iterations is not None else 10 * n,
    )
    if not res.converged:
        raise ProjectionError("equilibrium active-set solve did not converge")
    w = np.where(res.w > 0, res.w, 0.0)
    pot = Q @ w
    return EquilibriumResult(
        measure=DiscreteMeasure(w, ctx.form.nodes[target]),
        capacity=float(w.sum()),
        energy=float(w @ pot),
        potential_at_nodes=pot,
        iterations=res.iterations,
        target=target,
    )


def capacity(ctx: EnergyContext, target_nodes, **kw) -> float:
    return equilibrium_measure(ctx, target_nodes, **kw).capacity


def green_energy(ctx: EnergyContext, nu: Union[SignedMeasure, np.ndarray], plate: int, **kw) -> float:
    """||nu - P nu||^2 with P the projection onto the plate's cone."""
    v = _as_vector(ctx, nu)
    if np.any(v[ctx.plate_index[plate]] != 0.0):
        raise ValueError("green_energy source has atoms on the plate")
    if not np.any(v):
        return 0.0
    return project_onto_cone(ctx, v, ctx.plate_index[plate], **kw).distance ** 2
