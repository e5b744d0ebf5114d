"""Riesz kernels and the regularized Gram matrix defining the discrete energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor
from scipy.spatial.distance import cdist

RIDGE_START = 1e-12
RIDGE_MAX = 1e-3
DEFAULT_SIGMA = 0.5


class IllConditionedError(RuntimeError):
    """The PD guard needed a ridge beyond the allowed cap."""


class DuplicateNodeError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Riesz kernel |x - y|**(alpha - dim) with maximum-principle constant ``h``."""

    alpha: float
    dim: int
    h: Optional[float] = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not 0 < self.alpha < self.dim:
            raise ValueError(f"alpha must lie in (0, {self.dim}), got {self.alpha}")
        if self.h is not None and self.h < 1:
            raise ValueError("maximum-principle constant h must be >= 1")

    @property
    def exponent(self) -> float:
        return self.alpha - self.dim

    @property
    def max_principle_h(self) -> Optional[float]:
        """h, defaulting to 1 (Frostman) for alpha <= 2; None when unknown."""
        if self.h is not None:
            return float(self.h)
        return 1.0 if self.alpha <= 2 else None

    def require_h(self) -> float:
        h = self.max_principle_h
        if h is None:
            raise ValueError(
                f"alpha = {self.alpha} > 2: supply the maximum-principle constant h explicitly"
            )
        return h

    def of_distance(self, r):
        """Kernel as a function of distance; r = 0 maps to +inf."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(r > 0, np.power(np.where(r > 0, r, 1.0), self.exponent), math.inf)
        return out if out.ndim else float(out)


def evaluate(kernel: KernelSpec, x, y) -> float:
    """kappa_alpha(x, y); +inf when x == y."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    return math.inf if r == 0.0 else r**kernel.exponent


@dataclass(frozen=True, eq=False)
class EnergyForm:
    """Symmetric positive definite Gram matrix over a global node list."""

    gram: np.ndarray
    nodes: np.ndarray
    kernel: KernelSpec
    ridge: float
    cholesky_ok: bool
    sigma: float
    _factor: tuple = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def cho(self):
        return self._factor


def assemble_gram(
    kernel: KernelSpec,
    nodes,
    nn_dist,
    sigma: float = DEFAULT_SIGMA,
    ridge_max: float = RIDGE_MAX,
) -> EnergyForm:
    """Build the energy Gram matrix with diagonal (sigma * d_i)**(alpha - n).

    Off-diagonal entries are exact kernel values.  If Cholesky fails, a ridge
    eps * trace / N is added with eps escalating by 10x from 1e-12 up to ``ridge_max``.
    """
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    pts = np.atleast_2d(np.asarray(nodes, dtype=float))
    d = np.asarray(nn_dist, dtype=float)
    if pts.shape[1] != kernel.dim:
        raise ValueError(f"nodes live in R^{pts.shape[1]}, kernel expects R^{kernel.dim}")
    if np.any(d <= 0):
        raise DuplicateNodeError("nearest-neighbour distances must be positive")
    r = cdist(pts, pts)
    off = r[~np.eye(len(pts), dtype=bool)]
    if off.size and off.min() == 0.0:
        i, j = np.argwhere((r == 0.0) & ~np.eye(len(pts), dtype=bool))[0]
        raise DuplicateNodeError(f"duplicate nodes {i} and {j}")
    np.fill_diagonal(r, 1.0)
    G = np.power(r, kernel.exponent)
    G[np.diag_indices_from(G)] = (sigma * d) ** kernel.exponent
    G = 0.5 * (G + G.T)

    ridge = 0.0
    eps = RIDGE_START
    scale = float(np.trace(G)) / len(G)
    while True:
        try:
            A = G if ridge == 0.0 else G + ridge * np.eye(len(G))
            factor = cho_factor(A, lower=True)
            G = A
            break
        except LinAlgError:
            if eps > ridge_max * (1 + 1e-9):
                raise IllConditionedError(
                    f"ridge escalation exceeded {ridge_max:g}: ill-conditioned discretization"
                )
            ridge = eps * scale
            eps *= 10.0
    G.setflags(write=False)
    pts.setflags(write=False)
    return EnergyForm(G, pts, kernel, ridge, True, sigma, factor)
