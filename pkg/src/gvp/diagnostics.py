"""Solvability diagnostics: the threshold Sigma_l, exhaustion sweeps over truncation
radii, the coarse nonsolvability bound and the solvable-cone scan.

Discrete problems always have a minimizer; nonsolvability of the continuum problem
is only visible as a trend across growing truncations of the unbounded plate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import EnergyContext
from .kernel import KernelSpec
from .measures import Condenser, DiscreteMeasure
from .projection import project_onto_cone
from .solver import SolveReport, SolverOptions, solve_auxiliary, solve_gauss

VERDICT_RTOL = 1e-4
SOLVABLE = "solvable"
NONSOLVABLE = "nonsolvable"
BOUNDARY = "boundary"
OUTSIDE = "outside_characterized_region"


class DiagnosticsError(ValueError):
    pass


def verdict_for(a_ell: float, sigma_ell: float, rtol: float = VERDICT_RTOL) -> str:
    """Three-way verdict; the boundary band takes precedence over the strict sides."""
    tol = rtol * a_ell
    if abs(a_ell - sigma_ell) <= tol:
        return BOUNDARY
    return SOLVABLE if a_ell < sigma_ell else NONSOLVABLE


@dataclass
class SolvabilityReport:
    ell: int
    sigma_ell: float
    a_ell: float
    verdict: str
    aux_value: float
    swept_measure: DiscreteMeasure
    verdict_tol: float
    aux: Optional[SolveReport] = field(default=None, repr=False)
    multi: Optional[dict] = None

    def to_json(self) -> dict:
        out = {
            "ell": self.ell,
            "sigma_ell": self.sigma_ell,
            "a_ell": self.a_ell,
            "verdict": self.verdict,
            "verdict_tol": self.verdict_tol,
            "aux_value": self.aux_value,
            "swept_mass": self.swept_measure.mass(),
            "swept_measure": self.swept_measure.to_json(),
        }
        if self.multi is not None:
            out["multi"] = self.multi
        return out


def _check_nonint(ctx: EnergyContext, ell: int) -> None:
    own = set(int(j) for j in ctx.plate_index[ell])
    for i, idx in enumerate(ctx.plate_index):
        if i != ell and own.intersection(int(j) for j in idx):
            raise DiagnosticsError(f"plate {ell} shares nodes with plate {i}")
    if own.intersection(int(j) for j in ctx.chi_index):
        raise DiagnosticsError(f"an atom of chi sits on plate {ell}")


def _threshold_for(ctx: EnergyContext, L: Sequence[int], options: Optional[SolverOptions]):
    """Solve the auxiliary problem with J = I minus L; return (aux report, nu*, {l: projection})."""
    c = ctx.condenser
    J = [i for i in range(len(c.plates)) if i not in L]
    aux = solve_auxiliary(ctx, J, options)
    lam = aux.minimizer
    nu = ctx.chi_vector.copy()
    for i in J:
        np.add.at(nu, ctx.plate_index[i], c.plates[i].sign * lam.components[i])
    projections = {ell: project_onto_cone(ctx, nu, ctx.plate_index[ell]) for ell in L}
    return aux, nu, projections


def sigma_threshold(
    ctx: EnergyContext,
    ell: int,
    options: Optional[SolverOptions] = None,
    verdict_rtol: float = VERDICT_RTOL,
) -> SolvabilityReport:
    """Sigma_l = <g, P_l(chi + sum_{i != l} s_i lambda^i)> with lambda from the auxiliary
    problem in which plate l alone is unconstrained, and the verdict a_l vs Sigma_l.

    With two or more flagged unbounded plates the single-plate characterization does
    not apply; see ``multi_threshold``.
    """
    c = ctx.condenser
    if not 0 <= ell < len(c.plates):
        raise DiagnosticsError(f"no plate {ell}")
    if c.plates[ell].sign > 0:
        raise DiagnosticsError("the unconstrained plate must be negative")
    _check_nonint(ctx, ell)
    L = sorted(set(c.unbounded_plates) | {ell})
    if len(L) >= 2:
        return multi_threshold(ctx, L, options, verdict_rtol, focus=ell)
    aux, nu, proj = _threshold_for(ctx, [ell], options)
    pr = proj[ell]
    w = pr.weights
    sigma = float(c.g_values[ell] @ w)
    a_ell = float(c.a[ell])
    return SolvabilityReport(
        ell=ell,
        sigma_ell=sigma,
        a_ell=a_ell,
        verdict=verdict_for(a_ell, sigma, verdict_rtol),
        aux_value=aux.value,
        swept_measure=DiscreteMeasure(w, c.plates[ell].nodes, ell),
        verdict_tol=verdict_rtol * a_ell,
        aux=aux,
    )


def multi_threshold(
    ctx: EnergyContext,
    L: Sequence[int],
    options: Optional[SolverOptions] = None,
    verdict_rtol: float = VERDICT_RTOL,
    focus: Optional[int] = None,
) -> SolvabilityReport:
    """Necessary-condition check for several unconstrained plates.

    If a_l >= <g, lambda^l> for every l in L, the problem is solvable iff all of these
    are equalities (within the band).  If some a_l falls strictly below, the region is
    not characterized and the verdict says so.
    """
    c = ctx.condenser
    L = sorted(L)
    for ell in L:
        _check_nonint(ctx, ell)
    aux, nu, proj = _threshold_for(ctx, L, options)
    sig = {ell: float(c.g_values[ell] @ proj[ell].weights) for ell in L}
    bands = {ell: verdict_for(float(c.a[ell]), sig[ell], verdict_rtol) for ell in L}
    if any(b == SOLVABLE for b in bands.values()):
        verdict = OUTSIDE
    elif all(b == BOUNDARY for b in bands.values()):
        verdict = SOLVABLE
    else:
        verdict = NONSOLVABLE
    ell = L[0] if focus is None else focus
    return SolvabilityReport(
        ell=ell,
        sigma_ell=sig[ell],
        a_ell=float(c.a[ell]),
        verdict=verdict,
        aux_value=aux.value,
        swept_measure=DiscreteMeasure(proj[ell].weights, c.plates[ell].nodes, ell),
        verdict_tol=verdict_rtol * float(c.a[ell]),
        aux=aux,
        multi={"plates": L, "sigma": {str(k): v for k, v in sig.items()}, "bands": {str(k): v for k, v in bands.items()}},
    )


@dataclass(frozen=True)
class CoarseBound:
    bound: float
    triggered: bool
    g_bounded_caveat: str = "g_sup is taken over the finite node samples"


def coarse_bound_check(ctx: EnergyContext, ell: int) -> CoarseBound:
    """bound = h g_sup [chi^+(X) + 2 |a_CL| / g_inf]; triggered when a_l exceeds it."""
    c = ctx.condenser
    h = ctx.kernel.require_h()
    L = set(c.unbounded_plates) | {ell}
    a_cl = float(sum(c.a[i] for i in range(len(c.plates)) if i not in L))
    chi_plus = float(c.chi.weights[c.chi.weights > 0].sum())
    bound = h * c.g_sup * (chi_plus + 2.0 * a_cl / c.g_inf)
    return CoarseBound(bound, bool(c.a[ell] > bound))


# ---------------------------------------------------------------- sweeps


@dataclass
class ExhaustionRecord:
    R: float
    value: float
    aux_value: float
    sigma_ell: float
    a_ell: float
    window_mass: float
    verdict: str
    node_count: int = 0
    converged: bool = True
    error: Optional[str] = None

    CSV_COLUMNS = ("R", "value", "aux_value", "sigma_ell", "a_ell", "window_mass", "verdict")

    def csv_row(self) -> list:
        return [
            format(self.R, ".17g"),
            format(self.value, ".17g"),
            format(self.aux_value, ".17g"),
            format(self.sigma_ell, ".17g"),
            format(self.a_ell, ".17g"),
            format(self.window_mass, ".17g"),
            self.verdict,
        ]

    def to_json(self) -> dict:
        return {
            "R": self.R,
            "value": self.value,
            "aux_value": self.aux_value,
            "sigma_ell": self.sigma_ell,
            "a_ell": self.a_ell,
            "window_mass": self.window_mass,
            "verdict": self.verdict,
            "node_count": self.node_count,
            "converged": self.converged,
            "error": self.error,
        }


def exhaustion_sweep(
    condenser_at: Callable[[float], Condenser],
    kernel: KernelSpec,
    ell: int,
    radii: Sequence[float],
    window_radius: Optional[float] = None,
    window_center=None,
    options: Optional[SolverOptions] = None,
    sigma: float = 0.5,
    ridge_max: float = 1e-3,
    verdict_rtol: float = VERDICT_RTOL,
) -> list:
    """Solve the full and the auxiliary problem on each truncation of plate ``ell``.

    ``condenser_at(R)`` must return the condenser with plate ``ell`` truncated at R.
    The window is the ball of radius ``window_radius`` (default radii[0]) around
    ``window_center`` (default the origin), fixed across the sweep.  A failure at one
    radius is recorded and the sweep continues.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise DiagnosticsError("radii must be strictly increasing")
    wr = radii[0] if window_radius is None else float(window_radius)
    records = []
    for R in radii:
        try:
            c = condenser_at(R)
            ctx = EnergyContext.build(c, kernel, sigma=sigma, ridge_max=ridge_max)
            center = np.zeros(c.dim) if window_center is None else np.asarray(window_center, dtype=float)
            full = solve_gauss(ctx, options)
            rep = sigma_threshold(ctx, ell, options, verdict_rtol)
            nodes = c.plates[ell].nodes
            inside = np.linalg.norm(nodes - center, axis=1) <= wr
            wmass = float(full.minimizer.components[ell][inside].sum())
            records.append(ExhaustionRecord(
                R=R, value=full.value, aux_value=rep.aux_value, sigma_ell=rep.sigma_ell,
                a_ell=rep.a_ell, window_mass=wmass, verdict=rep.verdict,
                node_count=len(nodes), converged=bool(full.converged and rep.aux.converged),
            ))
        except Exception as exc:  # recorded, sweep continues
            records.append(ExhaustionRecord(
                R=R, value=math.nan, aux_value=math.nan, sigma_ell=math.nan,
                a_ell=math.nan, window_mass=math.nan, verdict="error",
                converged=False, error=f"{type(exc).__name__}: {exc}",
            ))
    return records


@dataclass
class ConeScan:
    ell: int
    sigma_ell: float
    a_source: float
    ratio: float
    grid: np.ndarray
    verdicts: list

    def to_json(self) -> dict:
        return {
            "ell": self.ell,
            "sigma_ell": self.sigma_ell,
            "a_source": self.a_source,
            "ratio": self.ratio,
            "grid": [float(x) for x in self.grid],
            "verdicts": list(self.verdicts),
        }


def solvable_cone_scan(
    ctx: EnergyContext,
    ell: int,
    a_ell_grid: Sequence[float],
    options: Optional[SolverOptions] = None,
    verdict_rtol: float = VERDICT_RTOL,
) -> ConeScan:
    """Verdicts over trial values of a_l for a two-plate condenser with chi = 0.

    Sigma_l does not depend on a_l, so one auxiliary solve serves the whole grid and
    the verdict boundary sits at a_1 times the swept-mass ratio.
    """
    c = ctx.condenser
    if len(c.plates) != 2 or len(c.positive_plates) != 1:
        raise DiagnosticsError("cone scan needs one positive and one negative plate")
    if np.any(c.chi.weights != 0):
        raise DiagnosticsError("cone scan assumes chi = 0")
    rep = sigma_threshold(ctx, ell, options, verdict_rtol)
    src = c.positive_plates[0]
    a1 = float(c.a[src])
    grid = np.asarray(a_ell_grid, dtype=float)
    verdicts = [verdict_for(float(a), rep.sigma_ell, verdict_rtol) for a in grid]
    return ConeScan(ell, rep.sigma_ell, a1, rep.sigma_ell / a1, grid, verdicts)
