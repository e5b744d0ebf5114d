"""Discrete Gauss variational problem, the auxiliary (partially constrained) problem,
and the weighted-potential optimality report.

Feasible sets are products of scaled simplices {w >= 0 : <g, w> = a_i}.  Both the
full and the auxiliary problem are solved by Frank-Wolfe with away steps and exact
line search; the Frank-Wolfe gap is the stopping certificate.  Every few iterations
the iterate is polished by minimizing exactly over its current face (an
equality-constrained QP), which lets the method finish to tight gaps on large
supports.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, cho_solve, solve

from .energy import EnergyContext, weighted_potential_nodes
from .measures import VectorMeasure
from .projection import ConeProjector, ProjectionResult

GAP_RTOL = 1e-9
KKT_RTOL = 1e-8
ITERS_PER_NODE = 200


class SolverError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    gap_tol: Optional[float] = None
    gap_rtol: float = GAP_RTOL
    max_iters: Optional[int] = None
    kkt_rtol: float = KKT_RTOL
    polish_every: int = 40
    trace: bool = False
    init: Optional[VectorMeasure] = None

    def tolerance(self, value: float) -> float:
        if self.gap_tol is not None:
            return self.gap_tol
        return self.gap_rtol * (1.0 + abs(value))


@dataclass
class KktReport:
    eta: np.ndarray
    lower_violation: np.ndarray
    support_violation: np.ndarray
    sum_rule_lhs: float
    sum_rule_rhs: float
    kkt_tol: float

    @property
    def max_lower_violation(self) -> float:
        return float(self.lower_violation.max(initial=0.0))

    @property
    def max_support_violation(self) -> float:
        return float(self.support_violation.max(initial=0.0))

    @property
    def sum_rule_error(self) -> float:
        return abs(self.sum_rule_lhs - self.sum_rule_rhs) / max(1e-300, abs(self.sum_rule_rhs), abs(self.sum_rule_lhs))

    def ok(self, sum_rtol: float = 1e-8) -> bool:
        return (
            self.max_lower_violation <= self.kkt_tol
            and self.max_support_violation <= self.kkt_tol
            and self.sum_rule_error <= sum_rtol
        )

    def to_json(self) -> dict:
        return {
            "eta": [float(x) for x in self.eta],
            "lower_violation": [float(x) for x in self.lower_violation],
            "support_violation": [float(x) for x in self.support_violation],
            "sum_rule_lhs": self.sum_rule_lhs,
            "sum_rule_rhs": self.sum_rule_rhs,
            "kkt_tol": self.kkt_tol,
        }


@dataclass
class SolveReport:
    minimizer: VectorMeasure
    value: float
    duality_gap: float
    gap_tol: float
    feasibility_residuals: np.ndarray
    iterations: int
    wallclock: float
    converged: bool
    mode: str = "full"
    kkt: Optional[KktReport] = None
    constrained: tuple = ()
    projection: Optional[ProjectionResult] = None
    trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "value": self.value,
            "duality_gap": self.duality_gap,
            "gap_tol": self.gap_tol,
            "converged": self.converged,
            "iterations": self.iterations,
            "wallclock": self.wallclock,
            "constrained_plates": list(self.constrained),
            "feasibility_residuals": [float(x) for x in self.feasibility_residuals],
            "minimizer": self.minimizer.to_json(),
        }
        if self.kkt is not None:
            out["kkt"] = self.kkt.to_json()
        return out


# ---------------------------------------------------------------- block bookkeeping


class _Block:
    """One scaled simplex {w >= 0, <g, w> (+ slack) = budget} living on global nodes."""

    def __init__(self, idx, sign, g, budget, slack=False):
        self.idx = np.asarray(idx, dtype=np.intp)
        self.sign = float(sign)
        self.g = np.asarray(g, dtype=float)
        self.budget = float(budget)
        self.slack = slack
        self.w = np.zeros(len(self.idx))
        self.s = 0.0
        self.p = None  # G[:, idx] @ w

    def fw_vertex(self, grad):
        """(value, j) of the best vertex; j = -1 is the slack vertex."""
        ratio = grad / self.g
        j = int(np.argmin(ratio))
        val = self.budget * ratio[j]
        if self.slack and val >= 0.0:
            return 0.0, -1
        return val, j

    def away_vertex(self, grad):
        ratio = grad / self.g
        supp = self.w > 0
        best, jb = -math.inf, None
        if supp.any():
            r = np.where(supp, ratio, -math.inf)
            j = int(np.argmax(r))
            best, jb = self.budget * r[j], j
        if self.slack and self.s > 0 and 0.0 > best:
            best, jb = 0.0, -1
        return best, jb

    def coefficient(self, j):
        if j == -1:
            return self.s / self.budget
        return self.w[j] * self.g[j] / self.budget

    def vertex(self, j):
        v = np.zeros(len(self.idx))
        if j == -1:
            return v, self.budget
        v[j] = self.budget / self.g[j]
        return v, 0.0


def _sgn_vertex_values(block, grad):
    return float(grad @ block.w)


class _Engine:
    """Shared state for Frank-Wolfe over a product of blocks: u = base + sum sign_i E_i w_i."""

    def __init__(self, ctx: EnergyContext, base: np.ndarray, blocks):
        self.ctx = ctx
        self.G = ctx.gram
        self.base = base
        self.blocks = blocks
        self.Gbase = self.G @ base
        self.refresh()

    def refresh(self):
        self.Gu = self.Gbase.copy()
        for b in self.blocks:
            b.p = self.G[:, b.idx] @ b.w
            self.Gu += b.sign * b.p

    def u(self) -> np.ndarray:
        u = self.base.copy()
        for b in self.blocks:
            np.add.at(u, b.idx, b.sign * b.w)
        return u

    def gradients(self, Gr):
        return [2.0 * b.sign * Gr[b.idx] for b in self.blocks]

    def choose(self, grads):
        """Best (gap, block, kind, vertex) and the total Frank-Wolfe gap."""
        total = 0.0
        best = (-math.inf, None, None, None)
        for k, (b, gr) in enumerate(zip(self.blocks, grads)):
            cur = float(gr @ b.w)
            fv, fj = b.fw_vertex(gr)
            fgap = cur - fv
            total += max(fgap, 0.0)
            if fgap > best[0]:
                best = (fgap, k, "fw", fj)
            av, aj = b.away_vertex(gr)
            if aj is not None:
                agap = av - cur
                if agap > best[0] and b.coefficient(aj) < 1.0:
                    best = (agap, k, "away", aj)
        return total, best

    def direction(self, b: _Block, kind: str, j: int):
        v, vs = b.vertex(j)
        if kind == "fw":
            dw, ds, tmax = v - b.w, vs - b.s, 1.0
        else:
            lam = b.coefficient(j)
            dw, ds, tmax = b.w - v, b.s - vs, lam / (1.0 - lam)
        nz = np.flatnonzero(dw)
        q = self.G[:, b.idx[nz]] @ dw[nz]
        return dw, ds, tmax, q, nz

    def apply(self, b: _Block, kind, j, dw, ds, t, tmax, q):
        b.w += t * dw
        b.s += t * ds
        b.p += t * q
        self.Gu += t * b.sign * q
        if kind == "away" and t >= tmax:
            if j == -1:
                b.s = 0.0
            else:
                b.w[j] = 0.0
        if kind == "fw" and t >= 1.0:
            v, vs = b.vertex(j)
            b.w[:] = v
            b.s = vs
        np.maximum(b.w, 0.0, out=b.w)
        b.s = max(b.s, 0.0)

    def face_system(self, extra_free: Optional[np.ndarray] = None):
        """Index bookkeeping of the current face: (columns, signs, block ids, slack flags)."""
        cols, sg, blk, isslack, start = [], [], [], [], []
        for k, b in enumerate(self.blocks):
            start.append(len(cols))
            for j in np.flatnonzero(b.w > 0):
                cols.append(int(b.idx[j]))
                sg.append(b.sign)
                blk.append(k)
                isslack.append(False)
            if b.slack and b.s > 0:
                cols.append(-1)
                sg.append(0.0)
                blk.append(k)
                isslack.append(True)
        return np.array(cols, dtype=np.intp), np.array(sg), np.array(blk, dtype=np.intp), np.array(isslack, dtype=bool)

    def current_face_point(self, blk, isslack):
        x = []
        for k, b in enumerate(self.blocks):
            x.extend(b.w[b.w > 0])
            if b.slack and b.s > 0:
                x.append(b.s)
        return np.array(x)

    def set_face_point(self, x, cols, blk, isslack):
        for b in self.blocks:
            b.w[:] = 0.0
            b.s = 0.0
        pos = {}
        for k, b in enumerate(self.blocks):
            pos[k] = {int(g): i for i, g in enumerate(b.idx)}
        for xi, c, k, sl in zip(x, cols, blk, isslack):
            b = self.blocks[k]
            if sl:
                b.s = max(float(xi), 0.0)
            else:
                b.w[pos[k][int(c)]] = max(float(xi), 0.0)
        self.refresh()


def _face_constraint_matrix(engine, cols, blk, isslack):
    m = len(engine.blocks)
    A = np.zeros((m, len(cols)))
    rhs = np.zeros(m)
    for k, b in enumerate(engine.blocks):
        rhs[k] = b.budget
        gmap = {int(g): gv for g, gv in zip(b.idx, b.g)}
        for i in np.flatnonzero(blk == k):
            A[k, i] = 1.0 if isslack[i] else gmap[int(cols[i])]
    return A, rhs


def _solve_kkt(H, A, rhs_top, rhs_bot):
    n, m = H.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([rhs_top, rhs_bot])
    try:
        # singular faces (shared nodes) fall through to least squares
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            sol = solve(K, rhs, assume_a="sym")
        if not np.all(np.isfinite(sol)):
            raise LinAlgError("non-finite")
    except (LinAlgError, LinAlgWarning, ValueError):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n]


def _step_to_boundary(x0, xs):
    """Largest feasible point on the segment x0 -> xs (x0 >= 0); indices hitting zero."""
    neg = xs < 0
    if not neg.any():
        return xs, np.zeros(len(xs), dtype=bool)
    ratios = np.where(neg, x0 / np.where(neg, x0 - xs, 1.0), np.inf)
    t = float(ratios.min())
    x = x0 + t * (xs - x0)
    hit = ratios <= t
    x[hit] = 0.0
    return np.maximum(x, 0.0), hit


# ---------------------------------------------------------------- full problem


def _initial_blocks(ctx: EnergyContext, plates: Sequence[int], init: Optional[VectorMeasure]):
    c = ctx.condenser
    blocks = []
    for i in plates:
        b = _Block(ctx.plate_index[i], c.plates[i].sign, c.g_values[i], c.a[i])
        if init is not None:
            w = np.asarray(init.components[i], dtype=float)
            gm = float(b.g @ w)
            if gm <= 0:
                raise SolverError(f"initial component {i} has zero g-moment")
            b.w = w * (b.budget / gm)
        else:
            b.w = np.full(len(b.idx), b.budget / b.g.sum())
        blocks.append(b)
    return blocks


def _polish_plain(engine: _Engine, rounds: int = 8) -> None:
    """Minimize exactly over the current face, walking to its boundary when needed."""
    G = engine.G
    for _ in range(rounds):
        cols, sg, blk, isslack = engine.face_system()
        if len(cols) == 0:
            return
        x0 = engine.current_face_point(blk, isslack)
        real = ~isslack
        B_cols = cols[real]
        # H = 2 S G S on real columns, zero on slack ones
        H = np.zeros((len(cols), len(cols)))
        Gsub = G[np.ix_(B_cols, B_cols)]
        sr = sg[real]
        H[np.ix_(real, real)] = 2.0 * (sr[:, None] * Gsub * sr[None, :])
        top = np.zeros(len(cols))
        top[real] = -2.0 * sr * engine.Gbase[B_cols]
        A, rhs = _face_constraint_matrix(engine, cols, blk, isslack)
        xs = _solve_kkt(H, A, top, rhs)
        x, hit = _step_to_boundary(x0, xs)
        engine.set_face_point(x, cols, blk, isslack)
        if not hit.any():
            return


def _objective(engine: _Engine) -> float:
    u = engine.u()
    return float(u @ engine.Gu - engine.base @ engine.Gbase)


def _run_afw(engine: _Engine, opts: SolverOptions, max_iters: int, trace_fn=None):
    it = 0
    since_polish = 0
    support_changed = False
    polished_at_exit = False
    gap = math.inf
    converged = False
    while True:
        value = _objective(engine)
        if trace_fn is not None:
            trace_fn(it, value)
        grads = engine.gradients(engine.Gu)
        gap, (bgap, k, kind, j) = engine.choose(grads)
        tol = opts.tolerance(value)
        if gap <= tol:
            if polished_at_exit or not support_changed:
                converged = True
                break
            _polish_plain(engine)
            polished_at_exit = True
            support_changed = False
            continue
        if it >= max_iters:
            break
        polished_at_exit = False
        if since_polish >= opts.polish_every and support_changed:
            _polish_plain(engine)
            since_polish = 0
            support_changed = False
            it += 1
            continue
        b = engine.blocks[k]
        dw, ds, tmax, q, nz = engine.direction(b, kind, j)
        slope = float(grads[k] @ dw)
        curv = float(dw[nz] @ q[b.idx[nz]])
        if slope >= 0 or bgap <= 0:
            break
        t = tmax if curv <= 0 else min(tmax, -slope / (2.0 * curv))
        before = np.count_nonzero(b.w) + (b.s > 0)
        engine.apply(b, kind, j, dw, ds, t, tmax, q)
        after = np.count_nonzero(b.w) + (b.s > 0)
        support_changed = support_changed or before != after or kind == "fw"
        since_polish += 1
        it += 1
        if it % 500 == 0:
            engine.refresh()
    engine.refresh()
    value = _objective(engine)
    grads = engine.gradients(engine.Gu)
    gap, _ = engine.choose(grads)
    return value, gap, it, gap <= opts.tolerance(value)


def _report_full(ctx, blocks, plates, value, gap, tol, it, t0, converged, mode, trace):
    c = ctx.condenser
    comps = [np.zeros(len(p)) for p in c.plates]
    for i, b in zip(plates, blocks):
        comps[i] = b.w.copy()
    mu = VectorMeasure(tuple(comps))
    feas = np.array([abs(float(c.g_values[i] @ mu.components[i]) - c.a[i]) for i in range(len(c.plates))])
    return SolveReport(
        minimizer=mu, value=value, duality_gap=gap, gap_tol=tol,
        feasibility_residuals=feas, iterations=it, wallclock=time.perf_counter() - t0,
        converged=converged, mode=mode, constrained=tuple(plates), trace=trace,
    )


def solve_gauss(ctx: EnergyContext, options: Optional[SolverOptions] = None) -> SolveReport:
    """Minimize G_chi over nonnegative vector measures with <g, mu^i> = a_i for every plate."""
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    c = ctx.condenser
    plates = list(range(len(c.plates)))
    blocks = _initial_blocks(ctx, plates, opts.init)
    engine = _Engine(ctx, ctx.chi_vector.copy(), blocks)
    max_iters = opts.max_iters if opts.max_iters is not None else ITERS_PER_NODE * ctx.size
    trace = []
    trace_fn = None
    if opts.trace:
        def trace_fn(it, value):
            mu = VectorMeasure(tuple(b.w.copy() for b in blocks))
            r = ctx.rmap_vector(mu)
            Gr = ctx.gram @ r
            direct = float(r @ Gr + 2.0 * ctx.chi_vector @ Gr)
            u = ctx.chi_vector + r
            shifted = float(u @ (ctx.gram @ u) - ctx.quad(ctx.chi_vector))
            trace.append({"iteration": it, "value": value, "direct": direct, "shifted": shifted})
    value, gap, it, converged = _run_afw(engine, opts, max_iters, trace_fn)
    rep = _report_full(ctx, blocks, plates, value, gap, opts.tolerance(value), it, t0, converged, "full", trace)
    rep.kkt = verify_kkt(ctx, rep.minimizer, kkt_rtol=opts.kkt_rtol)
    return rep


# ---------------------------------------------------------------- optimality report


def verify_kkt(ctx: EnergyContext, mu: VectorMeasure, kkt_rtol: float = KKT_RTOL) -> KktReport:
    """Weighted-potential conditions a_i W^i >= eta_i g on plate i, equality on the support,
    and the sum rule sum_i eta_i = 1/2 (||R mu||^2 + G_chi(mu))."""
    c = ctx.condenser
    W = weighted_potential_nodes(ctx, mu)
    eta = np.array([float(Wi @ wi) for Wi, wi in zip(W, mu.components)])
    lower, supp = [], []
    scale = 1.0
    for i, (Wi, wi) in enumerate(zip(W, mu.components)):
        g, a = c.g_values[i], c.a[i]
        lower.append(float(np.max(np.maximum(eta[i] * g / a - Wi, 0.0))))
        on = wi > 0
        supp.append(float(np.max(np.abs(a * Wi[on] - eta[i] * g[on]), initial=0.0)))
        scale = max(scale, float(np.max(np.abs(a * Wi))), float(np.max(np.abs(eta[i] * g))))
    r = ctx.rmap_vector(mu)
    Gr = ctx.gram @ r
    norm2 = float(r @ Gr)
    gval = norm2 + 2.0 * float(ctx.chi_vector @ Gr)
    return KktReport(
        eta=eta,
        lower_violation=np.array(lower),
        support_violation=np.array(supp),
        sum_rule_lhs=float(eta.sum()),
        sum_rule_rhs=0.5 * (norm2 + gval),
        kkt_tol=kkt_rtol * scale,
    )


# ---------------------------------------------------------------- auxiliary problem


def _split_cj(ctx: EnergyContext, J: Sequence[int]):
    c = ctx.condenser
    J = sorted(set(int(j) for j in J))
    n = len(c.plates)
    if any(j < 0 or j >= n for j in J):
        raise SolverError("J contains an unknown plate index")
    missing = [i for i in c.positive_plates if i not in J]
    if missing:
        raise SolverError(f"J must contain every positive plate; missing {missing}")
    CJ = [i for i in range(n) if i not in J]
    return J, CJ


def _assign_cone_weights(ctx, CJ, target, lam):
    """Spread cone weights on the union of CJ nodes back to plates (first owner wins)."""
    comps = {}
    owner = {}
    for i in CJ:
        comps[i] = np.zeros(len(ctx.plate_index[i]))
        for k, gidx in enumerate(ctx.plate_index[i]):
            owner.setdefault(int(gidx), (i, k))
    for gidx, wv in zip(target, lam):
        i, k = owner[int(gidx)]
        comps[i][k] += wv
    return comps


def solve_auxiliary(ctx: EnergyContext, J: Sequence[int], options: Optional[SolverOptions] = None) -> SolveReport:
    """Minimize ||chi + R sigma - P(chi + R sigma)||^2 - ||chi||^2 over sigma on the J-plates.

    P projects onto the nonnegative cone over the nodes of the unconstrained plates
    CJ = I \\ J, evaluated exactly at every iterate.  The returned minimizer carries
    sigma on J and the projection on CJ.
    """
    J, CJ = _split_cj(ctx, J)
    if not CJ:
        return solve_gauss(ctx, options)
    c = ctx.condenser
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    target = ctx.plate_nodes_union(CJ)
    proj = ConeProjector(ctx, target)
    blocks = _initial_blocks(ctx, J, opts.init)
    engine = _Engine(ctx, ctx.chi_vector.copy(), blocks)
    G = ctx.gram
    GT = proj.GT  # G[T, :]
    chi2 = ctx.quad(ctx.chi_vector)
    max_iters = opts.max_iters if opts.max_iters is not None else ITERS_PER_NODE * ctx.size

    def evaluate():
        u = engine.u()
        pr = proj.project_vector(u)
        lam = pr.weights
        Gr = engine.Gu - GT.T @ lam
        r = u.copy()
        r[target] -= lam
        return float(r @ Gr) - chi2, Gr, pr

    def local_curvature(q, pr, sign):
        # second derivative of the squared distance with the passive set held fixed
        S = pr.passive
        if not S.any():
            return None
        bvec = sign * q[target]
        z = proj.cache.solve(S, bvec)
        return float(bvec[S] @ z)

    value, Gr, pr = evaluate()
    it = 0
    since_polish = 0
    converged = False
    polished_at_exit = False
    support_changed = False
    while True:
        grads = engine.gradients(Gr)
        gap, (bgap, k, kind, j) = engine.choose(grads)
        tol = opts.tolerance(value)
        if gap <= tol:
            if polished_at_exit or not support_changed:
                converged = True
                break
            _polish_aux(engine, proj, pr)
            value, Gr, pr = evaluate()
            polished_at_exit = True
            support_changed = False
            continue
        if it >= max_iters:
            break
        polished_at_exit = False
        if since_polish >= opts.polish_every and support_changed:
            _polish_aux(engine, proj, pr)
            value, Gr, pr = evaluate()
            since_polish = 0
            support_changed = False
            it += 1
            continue
        b = engine.blocks[k]
        dw, ds, tmax, q, nz = engine.direction(b, kind, j)
        slope = float(grads[k] @ dw)
        if slope >= 0 or bgap <= 0:
            break
        curv_full = float(dw[nz] @ q[b.idx[nz]])
        corr = local_curvature(q, pr, b.sign)
        saved = (b.w.copy(), b.s, b.p.copy(), engine.Gu.copy())
        accepted = False
        for curv in ([curv_full - corr] if corr is not None else []) + [curv_full]:
            t = tmax if curv <= 0 else min(tmax, -slope / (2.0 * curv))
            b.w, b.s, b.p, engine.Gu = saved[0].copy(), saved[1], saved[2].copy(), saved[3].copy()
            before = np.count_nonzero(b.w) + (b.s > 0)
            engine.apply(b, kind, j, dw, ds, t, tmax, q)
            new_value, new_Gr, new_pr = evaluate()
            if new_value <= value + 1e-15 * (1.0 + abs(value)) or curv == curv_full:
                accepted = True
                break
        value, Gr, pr = new_value, new_Gr, new_pr
        after = np.count_nonzero(b.w) + (b.s > 0)
        support_changed = support_changed or before != after or kind == "fw"
        since_polish += 1
        it += 1
        if it % 500 == 0:
            engine.refresh()
            value, Gr, pr = evaluate()
    engine.refresh()
    value, Gr, pr = evaluate()
    gap, _ = engine.choose(engine.gradients(Gr))
    converged = gap <= opts.tolerance(value)

    comps = [np.zeros(len(p)) for p in c.plates]
    for i, b in zip(J, blocks):
        comps[i] = b.w.copy()
    for i, w in _assign_cone_weights(ctx, CJ, target, pr.weights).items():
        comps[i] = w
    mu = VectorMeasure(tuple(comps))
    feas = np.array([
        abs(float(c.g_values[i] @ mu.components[i]) - c.a[i]) if i in J else 0.0
        for i in range(len(c.plates))
    ])
    return SolveReport(
        minimizer=mu, value=value, duality_gap=gap, gap_tol=opts.tolerance(value),
        feasibility_residuals=feas, iterations=it, wallclock=time.perf_counter() - t0,
        converged=converged, mode="aux", constrained=tuple(J), projection=pr,
    )


def _polish_aux(engine: _Engine, proj: ConeProjector, pr: ProjectionResult, rounds: int = 8) -> None:
    """Joint face minimization over (sigma support, passive cone nodes), cone weights free."""
    G = engine.G
    target = proj.target
    lam = pr.weights.copy()
    for _ in range(rounds):
        cols, sg, blk, isslack = engine.face_system()
        S = np.flatnonzero(lam > 0)
        x0 = np.concatenate([engine.current_face_point(blk, isslack), lam[S]])
        cone_cols = target[S]
        allc = np.concatenate([cols, cone_cols])
        alls = np.concatenate([sg, -np.ones(len(S))])
        n = len(allc)
        H = 2.0 * alls[:, None] * G[np.ix_(allc, allc)] * alls[None, :]
        top = -2.0 * alls * engine.Gbase[allc]
        A0, rhs = _face_constraint_matrix(engine, cols, blk, isslack)
        A = np.zeros((A0.shape[0], n))
        A[:, : len(cols)] = A0
        xs = _solve_kkt(H, A, top, rhs)
        x, hit = _step_to_boundary(x0, xs)
        engine.set_face_point(x[: len(cols)], cols, blk, isslack)
        lam = np.zeros(len(target))
        lam[S] = x[len(cols):]
        if not hit.any():
            return


def mass_bound_H(ctx: EnergyContext, J: Sequence[int]) -> float:
    """h [chi^+(X) + 2 |a_J| / g_inf]."""
    c = ctx.condenser
    h = ctx.kernel.require_h()
    chi_plus = float(c.chi.weights[c.chi.weights > 0].sum())
    aJ = float(sum(c.a[j] for j in J))
    return h * (chi_plus + 2.0 * aJ / c.g_inf)


def solve_auxiliary_direct(
    ctx: EnergyContext, J: Sequence[int], options: Optional[SolverOptions] = None, H: Optional[float] = None
) -> SolveReport:
    """The auxiliary problem as one QP: J-simplices times the cone over CJ nodes with
    total mass at most H (slack-augmented simplex)."""
    J, CJ = _split_cj(ctx, J)
    if not CJ:
        return solve_gauss(ctx, options)
    c = ctx.condenser
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    H = mass_bound_H(ctx, J) if H is None else float(H)
    blocks = _initial_blocks(ctx, J, opts.init)
    target = ctx.plate_nodes_union(CJ)
    cone = _Block(target, -1, np.ones(len(target)), H, slack=True)
    cone.s = H
    engine = _Engine(ctx, ctx.chi_vector.copy(), blocks + [cone])
    max_iters = opts.max_iters if opts.max_iters is not None else ITERS_PER_NODE * ctx.size
    value, gap, it, converged = _run_afw(engine, opts, max_iters)
    comps = [np.zeros(len(p)) for p in c.plates]
    for i, b in zip(J, blocks):
        comps[i] = b.w.copy()
    for i, w in _assign_cone_weights(ctx, CJ, target, cone.w).items():
        comps[i] = w
    mu = VectorMeasure(tuple(comps))
    feas = np.array([
        abs(float(c.g_values[i] @ mu.components[i]) - c.a[i]) if i in J else 0.0
        for i in range(len(c.plates))
    ])
    return SolveReport(
        minimizer=mu, value=value, duality_gap=gap, gap_tol=opts.tolerance(value),
        feasibility_residuals=feas, iterations=it, wallclock=time.perf_counter() - t0,
        converged=converged, mode="aux_direct", constrained=tuple(J),
    )
