"""Quick built-in checks: the small closed-form examples of every module."""

from __future__ import annotations

import math
import traceback

import numpy as np

from .energy import (
    EnergyContext,
    gauss_value,
    gauss_value_shifted,
    mutual_energy,
    strong_distance,
    vector_energy,
    weighted_potential,
)
from .geometry import DuplicatePointError, ProfileSpec, ShapeSpec, generate_nodes, nearest_neighbor_distances
from .kernel import KernelSpec, assemble_gram, evaluate
from .measures import Condenser, Plate, SignedMeasure, VectorMeasure, g_moment, r_map, validate
from .projection import balayage, capacity, equilibrium_measure, green_energy, project_onto_cone
from .solver import solve_auxiliary, solve_gauss
from .diagnostics import BOUNDARY, coarse_bound_check, verdict_for

K23 = KernelSpec(2.0, 3)


def _ctx(plates, a, chi=None, kernel=K23):
    return EnergyContext.build(Condenser.build(plates, a, chi=chi), kernel)


def _geometry():
    pts = generate_nodes(ShapeSpec("sphere_shell", 4, center=(0, 0, 0), radius=1.0))
    assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1) <= 1e-12)
    shape = ShapeSpec("rotational_body", 100, q=1.0, profile=ProfileSpec("power", 1.0), truncation_radius=10.0)
    pts = generate_nodes(shape)
    assert len(pts) == 100 and shape.contains(pts).all()
    assert np.array_equal(pts, generate_nodes(shape))
    d = nearest_neighbor_distances([[0, 0, 0], [1, 0, 0], [3, 0, 0]])
    assert np.allclose(d, [1, 1, 2])
    try:
        nearest_neighbor_distances([[0, 0, 0], [0, 0, 0]])
    except DuplicatePointError:
        pass
    else:
        raise AssertionError("duplicate points accepted")


def _kernel():
    assert evaluate(K23, [0, 0, 0], [2, 0, 0]) == 0.5
    assert evaluate(KernelSpec(1.0, 3), [0, 0, 0], [4, 0, 0]) == 0.0625
    assert math.isinf(evaluate(K23, [1, 2, 3], [1, 2, 3]))
    f = assemble_gram(K23, [[0, 0, 0], [1, 0, 0]], [1, 1])
    assert np.allclose(f.gram, [[2, 1], [1, 2]]) and f.ridge == 0.0


def _measures():
    p, q = [[0, 0, 0]], [[5, 0, 0]]
    c = Condenser.build([Plate(p, 1), Plate(q, -1)], [1, 1])
    r = r_map(c, VectorMeasure(([1.0], [1.0])))
    assert r.positive.total() == 1 and r.negative.total() == 1
    assert len(r_map(c, VectorMeasure.zeros(c))) == 0
    c2 = Condenser.build([Plate(p, 1), Plate(p, 1)], [1, 1])
    assert r_map(c2, VectorMeasure(([0.5], [0.5]))).weights[0] == 1.0
    c3 = Condenser.build([Plate([[0, 0, 0], [1, 0, 0]], 1)], [1], g_values=[np.array([2.0, 3.0])])
    assert g_moment(c3, VectorMeasure(([0.5, 0.5],)), 0) == 2.5
    assert validate(c).ok
    bad = Condenser.build([Plate(p, 1), Plate(q, -1)], [1, 1], chi=SignedMeasure([[5, 0, 0]], [1.0]))
    assert validate(bad).failure == "chi_plus_meets_negative_plates"
    badg = Condenser.build([Plate(p, 1)], [1], g_values=[np.array([0.0])])
    assert validate(badg).failure == "g_inf_not_positive"


def _energy():
    ctx = _ctx([Plate([[0, 0, 0], [2, 0, 0]], 1)], [1])
    u = SignedMeasure([[0, 0, 0]], [1.0])
    v = SignedMeasure([[2, 0, 0]], [1.0])
    assert mutual_energy(ctx, u, v) == 0.5
    assert mutual_energy(ctx, SignedMeasure.empty(3), u) == 0.0
    mu = VectorMeasure(([0.3, 0.7],))
    assert abs(vector_energy(ctx, mu) - gauss_value(ctx, mu)) <= 1e-12
    assert gauss_value(ctx, VectorMeasure.zeros(ctx.condenser)) == 0.0
    assert abs(gauss_value(ctx, mu) - gauss_value_shifted(ctx, mu)) <= 1e-12
    assert strong_distance(ctx, mu, mu) == 0.0
    pot = weighted_potential(ctx, VectorMeasure(([1.0, 0.0],)), 0, [[0, 0, 2]])
    assert abs(pot[0] - 0.5) <= 1e-15


def _projection():
    ctx = _ctx([Plate([[0, 0, 0], [1, 0, 0]], 1)], [1])
    G = ctx.gram
    res = project_onto_cone(ctx, np.array([0.3, 0.2]), [0, 1])
    assert np.allclose(res.weights, [0.3, 0.2]) and res.distance <= 1e-12
    res = project_onto_cone(ctx, np.array([-1.0, 0.0]), [0])
    assert res.weights[0] == 0.0
    eq = equilibrium_measure(ctx, [0])
    assert abs(eq.capacity - 1 / G[0, 0]) <= 1e-12
    assert capacity(ctx, [0]) <= capacity(ctx, [0, 1])
    ctx2 = EnergyContext.build(
        Condenser.build([Plate([[0, 0, 0]], 1), Plate([[3, 0, 0], [3, 1, 0]], -1)], [1, 1]), K23
    )
    zero = balayage(ctx2, np.zeros(ctx2.size), 1)
    assert zero.swept_mass == 0.0
    assert green_energy(ctx2, np.zeros(ctx2.size), 1) == 0.0


def _solver():
    ctx = _ctx([Plate([[0, 0, 0]], 1)], [1])
    r = solve_gauss(ctx)
    assert r.minimizer.components[0][0] == 1.0 and abs(r.value - ctx.gram[0, 0]) <= 1e-12
    ctx = _ctx([Plate([[-1, 0, 0], [1, 0, 0]], 1)], [1])
    r = solve_gauss(ctx)
    assert np.allclose(r.minimizer.components[0], [0.5, 0.5], atol=1e-8)
    assert r.kkt.ok()
    full = solve_auxiliary(ctx, [0])
    assert full.mode == "full" and abs(full.value - r.value) <= 1e-12


def _diagnostics():
    ctx = _ctx([Plate([[0, 0, 0]], 1), Plate([[5, 0, 0]], -1)], [1, 3])
    cb = coarse_bound_check(ctx, 1)
    assert cb.bound == 2.0 and cb.triggered
    assert verdict_for(1.0, 1.0) == BOUNDARY


CHECKS = [
    ("geometry", _geometry),
    ("kernel", _kernel),
    ("measures", _measures),
    ("energy", _energy),
    ("projection", _projection),
    ("solver", _solver),
    ("diagnostics", _diagnostics),
]


def run_selftest():
    """Return (passed, failed, details) where details maps check name to 'ok' or the error."""
    details = {}
    for name, fn in CHECKS:
        try:
            fn()
            details[name] = "ok"
        except Exception as exc:
            details[name] = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=2)}"
    passed = sum(v == "ok" for v in details.values())
    return passed, len(details) - passed, details
