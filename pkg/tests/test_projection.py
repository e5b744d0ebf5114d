import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import nnls

from gvp.energy import EnergyContext
from gvp.measures import Condenser, Plate, SignedMeasure
from gvp.projection import (
    ConeProjector,
    ProjectionError,
    balayage,
    capacity,
    equilibrium_measure,
    green_energy,
    nnls_gram,
    project_onto_cone,
)
from gvp.solver import solve_gauss

from conftest import K23, make_ctx, sphere


def sphere_with_sources(n, sources, weights=None):
    """Negative unit-sphere plate plus indexed source atoms carried as chi."""
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    w = np.zeros(len(sources)) if weights is None else np.asarray(weights, dtype=float)
    return make_ctx([Plate(sphere(n), -1)], [1.0], chi=SignedMeasure(sources, w))


def test_cone_element_is_its_own_projection():
    ctx = make_ctx([Plate(sphere(30), 1)], [1.0])
    v = np.random.default_rng(0).random(30)
    res = project_onto_cone(ctx, v, ctx.plate_index[0])
    assert np.allclose(res.weights, v, rtol=1e-10, atol=1e-12)
    assert res.distance <= 1e-8


def test_negative_atom_on_target_projects_to_zero():
    ctx = make_ctx([Plate(sphere(10), 1)], [1.0])
    v = np.zeros(10)
    v[3] = -1.0
    res = project_onto_cone(ctx, v, [3])
    assert res.weights[0] == 0.0
    assert abs(res.distance ** 2 - ctx.gram[3, 3]) <= 1e-12


def test_balayage_zero_source():
    ctx = sphere_with_sources(50, [[2, 0, 0]])
    res = balayage(ctx, np.zeros(ctx.size), 0)
    assert res.swept_mass == 0.0 and res.distance == 0.0


def test_balayage_rejects_atoms_on_plate():
    ctx = sphere_with_sources(20, [[2, 0, 0]])
    v = np.zeros(ctx.size)
    v[0] = 1.0
    with pytest.raises(ValueError):
        balayage(ctx, v, 0)
    with pytest.raises(ValueError):
        green_energy(ctx, v, 0)


def poisson_oracle(d, r=1.0):
    """Swept mass of a unit charge at distance d > r onto the sphere of radius r,
    obtained by integrating the Poisson kernel density over the sphere."""
    dens = lambda t: (d * d - r * r) / (4 * math.pi * r * (r * r + d * d - 2 * r * d * math.cos(t)) ** 1.5)
    return quad(lambda t: dens(t) * 2 * math.pi * r * r * math.sin(t), 0, math.pi)[0]


def test_poisson_oracle_is_r_over_d():
    assert abs(poisson_oracle(2.0) - 0.5) <= 1e-12
    assert abs(poisson_oracle(3.0, 1.5) - 0.5) <= 1e-12


def test_balayage_ball_refinement_converges():
    errs = []
    for n in (125, 500, 2000):
        ctx = sphere_with_sources(n, [[2, 0, 0]])
        v = ctx.signed_vector(SignedMeasure([[2, 0, 0]], [1.0]))
        res = balayage(ctx, v, 0)
        errs.append(abs(res.swept_mass - 0.5))
        assert res.kkt_ok()
    assert errs[1] <= 0.025
    assert errs[2] < errs[0]


def test_projection_kkt_and_complementarity():
    ctx = sphere_with_sources(300, [[2, 0, 0], [0, 0, 1.5], [0.2, 0.1, 0.0]])
    v = ctx.signed_vector(SignedMeasure([[2, 0, 0], [0, 0, 1.5], [0.2, 0.1, 0.0]], [1.0, -0.7, 0.4]))
    res = project_onto_cone(ctx, v, ctx.plate_index[0])
    r = res.kkt_residuals
    assert np.all(r >= -res.kkt_tol)  # potential domination
    assert np.all(np.abs(r[res.weights > 0]) <= res.kkt_tol)  # equality on support
    nv2 = ctx.quad(v)
    assert abs(res.complementarity_residual) <= 1e-8 * nv2


def test_projection_optimal_against_samples():
    rng = np.random.default_rng(3)
    ctx = sphere_with_sources(80, [[2, 0, 0], [0, 2.5, 0]])
    v = ctx.signed_vector(SignedMeasure([[2, 0, 0], [0, 2.5, 0]], [1.0, -0.5]))
    res = project_onto_cone(ctx, v, ctx.plate_index[0])
    P = np.zeros(ctx.size)
    P[ctx.plate_index[0]] = res.weights
    dP = math.sqrt(ctx.quad(v - P))
    for _ in range(100):
        w = np.zeros(ctx.size)
        w[ctx.plate_index[0]] = rng.random(80) * rng.choice([0.0, 0.02], size=80)
        dw2 = ctx.quad(v - w)
        assert dP <= math.sqrt(dw2) + 1e-10
        # strengthened optimality from convexity of the cone
        assert ctx.quad(w - P) <= dw2 - dP ** 2 + 1e-10


def test_pythagoras_and_green_energy_bound():
    ctx = sphere_with_sources(200, [[2, 0, 0], [0, 0, -3]])
    v = ctx.signed_vector(SignedMeasure([[2, 0, 0], [0, 0, -3]], [1.0, -0.3]))
    res = project_onto_cone(ctx, v, ctx.plate_index[0])
    P = np.zeros(ctx.size)
    P[ctx.plate_index[0]] = res.weights
    nv2 = ctx.quad(v)
    cross = ctx.quad(v - P, P)
    assert abs(cross) <= 1e-8 * nv2
    assert abs(nv2 - (ctx.quad(v - P) + 2 * cross + ctx.quad(P))) <= 1e-10 * nv2
    ge = green_energy(ctx, v, 0)
    assert ge <= nv2
    assert green_energy(ctx, np.zeros(ctx.size), 0) == 0.0


def test_mass_bound_random_sources():
    rng = np.random.default_rng(11)
    k = 8
    for trial in range(50):
        dirs = rng.normal(size=(k, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pos = dirs * rng.uniform(1.3, 4.0, size=(k, 1))
        w = rng.normal(size=k)
        ctx = sphere_with_sources(150, pos)
        v = ctx.signed_vector(SignedMeasure(pos, w))
        res = balayage(ctx, v, 0)
        assert res.mass_bound == pytest.approx(w[w > 0].sum())
        assert res.mass_bound_ok, (trial, res.swept_mass, res.mass_bound)


def reference_projection(ctx, v, F):
    """Independent oracle: scipy NNLS in the Cholesky-factored metric."""
    L = np.linalg.cholesky(ctx.gram)
    w, _ = nnls(L.T[:, F], L.T @ v, maxiter=50 * len(F))
    P = np.zeros(ctx.size)
    P[F] = w
    return P


def test_exhaustion_monotone_and_convergent():
    ctx = sphere_with_sources(400, [[2, 0, 0]])
    v = ctx.signed_vector(SignedMeasure([[2, 0, 0]], [1.0]))
    F = ctx.plate_index[0]
    PF = reference_projection(ctx, v, F)
    levels = [F[::4], F[::2], F]
    dists, gaps = [], []
    for K in levels:
        res = project_onto_cone(ctx, v, K)
        P = np.zeros(ctx.size)
        P[K] = res.weights
        dists.append(res.distance)
        gaps.append(math.sqrt(max(ctx.quad(P - PF), 0.0)))
    assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1e-8


def test_equilibrium_single_node():
    ctx = make_ctx([Plate([[0, 0, 0]], 1)], [1.0], chi=None)
    eq = equilibrium_measure(ctx, [0])
    G00 = ctx.gram[0, 0]
    assert abs(eq.measure.weights[0] - 1 / G00) <= 1e-15
    assert abs(capacity(ctx, [0]) - 1 / G00) <= 1e-15


def test_uniform_sphere_potential_oracle():
    # potential of the normalized surface measure of the unit sphere at a point of the sphere
    pot = quad(lambda t: math.sin(t) / (2 * 2 * math.sin(t / 2)), 0, math.pi)[0]
    assert abs(pot - 1.0) <= 1e-12


def test_equilibrium_sphere_capacity_and_potentials():
    ctx = make_ctx([Plate(sphere(500), 1)], [1.0])
    eq = equilibrium_measure(ctx, ctx.plate_index[0])
    assert abs(eq.capacity - 1.0) <= 0.05
    assert abs(eq.capacity - eq.energy) <= 1e-8 * eq.capacity
    assert eq.identity_ok()
    assert np.all(eq.potential_at_nodes >= 1 - 1e-8)
    assert np.all(eq.potential_at_nodes[eq.measure.weights > 0] <= 1 + 1e-8)


def test_capacity_matches_probability_formulation():
    rng = np.random.default_rng(5)
    for n in (3, 7, 20):
        pts = rng.normal(size=(n, 3))
        ctx = make_ctx([Plate(pts, 1)], [1.0])
        cap = capacity(ctx, ctx.plate_index[0])
        emin = solve_gauss(ctx).value  # min energy over probability measures
        assert abs(cap - 1 / emin) <= 1e-8 * cap


def test_capacity_monotone_in_nested_sets():
    ctx = make_ctx([Plate(sphere(200), 1)], [1.0])
    idx = ctx.plate_index[0]
    caps = [capacity(ctx, idx[:k]) for k in (10, 50, 120, 200)]
    assert all(b >= a - 1e-12 for a, b in zip(caps, caps[1:]))


@pytest.mark.parametrize("sep", [50.0, 200.0])
def test_far_separated_spheres_add_capacity(sep):
    pts = np.concatenate([sphere(200), sphere(200, (sep, 0, 0))])
    ctx = make_ctx([Plate(pts, 1)], [1.0])
    single = make_ctx([Plate(sphere(200), 1)], [1.0])
    c2 = capacity(ctx, ctx.plate_index[0])
    c1 = capacity(single, single.plate_index[0])
    assert abs(c2 / (2 * c1) - 1) <= 0.10


def test_nnls_warm_start_agrees_with_cold():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(40, 40))
    Q = A @ A.T + 40 * np.eye(40)
    c = rng.normal(size=40) * 10
    cold = nnls_gram(Q, c, tol=1e-12)
    warm = nnls_gram(Q, c, tol=1e-12, passive0=rng.random(40) > 0.5)
    assert np.allclose(cold.w, warm.w, atol=1e-10)
    assert np.all(cold.gradient >= -1e-10)


def test_projector_reuse_matches_fresh_solves():
    ctx = sphere_with_sources(150, [[2, 0, 0], [0, 0, 2]])
    proj = ConeProjector(ctx, ctx.plate_index[0])
    for t in np.linspace(0, 1, 5):
        v = ctx.signed_vector(SignedMeasure([[2, 0, 0], [0, 0, 2]], [1 - t, t]))
        a = proj.project_vector(v)
        b = project_onto_cone(ctx, v, ctx.plate_index[0])
        assert np.allclose(a.weights, b.weights, atol=1e-10)


def test_projection_nonconvergence_reported():
    ctx = sphere_with_sources(200, [[2, 0, 0]])
    v = ctx.signed_vector(SignedMeasure([[2, 0, 0]], [1.0]))
    proj = ConeProjector(ctx, ctx.plate_index[0], max_iterations=1)
    proj.last_passive = np.zeros(200, dtype=bool)  # force a cold start
    with pytest.raises(ProjectionError) as exc:
        proj.project_vector(v, warm=True)
    assert exc.value.result is not None and not exc.value.result.converged
    res = nnls_gram(proj.Q, proj.GT @ v, tol=1e-12, max_iter=1)
    assert not res.converged
