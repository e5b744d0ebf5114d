import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvp.measures import (
    Condenser,
    Plate,
    SignedMeasure,
    ValidationError,
    VectorMeasure,
    g_moment,
    r_map,
    validate,
)

P = [[0.0, 0.0, 0.0]]
Q = [[5.0, 0.0, 0.0]]


def two_plates(**kw):
    return Condenser.build([Plate(P, 1), Plate(Q, -1)], [1.0, 1.0], **kw)


def test_r_map_two_plates():
    r = r_map(two_plates(), VectorMeasure(([1.0], [1.0])))
    assert r.positive.total() == 1.0 and r.negative.total() == 1.0
    assert r.total_variation() == 2.0


def test_r_map_zero_is_empty():
    c = two_plates()
    assert len(r_map(c, VectorMeasure.zeros(c))) == 0


def test_r_map_shared_node_accumulates():
    c = Condenser.build([Plate(P, 1), Plate(P, 1)], [1.0, 1.0])
    r = r_map(c, VectorMeasure(([0.5], [0.5])))
    assert len(r) == 1 and r.weights[0] == 1.0


def test_r_map_mismatch():
    with pytest.raises(ValueError):
        r_map(two_plates(), VectorMeasure(([1.0],)))
    with pytest.raises(ValueError):
        r_map(two_plates(), VectorMeasure(([1.0, 2.0], [1.0])))


def test_g_moment_examples():
    c = Condenser.build([Plate([[0, 0, 0], [1, 0, 0]], 1)], [1.0], g_values=[np.array([2.0, 3.0])])
    assert g_moment(c, VectorMeasure(([0.5, 0.5],)), 0) == 2.5
    assert g_moment(c, VectorMeasure(([0.0, 0.0],)), 0) == 0.0
    c1 = Condenser.build([Plate([[0, 0, 0], [1, 0, 0]], 1)], [1.0])
    assert abs(g_moment(c1, VectorMeasure(([0.3, 0.4],)), 0) - 0.7) <= 1e-15


def test_hahn_jordan_split():
    nu = SignedMeasure([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [1.0, -2.0, 0.5])
    assert nu.positive.total() == 1.5
    assert nu.negative.total() == 2.0
    assert nu.total_variation() == nu.positive.total() + nu.negative.total()


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        VectorMeasure(([-1.0],))
    with pytest.raises(ValueError):
        VectorMeasure(([1.0],)).scale(-1.0)


def test_validate_well_formed():
    assert validate(two_plates()).ok


@pytest.mark.parametrize("build,name", [
    (lambda: Condenser.build([], []), "empty_plates"),
    (lambda: Condenser.build([Plate(P, 2)], [1.0]), "sign_invalid"),
    (lambda: Condenser.build([Plate(P, 1), Plate([[1.0, 0.0]], -1)], [1.0, 1.0]), "dimension_mismatch"),
    (lambda: Condenser.build([Plate(P, 1)], [1.0, 2.0]), "a_length_mismatch"),
    (lambda: Condenser.build([Plate(P, 1)], [0.0]), "a_positive_violated"),
    (lambda: Condenser.build([Plate(P, 1)], [1.0], g_values=[np.array([1.0, 2.0])]), "g_shape_mismatch"),
    (lambda: Condenser.build([Plate(P, 1)], [1.0], g_values=[np.array([0.0])]), "g_inf_not_positive"),
    (lambda: Condenser.build([Plate(P, 1), Plate(P, -1)], [1.0, 1.0]), "plates_not_separated"),
    (lambda: two_plates(chi=SignedMeasure(Q, [1.0])), "chi_plus_meets_negative_plates"),
    (lambda: two_plates(chi=SignedMeasure(P, [-1.0])), "chi_minus_meets_positive_plates"),
    (lambda: Condenser.build([Plate(P, 1, unbounded=True, truncation_radius=3.0)], [1.0]), "unbounded_plate_not_negative"),
    (lambda: Condenser.build([Plate(P, 1), Plate(Q, -1, unbounded=True)], [1.0, 1.0]), "truncation_missing"),
])
def test_validate_named_failures(build, name):
    rep = validate(build())
    assert not rep.ok and rep.failure == name
    with pytest.raises(ValidationError) as exc:
        rep.raise_if_failed()
    assert exc.value.name == name


def test_equally_signed_plates_may_share_nodes():
    c = Condenser.build([Plate(P, -1), Plate(P, -1), Plate(Q, 1)], [1.0, 1.0, 1.0])
    assert validate(c).ok


def test_min_gap_configurable():
    c = Condenser.build([Plate(P, 1), Plate([[1e-3, 0, 0]], -1)], [1.0, 1.0], min_gap=1e-2)
    assert validate(c).failure == "plates_not_separated"


weights = st.lists(st.floats(min_value=0, max_value=10, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(weights, weights, weights, weights, st.floats(min_value=0, max_value=5))
def test_r_map_linear_and_total_variation(a1, a2, b1, b2, c):
    pts = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]
    cond = Condenser.build([Plate(pts, 1), Plate(np.array(pts) + 10, -1)], [1.0, 1.0])
    mu = VectorMeasure((a1, a2))
    nu = VectorMeasure((b1, b2))

    def dense(s):
        return {tuple(x): w for x, w in zip(s.positions, s.weights)}

    lhs, r1, r2 = dense(r_map(cond, mu + nu)), dense(r_map(cond, mu)), dense(r_map(cond, nu))
    for k in set(lhs) | set(r1) | set(r2):
        assert abs(lhs.get(k, 0) - r1.get(k, 0) - r2.get(k, 0)) <= 1e-12 * (1 + abs(lhs.get(k, 0)))
    scaled = dense(r_map(cond, mu.scale(c)))
    for k, w in dense(r_map(cond, mu)).items():
        assert abs(scaled.get(k, 0.0) - c * w) <= 1e-12 * (1 + abs(c * w))
    # disjoint opposite plates: |R mu|(X) is the total mass
    assert abs(r_map(cond, mu).total_variation() - mu.masses().sum()) <= 1e-12 * (1 + mu.masses().sum())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=10), min_size=4, max_size=4),
       st.lists(st.floats(min_value=0.1, max_value=5), min_size=4, max_size=4))
def test_g_moment_bounds(w, g):
    c = Condenser.build([Plate(np.arange(12.0).reshape(4, 3), 1)], [1.0], g_values=[np.array(g)])
    mu = VectorMeasure((w,))
    m = g_moment(c, mu, 0)
    mass = sum(w)
    assert c.g_inf * mass - 1e-9 <= m <= c.g_sup * mass + 1e-9
