import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjsing.geometry import Euclidean, FlatTorus, Product, Sphere2
from hjsing.laxoleinik import (INF, BoxComplement, CharacteristicOfSet, Circle, Diagonal, EmptySet, Evolution, Expression, Field,
                               FinitePoints, InfiniteValue, Polyline, Sampled, Window, closed_set_from_dict,
                               datum_from_dict, domination_check, lsc_regularize, regularized)
from hjsing.tonelli import Kinetic

E2 = Euclidean(2)
BOX = Window(0.25, 20.0, [-2, -2], [2, 2])


def evolution(C, window=BOX, m=E2, **kw):
    return Evolution(CharacteristicOfSet(C), Kinetic(), m, window, **kw)


def test_two_points_midpoint_has_two_minimizers():
    ev = evolution(FinitePoints(E2, [[-1, 0], [1, 0]]))
    res = ev.evaluate_minus(1.0, [0.0, 0.0])
    assert res.value == pytest.approx(0.5)
    assert len(res.optima) == 2 and res.exhaustive


def test_value_is_squared_distance_over_two_t():
    ev = evolution(Circle(np.zeros(2), 1.0))
    X = np.array([[0.5, 0.0], [0.0, 1.5], [1.0, 1.0]])
    d = np.abs(np.linalg.norm(X, axis=1) - 1)
    assert ev.value(2.0, X) == pytest.approx(d**2 / 4)


def test_plus_operator_on_single_point():
    ev = evolution(FinitePoints(E2, [[0.0, 0.0]]), Window(0.25, 20.0, [-5, -5], [5, 5]))
    res = ev.evaluate_plus(1.0, 1.0, [1.0, 0.0])
    assert res.value == pytest.approx(0.5, abs=1e-10)
    assert res.argmax == pytest.approx([2.0, 0.0], abs=1e-6)


def test_plus_never_exceeds_minus():
    ev = evolution(FinitePoints(E2, [[-1, 0], [1, 0]]))
    rng = np.random.default_rng(2)
    for x in rng.uniform(-1, 1, (10, 2)):
        assert ev.evaluate_plus(1.0, 0.3, x).value <= ev.value(1.0, x[None])[0] + 1e-9


def test_diagonal_value_is_quarter_squared_distance():
    T = FlatTorus((1.0,))
    ev = evolution(Diagonal(T, 1 / 32), Window(0.25, 4.0), Product(T, T))
    res = ev.evaluate_minus(1.0, [0.0, 0.5])
    assert res.value == pytest.approx(0.0625)
    assert len(res.optima) == 2
    res = ev.evaluate_minus(1.0, [0.1, 0.5])
    assert res.value == pytest.approx(0.04) and len(res.optima) == 1


def test_sphere_diagonal_marks_antipodes_non_exhaustive():
    S = Sphere2(1.0)
    ev = evolution(Diagonal(S, 0.2), Window(0.25, 4.0), Product(S, S))
    res = ev.evaluate_minus(1.0, [0, 0, 1, 0, 0, -1])
    assert res.value == pytest.approx(math.pi**2 / 4)
    assert not res.exhaustive


def test_empty_set_is_infinite():
    ev = evolution(EmptySet(E2))
    assert ev.evaluate_minus(1.0, [0, 0]).value == INF
    assert not np.isfinite(ev.value(1.0, np.zeros((1, 2)))[0])


def test_polyline_projections_include_the_corner_bisector():
    sq = Polyline(np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]), True)
    ws, _ = sq.projections(np.array([0.5, 0.5]), 1e-9, 8)
    # near-optimal feet come in two tight groups, one per side of the corner
    groups = []
    for w in ws:
        if all(np.linalg.norm(w - g) > 0.1 for g in groups):
            groups.append(w)
    assert len(groups) == 2
    assert sq.distance(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)


def test_box_complement_agrees_with_its_boundary_inside():
    sq = Polyline(np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]), True)
    box = BoxComplement([-1.0, -1.0], [1.0, 1.0])
    X = np.random.default_rng(3).uniform(-0.99, 0.99, (50, 2))
    assert box.distance(X) == pytest.approx(sq.distance(X), abs=1e-14)
    assert box.distance(np.array([[1.5, 0.0]]))[0] == 0.0
    ws, exhaustive = box.projections(np.array([0.5, 0.5]))
    assert exhaustive and len(ws) == 2
    assert closed_set_from_dict(box.to_dict(), E2).to_dict() == box.to_dict()


def test_nonpositive_time_rejected():
    ev = evolution(FinitePoints(E2, [[0, 0]]))
    with pytest.raises(ValueError):
        ev.evaluate_minus(0.0, [1, 1])


def test_window_must_be_nonempty():
    with pytest.raises(ValueError):
        Window(1.0, 0.5)
    with pytest.raises(ValueError):
        Window(0.5, 1.0, [0, 0], [0, 1])


def test_smooth_datum_grid_evolution_matches_hopf_lax():
    # u = x^2/2 evolves to x^2 / (2 (1 + t)) under the kinetic Lagrangian
    E1 = Euclidean(1)
    ev = Evolution(Expression(E1, "0.5*x0*x0"), Kinetic(), E1, Window(0.25, 4.0, [-3], [3]), h=0.05)
    for x in (-0.7, 0.0, 0.4):
        assert ev.evaluate_minus(1.0, [x]).value == pytest.approx(x * x / 4, abs=1e-9)


def test_field_datum_semigroup():
    ev = evolution(FinitePoints(E2, [[0.0, 0.0]]))
    nested = Evolution(Field(ev, 1.0), Kinetic(), E2, BOX, h=1 / 32)
    x = np.array([0.6, -0.3])
    assert nested.evaluate_minus(0.5, x).value == pytest.approx(ev.value(1.5, x[None])[0], abs=1e-8)


def test_domination_on_random_pairs():
    ev = evolution(Circle(np.zeros(2), 1.0))
    rng = np.random.default_rng(5)
    pairs = [(t, x, t + dt, y) for t, dt, x, y in zip(rng.uniform(0.3, 2, 50), rng.uniform(0.01, 2, 50),
                                                      rng.uniform(-2, 2, (50, 2)), rng.uniform(-2, 2, (50, 2)))]
    rep = domination_check(ev, pairs)
    assert rep.violations == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.integers(0, 5))
def test_lsc_regularization_is_idempotent(values, spike):
    E1 = Euclidean(1)
    vals = np.array(values)
    vals[spike] = INF if spike % 2 else vals[spike] + 100
    data = Sampled(E1, np.linspace(0, 1, 6)[:, None], vals)
    once = regularized(data)
    twice = regularized(once)
    assert np.array_equal(once.values, twice.values)
    for p in data.points:
        assert lsc_regularize(data, p) <= data.value(p[None])[0]


def test_config_blocks_roundtrip():
    for block in [{"kind": "points", "points": [[0.0, 1.0]]}, {"kind": "circle", "center": [0.0, 0.0], "radius": 2.0},
                 {"kind": "polyline", "vertices": [[0.0, 0.0], [1.0, 0.0]], "closed": False}]:
        assert closed_set_from_dict(block, E2).to_dict() == block
    assert isinstance(datum_from_dict({"kind": "expression", "expression": "x0"}, E2), Expression)
    with pytest.raises(ValueError):
        closed_set_from_dict({"kind": "blob"}, E2)
