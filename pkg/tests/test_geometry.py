import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjsing.geometry import (Euclidean, FlatTorus, Product, Sphere2, diagonal_distance, grid_points,
                             manifold_from_dict, midpoint_diagonal_distance, minimizing_geodesics, random_points,
                             window_diameter)

coord = st.floats(-3, 3, allow_nan=False)


def sphere_point(draw_vec):
    v = np.asarray(draw_vec, float)
    n = np.linalg.norm(v)
    return v / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


MANIFOLDS = [Euclidean(2), FlatTorus((1.0, 2.0)), Sphere2(1.5), Product(FlatTorus((1.0,)), Sphere2(1.0))]


@pytest.mark.parametrize("m", MANIFOLDS, ids=lambda m: type(m).__name__)
def test_metric_axioms_on_random_triples(m):
    rng = np.random.default_rng(3)
    X, Y, Z = (random_points(m, rng, 200, -np.ones(m.ambient), np.ones(m.ambient)) for _ in range(3))
    dxy, dyz, dxz = m.distance(X, Y), m.distance(Y, Z), m.distance(X, Z)
    assert np.allclose(dxy, m.distance(Y, X))
    assert np.all(dxz <= dxy + dyz + 1e-12)
    assert np.allclose(m.distance(X, X), 0.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(coord, min_size=2, max_size=2), st.lists(coord, min_size=2, max_size=2))
def test_torus_log_lands_on_target(a, b):
    T = FlatTorus((1.0, 2.0))
    x, y = T.normalize(np.array(a)), T.normalize(np.array(b))
    v = T.log(x, y)
    assert T.distance(T.exp(x, v), y) < 1e-12
    assert abs(np.linalg.norm(v) - T.distance(x, y)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(coord, min_size=3, max_size=3), st.lists(coord, min_size=3, max_size=3))
def test_sphere_exp_log_roundtrip(a, b):
    S = Sphere2(2.0)
    x, y = S.normalize(2 * sphere_point(a)), S.normalize(2 * sphere_point(b))
    if S.distance(x, y) > 0.99 * math.pi * 2:
        return
    assert S.distance(S.exp(x, S.log(x, y)), y) < 1e-9


def test_torus_geodesic_counts():
    T = FlatTorus((1.0, 1.0))
    segs, exhaustive = minimizing_geodesics(T, [0, 0], [0.5, 0.0])
    assert len(segs) == 2 and exhaustive
    segs, _ = minimizing_geodesics(T, [0, 0], [0.5, 0.5])
    assert len(segs) == 4
    segs, _ = minimizing_geodesics(T, [0, 0], [0.2, 0.1])
    assert len(segs) == 1


def test_sphere_antipodes_return_a_capped_fan():
    S = Sphere2(1.0)
    segs, exhaustive = minimizing_geodesics(S, [0, 0, 1], [0, 0, -1], cap=8)
    assert len(segs) == 8 and not exhaustive
    for s in segs:
        assert S.distance(s.at(1.0), [0, 0, -1]) < 1e-9
        assert abs(s.length - math.pi) < 1e-12


def test_cap_must_be_positive():
    with pytest.raises(ValueError):
        minimizing_geodesics(Euclidean(2), [0, 0], [1, 1], cap=0)


def test_closed_form_distances():
    assert FlatTorus((1.0,)).distance(np.array([0.1]), np.array([0.9])) == pytest.approx(0.2)
    assert Euclidean(2).distance(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)
    P = Product(FlatTorus((1.0,)), FlatTorus((1.0,)))
    assert P.distance(np.array([0.0, 0.0]), np.array([0.3, 0.4])) == pytest.approx(0.5)


def test_diagonal_distance_matches_brute_force():
    for m, x, y in [(Euclidean(2), [0.0, 0.0], [0.5, 0.0]), (FlatTorus((1.0,)), [0.1], [0.8]),
                    (Sphere2(1.0), [1, 0, 0], [0, 1, 0])]:
        assert midpoint_diagonal_distance(m, x, y) == pytest.approx(diagonal_distance(m, x, y), abs=1e-6)
    assert diagonal_distance(Euclidean(2), [0, 0], [0.5, 0]) == pytest.approx(0.5 / math.sqrt(2))


def test_roundtrip_from_dict():
    for m in MANIFOLDS:
        assert manifold_from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        manifold_from_dict({"kind": "hyperbolic"})


def test_grids_and_window_diameter():
    E = Euclidean(2)
    g = grid_points(E, 0.5, [-1, -1], [1, 1])
    assert len(g) == 25
    assert window_diameter(E, [-2, -2], [2, 2]) == 4.0
    assert window_diameter(FlatTorus((1.0, 3.0))) == 3.0
    S = Sphere2(1.0)
    pts = grid_points(S, 0.2)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)


def test_torus_normalize_is_periodic():
    T = FlatTorus((1.0,))
    assert T.normalize(np.array([1.25]))[0] == pytest.approx(0.25)
    assert T.normalize(np.array([-0.25]))[0] == pytest.approx(0.75)
