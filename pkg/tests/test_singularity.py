import numpy as np
import pytest

from hjsing.applications import fixture
from hjsing.geometry import Euclidean, FlatTorus, Sphere2
from hjsing.laxoleinik import CharacteristicOfSet, Circle, Evolution, FinitePoints, Window
from hjsing.singularity import (IN_AUBRY, IN_C, OUTSIDE, REGULAR, SINGULAR, UNDECIDED, Tolerances,
                                au_set_membership, aubry_set_membership, backward_characteristics, classify,
                                cut_time)
from hjsing.tonelli import Kinetic, Mechanical


@pytest.fixture(scope="module")
def two_points():
    return fixture("two-points").evolution()


@pytest.fixture(scope="module")
def circle():
    return fixture("circle").evolution()


def test_regular_point_has_characteristic_gradient(two_points):
    rep = classify(two_points, 1.0, [0.3, 0.1])
    assert rep.classification == REGULAR
    dt, dx = rep.gradient
    assert dx == pytest.approx([-0.7, 0.1])
    assert dt == pytest.approx(-0.5 * (0.49 + 0.01))


def test_bisector_is_singular(two_points):
    rep = classify(two_points, 1.0, [0.0, 0.7])
    assert rep.classification == SINGULAR and rep.n_optima == 2


def test_circle_center_and_decision_band(circle):
    assert classify(circle, 1.0, [0.0, 0.0]).classification == SINGULAR
    assert classify(circle, 1.0, [1e-3, 0.0]).classification == REGULAR
    # very close to the center the near-optimal arc is wider than delta_noise but not delta_sep
    assert classify(circle, 1.0, [1e-4, 0.0]).classification == UNDECIDED
    assert classify(circle, 1.0, [1e-5, 0.0]).classification == SINGULAR


def test_separation_grows_toward_the_center(circle):
    tol = Tolerances.for_evolution(circle)
    seps = [classify(circle, 1.0, [r, 0.0], tol).separation for r in (1e-3, 3e-4, 1e-4, 1e-5, 1e-7)]
    assert seps == sorted(seps) and seps[0] == 0.0 and seps[-1] == pytest.approx(2.0)


def test_circle_cut_time(circle):
    assert cut_time(circle, 1.0, [0.5, 0.0]).tau == pytest.approx(2.0, rel=0.02)
    # off-center: analytic tau = t / (1 - |x|) for the unit circle seen from inside
    x = np.array([0.3, 0.2])
    assert cut_time(circle, 1.0, x).tau == pytest.approx(1.0 / (1 - np.linalg.norm(x)), rel=0.02)


def test_bisector_cut_time_is_t(two_points):
    ct = cut_time(two_points, 1.5, [0.0, 0.3])
    assert ct.tau == 1.5 and not ct.at_horizon


def test_exterior_rays_reach_the_horizon(two_points):
    ct = cut_time(two_points, 1.0, [1.5, 0.0], horizon=5.0)
    assert ct.at_horizon and ct.tau == pytest.approx(6.0)


def test_backward_characteristics(two_points):
    chars, exhaustive = backward_characteristics(two_points, 1.0, [0.0, 0.5])
    assert len(chars) == 2 and exhaustive
    for c in chars:
        assert c.defect < 1e-9


def test_backward_characteristics_capped_on_circle_center(circle):
    chars, exhaustive = backward_characteristics(circle, 1.0, [0.0, 0.0], cap=8)
    assert len(chars) == 8 and not exhaustive


def test_mechanical_classification_on_torus():
    ev = fixture("mechanical-torus").evolution()
    assert classify(ev, 1.0, [0.5]).classification == SINGULAR
    rep = classify(ev, 1.0, [0.2])
    assert rep.classification == REGULAR
    chars, _ = backward_characteristics(ev, 1.0, [0.2])
    assert chars[0].residual <= 1e-6


def test_aubry_membership():
    C = FinitePoints(Euclidean(2), [[-1.0, 0.0], [1.0, 0.0]])
    assert aubry_set_membership(C, [1.0, 0.0], 32) == IN_C
    assert aubry_set_membership(C, [1.5, 0.3], 32) == IN_AUBRY
    assert aubry_set_membership(C, [0.5, 0.3], 32) == OUTSIDE
    circ = Circle(np.zeros(2), 1.0)
    assert aubry_set_membership(circ, [0.0, 0.0], 32) == OUTSIDE
    assert aubry_set_membership(circ, [2.0, 0.0], 32) == IN_AUBRY


def test_au_membership():
    E = Euclidean(2)
    assert au_set_membership(E, [0, 0], [1, 1], 10.0)
    T = FlatTorus((1.0,))
    assert not au_set_membership(T, [0.0], [0.2], 4.0)
    assert au_set_membership(T, [0.3], [0.3], 4.0)
    S = Sphere2(1.0)
    assert not au_set_membership(S, [1, 0, 0], [0, 1, 0], 4.0)
