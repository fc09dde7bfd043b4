import numpy as np
import pytest

from hjsing.applications import (FIXTURES, au_mask, fixture, hausdorff, homotopy_evidence, label_components,
                                 medial_axis, nu_grid, nu_set)
from hjsing.geometry import Euclidean, FlatTorus, Sphere2


def test_registry_builds_every_fixture():
    for name in FIXTURES:
        ev = fixture(name).evolution()
        assert ev.h > 0
    with pytest.raises(KeyError):
        fixture("moebius")


def test_component_labels_with_and_without_wrap():
    mask = np.zeros((6, 6), bool)
    mask[:, 0] = mask[:, 5] = True
    assert label_components(mask)[1] == 2
    assert label_components(mask, wrap=True)[1] == 1
    diag = np.eye(4, dtype=bool)
    assert label_components(diag)[1] == 4  # four-adjacency ignores diagonal contact


def test_hausdorff_basics():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, a + [0, 0.5]) == pytest.approx(0.5)


def test_two_point_mask_is_the_bisector():
    ax = medial_axis(fixture("two-points"))
    pts = ax.points()
    assert len(pts) == ax.grid.shape[1]
    assert np.all(pts[:, 0] == 0.0)
    assert ax.slice_agreement
    assert len(ax.polylines()) == ax.grid.shape[1] - 1


def test_torus_point_mask_is_the_antipode():
    ax = medial_axis(fixture("torus-point"))
    assert ax.points() == pytest.approx(np.array([[0.5]]))


def test_nu_set_on_circle_marks_antipodal_pairs():
    T = FlatTorus((1.0,))
    res = nu_set(T, nu_grid(T, 8))
    assert res.agreement == 1.0
    pts = res.points
    antipodal = np.isclose(np.abs(pts[:, 0] - pts[:, 1]), 0.5)
    assert np.array_equal(res.classifier, antipodal)


def test_nu_set_empty_in_the_plane():
    res = nu_set(Euclidean(2), nu_grid(Euclidean(2), 3, [-1, -1], [1, 1]))
    assert not res.classifier.any() and not res.enumeration.any()


def test_sphere_grid_is_antipodally_closed():
    pts = nu_grid(Sphere2(1.0), 4)
    for p in pts:
        assert np.min(np.linalg.norm(pts + p, axis=1)) < 1e-12


def test_au_is_the_diagonal_on_the_torus():
    T = FlatTorus((1.0, 1.0))
    pts = nu_grid(T, 3)
    assert np.array_equal(au_mask(T, pts, 4.0), np.eye(len(pts), dtype=bool))


def test_evidence_on_torus_point():
    fx = fixture("torus-point")
    seeds = fx.seeds(np.random.default_rng(0), 8)
    ev = homotopy_evidence(fx, seeds)
    assert ev.passed
    assert ev.to_dict() == {"fixture": "torus-point", "sigma_components": 1, "complement_components": 1,
                            "coverage": 1.0, "pass": True}
