import numpy as np
import pytest

from hjsing.applications import fixture
from hjsing.checks import single_point_evolution
from hjsing.homotopy import (AubryCandidate, StepSettings, StepTooLarge, WindowExit, adapted_step, compose_trace,
                             cumulative_records, rescaled_retraction, step_s0, verify_suite_bounds)
from hjsing.singularity import REGULAR, SINGULAR, UNDECIDED


@pytest.fixture(scope="module")
def single():
    return single_point_evolution()


def test_single_step_doubles_the_distance(single):
    st = adapted_step(single, 1.0, [1.0, 0.0], 1.0)
    assert st.y == pytest.approx([2.0, 0.0], abs=1e-6)
    assert st.value == pytest.approx(0.5, abs=1e-9)
    names = {b.name: b for b in st.bounds}
    assert names["step_distance"].lhs == pytest.approx(1.0) and names["step_distance"].rhs == pytest.approx(2.0)
    assert all(b.ok for b in st.bounds)


def test_strict_mode_refuses_oversized_steps(single):
    with pytest.raises(StepTooLarge):
        adapted_step(single, 1.0, [1.0, 0.0], 1.0, StepSettings(strict=True))
    s0 = step_s0(single, 1.0, [1.0, 0.0], 2.0)
    assert 0 < s0 < 1


def test_composition_follows_the_radial_law(single):
    tr = compose_trace(single, 1.0, [1.0, 0.0], [1.0, 1.0, 1.0])
    marks = [tr.steps[k - 1].y for k in tr.checkpoints]
    for got, want in zip(marks, ([2, 0], [3, 0], [4, 0])):
        assert got == pytest.approx(want, abs=1e-5)
    assert all(st.within_s0 for st in tr.steps)
    assert not tr.violations


def test_trace_leaving_the_time_window_raises(single):
    with pytest.raises(WindowExit):
        compose_trace(single, 1.0, [1.0, 0.0], [30.0])


def test_empty_durations_give_an_empty_trace(single):
    tr = compose_trace(single, 1.0, [1.0, 0.0], [])
    assert tr.steps == [] and tr.points.shape == (1, 2)


def test_retraction_ends_on_the_bisector():
    ev = fixture("two-points").evolution()
    seeds = np.array([[0.4, 0.2], [-0.3, -0.5], [0.1, 0.0]])
    res = rescaled_retraction(ev, 1.0, seeds)
    assert all(c in (SINGULAR, UNDECIDED) for c in res.final)
    for tr in res.traces:
        assert abs(tr.points[-1][0]) < 1e-6
        assert not tr.violations
        for st in tr.steps:
            if st.t + st.s > tr.tau + 0.1:
                assert st.classification != REGULAR
    rep = verify_suite_bounds(ev, res.traces)
    assert rep.checked > 0 and not rep.violations


def test_retraction_rejects_aubry_neighborhoods():
    ev = fixture("two-points").evolution()
    with pytest.raises(AubryCandidate):
        rescaled_retraction(ev, 1.0, [[1.5, 0.0]])
    res = rescaled_retraction(ev, 1.0, [[1.5, 0.0], [0.5, 0.1]], drop_inadmissible=True)
    assert res.dropped == [0] and len(res.traces) == 1


def test_cumulative_bounds_on_torus():
    ev = fixture("torus-point").evolution()
    tr = compose_trace(ev, 1.0, [0.3], [0.5])
    C = fixture("torus-point").closed_set
    for recs in cumulative_records(tr, C):
        assert all(r.ok for r in recs)
