"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (visible with ``pytest -s``) and then asserts.
"""
import json

import pytest

from hjsing import checks
from hjsing.cli import main

from conftest import ACCEPTANCE_LINES

THREADS = 4


@pytest.fixture(scope="module")
def ctx():
    return checks.Context(checks.FULL, seed=0, threads=THREADS)


def run(fn, ctx):
    res = fn(ctx)
    ACCEPTANCE_LINES.append(res.line())
    print(res.line(), json.dumps(res.metrics, sort_keys=True, default=str))
    assert res.passed, res.metrics
    return res


def test_01_closed_form_action(ctx):
    run(checks.check_closed_form_action, ctx)


def test_02_evolution_exactness(ctx):
    run(checks.check_evolution_exactness, ctx)


def test_03_oracle_equivalence(ctx):
    run(checks.check_oracle_equivalence, ctx)


def test_04_semigroup_and_domination(ctx):
    run(checks.check_semigroup_domination, ctx)


def test_05_composed_inequality(ctx):
    run(checks.check_composed_inequality, ctx)


def test_06_gradient_identity(ctx):
    run(checks.check_gradient_identity, ctx)


def test_07_medial_axis(ctx):
    run(checks.check_medial_axis, ctx)


def test_08_cut_time(ctx):
    run(checks.check_cut_time, ctx)


def test_09_adapted_step(ctx):
    run(checks.check_adapted_step, ctx)


def test_10_step_bounds(ctx):
    run(checks.check_bounds, ctx)


def test_11_retraction_evidence(ctx):
    run(checks.check_retraction, ctx)


def test_12_nu_set_agreement(ctx):
    run(checks.check_nu_agreement, ctx)


def test_13_thread_count_determinism(tmp_path):
    reports, traces = [], []
    for n in (1, 4, 8):
        out = tmp_path / f"verify{n}"
        code = main(["verify", "--profile", "quick", "--threads", str(n), "--out", str(out)])
        assert code == 0
        reports.append((out / "verify.json").read_bytes())
        rdir = tmp_path / f"retract{n}"
        assert main(["retract", "--fixture", "two-points", "--threads", str(n), "--out", str(rdir)]) == 0
        traces.append((rdir / "traces.csv").read_bytes() + (rdir / "retract.json").read_bytes())
    same = len(set(reports)) == 1 and len(set(traces)) == 1
    line = f"[{'PASS' if same else 'FAIL'}] 13 thread-count determinism (threads 1, 4, 8)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert same
