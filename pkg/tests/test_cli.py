import json
import xml.dom.minidom

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjsing.applications import FIXTURES
from hjsing.cli import main
from hjsing.config import ConfigError, ExperimentConfig, config_for_fixture

TWO_POINTS = {
    "manifold": {"kind": "euclidean", "n": 2},
    "lagrangian": {"kind": "kinetic"},
    "datum": {"kind": "characteristic", "set": {"kind": "points", "points": [[-1.0, 0.0], [1.0, 0.0]]}},
    "window": {"t_min": 0.25, "t_max": 20.0, "lo": [-2.0, -2.0], "hi": [2.0, 2.0]},
    "h": 0.125,
    "seeds": 3,
}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_configs_roundtrip(name):
    cfg = config_for_fixture(name)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(1e-9, 1e-3), st.integers(0, 2**64 - 1), st.integers(0, 500))
def test_config_roundtrip_property(h, eps, seed, seeds):
    data = dict(TWO_POINTS, h=h, rng_seed=seed, seeds=seeds, tolerances={"eps_opt": eps, "eps_ray": eps})
    cfg = ExperimentConfig.from_dict(data)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg and again.to_json() == cfg.to_json()


@pytest.mark.parametrize("patch", [{"h": -1.0}, {"window": {"t_min": 2.0, "t_max": 1.0}},
                                   {"window": {"t_min": 0.5, "t_max": 1.0, "lo": [0, 0], "hi": [0, 1]}},
                                   {"tolerances": {"eps_opt": 0}}, {"manifold": {"kind": "klein"}},
                                   {"unknown": 1}])
def test_schema_violations(patch):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(TWO_POINTS, **patch))


def test_schema_violation_exit_code(tmp_path):
    bad = write(tmp_path, {"manifold": {"kind": "euclidean", "n": 2}})
    assert main(["evolve", "--config", bad, "--out", str(tmp_path / "o")]) == 2


def test_infinite_window_exits_with_failure(tmp_path):
    data = dict(TWO_POINTS, datum={"kind": "characteristic", "set": {"kind": "empty"}})
    out = tmp_path / "o"
    assert main(["evolve", "--config", write(tmp_path, data), "--out", str(out)]) == 1
    assert "+inf" in json.loads((out / "evolve.json").read_text())["error"]


def test_evolve_is_byte_identical_across_threads(tmp_path):
    cfg = write(tmp_path, TWO_POINTS)
    outs = []
    for n in (1, 4):
        out = tmp_path / f"o{n}"
        assert main(["evolve", "--config", cfg, "--out", str(out), "--threads", str(n)]) == 0
        outs.append(((out / "field.csv").read_bytes(), (out / "evolve.json").read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][0].decode().splitlines()[0]
    assert header == "t,x0,x1,u,grad0,grad1,n_optima,singular"


def test_retract_with_zero_seeds(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, dict(TWO_POINTS, seeds=0))
    assert main(["retract", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "traces.csv").read_text().splitlines()
    assert lines == ["seed_id,k,t,x0,x1,s,singular,d_to_source,bound_margin_point,bound_margin_cum"]


def test_retract_svg_has_one_polyline_per_trace(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, dict(TWO_POINTS, rng_seed=7))
    assert main(["retract", "--config", cfg, "--out", str(out), "--threads", "2"]) == 0
    report = json.loads((out / "retract.json").read_text())
    doc = xml.dom.minidom.parse(str(out / "traces.svg"))
    traces = [p for p in doc.getElementsByTagName("polyline") if p.getAttribute("class") == "trace"]
    assert len(traces) == report["seeds"] - report["dropped_near_aubry"]
    groups = {g.getAttribute("id") for g in doc.getElementsByTagName("g")}
    assert "singular-mask" in groups


def test_medial_axis_and_cut_time_outputs(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, TWO_POINTS)
    assert main(["medial-axis", "--config", cfg, "--out", str(out)]) == 0
    assert main(["cut-time", "--config", cfg, "--out", str(out)]) == 0
    mask = (out / "mask.csv").read_text().splitlines()
    assert mask[0].endswith(",tau,aubry")
    xml.dom.minidom.parse(str(out / "mask.svg"))
    rows = [r.split(",") for r in (out / "tau.csv").read_text().splitlines()[1:]]
    for r in rows:
        tau, singular = float(r[-2]), r[-3]
        if singular == "1":
            assert tau == float(r[0])


def test_nu_set_fixture(tmp_path):
    out = tmp_path / "o"
    assert main(["nu-set", "--fixture", "torus-diagonal", "--out", str(out)]) == 0
    assert json.loads((out / "nu_set.json").read_text())["agreement"] == 1.0
