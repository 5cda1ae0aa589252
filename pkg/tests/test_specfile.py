import json

import numpy as np
import pytest

from spillback.errors import CycleDetected, SpecParseError
from spillback.specfile import load_spec, parse_assignments, parse_spec


def base():
    return {
        "nodes": 2,
        "lambda0": 1.0,
        "links": [{"id": "a", "from": 0, "to": 1, "rho_max": 1.0, "flow": {"shape": "linear", "f_max": 2.0}}],
    }


def test_bundled_specs_load():
    for name in ("figure1", "single-link", "diamond.json"):
        spec = load_spec(name)
        assert spec.topology.links
    fig = load_spec("figure1")
    assert fig.lambda0 == 2.0 and list(fig.target_flow) == [1, 1, 0.5, 0.5]


def test_weights_and_defaults():
    d = base()
    spec = parse_spec(d)
    assert np.allclose(spec.policy.weights, [1.0]) and spec.target_flow is None
    d["routing"] = {"family": "exp-residual", "eta": 2.0, "weights": {"a": 3.0}}
    spec = parse_spec(d)
    assert spec.policy.eta == 2.0 and np.allclose(spec.policy.weights, [3.0])


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("nodes"), "nodes"),
        (lambda d: d["links"][0]["flow"].update(f_max=-1), "links[0].flow.f_max"),
        (lambda d: d["links"][0]["flow"].update(shape="cubic"), "links[0].flow.shape"),
        (lambda d: d["links"][0].update(rho_max="x"), "links[0].rho_max"),
        (lambda d: d.update(routing={"weights": {"a": -1.0}}), "routing.weights"),
        (lambda d: d.update(routing={"weights": {"zz": 1.0}}), "routing.weights"),
        (lambda d: d.update(routing={"family": "logit"}), "routing.family"),
    ],
)
def test_field_diagnostics(mutate, field):
    d = base()
    mutate(d)
    with pytest.raises(SpecParseError, match=field.replace("[", r"\[").replace("]", r"\]")):
        parse_spec(d)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"nodes": 2,\n "lambda0": }')
    with pytest.raises(SpecParseError, match=r"bad.json:2:\d+"):
        load_spec(p)


def test_topology_errors_propagate():
    d = base()
    d["nodes"] = 3
    d["links"] = [
        {"id": "a", "from": 0, "to": 1, "rho_max": 1, "flow": {"f_max": 1}},
        {"id": "b", "from": 1, "to": 2, "rho_max": 1, "flow": {"f_max": 1}},
        {"id": "c", "from": 2, "to": 1, "rho_max": 1, "flow": {"f_max": 1}},
    ]
    with pytest.raises(CycleDetected):
        parse_spec(json.loads(json.dumps(d)))


def test_missing_file():
    with pytest.raises(SpecParseError):
        load_spec("/nonexistent/nowhere.json")


def test_assignments():
    assert parse_assignments(["e3=0.6", "e4=0.6,e1=1"]) == {"e3": 0.6, "e4": 0.6, "e1": 1.0}
    with pytest.raises(SpecParseError):
        parse_assignments(["e3"])
    with pytest.raises(SpecParseError):
        parse_assignments(["e3=abc"])
