import json

import numpy as np
import pytest

import hybridid as hi
from hybridid.config import RunConfig
from hybridid.modeldoc import (
    canonical_dumps,
    document_to_model,
    model_to_document,
)


def test_config_defaults_materialize_and_round_trip():
    cfg = RunConfig.from_json("{}")
    d = cfg.to_dict()
    # every section is present with concrete defaults
    assert set(d) == {"dictionary", "psi_dictionary", "solver", "lambda_grid",
                      "limits", "transition", "monitor", "tol_merge", "seed"}
    assert d["limits"] == {"max_modes": 10, "min_segment": 3}
    assert d["monitor"]["miss_limit"] == 3
    assert d["lambda_grid"] == "auto"
    again = RunConfig.from_json(json.dumps(d))
    assert again.to_dict() == d


def test_config_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_json('{"bogus": 1}')
    with pytest.raises(ValueError, match="unknown solver keys"):
        RunConfig.from_json('{"solver": {"epsilonn": 1}}')
    with pytest.raises(ValueError, match="unknown dictionary keys"):
        RunConfig.from_json('{"dictionary": {"order": 2}}')
    with pytest.raises(ValueError, match="valid JSON"):
        RunConfig.from_json("{nope")


def test_config_custom_terms_round_trip():
    text = json.dumps({
        "dictionary": {
            "polynomial_order": 1,
            "custom_terms": [{"op": "sin", "args": ["u1"]},
                             {"op": "mul", "args": ["y1", "u1"]}],
        }
    })
    cfg = RunConfig.from_json(text)
    assert [t.op for t in cfg.dictionary.custom_terms] == ["sin", "mul"]
    again = RunConfig.from_json(json.dumps(cfg.to_dict()))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError, match="unknown custom term op"):
        RunConfig.from_json(json.dumps(
            {"dictionary": {"custom_terms": [{"op": "gauss", "args": ["y1"]}]}}
        ))


def test_config_value_validation():
    with pytest.raises(ValueError, match="lambda_grid"):
        RunConfig.from_json('{"lambda_grid": "whenever"}')
    with pytest.raises(ValueError, match="max_modes"):
        RunConfig.from_json('{"limits": {"max_modes": 0}}')
    cfg = RunConfig.from_json('{"lambda_grid": [0.1, 0.001]}')
    assert cfg.lambda_grid == [0.1, 0.001]


def test_canonical_float_formatting():
    assert canonical_dumps({"x": 0.3}) == '{"x":0.29999999999999999}'
    assert canonical_dumps({"a": 1.0, "b": [1, True, None, "s"]}) == \
        '{"a":1,"b":[1,true,null,"s"]}'
    with pytest.raises(ValueError, match="non-finite"):
        canonical_dumps({"x": float("nan")})
    # float64 round trip through the 17-digit representation is lossless
    for v in (0.1, 1e-17, 123456.789, np.pi):
        assert float(json.loads(canonical_dumps({"v": v}))["v"]) == v


def test_model_document_round_trip(thermostat_identified):
    model, seg = thermostat_identified
    doc = model_to_document(model, 1, 0, metadata={"note": "fixture"})
    text = canonical_dumps(doc)
    loaded_doc = json.loads(text)
    assert canonical_dumps(loaded_doc) == text   # byte-identical re-save

    back = document_to_model(loaded_doc)
    assert back.K == model.K
    for a, b in zip(model.subsystems, back.subsystems):
        assert np.array_equal(a.coefficients, b.coefficients)
        assert a.term_names == b.term_names
        assert len(a.fit_rows) == len(b.fit_rows)
    for ra, rb in zip(model.rules, back.rules):
        assert (ra.from_mode, ra.to_mode) == (rb.from_mode, rb.to_mode)
        assert np.array_equal(ra.v, rb.v)
        assert ra.training_accuracy == rb.training_accuracy
    # the reloaded model simulates identically
    a = hi.simulate(model, [20.0], 1, steps=200)
    b = hi.simulate(back, [20.0], 1, steps=200)
    assert np.array_equal(a.trajectory.outputs, b.trajectory.outputs)
    assert np.array_equal(a.mode_trace, b.mode_trace)


def test_document_schema_version_checked(thermostat_identified):
    model, _ = thermostat_identified
    doc = model_to_document(model, 1, 0)
    doc["schema_version"] = 99
    with pytest.raises(ValueError, match="schema_version"):
        document_to_model(doc)
