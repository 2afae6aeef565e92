import json

import pytest

from vmcheck.compiler import FrameSet, compile_spec, emit, parse_spec, spec_to_json, validate_output
from vmcheck.errors import SpecError
from vmcheck.presets import PRESET_IDS, describe, preset
from vmcheck.tables import ObservedTable


def test_ids():
    assert len(PRESET_IDS) == 13
    assert all(describe(p) for p in PRESET_IDS)
    with pytest.raises(SpecError, match="valid presets"):
        describe("teaser_z")


@pytest.mark.parametrize("pid", PRESET_IDS)
def test_preset_compiles_and_round_trips(demo, pid):
    bundle, obs = demo
    s = preset(pid, bundle, obs)
    assert parse_spec(spec_to_json(s)) == s
    out = compile_spec(s, bundle, obs, seed=1)
    assert validate_output(emit(out)) == []
    assert isinstance(out, FrameSet) == (pid in ("teaser_c", "expressiveness_c"))


def test_raincloud_layer_inventory(demo):
    bundle, obs = demo
    s = preset("teaser_g", bundle, obs)
    assert [l.mark for l in s.model_layers] == ["slab", "interval"]
    assert [l.mark for l in s.obs_layers] == ["dots"]
    doc = json.loads(emit(compile_spec(s, bundle, obs)))
    ids = [l["transform"][0]["filter"]["equal"] for l in doc["layer"]]
    assert ids == ["m0:slab", "m1:interval", "o0:dots"]


def test_preset_needs_predictor_kinds(demo):
    bundle, obs = demo
    only_y = ObservedTable("y", [1.0, 2.0])
    with pytest.raises(SpecError, match="numeric predictor"):
        preset("teaser_d", bundle, only_y)
