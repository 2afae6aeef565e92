import json

import pytest

from helpers import scale_domains
from vmcheck.compiler import (
    STAGES,
    ChartSpec,
    FrameSet,
    LayerSpec,
    VmcSpec,
    apply_patches,
    canonical_json,
    compile_spec,
    emit,
    parse_spec,
    spec_to_json,
    validate_output,
)
from vmcheck.errors import CompileError, SpecError
from vmcheck.layers import Conditioning


def spec(**kw):
    base = {"model_layers": [{"mark": "densityline"}], "obs_layers": [{"mark": "densityline"}]}
    base.update(kw)
    return json.dumps(base)


def test_defaults_spelled_out():
    s = parse_spec(spec())
    doc = json.loads(spec_to_json(s))
    assert doc["draw"] == {"quantity": "y", "predictor_values": "fitted", "n_draws": "all", "seed": 0}
    assert doc["model_layers"] == [{"mark": "densityline", "policy": "collapse"}]
    assert doc["layout"] == "superpose" and doc["obs_transform"] == "identity"
    assert parse_spec(spec_to_json(s)) == s


@pytest.mark.parametrize(
    "text, path",
    [
        ("[1]", "$"),
        ("{", "$"),
        (spec(model_layers=[{"mark": "bar"}]), "model_layers[0].mark"),
        (spec(model_layers=[{"mark": "point", "policy": "often"}]), "model_layers[0].policy"),
        (spec(obs_transform="q2"), "obs_transform"),
        (spec(layout="explicit:bogus"), "layout"),
        (spec(obs_layers=[]), "obs_layers"),
        (spec(condition={"x": "a", "color": "a"}), "condition"),
        (spec(unknown=1), "$"),
        (spec(draw={"n_draws": 0}), "draw.n_draws"),
    ],
)
def test_spec_errors_have_paths(text, path):
    with pytest.raises(SpecError) as e:
        parse_spec(text)
    assert e.value.path == path


def test_explicit_layout_needs_no_obs_layers():
    s = parse_spec(json.dumps({"model_layers": [{"mark": "point"}], "layout": "explicit:qq"}))
    assert s.obs_layers == ()


def test_compile_single_chart(demo):
    bundle, obs = demo
    out = compile_spec(spec(), bundle, obs)
    assert isinstance(out, ChartSpec)
    text = emit(out)
    assert validate_output(text) == []
    doc = json.loads(text)
    assert doc["usermeta"]["vmc"]["stages"] == list(STAGES)
    assert {l["transform"][0]["filter"]["equal"] for l in doc["layer"]} == {"m0:curve", "o0:curve"}
    assert all(r["_layer"] in ("m0:curve", "o0:curve") for r in doc["data"]["values"])


def test_compile_deterministic_under_shuffled_rows(demo):
    bundle, obs = demo
    s = spec(model_layers=[{"mark": "densityline", "policy": "individual"}], condition={"color": "region"})
    a = emit(compile_spec(s, bundle, obs, seed=42))
    b = emit(compile_spec(s, bundle, obs, seed=42, row_order="shuffle"))
    assert a == b
    assert a != emit(compile_spec(s, bundle, obs, seed=43))


def test_individual_default_subsample(demo):
    bundle, obs = demo
    out = compile_spec(spec(model_layers=[{"mark": "densityline", "policy": "individual"}]), bundle, obs)
    rows = [r for r in out.spec["data"]["values"] if r["_layer"].startswith("m0")]
    assert len({r["_draw"] for r in rows}) == min(bundle.n_draws, 50)


def test_hops_frameset(demo):
    bundle, obs = demo
    s = spec(model_layers=[{"mark": "point", "policy": "hops"}], obs_layers=[{"mark": "point"}],
             condition={"x": "x"}, draw={"n_draws": 6})
    out = compile_spec(s, bundle, obs)
    assert isinstance(out, FrameSet)
    assert out.frame_key == ".draw" and len(out.frames) == 6
    doms = {tuple(scale_domains(c.spec)) for _, c in out.frames}
    assert len(doms) == 1
    assert validate_output(emit(out)) == []


def test_stage_errors(demo):
    bundle, obs = demo
    with pytest.raises(CompileError) as e:
        compile_spec(spec(draw={"quantity": "phi"}), bundle, obs)
    assert e.value.stage == "sample" and e.value.path == "draw.quantity"
    with pytest.raises(CompileError) as e:
        compile_spec(spec(layout="nest"), bundle, obs)
    assert e.value.stage == "construct"
    with pytest.raises(CompileError) as e:
        compile_spec(spec(model_layers=[{"mark": "lineribbon"}]), bundle, obs)
    assert e.value.stage == "translate" and not e.value.is_data_error
    with pytest.raises(CompileError) as e:
        compile_spec(spec(draw={"n_draws": 10_000}), bundle, obs)
    assert e.value.stage == "sample"


def test_mismatch_warning_recorded(demo):
    bundle, obs = demo
    s = spec(draw={"quantity": "sigma"}, obs_transform="mean",
             model_layers=[{"mark": "interval"}], obs_layers=[{"mark": "point"}])
    out = compile_spec(s, bundle, obs)
    assert any("sigma" in w for w in out.spec["usermeta"]["vmc"]["warnings"])


def test_new_predictor_values(demo):
    bundle, obs = demo
    csv = "x,region\n0.1,r1\n0.9,r3\n"
    s = spec(draw={"quantity": "mu", "predictor_values": {"csv": csv}},
             model_layers=[{"mark": "interval"}], obs_layers=[{"mark": "point"}])
    out = compile_spec(s, bundle, obs)
    assert validate_output(emit(out)) == []


def test_patches(demo):
    bundle, obs = demo
    s = spec(patches=[{"path": "config", "value": {"view": {"stroke": None}}}, {"path": "width", "value": 500}])
    out = compile_spec(s, bundle, obs)
    assert out.spec["width"] == 500
    with pytest.raises(CompileError) as e:
        compile_spec(spec(patches=[{"path": "layer.9.mark", "value": "point"}]), bundle, obs)
    assert e.value.path.startswith("patches")
    chart = compile_spec(spec(), bundle, obs)
    with pytest.raises(SpecError, match="violates"):
        apply_patches(chart, [{"path": "layer.0.mark", "value": "boxplot"}])


def test_validate_output_reports_paths(demo):
    bundle, obs = demo
    doc = json.loads(emit(compile_spec(spec(), bundle, obs)))
    del doc["layer"][0]["mark"]
    v = validate_output(canonical_json(doc))
    assert v and v[0].startswith("layer.0")
    doc["data"]["values"].append({"a": [1]})
    assert any("data.values" in x for x in validate_output(canonical_json(doc)))
    assert validate_output("nope")[0].startswith("parse")


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1.5, "é"]}) == '{"a":[1.5,"é"],"b":1}'
    with pytest.raises(ValueError):
        canonical_json({"a": float("nan")})


def test_vmcspec_object_compiles(demo):
    bundle, obs = demo
    s = VmcSpec(model_layers=(LayerSpec("auto"),), obs_layers=(LayerSpec("auto"),), layout="nest",
                condition=Conditioning(x="region"))
    out = compile_spec(s, bundle, obs)
    marks = [l["mark"]["type"] for l in out.spec["layer"]]
    assert "rule" in marks and "circle" in marks
