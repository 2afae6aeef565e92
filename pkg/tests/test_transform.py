import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmcheck.errors import DataError, SpecError
from vmcheck.tables import ObservedTable
from vmcheck.transform import ObsTransform, apply_transform, cell_partition, mismatch_warning, parse_transform

OBS = ObservedTable("y", [1.0, 3.0, 2.0, 10.0, 20.0], {"g": ["a", "a", "a", "b", "b"], "x": [1.0, 2, 3, 4, 5]})


@pytest.mark.parametrize(
    "text, kind, p",
    [("identity", "identity", None), ("mean", "mean", None), ("q0.9", "quantile", 0.9), ("q.25", "quantile", 0.25)],
)
def test_parse(text, kind, p):
    t = parse_transform(text)
    assert (t.kind, t.p) == (kind, p)


@pytest.mark.parametrize("text", ["quantile", "q1.5", "q0", "avg", ""])
def test_parse_rejects(text):
    with pytest.raises(SpecError):
        parse_transform(text)


def test_identity_is_noop():
    assert apply_transform(OBS, ObsTransform()) is OBS


def test_global_aggregates():
    assert apply_transform(OBS, parse_transform("mean")).response.tolist() == [pytest.approx(7.2)]
    med = apply_transform(OBS, parse_transform("median"))
    assert med.response.tolist() == [3.0] and med.predictor_names == []
    assert apply_transform(OBS, parse_transform("sd")).response[0] == pytest.approx(np.std(OBS.response, ddof=1))


def test_per_cell_median_keeps_cell_columns_only():
    out = apply_transform(OBS, parse_transform("median", "per_cell"), ["g"])
    assert out.response.tolist() == [2.0, 15.0]
    assert out.predictor_names == ["g"]
    assert out.columns["g"].tolist() == ["a", "b"]


def test_sd_single_row_cell_errors():
    obs = ObservedTable("y", [1.0, 2.0, 3.0], {"g": ["a", "a", "b"]})
    with pytest.raises(DataError, match="sd needs"):
        apply_transform(obs, parse_transform("sd", "per_cell"), ["g"])


def test_log():
    out = apply_transform(OBS, parse_transform("log"))
    np.testing.assert_allclose(out.response, np.log(OBS.response))
    with pytest.raises(DataError):
        apply_transform(OBS.with_response([1, 0, 1, 1, 1]), parse_transform("log"))


def test_partition_rejects_numeric():
    with pytest.raises(DataError):
        cell_partition(OBS, ["x"])


def test_mismatch_warnings():
    assert mismatch_warning("y", parse_transform("identity")) is None
    assert mismatch_warning("mu", parse_transform("mean")) is None
    assert mismatch_warning("sigma", parse_transform("mean")) is not None
    assert mismatch_warning("y", parse_transform("mean")) is not None
    assert mismatch_warning("log_sigma", parse_transform("mean")) is None


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.floats(-1e6, 1e6)), min_size=1, max_size=40), st.data())
def test_per_cell_mean_is_row_order_invariant(rows, data):
    g, y = zip(*rows)
    obs = ObservedTable("y", y, {"g": list(g)})
    perm = data.draw(st.permutations(range(len(rows))))
    t = parse_transform("mean", "per_cell")
    a = apply_transform(obs, t, ["g"])
    b = apply_transform(obs.take(list(perm)), t, ["g"])
    assert a.columns["g"].tolist() == b.columns["g"].tolist()
    np.testing.assert_allclose(a.response, b.response, rtol=1e-12, atol=1e-6)
    for level, v in zip(a.columns["g"], a.response):
        assert v == pytest.approx(np.mean([yy for gg, yy in rows if gg == level]), rel=1e-9, abs=1e-6)
