import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmcheck.errors import DataError, SpecError
from vmcheck.models import DesignSpec, ModelBundle, ParamSpec, Term
from vmcheck.sampling import (
    SamplingSpec,
    enumerate_quantities,
    parse_quantity,
    resolve,
    subsample_draws,
    thin_indices,
)
from vmcheck.tables import ObservedTable


def test_gaussian_quantities(demo):
    bundle, _ = demo
    assert [q.id for q in enumerate_quantities(bundle)] == ["y", "mu", "sigma", "log_sigma"]


def test_poisson_quantities():
    obs = ObservedTable("y", [1.0, 2.0], {"x": [0.0, 1.0]})
    lam = ParamSpec("lambda", "log", ["intercept"], [[0.1]], DesignSpec.intercept_only())
    b = ModelBundle("poisson", (lam,), obs)
    assert [q.id for q in enumerate_quantities(b)] == ["y", "lambda", "log_lambda"]


def test_parse_quantity_lists_allowed(demo):
    bundle, _ = demo
    assert parse_quantity("log_sigma", bundle).param == "sigma"
    with pytest.raises(SpecError, match=r"draw\.quantity|expected one of") as e:
        parse_quantity("phi", bundle)
    assert e.value.path == "draw.quantity"


def test_thin_indices_examples():
    assert thin_indices(10, 5) == [2, 4, 6, 8, 10]
    assert thin_indices(7, 3) == [3, 5, 7]
    assert thin_indices(4, 4) == [1, 2, 3, 4]
    with pytest.raises(DataError):
        thin_indices(3, 4)


@settings(max_examples=200)
@given(st.integers(1, 5000).flatmap(lambda r: st.tuples(st.just(r), st.integers(1, r))))
def test_thin_indices_properties(rn):
    r, n = rn
    idx = thin_indices(r, n)
    assert len(idx) == n
    assert idx[-1] == r
    assert all(1 <= i <= r for i in idx)
    assert all(a < b for a, b in zip(idx, idx[1:]))


def test_resolve_param_matches_direct(demo):
    bundle, obs = demo
    d = resolve(SamplingSpec("mu"), bundle)
    X = bundle.param("mu").design.matrix(obs)
    np.testing.assert_allclose(d.values, bundle.param("mu").coef_draws @ X.T, rtol=1e-12, atol=1e-12)
    s = resolve(SamplingSpec("sigma", n_draws=5), bundle)
    ls = resolve(SamplingSpec("log_sigma", n_draws=5), bundle)
    np.testing.assert_allclose(np.log(s.values), ls.values, rtol=1e-12)
    assert s.meta["source_draws"] == thin_indices(bundle.n_draws, 5)


def test_resolve_row_order_invariant(demo):
    bundle, obs = demo
    base = resolve(SamplingSpec("y", seed=3), bundle)
    perm = np.random.default_rng(1).permutation(obs.n_rows)
    assert resolve(SamplingSpec("y", seed=3), bundle, row_order=perm) == base
    with pytest.raises(DataError):
        resolve(SamplingSpec("y"), bundle, row_order=[0, 0, 1])


def test_thinned_draws_equal_full_draws_subset(demo):
    bundle, _ = demo
    full = resolve(SamplingSpec("y", seed=2), bundle)
    thin = resolve(SamplingSpec("y", n_draws=7, seed=2), bundle)
    idx = np.asarray(thin_indices(bundle.n_draws, 7)) - 1
    np.testing.assert_array_equal(thin.values, full.values[idx])


def test_seed_changes_response_draws_only(demo):
    bundle, _ = demo
    assert resolve(SamplingSpec("y", seed=1), bundle) != resolve(SamplingSpec("y", seed=2), bundle)
    assert resolve(SamplingSpec("mu", seed=1), bundle) == resolve(SamplingSpec("mu", seed=2), bundle)


def test_new_predictor_values(demo):
    bundle, _ = demo
    new = ObservedTable("y", [0.0, 0.0], {"x": [0.0, 1.0], "region": ["r1", "r3"]}, bundle.fitted_data.schema)
    d = resolve(SamplingSpec("mu", predictor_values=new), bundle)
    assert d.values.shape == (bundle.n_draws, 2)
    bad = ObservedTable("y", [0.0], {"x": [0.0]})
    with pytest.raises(DataError, match="incompatible"):
        resolve(SamplingSpec("mu", predictor_values=bad), bundle)


def test_subsample_keeps_source_ids(demo):
    bundle, _ = demo
    d = resolve(SamplingSpec("y", n_draws=20), bundle)
    s = subsample_draws(d, 4, seed=9)
    assert s.n_draws == 4
    src = d.meta["source_draws"]
    assert s.meta["source_draws"] == [src[i - 1] for i in thin_indices(20, 4)]
    assert s.meta["subsample_seed"] == 9
