"""Named model-check presets, each a plain spec generator.

Presets never take a code path of their own: every one returns a
:class:`VmcSpec` that goes through the ordinary compiler, which keeps the
grammar honest about what it can express.
"""

from __future__ import annotations

from vmcheck.compiler import LayerSpec, VmcSpec
from vmcheck.errors import SpecError
from vmcheck.layers import Conditioning
from vmcheck.models import ModelBundle
from vmcheck.sampling import enumerate_quantities
from vmcheck.tables import ObservedTable

__all__ = ["PRESET_IDS", "preset", "describe"]

_DESCRIPTIONS = {
    "teaser_a": "posterior predictive density curves, one per draw, over the observed density",
    "teaser_b": "distribution of per-draw mean of mu against the observed mean",
    "teaser_c": "hypothetical outcome plot: predicted points against x, one draw per frame",
    "teaser_d": "predictive intervals as nested ribbons against x, observed points on top",
    "teaser_e": "ribbons against x faceted by group",
    "teaser_f": "per-group intervals of the mean next to the observed group means",
    "teaser_g": "raincloud: predictive slab and interval next to observed dots per group",
    "teaser_h": "multiple-interval plot per group next to observed intervals",
    "teaser_i": "residuals against x",
    "teaser_j": "normal Q-Q plot of standardized residuals",
    "expressiveness_a": "raincloud at the observed rows (two model layers and one data layer)",
    "expressiveness_b": "ribbon plus mean line against x with observed points",
    "expressiveness_c": "marginal hypothetical outcome plot, coloured by group, side by side",
}
PRESET_IDS = tuple(_DESCRIPTIONS)


def describe(preset_id: str) -> str:
    return _DESCRIPTIONS[_check_id(preset_id)]


def _check_id(preset_id: str) -> str:
    if preset_id not in _DESCRIPTIONS:
        raise SpecError("preset", f"unknown preset {preset_id!r}; valid presets are {list(PRESET_IDS)}")
    return preset_id


def _first(obs: ObservedTable, kind: str, preset_id: str) -> str:
    for name in obs.predictor_names:
        if obs.kind(name) == kind:
            return name
    raise SpecError("preset", f"{preset_id} needs a {kind} predictor in the observed data")


def _L(mark, policy=None, **kw) -> LayerSpec:
    return LayerSpec(mark, policy, kw.get("opacity"), kw.get("color"))


def preset(preset_id: str, bundle: ModelBundle, obs: ObservedTable) -> VmcSpec:
    """The spec for ``preset_id``, with predictors picked from ``obs``.

    The numeric conditional is the first numeric predictor and the grouping
    variable the first categorical one.
    """
    _check_id(preset_id)
    p = preset_id
    needs_mu = p in ("teaser_b", "teaser_f")
    if needs_mu and "mu" not in {q.id for q in enumerate_quantities(bundle)}:
        raise SpecError("preset", f"{p} needs the quantity 'mu'")

    def x():
        return _first(obs, "numeric", p)

    def g():
        return _first(obs, "categorical", p)

    if p == "teaser_a":
        return VmcSpec(model_layers=(_L("densityline", "individual"),), obs_layers=(_L("densityline"),))
    if p == "teaser_b":
        return VmcSpec(quantity="mu", obs_transform="mean",
                       model_layers=(_L("densityline", "aggregate:mean"),), obs_layers=(_L("point"),))
    if p == "teaser_c":
        return VmcSpec(model_layers=(_L("point", "hops"),), obs_layers=(_L("point"),),
                       condition=Conditioning(x=x()))
    if p == "teaser_d":
        return VmcSpec(model_layers=(_L("lineribbon", "collapse"),), obs_layers=(_L("point"),),
                       condition=Conditioning(x=x()))
    if p == "teaser_e":
        return VmcSpec(model_layers=(_L("lineribbon", "collapse"),), obs_layers=(_L("point"),),
                       condition=Conditioning(x=x(), column=g()))
    if p == "teaser_f":
        return VmcSpec(quantity="mu", obs_transform="mean",
                       model_layers=(_L("pointinterval", "aggregate:mean"),), obs_layers=(_L("point"),),
                       layout="nest", condition=Conditioning(x=g()))
    if p in ("teaser_g", "expressiveness_a"):
        return VmcSpec(predictor_values="observed" if p == "expressiveness_a" else "fitted",
                       model_layers=(_L("slab", "collapse"), _L("interval", "collapse")),
                       obs_layers=(_L("dots"),), layout="nest", condition=Conditioning(x=g()))
    if p == "teaser_h":
        return VmcSpec(model_layers=(_L("interval", "collapse"),), obs_layers=(_L("pointinterval"),),
                       layout="nest", condition=Conditioning(x=g()))
    if p == "teaser_i":
        return VmcSpec(model_layers=(_L("point", "collapse"),), layout="explicit:residual",
                       condition=Conditioning(x=x()))
    if p == "teaser_j":
        return VmcSpec(model_layers=(_L("point", "collapse"),), layout="explicit:qq")
    if p == "expressiveness_b":
        return VmcSpec(model_layers=(_L("lineribbon", "collapse"), _L("line", "collapse")),
                       obs_layers=(_L("point"),), condition=Conditioning(x=x()))
    return VmcSpec(model_layers=(_L("densityline", "hops"),), obs_layers=(_L("densityline"),),
                   layout="juxtapose", condition=Conditioning(color=g()))
