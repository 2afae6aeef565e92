"""Spec parsing, the four-stage compile pipeline, chart emission and validation.

The pipeline runs ``sample`` (resolve draws), ``transform`` (observed data),
``translate`` (layer plans) and ``construct`` (layout and chart), recording
the stage names in the output metadata.  Errors raised inside a stage are
wrapped in :class:`CompileError` tagged with that stage.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from vmcheck import __version__
from vmcheck.errors import CompileError, DataError, SpecError, VmcError
from vmcheck.layers import (
    MARKS,
    Conditioning,
    GroupingPolicy,
    LayerPlan,
    auto_mark,
    parse_mark,
    parse_policy,
    plan_model_layer,
    plan_obs_layer,
)
from vmcheck.layout import PanelLayout, LayoutSpec, compose, parse_layout
from vmcheck.models import ModelBundle
from vmcheck.sampling import SamplingSpec, parse_quantity, resolve, subsample_draws
from vmcheck.tables import ObservedTable, read_predictors
from vmcheck.transform import ObsTransform, apply_transform, mismatch_warning, parse_transform

__all__ = [
    "SPEC_VERSION",
    "STAGES",
    "LayerSpec",
    "VmcSpec",
    "ChartSpec",
    "FrameSet",
    "parse_spec",
    "spec_to_dict",
    "spec_to_json",
    "compile_spec",
    "emit",
    "canonical_json",
    "validate_output",
    "apply_patches",
    "DEFAULT_INDIVIDUAL_DRAWS",
]

SPEC_VERSION = "vmc-spec/1"
STAGES = ("sample", "transform", "translate", "construct")
DEFAULT_INDIVIDUAL_DRAWS = 50
DEFAULT_FPS = 2.5
WIDTH, HEIGHT = 360, 240
VEGA_LITE_SCHEMA_URL = "https://vega.github.io/schema/vega-lite/v5.json"


def canonical_json(obj: Any) -> str:
    """Sorted keys, compact separators, no NaN: equal objects give equal bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=False)


@lru_cache(maxsize=None)
def _schema(name: str) -> dict:
    return json.loads(resources.files("vmcheck.schemas").joinpath(name).read_text(encoding="utf-8"))


# -- spec model -------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """One representation layer; ``mark="auto"`` defers the choice to compile time."""

    mark: str
    policy: str | None = None
    opacity: float | None = None
    color: str | None = None


@dataclass(frozen=True)
class VmcSpec:
    quantity: str = "y"
    predictor_values: str | Mapping[str, str] = "fitted"
    n_draws: int | str = "all"
    seed: int = 0
    obs_transform: str = "identity"
    model_layers: tuple[LayerSpec, ...] = ()
    obs_layers: tuple[LayerSpec, ...] = ()
    layout: str = "superpose"
    condition: Conditioning = field(default_factory=Conditioning)
    patches: tuple[Mapping[str, Any], ...] = ()
    title: str | None = None

    @property
    def layout_spec(self) -> LayoutSpec:
        return parse_layout(self.layout)


def _json_path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else (f".{p}" if parts else str(p)))
    return "".join(parts) or "$"


def _layer(d: Mapping, path: str, model: bool) -> LayerSpec:
    mark = d["mark"]
    if mark != "auto":
        parse_mark(mark, f"{path}.mark")
    policy = d.get("policy")
    if policy is not None:
        parse_policy(policy, f"{path}.policy")
    elif model and mark != "auto":
        policy = "collapse"
    return LayerSpec(mark, policy, d.get("opacity"), d.get("color"))


def spec_from_dict(doc: Mapping) -> VmcSpec:
    """Validate a decoded spec document and apply defaults."""
    validator = jsonschema.Draft7Validator(_schema("vmc_spec_v1.json"))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise SpecError(_json_path(e), e.message)
    draw = doc.get("draw", {})
    quantity = draw.get("quantity", "y")
    transform = doc.get("obs_transform", "identity")
    parse_transform(transform)
    layout = doc.get("layout", "superpose")
    parse_layout(layout)
    models = tuple(_layer(d, f"model_layers[{i}]", True) for i, d in enumerate(doc["model_layers"]))
    obs = tuple(_layer(d, f"obs_layers[{i}]", False) for i, d in enumerate(doc.get("obs_layers", [])))
    if not models:
        raise SpecError("model_layers", "at least one model layer is required")
    if not obs and not layout.startswith("explicit:"):
        raise SpecError("obs_layers", "at least one observed-data layer is required unless the layout is explicit")
    cond = Conditioning(**doc.get("condition", {}))
    return VmcSpec(
        quantity=quantity,
        predictor_values=draw.get("predictor_values", "fitted"),
        n_draws=draw.get("n_draws", "all"),
        seed=draw.get("seed", 0),
        obs_transform=transform,
        model_layers=models,
        obs_layers=obs,
        layout=layout,
        condition=cond,
        patches=tuple(doc.get("patches", [])),
        title=doc.get("title"),
    )


def parse_spec(text: str) -> VmcSpec:
    """Parse a ``vmc-spec/1`` JSON document; diagnostics carry the offending path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError("$", f"spec is not valid JSON: {e.msg} (line {e.lineno})") from None
    if not isinstance(doc, dict):
        raise SpecError("$", "spec must be a JSON object")
    return spec_from_dict(doc)


def _layer_dict(layer: LayerSpec, model: bool) -> dict:
    d = {"mark": layer.mark}
    if model and layer.policy is not None:
        d["policy"] = layer.policy
    if layer.opacity is not None:
        d["opacity"] = layer.opacity
    if layer.color is not None:
        d["color"] = layer.color
    return d


def spec_to_dict(spec: VmcSpec) -> dict:
    d = {
        "schema": SPEC_VERSION,
        "draw": {
            "quantity": spec.quantity,
            "predictor_values": spec.predictor_values if isinstance(spec.predictor_values, str)
            else dict(spec.predictor_values),
            "n_draws": spec.n_draws,
            "seed": spec.seed,
        },
        "obs_transform": spec.obs_transform,
        "model_layers": [_layer_dict(l, True) for l in spec.model_layers],
        "obs_layers": [_layer_dict(l, False) for l in spec.obs_layers],
        "layout": spec.layout,
        "condition": spec.condition.to_dict(),
        "patches": [dict(p) for p in spec.patches],
    }
    if spec.title is not None:
        d["title"] = spec.title
    return d


def spec_to_json(spec: VmcSpec) -> str:
    """Canonical serialization with every default spelled out."""
    return canonical_json(spec_to_dict(spec))


# -- chart containers -------------------------------------------------------------


@dataclass
class ChartSpec:
    spec: dict

    def to_obj(self) -> dict:
        return self.spec


@dataclass
class FrameSet:
    frame_key: str
    frames: list[tuple[int, ChartSpec]]
    fps: float = DEFAULT_FPS
    metadata: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "frames": [{"id": fid, "chart": c.spec} for fid, c in self.frames],
            "frame_key": self.frame_key,
            "fps": self.fps,
            "metadata": self.metadata,
        }


def emit(chart: ChartSpec | FrameSet) -> str:
    return canonical_json(chart.to_obj())


def validate_output(text: str) -> list[str]:
    """Schema violations of an emitted chart or frame set as ``path: message`` lines."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        return [f"parse: output is not JSON ({e})"]
    return _violations(doc)


def _violations(doc: Any) -> list[str]:
    validator = jsonschema.Draft7Validator(_schema("vega_lite_v5_subset.json"))
    if isinstance(doc, dict) and "frames" in doc:
        out = []
        for key in ("frame_key", "fps", "metadata"):
            if key not in doc:
                out.append(f"{key}: missing from frame set envelope")
        if not isinstance(doc["frames"], list) or not doc["frames"]:
            return out + ["frames: must be a non-empty list"]
        for i, frame in enumerate(doc["frames"]):
            if not isinstance(frame, dict) or "chart" not in frame or "id" not in frame:
                out.append(f"frames[{i}]: needs id and chart")
                continue
            out += [f"frames[{i}].chart.{v}" for v in _chart_violations(validator, frame["chart"])]
        return out
    return _chart_violations(validator, doc)


_SCALARS = frozenset((str, int, float, bool, type(None)))


def _strip_rows(doc, path: str, out: list[str]):
    """Copy of ``doc`` with inline data rows removed; malformed rows are reported in ``out``.

    Rows are checked once here rather than once per ``oneOf`` branch.
    """
    if isinstance(doc, list):
        return [_strip_rows(v, f"{path}.{i}", out) for i, v in enumerate(doc)]
    if not isinstance(doc, dict):
        return doc
    res = {}
    for k, v in doc.items():
        if k == "data" and isinstance(v, dict) and isinstance(v.get("values"), list):
            for i, row in enumerate(v["values"]):
                if not isinstance(row, dict) or not _SCALARS.issuperset(map(type, row.values())):
                    out.append(f"{path}.data.values.{i}: rows must be flat objects of scalars".lstrip("."))
            res[k] = {**v, "values": []}
        else:
            res[k] = _strip_rows(v, f"{path}.{k}", out)
    return res


def _chart_violations(validator, doc) -> list[str]:
    out: list[str] = []
    doc = _strip_rows(doc, "", out)
    for e in sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path]):
        # oneOf failures: report the branch error that best names the real field
        best = e
        while best.context:
            best = max(best.context, key=lambda c: (len(c.absolute_path), c.validator != "additionalProperties"))
        path = ".".join(str(p) for p in best.absolute_path) or "$"
        msg = best.message if len(best.message) <= 160 else best.message[:157] + "..."
        out.append(f"{path}: {msg}")
    return out


def _set_path(obj, path: str, value) -> None:
    keys = path.split(".")
    cur = obj
    for i, k in enumerate(keys):
        last = i == len(keys) - 1
        if isinstance(cur, list):
            if not k.isdigit() or int(k) >= len(cur):
                raise SpecError(f"patches.{path}", f"list index {k!r} does not exist and cannot be created")
            k = int(k)
        elif not isinstance(cur, dict):
            raise SpecError(f"patches.{path}", f"cannot descend into a {type(cur).__name__} at {k!r}")
        if last:
            if isinstance(cur, dict) and isinstance(cur.get(k), dict) and isinstance(value, dict):
                _deep_merge(cur[k], value)
            else:
                cur[k] = copy.deepcopy(value)
            return
        if isinstance(cur, dict) and k not in cur:
            cur[k] = {}
        cur = cur[k]


def _deep_merge(dst: dict, src: Mapping) -> None:
    for k, v in src.items():
        if isinstance(dst.get(k), dict) and isinstance(v, Mapping):
            _deep_merge(dst[k], v)
        else:
            dst[k] = copy.deepcopy(v)


def apply_patches(chart: ChartSpec | FrameSet, patches: Sequence[Mapping[str, Any]]) -> ChartSpec | FrameSet:
    """Overlay ``{"path": "a.b.0.c", "value": v}`` patches (dicts deep-merge) and re-validate.

    Frame sets receive each patch on every frame.
    """
    if not patches:
        return chart
    targets = [c for _, c in chart.frames] if isinstance(chart, FrameSet) else [chart]
    for c in targets:
        for p in patches:
            _set_path(c.spec, p["path"], p["value"])
    violations = validate_output(emit(chart))
    if violations:
        raise SpecError("patches", "patched output violates the chart schema: " + "; ".join(violations[:5]))
    return chart


# -- compile ----------------------------------------------------------------------


@dataclass
class _Context:
    spec: VmcSpec
    bundle: ModelBundle
    obs: ObservedTable
    seed: int
    warnings: list[str] = field(default_factory=list)
    stages: list[str] = field(default_factory=list)


def _stage(ctx: _Context, name: str):
    class _S:
        def __enter__(self):
            ctx.stages.append(name)

        def __exit__(self, et, ev, tb):
            if ev is not None and isinstance(ev, VmcError) and not isinstance(ev, CompileError):
                raise CompileError(name, ev) from ev
            if ev is not None and isinstance(ev, (ValueError, ArithmeticError)):
                raise CompileError(name, DataError(str(ev))) from ev
            return False

    return _S()


def _predictor_values(spec: VmcSpec, bundle: ModelBundle, obs: ObservedTable) -> ObservedTable | None:
    pv = spec.predictor_values
    if pv == "fitted":
        return None
    if pv == "observed":
        return obs
    return read_predictors(pv["csv"], bundle.fitted_data.response_name, bundle.fitted_data.schema)


def _x_kind(table: ObservedTable, cond: Conditioning) -> str:
    if cond.x is None:
        return "none"
    if cond.x not in table.schema:
        raise DataError(f"conditional x {cond.x!r} is not a predictor column")
    return "discrete" if table.kind(cond.x) == "categorical" else "continuous"


def compile_spec(
    spec: VmcSpec | str,
    bundle: ModelBundle,
    obs: ObservedTable,
    *,
    seed: int | None = None,
    row_order: Sequence[int] | str | None = None,
) -> ChartSpec | FrameSet:
    """Run the four stages and return a chart (or a frame set when any layer animates).

    ``seed`` overrides the spec's draw seed.  ``row_order`` changes the order
    in which draws are evaluated (``"shuffle"`` uses a fixed permutation);
    the output must not depend on it.
    """
    if isinstance(spec, str):
        spec = parse_spec(spec)
    ctx = _Context(spec, bundle, obs, spec.seed if seed is None else int(seed))
    cond = spec.condition

    with _stage(ctx, "sample"):
        newdata = _predictor_values(spec, bundle, obs)
        parse_quantity(spec.quantity, bundle)
        n_rows = (newdata or bundle.fitted_data).n_rows
        if isinstance(row_order, str):
            row_order = np.random.default_rng(12345).permutation(n_rows).tolist()
        n = None if spec.n_draws == "all" else int(spec.n_draws)
        if n is not None and n > bundle.n_draws:
            raise SpecError("draw.n_draws", f"n_draws {n} exceeds the bundle's {bundle.n_draws} draws")
        draws = resolve(SamplingSpec(spec.quantity, newdata, n, ctx.seed), bundle, row_order=row_order)

    with _stage(ctx, "transform"):
        t = parse_transform(spec.obs_transform)
        cells = [name for _, name in cond.slots() if name in obs.schema and obs.kind(name) == "categorical"]
        if t.is_aggregate and cells:
            t = ObsTransform(t.kind, t.p, "per_cell")
        obs_t = apply_transform(obs, t, cells if t.scope == "per_cell" else None)
        w = mismatch_warning(spec.quantity, t)
        if w:
            ctx.warnings.append(f"obs_transform: {w}")

    with _stage(ctx, "translate"):
        response_kind = "discrete" if spec.quantity == "y" and bundle.family.discrete else "continuous"
        obs_kind = "discrete" if bundle.family.discrete and t.kind == "identity" else "continuous"
        model_plans: list[LayerPlan] = []
        for i, layer in enumerate(spec.model_layers):
            path = f"model_layers[{i}]"
            mark, policy = layer.mark, layer.policy
            if mark == "auto":
                mark, auto_pol = auto_mark("model", response_kind, _x_kind(draws.predictor_table(), cond))
                policy = policy or auto_pol.text
            pol = parse_policy(policy, f"{path}.policy")
            layer_draws = draws
            if pol.kind in ("individual", "hops") and spec.n_draws == "all":
                layer_draws = subsample_draws(draws, min(draws.n_draws, DEFAULT_INDIVIDUAL_DRAWS), ctx.seed)
            model_plans.append(plan_model_layer(layer_draws, mark, pol, cond, opacity=layer.opacity,
                                                color=layer.color, path=path))
        obs_plans: list[LayerPlan] = []
        if not spec.layout.startswith("explicit:"):
            for i, layer in enumerate(spec.obs_layers):
                path = f"obs_layers[{i}]"
                mark = layer.mark
                if mark == "auto":
                    mark, _ = auto_mark("data", obs_kind, _x_kind(obs_t, cond))
                if cond.x is not None and cond.x not in obs_t.schema:
                    raise SpecError(path, f"observed data lost conditional x {cond.x!r} after "
                                          f"{spec.obs_transform!r}; use a per-cell categorical x or identity")
                obs_plans.append(plan_obs_layer(obs_t, mark, cond, opacity=layer.opacity, color=layer.color,
                                                path=path))
        hops = [p for p in model_plans if p.frame_key]
        if len({tuple(p.draws) for p in hops}) > 1:
            raise SpecError("model_layers", "animated layers must share the same draws")

    with _stage(ctx, "construct"):
        layout = parse_layout(spec.layout)
        if layout.kind == "explicit" and draws.n_rows_per_draw != obs.n_rows:
            raise DataError("explicit encodings need draws at the observed rows (row-count mismatch)")
        panel = compose(model_plans, obs_plans, layout, cond, draws=draws, obs=obs, family=bundle.family.name)
        ctx.warnings.extend(panel.warnings)
        meta = {
            "stages": list(STAGES),
            "warnings": list(ctx.warnings),
            "seed": ctx.seed,
            "vmc_version": __version__,
        }
        title = spec.title or f"{spec.quantity}: {layout.text}"
        if hops:
            frame_ids = hops[0].draws
            cache: dict = {}
            frames = [(fid, ChartSpec(_chart(panel, cond, title, meta, frame=fid, cache=cache)))
                      for fid in frame_ids]
            out: ChartSpec | FrameSet = FrameSet(".draw", frames, DEFAULT_FPS, meta)
        else:
            out = ChartSpec(_chart(panel, cond, title, meta))
        out = apply_patches(out, spec.patches)
        violations = _violations(out.to_obj())
        if violations:
            raise SpecError("output", "; ".join(violations[:5]))
    assert tuple(ctx.stages) == STAGES
    return out


# -- chart construction -----------------------------------------------------------


def _axis_title(panel: PanelLayout, cond: Conditioning, axis: str, quantity: str) -> str | None:
    o = panel.orientation
    if panel.kind == "explicit":
        enc = panel.layers[0].mark
        if enc in ("qq", "worm"):
            return "theoretical quantile" if axis == "x" else ("sample quantile" if enc == "qq" else "deviation")
        if axis == "y":
            return "residual" if enc == "residual" else "standardized residual"
        return cond.x or "fitted median"
    if o == "horizontal":
        return quantity if axis == "x" else None
    return cond.x if axis == "x" else quantity


def _with_scale(enc: dict, channel: str, panel: PanelLayout, title: str | None) -> dict:
    spec = dict(enc[channel])
    domain = panel.domains.get(channel)
    if domain is not None:
        spec["scale"] = {"domain": list(domain), "zero": False, "nice": False}
    axis = {"title": title}
    if channel == "x" and panel.orientation == "banded":
        levels = list(panel.band_levels)
        axis["values"] = [k + 0.5 for k in range(len(levels))]
        axis["labelExpr"] = f"{json.dumps(levels)}[floor(datum.value)]"
        axis["grid"] = False
    spec["axis"] = axis
    return spec


def _vl_layers(panel: PanelLayout, plans: Sequence[tuple[str, LayerPlan]], cond: Conditioning, quantity: str,
               color_levels: Mapping[str, Sequence[str]]) -> list[dict]:
    out = []
    for lid, plan in plans:
        for part in plan.parts:
            enc = {k: (list(v) if isinstance(v, list) else dict(v)) for k, v in part.encoding.items()}
            for ch in ("x", "y"):
                if ch in enc and "field" in enc[ch]:
                    enc[ch] = _with_scale(enc, ch, panel, _axis_title(panel, cond, ch, quantity))
            mark = {"type": part.vl_mark, **part.props, "clip": True}
            if cond.color and cond.color in _row_fields(plan):
                if cond.color in color_levels:
                    enc["color"] = {"field": cond.color, "type": "nominal",
                                    "scale": {"domain": list(color_levels[cond.color])}}
                else:
                    lo, hi = _field_range(plan, cond.color)
                    enc["color"] = {"field": cond.color, "type": "quantitative",
                                    "scale": {"domain": [lo, hi]}}
            elif plan.color is not None:
                mark["color"] = plan.color
            if plan.opacity is not None and "opacity" not in enc and "opacity" not in mark:
                mark["opacity"] = plan.opacity
            out.append({
                "transform": [{"filter": {"field": "_layer", "equal": f"{lid}:{part.name}"}}],
                "mark": mark,
                "encoding": enc,
            })
    return out


def _row_fields(plan: LayerPlan) -> set:
    return set(plan.geometry[0]) if plan.geometry else set()


def _field_range(plan: LayerPlan, name: str) -> tuple[float, float]:
    vals = [r[name] for r in plan.geometry if name in r]
    return float(min(vals)), float(max(vals))


def _rows(lid: str, plan: LayerPlan) -> dict:
    """Chart rows of ``plan`` keyed by frame id (``None`` holds rows shown in every frame)."""
    out: dict = {}
    single = len(plan.parts) == 1
    for r in plan.geometry:
        key = r.get("_draw") if plan.frame_key else None
        part = plan.parts[0].name if single else r.get("_part")
        row = {k: v for k, v in r.items() if k != "_part"}
        row["_layer"] = f"{lid}:{part}"
        out.setdefault(key, []).append(row)
    return out


def _chart(panel: PanelLayout, cond: Conditioning, title: str, meta: dict, frame: int | None = None,
           cache: dict | None = None) -> dict:
    color_levels = {}
    for lp in panel.layers:
        color_levels.update({k: v for k, v in lp.levels.items() if k == cond.color})
    quantity = title.split(":", 1)[0]
    ids = {}
    counter = {"model": 0, "data": 0, "explicit": 0}
    for p in panel.panels:
        for lp in p.layers:
            prefix = {"model": "m", "data": "o", "explicit": "e"}[lp.source]
            ids[id(lp)] = f"{prefix}{counter[lp.source]}"
            counter[lp.source] += 1
    cache = {} if cache is None else cache
    values = []
    for p in panel.panels:
        for lp in p.layers:
            if id(lp) not in cache:
                cache[id(lp)] = _rows(ids[id(lp)], lp)
            by_frame = cache[id(lp)]
            if lp.frame_key and frame is not None:
                values.extend(by_frame.get(frame, []))
            else:
                values.extend(r for rows in by_frame.values() for r in rows)
    faceted = bool(panel.facet_cells) and (panel.facet_row or panel.facet_column)
    if faceted:
        for rlev, clev in panel.facet_cells:
            anchor = {"_layer": "_anchor"}
            if panel.facet_row:
                anchor[panel.facet_row] = rlev
            if panel.facet_column:
                anchor[panel.facet_column] = clev
            values.append(anchor)

    def body(p) -> dict:
        layers = _vl_layers(panel, [(ids[id(lp)], lp) for lp in p.layers], cond, quantity, color_levels)
        inner = {"width": WIDTH, "height": HEIGHT, "layer": layers}
        if not faceted:
            return inner
        fac = {}
        for slot, name in (("row", panel.facet_row), ("column", panel.facet_column)):
            if name:
                levels = next(lp.levels[name] for lp in panel.layers if name in lp.levels)
                fac[slot] = {"field": name, "type": "nominal", "sort": list(levels)}
        return {"facet": fac, "spec": inner}

    chart = {
        "$schema": VEGA_LITE_SCHEMA_URL,
        "title": title if frame is None else f"{title} (draw {frame})",
        "data": {"values": values},
        "usermeta": {"vmc": meta},
    }
    if len(panel.panels) == 1:
        chart.update(body(panel.panels[0]))
    else:
        subs = []
        for p in panel.panels:
            b = body(p)
            b["title"] = p.name
            subs.append(b)
        chart["hconcat"] = subs
    return chart
