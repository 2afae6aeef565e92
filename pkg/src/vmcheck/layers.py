"""Visual representation: turn draws or observed rows into mark-ready layer plans.

A plan carries a geometry table (a list of flat row dicts) whose columns are
prefixed with ``_`` so they never collide with predictor names, plus one or
more *parts*, each a primitive chart mark bound to geometry columns.  The
compiler only has to filter rows by ``_part`` and copy the bindings.

Three orientations exist:

``horizontal``
    no positional conditional: the quantity runs along the chart x axis,
    densities and stacks along y.
``banded``
    categorical x: level ``k`` owns the band ``[k, k + 1]``; the quantity runs
    along y and extents grow rightwards from the band centre, scaled so the
    largest extent in the layer is ``BAND_EXTENT``.
``xy``
    continuous x: the quantity runs along y against the predictor on x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from vmcheck.errors import DataError, IncompatibleMarkError, SpecError
from vmcheck.stats import DEFAULT_WIDTHS, histogram, interval_set, kde, quantile_dotplot, quantiles
from vmcheck.tables import Column, DrawsTable, ObservedTable

__all__ = [
    "MARKS",
    "MARK_CATEGORY",
    "GroupingPolicy",
    "Conditioning",
    "Part",
    "LayerPlan",
    "parse_mark",
    "parse_policy",
    "plan_model_layer",
    "plan_obs_layer",
    "auto_mark",
    "check_compatible",
    "orientation_for",
    "BAND_EXTENT",
    "GRADIENT_WIDTHS",
]

MARK_CATEGORY = {
    "densityline": "extent",
    "slab": "extent",
    "violin": "extent",
    "histogram": "extent",
    "interval": "extent",
    "pointinterval": "extent",
    "lineribbon": "extent",
    "gradient": "visual_variable",
    "dots": "countable",
    "line": "countable",
    "point": "countable",
}
MARKS = tuple(MARK_CATEGORY)
XY_MARKS = ("point", "line", "lineribbon", "gradient")
NEEDS_TWO = ("densityline", "slab", "violin", "interval", "pointinterval")
BAND_EXTENT = 0.45
GRADIENT_WIDTHS = tuple(round(0.05 * k, 2) for k in range(1, 20))
AGGREGATORS = ("mean", "median", "sd")
INDIVIDUAL_OPACITY = 0.4

MODEL_COLOR = "#4c78a8"
OBS_COLOR = "#1b1b1b"


def parse_mark(text: str, path: str = "mark") -> str:
    if text not in MARK_CATEGORY:
        raise SpecError(path, f"unknown mark {text!r}; valid marks are {list(MARKS)}")
    return text


@dataclass(frozen=True)
class GroupingPolicy:
    """``kind`` is ``collapse``, ``individual``, ``hops`` or ``aggregate`` (with ``fn``)."""

    kind: str = "collapse"
    fn: str | None = None

    def __post_init__(self):
        if self.kind not in ("collapse", "individual", "hops", "aggregate"):
            raise SpecError("policy", f"unknown policy {self.kind!r}")
        if (self.kind == "aggregate") != (self.fn is not None):
            raise SpecError("policy", "aggregate carries exactly one function")
        if self.fn is not None and self.fn not in AGGREGATORS:
            raise SpecError("policy", f"unknown aggregate function {self.fn!r}; expected one of {list(AGGREGATORS)}")

    @property
    def text(self) -> str:
        return f"aggregate:{self.fn}" if self.kind == "aggregate" else self.kind


POLICY_NAMES = ("collapse", "individual", "hops", "aggregate:mean", "aggregate:median", "aggregate:sd")


def parse_policy(text: str, path: str = "policy") -> GroupingPolicy:
    if text not in POLICY_NAMES:
        raise SpecError(path, f"unknown policy {text!r}; valid policies are {list(POLICY_NAMES)}")
    if text.startswith("aggregate:"):
        return GroupingPolicy("aggregate", text.split(":", 1)[1])
    return GroupingPolicy(text)


@dataclass(frozen=True)
class Conditioning:
    x: str | None = None
    color: str | None = None
    row: str | None = None
    column: str | None = None

    def __post_init__(self):
        used = [v for v in (self.x, self.color, self.row, self.column) if v is not None]
        if len(set(used)) != len(used):
            raise SpecError("condition", "x, color, row and column must reference distinct predictors")
        for v in used:
            if v.startswith("_"):
                raise SpecError("condition", f"predictor names starting with '_' are reserved for chart fields ({v!r})")

    def slots(self) -> list[tuple[str, str]]:
        return [(s, getattr(self, s)) for s in ("x", "color", "row", "column") if getattr(self, s) is not None]

    def to_dict(self) -> dict:
        return {s: v for s, v in self.slots()}


@dataclass(frozen=True)
class Part:
    """One primitive chart mark: ``vl_mark`` with ``encoding`` bound to geometry columns."""

    name: str
    vl_mark: str
    encoding: Mapping[str, Mapping]
    props: Mapping[str, object] = field(default_factory=dict)


@dataclass
class LayerPlan:
    source: str
    mark: str
    policy: GroupingPolicy | None
    orientation: str
    geometry: list[dict]
    parts: list[Part]
    cells: list[str]
    group_key: str | None = None
    frame_key: str | None = None
    x_fields: tuple[str, ...] = ()
    stat_inputs: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    opacity: float | None = None
    color: str | None = None
    band_levels: tuple[str, ...] = ()
    levels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def draws(self) -> list[int]:
        """Distinct draw labels present in the geometry (sorted)."""
        return sorted({r["_draw"] for r in self.geometry if "_draw" in r})

    def copy(self, **changes) -> "LayerPlan":
        rows = [dict(r) for r in self.geometry]
        return replace(self, geometry=rows, parts=list(self.parts), cells=list(self.cells),
                       stat_inputs=[dict(s) for s in self.stat_inputs], warnings=list(self.warnings), **changes)


# -- compatibility --------------------------------------------------------------


def _x_kind(schema: Mapping[str, Column], cond: Conditioning) -> str:
    if cond.x is None:
        return "none"
    if cond.x not in schema:
        raise DataError(f"conditional x {cond.x!r} is not a predictor column")
    return "discrete" if schema[cond.x].is_categorical else "continuous"


def orientation_for(mark: str, x_kind: str) -> str:
    if x_kind == "discrete":
        return "banded"
    if x_kind == "continuous" and mark in XY_MARKS:
        return "xy"
    return "horizontal"


def check_compatible(mark: str, policy: GroupingPolicy | None, x_kind: str, path: str = "layer") -> None:
    """Raise :class:`IncompatibleMarkError` for the documented mark/policy/conditional conflicts."""
    kind = policy.kind if policy else None
    if mark in ("lineribbon", "gradient") and x_kind != "continuous":
        raise IncompatibleMarkError(path, f"mark {mark!r} requires a continuous x conditional")
    if mark == "line" and x_kind == "none":
        raise IncompatibleMarkError(path, "mark 'line' requires an x conditional")
    if kind == "aggregate" and mark in ("lineribbon", "line"):
        raise IncompatibleMarkError(path, f"mark {mark!r} cannot show aggregated draws")
    if kind == "individual" and mark == "gradient":
        raise IncompatibleMarkError(path, "mark 'gradient' cannot be drawn once per draw; use collapse or hops")


# -- grouping ---------------------------------------------------------------------


@dataclass
class _Group:
    cell: dict
    band: int | None
    draw: int | None
    values: np.ndarray
    x: np.ndarray | None
    color: np.ndarray | None = None


def _cell_columns(schema: Mapping[str, Column], cond: Conditioning, mark: str, path: str) -> list[str]:
    cells = []
    for slot, name in cond.slots():
        if name not in schema:
            raise DataError(f"conditional {slot} {name!r} is not a predictor column")
        col = schema[name]
        if slot in ("row", "column") and not col.is_categorical:
            raise SpecError(f"condition.{slot}", f"facet variable {name!r} must be categorical")
        if slot == "color" and not col.is_categorical and mark != "point":
            raise IncompatibleMarkError(path, f"continuous color {name!r} is only supported for the point mark")
        if col.is_categorical and name not in cells:
            cells.append(name)
    return cells


def _partition(columns, schema, cells: list[str], n: int) -> list[tuple[dict, np.ndarray]]:
    if not cells:
        return [({}, np.ones(n, dtype=bool))]
    codes = [np.array([schema[c].levels.index(v) for v in columns[c]]) for c in cells]
    out = []
    for key in sorted(set(zip(*codes))):
        mask = np.ones(n, dtype=bool)
        for code, k in zip(codes, key):
            mask &= code == k
        out.append(({c: schema[c].levels[k] for c, k in zip(cells, key)}, mask))
    return out


def _aggregator(fn: str) -> Callable[[np.ndarray], float]:
    if fn == "mean":
        return lambda v: float(np.mean(v))
    if fn == "median":
        return lambda v: float(quantiles(v, [0.5])[0])

    def sd(v):
        if v.size < 2:
            raise DataError("aggregate:sd needs at least two values per draw and cell")
        return float(np.std(v, ddof=1))

    return sd


def _build_groups(values, draw_ids, columns, schema, cells, cond, policy, orientation, ccol) -> list[_Group]:
    """Split ``values`` (draws x rows) into the statistic inputs for each mark instance."""
    r, n = values.shape
    xcol = np.asarray(columns[cond.x], dtype=float) if orientation == "xy" else None
    ccol = None if ccol is None else np.asarray(columns[ccol], dtype=float)
    groups = []
    for cell, mask in _partition(columns, schema, cells, n):
        band = schema[cond.x].levels.index(cell[cond.x]) if orientation == "banded" else None
        sub = values[:, mask]
        xs = xcol[mask] if xcol is not None else None
        cs = ccol[mask] if ccol is not None else None
        kind = policy.kind if policy else "collapse"
        if kind in ("individual", "hops"):
            for j in range(r):
                groups.append(_Group(cell, band, draw_ids[j], sub[j], xs, cs))
        elif kind == "aggregate":
            if cs is not None:
                raise DataError("continuous color cannot follow aggregated draws")
            agg = _aggregator(policy.fn)
            if xs is None:
                groups.append(_Group(cell, band, None, np.array([agg(sub[j]) for j in range(r)]), None))
            else:
                ux = np.unique(xs)
                vals = np.array([[agg(sub[j, xs == u]) for j in range(r)] for u in ux])
                groups.append(_Group(cell, band, None, vals.reshape(-1), np.repeat(ux, r)))
        else:
            groups.append(_Group(cell, band, None, sub.reshape(-1), None if xs is None else np.tile(xs, r),
                                 None if cs is None else np.tile(cs, r)))
    return groups


# -- per-mark statistics ----------------------------------------------------------


def _need_two(mark: str, values: np.ndarray) -> None:
    if mark in NEEDS_TWO and values.size < 2:
        raise DataError(
            f"mark requires ≥2 values but a cell has {values.size}; marks that accept a single value: "
            "['dots', 'point', 'histogram']"
        )


def _density_rows(values, mark) -> list[dict]:
    _need_two(mark, values)
    if np.ptp(values) == 0:
        c = kde(values, bandwidth=1.0)
    else:
        c = kde(values)
    return [{"_v": float(g), "_density": float(d)} for g, d in zip(c.grid, c.density)]


def _interval_rows(values, mark, widths) -> list[dict]:
    _need_two(mark, values)
    s = interval_set(values, widths)
    k = len(s.widths)
    rows = [
        {"_part": "interval", "_width": w, "_lo": lo, "_hi": hi, "_size": 1.5 + 2.0 * (k - 1 - i)}
        for i, (w, lo, hi) in enumerate(zip(s.widths, s.lo, s.hi))
    ]
    if mark == "pointinterval":
        rows.append({"_part": "point", "_v": s.point})
    return rows


def _ribbon_rows(values, xs, widths) -> list[dict]:
    rows = []
    for u in np.unique(xs):
        v = values[xs == u]
        s = interval_set(v, widths)
        for w, lo, hi in zip(s.widths, s.lo, s.hi):
            rows.append({"_part": "ribbon", "_x": float(u), "_width": w, "_lo": lo, "_hi": hi,
                         "_opacity": round(0.15 + 0.5 * (1.0 - w), 6)})
        rows.append({"_part": "median", "_x": float(u), "_v": s.point})
    return rows


def _line_rows(values, xs) -> list[dict]:
    return [{"_x": float(u), "_v": float(np.mean(values[xs == u]))} for u in np.unique(xs)]


def _geometry_for(mark: str, g: _Group, widths, n_dots: int) -> list[dict]:
    v = g.values
    if mark in ("densityline", "slab", "violin"):
        return _density_rows(v, mark)
    if mark == "histogram":
        h = histogram(v)
        dens = h.density
        return [{"_lo": float(a), "_hi": float(b), "_count": int(c), "_density": float(d)}
                for a, b, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, dens)]
    if mark in ("interval", "pointinterval"):
        return _interval_rows(v, mark, widths)
    if mark == "dots":
        d = quantile_dotplot(v, n_dots)
        return [{"_v": float(p), "_stack": int(s)} for p, s in zip(d.positions, d.stacks)]
    if mark == "point":
        if g.x is not None:
            return [{"_x": float(x), "_v": float(y)} for x, y in zip(g.x, v)]
        return [{"_v": float(y)} for y in v]
    if mark == "line":
        if g.x is not None:
            return _line_rows(v, g.x)
        return [{"_v": float(np.mean(v))}]
    if mark == "lineribbon":
        return _ribbon_rows(v, g.x, widths)
    if mark == "gradient":
        return [r for r in _ribbon_rows(v, g.x, GRADIENT_WIDTHS) if r["_part"] == "ribbon"]
    raise AssertionError(mark)


# -- positions and encodings ------------------------------------------------------

_Q = "quantitative"


def _f(name: str, **extra) -> dict:
    return {"field": name, "type": _Q, **extra}


def _place(mark: str, orientation: str, rows: list[dict], cell_index: int) -> None:
    """Add chart-position columns in place (band scaling happens afterwards)."""
    for r in rows:
        if orientation == "horizontal":
            if mark in ("densityline", "slab", "histogram"):
                r["_base"] = 0.0
            elif mark == "violin":
                r["_ext_lo"], r["_ext_hi"] = -r["_density"] / 2, r["_density"] / 2
            elif mark in ("interval", "pointinterval", "point", "line"):
                r["_pos"] = float(cell_index)
        elif orientation == "banded":
            c = r["_band"] + 0.5
            r["_x"] = c
            if mark in ("densityline", "slab", "violin", "histogram"):
                r["_ext"] = r["_density"]
            elif mark == "dots":
                r["_ext"] = r["_stack"] - 0.5


def _scale_bands(mark: str, rows: list[dict]) -> None:
    exts = [r["_ext"] for r in rows if "_ext" in r]
    if not exts:
        return
    top = max(exts)
    if mark == "dots":
        top = max(top + 0.5, 1.0)
    scale = BAND_EXTENT / top if top > 0 else 0.0
    for r in rows:
        if "_ext" not in r:
            continue
        e = r.pop("_ext") * scale
        c = r["_x"]
        if mark == "violin":
            r["_x"], r["_x2"] = c - e, c + e
        elif mark == "dots":
            r["_x"] = c + e
        else:
            r["_x"], r["_x2"] = c + e, c


def _parts(mark: str, orientation: str, detail: list[str]) -> tuple[list[Part], tuple[str, ...]]:
    """Chart parts for a mark, plus the geometry columns that carry band x positions."""
    hz = orientation == "horizontal"
    det = [{"field": d, "type": "nominal"} for d in detail]

    def enc(**channels):
        e = dict(channels)
        if det:
            e["detail"] = det
        return e

    if mark == "densityline":
        if hz:
            return [Part("curve", "line", enc(x=_f("_v"), y=_f("_density"), order=_f("_v")))], ()
        return [Part("curve", "line", enc(x=_f("_x"), y=_f("_v"), order=_f("_v")))], ("_x",)
    if mark == "slab":
        if hz:
            return [Part("slab", "area", enc(x=_f("_v"), y=_f("_density"), y2={"field": "_base"}))], ()
        return [Part("slab", "area", enc(y=_f("_v"), x=_f("_x"), x2={"field": "_x2"}),
                     {"orient": "horizontal"})], ("_x", "_x2")
    if mark == "violin":
        if hz:
            return [Part("violin", "area", enc(x=_f("_v"), y=_f("_ext_lo"), y2={"field": "_ext_hi"}))], ()
        return [Part("violin", "area", enc(y=_f("_v"), x=_f("_x"), x2={"field": "_x2"}),
                     {"orient": "horizontal"})], ("_x", "_x2")
    if mark == "histogram":
        if hz:
            return [Part("bins", "rect", enc(x=_f("_lo"), x2={"field": "_hi"}, y=_f("_density"),
                                             y2={"field": "_base"}))], ()
        return [Part("bins", "rect", enc(y=_f("_lo"), y2={"field": "_hi"}, x=_f("_x"),
                                         x2={"field": "_x2"}))], ("_x", "_x2")
    if mark in ("interval", "pointinterval"):
        size = {"field": "_size", "type": _Q, "scale": None}
        if hz:
            parts = [Part("interval", "rule", enc(x=_f("_lo"), x2={"field": "_hi"}, y=_f("_pos"), size=size))]
            if mark == "pointinterval":
                parts.append(Part("point", "point", enc(x=_f("_v"), y=_f("_pos")), {"filled": True}))
            return parts, ()
        parts = [Part("interval", "rule", enc(y=_f("_lo"), y2={"field": "_hi"}, x=_f("_x"), size=size))]
        if mark == "pointinterval":
            parts.append(Part("point", "point", enc(y=_f("_v"), x=_f("_x")), {"filled": True}))
        return parts, ("_x",)
    if mark == "dots":
        if hz:
            return [Part("dots", "circle", enc(x=_f("_v"), y=_f("_stack")))], ()
        return [Part("dots", "circle", enc(y=_f("_v"), x=_f("_x")))], ("_x",)
    if mark == "point":
        if hz:
            return [Part("points", "point", enc(x=_f("_v"), y=_f("_pos")))], ()
        return [Part("points", "point", enc(x=_f("_x"), y=_f("_v")))], ("_x",) if orientation == "banded" else ()
    if mark == "line":
        return [Part("line", "line", enc(x=_f("_x"), y=_f("_v"), order=_f("_x")))], (
            ("_x",) if orientation == "banded" else ())
    if mark in ("lineribbon", "gradient"):
        opacity = {"field": "_opacity", "type": _Q, "scale": None}
        parts = [Part("ribbon", "area", enc(x=_f("_x"), y=_f("_lo"), y2={"field": "_hi"}, opacity=opacity,
                                            detail=[{"field": "_width", "type": "ordinal"}] + det))]
        if mark == "lineribbon":
            parts.append(Part("median", "line", enc(x=_f("_x"), y=_f("_v"), order=_f("_x"))))
        return parts, ()
    raise AssertionError(mark)


# -- planning -----------------------------------------------------------------------


def _plan(
    source: str,
    values: np.ndarray,
    draw_ids: Sequence[int],
    columns: Mapping[str, np.ndarray],
    schema: Mapping[str, Column],
    mark: str,
    policy: GroupingPolicy | None,
    cond: Conditioning,
    widths: Sequence[float],
    n_dots: int,
    opacity: float | None,
    color: str | None,
    path: str,
) -> LayerPlan:
    mark = parse_mark(mark, f"{path}.mark")
    x_kind = _x_kind(schema, cond)
    check_compatible(mark, policy, x_kind, path)
    orientation = orientation_for(mark, x_kind)
    warnings = []
    if x_kind == "continuous" and orientation == "horizontal":
        warnings.append(f"{path}: mark {mark!r} summarises a distribution; continuous x {cond.x!r} is ignored")
    cells = _cell_columns(schema, cond, mark, path)
    color_cells = [c for c in cells if c == cond.color]
    cont_color = cond.color if cond.color and not schema[cond.color].is_categorical else None
    groups = _build_groups(values, list(draw_ids), columns, schema, cells, cond, policy, orientation, cont_color)
    color_levels = schema[cond.color].levels if color_cells else ()

    geometry, stat_inputs = [], []
    for g in groups:
        rows = _geometry_for(mark, g, widths, n_dots)
        if g.color is not None:
            for r, c in zip(rows, g.color):
                r[cont_color] = float(c)
        stat_inputs.append({"cell": dict(g.cell), "draw": g.draw, "values": g.values.tolist()})
        cell_index = color_levels.index(g.cell[cond.color]) if color_cells else 0
        for r in rows:
            r.update(g.cell)
            if g.band is not None:
                r["_band"] = g.band
            if g.draw is not None:
                r["_draw"] = int(g.draw)
        _place(mark, orientation, rows, cell_index)
        geometry.extend(rows)
    if orientation == "banded":
        _scale_bands(mark, geometry)

    kind = policy.kind if policy else None
    group_key = "_draw" if kind == "individual" else None
    frame_key = "_draw" if kind == "hops" else None
    skip = (cond.row, cond.column, cond.color) + ((cond.x,) if mark == "line" else ())
    detail = [c for c in cells if c not in skip]
    if group_key:
        detail.append(group_key)
    parts, x_fields = _parts(mark, orientation, detail)
    if opacity is None and kind == "individual":
        opacity = INDIVIDUAL_OPACITY
    if color is None and not color_cells and cont_color is None:
        color = MODEL_COLOR if source == "model" else OBS_COLOR
    band_levels = tuple(schema[cond.x].levels) if orientation == "banded" else ()
    levels = {c: tuple(schema[c].levels) for c in cells}
    return LayerPlan(source, mark, policy, orientation, geometry, parts, cells, group_key, frame_key, x_fields,
                     stat_inputs, warnings, opacity, color, band_levels, levels)


def plan_model_layer(
    draws: DrawsTable,
    mark: str,
    policy: GroupingPolicy | str = "collapse",
    cond: Conditioning | None = None,
    *,
    widths: Sequence[float] = DEFAULT_WIDTHS,
    n_dots: int = 100,
    opacity: float | None = None,
    color: str | None = None,
    path: str = "model_layers[0]",
) -> LayerPlan:
    """Plan a model layer over ``draws`` under a grouping policy."""
    if isinstance(policy, str):
        policy = parse_policy(policy, f"{path}.policy")
    cond = cond or Conditioning()
    draw_ids = draws.meta.get("source_draws") or list(range(1, draws.n_draws + 1))
    return _plan("model", np.asarray(draws.values), draw_ids, draws.predictors, draws.schema, mark, policy, cond,
                 widths, n_dots, opacity, color, path)


def plan_obs_layer(
    obs: ObservedTable,
    mark: str,
    cond: Conditioning | None = None,
    *,
    widths: Sequence[float] = DEFAULT_WIDTHS,
    n_dots: int = 100,
    opacity: float | None = None,
    color: str | None = None,
    path: str = "obs_layers[0]",
) -> LayerPlan:
    """Plan an observed-data layer; observed rows never carry a grouping policy."""
    cond = cond or Conditioning()
    return _plan("data", np.asarray(obs.response)[None, :], [1], obs.columns, obs.schema, mark, None, cond,
                 widths, n_dots, opacity, color, path)


_MODEL_AUTO = {
    ("continuous", "none"): ("densityline", "individual"),
    ("continuous", "discrete"): ("pointinterval", "collapse"),
    ("continuous", "continuous"): ("lineribbon", "collapse"),
}
_DATA_AUTO = {
    ("continuous", "none"): "densityline",
    ("continuous", "discrete"): "dots",
    ("continuous", "continuous"): "point",
}


def auto_mark(source: str, response_kind: str, conditional_kind: str) -> tuple[str, GroupingPolicy | None]:
    """Default mark (and policy for model layers) from the response and conditional kinds."""
    if response_kind not in ("continuous", "discrete") or conditional_kind not in ("continuous", "discrete", "none"):
        raise ValueError("kinds must be continuous/discrete (conditional may be none)")
    if source == "model":
        if response_kind == "discrete":
            return "dots", GroupingPolicy("collapse")
        mark, pol = _MODEL_AUTO[(response_kind, conditional_kind)]
        return mark, GroupingPolicy(pol)
    if source == "data":
        if response_kind == "discrete":
            return "histogram", None
        return _DATA_AUTO[(response_kind, conditional_kind)], None
    raise ValueError(f"unknown source {source!r}")
