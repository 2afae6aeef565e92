"""Comparative layouts, explicit encodings and faceting.

``compose`` arranges model and observed layer plans into panels and computes
one set of axis domains shared by every panel, frame and facet cell, so a
difference in position always means a difference in value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from vmcheck.errors import DataError, SpecError
from vmcheck.layers import BAND_EXTENT, Conditioning, LayerPlan, Part, _partition
from vmcheck.stats import norm_ppf, qq_pairs, quantiles, worm_band
from vmcheck.tables import DrawsTable, ObservedTable

__all__ = [
    "LayoutSpec",
    "Panel",
    "PanelLayout",
    "parse_layout",
    "compose",
    "explicit_encode",
    "facet",
    "axis_domains",
    "ENCODINGS",
    "DODGE",
    "NEST_EXTENT",
]

ENCODINGS = ("residual", "standardized_residual", "qq", "worm")
LAYOUT_KINDS = ("superposition", "juxtaposition", "nested_juxtaposition", "explicit")
_SURFACE = {"superpose": "superposition", "juxtapose": "juxtaposition", "nest": "nested_juxtaposition"}
DODGE = 0.15
NEST_EXTENT = 0.14


@dataclass(frozen=True)
class LayoutSpec:
    kind: str = "superposition"
    encoding: str | None = None

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise SpecError("layout", f"unknown layout kind {self.kind!r}")
        if (self.kind == "explicit") != (self.encoding is not None):
            raise SpecError("layout", "explicit layouts carry exactly one encoding")
        if self.encoding is not None and self.encoding not in ENCODINGS:
            raise SpecError("layout", f"unknown explicit encoding {self.encoding!r}; expected one of {list(ENCODINGS)}")

    @property
    def text(self) -> str:
        if self.kind == "explicit":
            return f"explicit:{self.encoding}"
        return {v: k for k, v in _SURFACE.items()}[self.kind]


LAYOUT_NAMES = ("superpose", "juxtapose", "nest") + tuple(f"explicit:{e}" for e in ENCODINGS)


def parse_layout(text: str, path: str = "layout") -> LayoutSpec:
    if text in _SURFACE:
        return LayoutSpec(_SURFACE[text])
    if text.startswith("explicit:") and text.split(":", 1)[1] in ENCODINGS:
        return LayoutSpec("explicit", text.split(":", 1)[1])
    raise SpecError(path, f"unknown layout {text!r}; valid layouts are {list(LAYOUT_NAMES)}")


@dataclass
class Panel:
    name: str
    layers: list[LayerPlan]


@dataclass
class PanelLayout:
    kind: str
    orientation: str
    panels: list[Panel]
    domains: dict[str, tuple[float, float]]
    band_levels: tuple[str, ...] = ()
    facet_row: str | None = None
    facet_column: str | None = None
    facet_cells: list[tuple[str | None, str | None]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def layers(self) -> list[LayerPlan]:
        return [lp for p in self.panels for lp in p.layers]


# -- domains ----------------------------------------------------------------------

_X = ("x", "x2")
_Y = ("y", "y2")


def _part_rows(plan: LayerPlan, part: Part) -> list[dict]:
    if any("_part" in r for r in plan.geometry):
        return [r for r in plan.geometry if r.get("_part") == part.name]
    return plan.geometry


def axis_domains(plans: Sequence[LayerPlan], orientation: str, band_levels: Sequence[str] = ()) -> dict:
    """Min/max of every field bound to x/x2 and y/y2 across ``plans``.

    Banded layouts use the fixed band domain ``[0, K]`` on x.
    """
    lo = {"x": np.inf, "y": np.inf}
    hi = {"x": -np.inf, "y": -np.inf}
    for plan in plans:
        for part in plan.parts:
            rows = _part_rows(plan, part)
            for axis, channels in (("x", _X), ("y", _Y)):
                for ch in channels:
                    spec = part.encoding.get(ch)
                    if not spec or "field" not in spec:
                        continue
                    vals = [r[spec["field"]] for r in rows if spec["field"] in r]
                    if vals:
                        lo[axis] = min(lo[axis], min(vals))
                        hi[axis] = max(hi[axis], max(vals))
    out = {}
    for axis in ("x", "y"):
        if np.isfinite(lo[axis]):
            a, b = float(lo[axis]), float(hi[axis])
            out[axis] = (a, b) if b > a else (a - 0.5, b + 0.5)
    if orientation == "banded":
        out["x"] = (0.0, float(len(band_levels)))
    return out


# -- composition ------------------------------------------------------------------


def _dodge(plan: LayerPlan, shift: float) -> LayerPlan:
    out = plan.copy()
    scale = NEST_EXTENT / BAND_EXTENT
    for r in out.geometry:
        c = r["_band"] + 0.5
        for f in plan.x_fields:
            if f in r:
                r[f] = c + shift + (r[f] - c) * scale
    return out


def compose(
    model_plans: Sequence[LayerPlan],
    obs_plans: Sequence[LayerPlan],
    layout: LayoutSpec,
    cond: Conditioning | None = None,
    *,
    draws: DrawsTable | None = None,
    obs: ObservedTable | None = None,
    family: str | None = None,
) -> PanelLayout:
    """Arrange plans per ``layout``; input plans are never modified."""
    cond = cond or Conditioning()
    if layout.kind == "explicit":
        if draws is None or obs is None:
            raise SpecError("layout", "explicit encodings need the draws and the observed table")
        plan = explicit_plan(draws, obs, layout.encoding, cond, family)
        panels = [Panel("explicit", [plan])]
        return _finish(layout.kind, plan.orientation, panels, plan.band_levels, cond)
    if not model_plans:
        raise SpecError("model_layers", "at least one model layer is required")
    if not obs_plans:
        raise SpecError("obs_layers", "at least one observed-data layer is required for a comparative layout")
    plans = list(model_plans) + list(obs_plans)
    orientations = {p.orientation for p in plans}
    if len(orientations) > 1:
        raise SpecError("layout", f"layers disagree on orientation {sorted(orientations)}; "
                                  "use marks with the same positional role")
    orientation = orientations.pop()
    band_levels = next((p.band_levels for p in plans if p.band_levels), ())
    if layout.kind == "superposition":
        panels = [Panel("main", [p.copy() for p in plans])]
    elif layout.kind == "juxtaposition":
        panels = [Panel("model", [p.copy() for p in model_plans]), Panel("data", [p.copy() for p in obs_plans])]
    else:
        if orientation != "banded":
            raise SpecError("layout", "nested juxtaposition requires a discrete x conditional (condition.x)")
        panels = [Panel("main", [_dodge(p, -DODGE) for p in model_plans] + [_dodge(p, DODGE) for p in obs_plans])]
    return _finish(layout.kind, orientation, panels, band_levels, cond)


def _finish(kind, orientation, panels, band_levels, cond) -> PanelLayout:
    plans = [lp for p in panels for lp in p.layers]
    warnings = [w for lp in plans for w in lp.warnings]
    out = PanelLayout(kind, orientation, panels, axis_domains(plans, orientation, band_levels),
                      tuple(band_levels), warnings=warnings)
    if cond.row or cond.column:
        out = facet(out, cond)
    return out


def facet(panel_layout: PanelLayout, cond: Conditioning) -> PanelLayout:
    """Attach the row x column facet grid (row-major, every combination kept).

    Domains are left untouched, so every facet cell shares the global axes.
    """
    levels = {}
    for slot in ("row", "column"):
        name = getattr(cond, slot)
        if name is None:
            levels[slot] = [None]
            continue
        found = next((lp.levels[name] for lp in panel_layout.layers if name in lp.levels), None)
        if found is None:
            raise SpecError(f"condition.{slot}", f"facet variable {name!r} must be a categorical predictor")
        levels[slot] = list(found)
    panel_layout.facet_row = cond.row
    panel_layout.facet_column = cond.column
    panel_layout.facet_cells = list(product(levels["row"], levels["column"]))
    return panel_layout


# -- explicit encodings -----------------------------------------------------------


def _row_stats(draws: DrawsTable, obs: ObservedTable):
    if draws.n_rows_per_draw != obs.n_rows:
        raise DataError(
            f"row-count mismatch: draws have {draws.n_rows_per_draw} rows per draw, observed data {obs.n_rows}"
        )
    v = np.asarray(draws.values)
    med = np.array([quantiles(v[:, i], [0.5])[0] for i in range(v.shape[1])])
    return v, med


def explicit_encode(
    draws: DrawsTable,
    obs: ObservedTable,
    encoding: str,
    x: str | None = None,
    family: str | None = None,
) -> list[dict]:
    """Geometry rows for one explicit encoding over all rows.

    residual rows carry ``_x`` (x predictor, else the fitted median) and
    ``_v``; qq rows carry (theoretical, sample); worm rows add the band
    half-width as ``_band_hw``.
    """
    if encoding not in ENCODINGS:
        raise SpecError("layout", f"unknown explicit encoding {encoding!r}")
    if encoding in ("qq", "worm") and family not in (None, "gaussian"):
        raise DataError(f"{encoding} plots need gaussian-family residuals; the model family is {family!r}")
    v, med = _row_stats(draws, obs)
    res = np.asarray(obs.response, dtype=float) - med
    if encoding != "residual":
        sd = np.std(v, axis=0, ddof=1) if v.shape[0] > 1 else np.zeros(v.shape[1])
        if np.any(sd == 0):
            raise DataError("standardized residuals need a non-zero draw standard deviation in every row")
        res = res / sd
    if encoding in ("residual", "standardized_residual"):
        if x is None:
            xs = med
        elif obs.kind(x) == "numeric":
            xs = np.asarray(obs.columns[x], dtype=float)
        else:
            levels = obs.schema[x].levels
            xs = np.array([levels.index(s) + 0.5 for s in obs.columns[x]])
        return [{"_x": float(a), "_v": float(b)} for a, b in zip(xs, res)]
    pairs = qq_pairs(res)
    if encoding == "qq":
        return [{"_x": float(t), "_v": float(s)} for t, s in pairs]
    n = pairs.shape[0]
    hw = np.atleast_1d(worm_band((np.arange(1, n + 1) - 0.5) / n, n))
    return [{"_x": float(t), "_v": float(s - t), "_band_hw": float(h)} for (t, s), h in zip(pairs, hw)]


def _f(name):
    return {"field": name, "type": "quantitative"}


def explicit_plan(
    draws: DrawsTable,
    obs: ObservedTable,
    encoding: str,
    cond: Conditioning,
    family: str | None = None,
) -> LayerPlan:
    """Wrap :func:`explicit_encode` as a layer plan; per facet/colour cell for Q-Q and worm."""
    cells = []
    for slot, name in cond.slots():
        if slot == "x":
            continue
        if name not in obs.schema:
            raise DataError(f"conditional {slot} {name!r} is not a predictor column")
        if obs.schema[name].is_categorical:
            cells.append(name)
        elif slot in ("row", "column"):
            raise SpecError(f"condition.{slot}", f"facet variable {name!r} must be categorical")
    banded = cond.x is not None and encoding in ("residual", "standardized_residual") and obs.kind(cond.x) == "categorical"
    x = cond.x if encoding in ("residual", "standardized_residual") else None
    geometry = []
    if encoding in ("qq", "worm"):
        for cell, mask in _partition(obs.columns, obs.schema, cells, obs.n_rows):
            idx = np.nonzero(mask)[0]
            sub_d = DrawsTable(draws.quantity, np.asarray(draws.values)[:, idx],
                               {k: np.asarray(v)[idx] for k, v in draws.predictors.items()}, draws.schema)
            rows = explicit_encode(sub_d, obs.take(idx), encoding, None, family)
            for r in rows:
                r.update(cell)
                r["_part"] = "points"
            geometry.extend(rows)
    else:
        rows = explicit_encode(draws, obs, encoding, x, family)
        for i, r in enumerate(rows):
            for c in cells:
                r[c] = str(obs.columns[c][i])
            r["_part"] = "points"
            if banded:
                r["_band"] = int(r["_x"] - 0.5)
        geometry.extend(rows)

    color = cond.color if cond.color in cells else None
    point_enc = {"x": _f("_x"), "y": _f("_v")}
    parts = [Part("points", "point", point_enc, {"filled": True, "size": 12})]
    if encoding in ("residual", "standardized_residual"):
        geometry.append({"_part": "ref", "_v": 0.0})
        parts.append(Part("ref", "rule", {"y": _f("_v")}, {"strokeDash": [4, 4]}))
    elif encoding == "qq":
        pts = [r for r in geometry if r["_part"] == "points"]
        lo = min(min(r["_x"], r["_v"]) for r in pts)
        hi = max(max(r["_x"], r["_v"]) for r in pts)
        geometry += [{"_part": "ref", "_x": lo, "_v": lo}, {"_part": "ref", "_x": hi, "_v": hi}]
        parts.append(Part("ref", "line", {"x": _f("_x"), "y": _f("_v")}, {"strokeDash": [4, 4]}))
    else:
        pts = [r for r in geometry if r["_part"] == "points"]
        for r in pts:
            geometry.append({"_part": "band", "_x": r["_x"], "_lo": -r["_band_hw"], "_hi": r["_band_hw"],
                             **{c: r[c] for c in cells}})
        detail = [{"field": c, "type": "nominal"} for c in cells]
        enc = {"x": _f("_x"), "y": _f("_lo"), "y2": {"field": "_hi"}}
        if detail:
            enc["detail"] = detail
        parts.insert(0, Part("band", "area", enc, {"opacity": 0.25}))
        geometry.append({"_part": "ref", "_v": 0.0})
        parts.append(Part("ref", "rule", {"y": _f("_v")}, {"strokeDash": [4, 4]}))
    plan = LayerPlan(
        source="explicit",
        mark=encoding,
        policy=None,
        orientation="banded" if banded else "xy",
        geometry=geometry,
        parts=parts,
        cells=cells,
        band_levels=tuple(obs.schema[cond.x].levels) if banded else (),
        color=None if color else "#1b1b1b",
        levels={c: tuple(obs.schema[c].levels) for c in cells},
    )
    return plan
