"""Observed-data transformations that keep the observed-table format.

Elementwise transforms (``identity``, ``log``) keep every row.  Aggregates
(``mean``, ``median``, ``sd``, ``q<p>``) collapse each scope unit -- the
whole table, or each conditioning cell -- to a single row holding the
aggregate as its response and only the cell-defining predictors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vmcheck.errors import DataError, SpecError
from vmcheck.stats import quantiles
from vmcheck.tables import ObservedTable

__all__ = ["ObsTransform", "parse_transform", "apply_transform", "cell_partition", "mismatch_warning"]

KINDS = ("identity", "mean", "median", "sd", "log", "quantile")
AGGREGATES = ("mean", "median", "sd", "quantile")


@dataclass(frozen=True)
class ObsTransform:
    kind: str = "identity"
    p: float | None = None
    scope: str = "global"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError("obs_transform", f"unknown transform {self.kind!r}")
        if self.kind == "quantile":
            if self.p is None or not 0.0 < self.p < 1.0:
                raise SpecError("obs_transform", "quantile p must lie strictly inside (0, 1)")
        elif self.p is not None:
            raise SpecError("obs_transform", f"{self.kind} takes no p")
        if self.scope not in ("global", "per_cell"):
            raise SpecError("obs_transform", f"unknown scope {self.scope!r}")

    @property
    def is_aggregate(self) -> bool:
        return self.kind in AGGREGATES

    @property
    def name(self) -> str:
        return f"q{self.p:g}" if self.kind == "quantile" else self.kind


_QUANTILE = re.compile(r"^q(0?\.\d+)$")


def parse_transform(text: str, scope: str = "global") -> ObsTransform:
    """Surface names: ``identity``, ``mean``, ``median``, ``sd``, ``log``, ``q<p>`` (e.g. ``q0.9``)."""
    m = _QUANTILE.match(text)
    if m:
        return ObsTransform("quantile", float(m.group(1)), scope)
    if text == "quantile" or text not in KINDS:
        raise SpecError(
            "obs_transform", f"unknown transform {text!r}; expected identity, mean, median, sd, log or q<p>"
        )
    return ObsTransform(text, None, scope)


def cell_partition(obs: ObservedTable, cells: Sequence[str]) -> list[tuple[tuple[str, ...], np.ndarray]]:
    """Non-empty cells as ``(levels, row mask)``, ordered by the columns' level order."""
    for c in cells:
        if obs.kind(c) != "categorical":
            raise DataError(f"conditioning cell column {c!r} must be categorical")
    if not cells:
        return [((), np.ones(obs.n_rows, dtype=bool))]
    codes = [
        np.array([obs.schema[c].levels.index(v) for v in obs.columns[c]]) for c in cells
    ]
    keys = sorted(set(zip(*codes)))
    out = []
    for key in keys:
        mask = np.ones(obs.n_rows, dtype=bool)
        for code, k in zip(codes, key):
            mask &= code == k
        out.append((tuple(obs.schema[c].levels[k] for c, k in zip(cells, key)), mask))
    return out


def _aggregate(values: np.ndarray, t: ObsTransform, where: str) -> float:
    if t.kind == "mean":
        return float(np.mean(values))
    if t.kind == "median":
        return float(quantiles(values, [0.5])[0])
    if t.kind == "quantile":
        return float(quantiles(values, [t.p])[0])
    if values.size < 2:
        raise DataError(f"sd needs at least two rows ({where} has one)")
    return float(np.std(values, ddof=1))


def apply_transform(obs: ObservedTable, t: ObsTransform, cells: Sequence[str] | None = None) -> ObservedTable:
    """Apply ``t`` to ``obs``; aggregates over ``cells`` when ``t.scope`` is ``per_cell``."""
    if t.kind == "identity":
        return obs
    if t.kind == "log":
        if np.any(obs.response <= 0):
            raise DataError("log transform needs strictly positive responses")
        return obs.with_response(np.log(obs.response))
    if t.scope == "per_cell":
        if cells is None:
            raise DataError("per_cell transform needs a conditioning partition")
        cells = list(cells)
    else:
        cells = []
    parts = cell_partition(obs, cells)
    values, cols = [], {c: [] for c in cells}
    for key, mask in parts:
        values.append(_aggregate(obs.response[mask], t, f"cell {key}" if key else "the table"))
        for c, level in zip(cells, key):
            cols[c].append(level)
    schema = {c: obs.schema[c] for c in cells}
    return ObservedTable(obs.response_name, values, cols, schema)


# quantities whose natural observed counterpart is known; link-scale ids and
# beta's phi have none and never warn
_ALIGNED = {
    "y": ("identity",),
    "mu": ("mean", "median"),
    "lambda": ("mean", "median"),
    "sigma": ("sd",),
}


def mismatch_warning(quantity: str, t: ObsTransform) -> str | None:
    """Warning text when ``quantity`` and ``t`` are a known-misaligned pair."""
    aligned = _ALIGNED.get(quantity)
    if aligned is None or t.kind in aligned:
        return None
    return (
        f"quantity {quantity!r} is compared with observed data transformed by {t.name!r}; "
        f"scale-aligned transforms are {list(aligned)}"
    )
