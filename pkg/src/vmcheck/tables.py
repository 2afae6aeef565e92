"""Tidy tables for observed data and model draws, plus their CSV forms.

Two containers live here:

* :class:`ObservedTable` -- one response column and any number of numeric or
  categorical predictor columns.
* :class:`DrawsTable` -- ``r`` draws of some model quantity evaluated at the
  same ``n`` predictor rows.  Stored as an ``(r, n)`` matrix; the long
  ``.draw, .row, .value`` view is produced on demand.

Both are immutable: arrays are copied on construction and flagged read-only.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from vmcheck.errors import DataError

__all__ = [
    "RESERVED_COLUMNS",
    "Column",
    "ObservedTable",
    "DrawsTable",
    "PredictorValue",
    "format_number",
    "read_observed",
    "read_predictors",
    "write_observed",
    "read_draws",
    "write_draws",
]

PredictorValue = Union[float, str]

RESERVED_COLUMNS = (".draw", ".row", ".value")
MISSING_TOKENS = ("", "NA")

_DECIMAL = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def format_number(x: float) -> str:
    """17 significant digits: enough for a lossless binary64 round trip."""
    return "%.17g" % float(x)


def _parse_decimal(cell: str) -> float | None:
    if not _DECIMAL.match(cell):
        return None
    value = float(cell)
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class Column:
    """Schema entry for one predictor column."""

    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise DataError(f"unknown column kind {self.kind!r}")
        if self.kind == "numeric" and self.levels:
            raise DataError("numeric columns carry no levels")
        if len(set(self.levels)) != len(self.levels):
            raise DataError("duplicate categorical levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_name(name: str, what: str) -> None:
    if name in RESERVED_COLUMNS:
        raise DataError(f"reserved column name {name!r} used as {what}")
    if not name:
        raise DataError(f"empty {what} name")


def _coerce_predictors(
    predictors: Mapping[str, Sequence],
    schema: Mapping[str, Column] | None,
    n: int,
) -> tuple[dict[str, np.ndarray], dict[str, Column]]:
    cols: dict[str, np.ndarray] = {}
    out_schema: dict[str, Column] = {}
    schema = dict(schema or {})
    for name, values in predictors.items():
        _check_name(name, "predictor")
        values = list(values) if not isinstance(values, np.ndarray) else values
        if len(values) != n:
            raise DataError(f"predictor {name!r} has {len(values)} values, expected {n}")
        col = schema.get(name)
        if col is None:
            numeric = all(
                isinstance(v, (int, float, np.integer, np.floating))
                and not isinstance(v, bool)
                for v in values
            )
            if numeric:
                col = Column("numeric")
            else:
                col = Column("categorical", tuple(dict.fromkeys(str(v) for v in values)))
        if col.kind == "numeric":
            arr = np.asarray(values, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DataError(f"predictor {name!r} has non-finite values")
        else:
            arr = np.array([str(v) for v in values], dtype=object)
            allowed = set(col.levels)
            bad = [v for v in arr if v not in allowed]
            if bad:
                raise DataError(
                    f"predictor {name!r} value {bad[0]!r} is not one of its levels {list(col.levels)}"
                )
        cols[name] = _frozen(arr)
        out_schema[name] = col
    extra = set(schema) - set(cols)
    if extra:
        raise DataError(f"schema names unknown predictors {sorted(extra)}")
    return cols, out_schema


def _columns_equal(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    if list(a) != list(b):
        return False
    return all(a[k].dtype == b[k].dtype and np.array_equal(a[k], b[k]) for k in a)


class ObservedTable:
    """Observed data: a finite response plus predictor columns.

    Parameters
    ----------
    response_name : str
        Name of the response column.
    response : sequence of float
        Response values; at least one, all finite.
    predictors : mapping of str to sequence, optional
        Predictor columns.  Numeric columns hold floats, categorical ones
        strings.
    schema : mapping of str to Column, optional
        Explicit kinds/levels.  Inferred when omitted: a column of numbers
        is numeric, anything else categorical with first-appearance levels.
    """

    def __init__(
        self,
        response_name: str,
        response: Sequence[float],
        predictors: Mapping[str, Sequence] | None = None,
        schema: Mapping[str, Column] | None = None,
    ):
        _check_name(response_name, "response")
        y = np.asarray(response, dtype=float)
        if y.ndim != 1 or y.size == 0:
            raise DataError("observed table needs at least one row")
        if not np.all(np.isfinite(y)):
            raise DataError("non-finite response value")
        predictors = dict(predictors or {})
        if response_name in predictors:
            raise DataError(f"response {response_name!r} repeated as a predictor")
        self.response_name = response_name
        self.response = _frozen(y)
        self.columns, self.schema = _coerce_predictors(predictors, schema, y.size)

    @property
    def n_rows(self) -> int:
        return int(self.response.size)

    def __len__(self) -> int:
        return self.n_rows

    @property
    def predictor_names(self) -> list[str]:
        return list(self.columns)

    def kind(self, name: str) -> str:
        try:
            return self.schema[name].kind
        except KeyError:
            raise DataError(f"unknown predictor {name!r}") from None

    def rows(self) -> Iterator[tuple[float, dict[str, PredictorValue]]]:
        for i in range(self.n_rows):
            yield float(self.response[i]), {
                k: (float(v[i]) if self.schema[k].kind == "numeric" else str(v[i]))
                for k, v in self.columns.items()
            }

    def take(self, index: Sequence[int] | np.ndarray) -> "ObservedTable":
        """Rows at ``index`` (integer positions or a boolean mask); schema kept."""
        index = np.asarray(index)
        return ObservedTable(
            self.response_name,
            self.response[index],
            {k: v[index] for k, v in self.columns.items()},
            self.schema,
        )

    def with_response(self, response: Sequence[float]) -> "ObservedTable":
        return ObservedTable(self.response_name, response, self.columns, self.schema)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservedTable):
            return NotImplemented
        return (
            self.response_name == other.response_name
            and np.array_equal(self.response, other.response)
            and self.schema == other.schema
            and _columns_equal(self.columns, other.columns)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        cols = ", ".join(f"{k}:{c.kind}" for k, c in self.schema.items())
        return f"ObservedTable({self.response_name!r}, n={self.n_rows}, [{cols}])"


@dataclass(eq=False)
class DrawsTable:
    """``n_draws`` draws of ``quantity`` at ``n_rows`` predictor rows.

    ``values[j, i]`` is draw ``j + 1`` at row ``i + 1``.  Predictor columns
    are stored once per row since they never vary between draws.
    ``meta`` carries provenance (e.g. source draw indices after thinning)
    and is ignored by equality and CSV.
    """

    quantity: str
    values: np.ndarray
    predictors: dict[str, np.ndarray] = field(default_factory=dict)
    schema: dict[str, Column] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError("draws need shape (n_draws >= 1, n_rows >= 1)")
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite draw value")
        self.values = _frozen(v)
        self.predictors, self.schema = _coerce_predictors(
            self.predictors, self.schema or None, v.shape[1]
        )

    @property
    def n_draws(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_rows_per_draw(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_rows(self) -> int:
        return self.n_draws * self.n_rows_per_draw

    def long(self) -> dict[str, np.ndarray]:
        """Long format sorted by (draw, row): ``.draw``, ``.row``, ``.value`` + predictors."""
        r, n = self.values.shape
        out = {
            ".draw": np.repeat(np.arange(1, r + 1), n),
            ".row": np.tile(np.arange(1, n + 1), r),
            ".value": self.values.reshape(-1),
        }
        for k, col in self.predictors.items():
            out[k] = np.tile(col, r)
        return out

    def predictor_table(self) -> ObservedTable | None:
        """The per-row predictor values as an observed table with a dummy response."""
        return ObservedTable(".response", np.zeros(self.n_rows_per_draw), self.predictors, self.schema)

    def select_draws(self, draw_indices: Sequence[int]) -> "DrawsTable":
        """Keep 1-based ``draw_indices`` in the given order, relabelled 1..k."""
        idx = np.asarray(draw_indices, dtype=int) - 1
        return DrawsTable(self.quantity, self.values[idx], self.predictors, self.schema, dict(self.meta))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DrawsTable):
            return NotImplemented
        return (
            self.quantity == other.quantity
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.schema == other.schema
            and _columns_equal(self.predictors, other.predictors)
        )

    __hash__ = None  # type: ignore[assignment]


# -- CSV -----------------------------------------------------------------------


def _read_rows(csv_text: str) -> tuple[list[str], list[list[str]]]:
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty CSV: header row missing") from None
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        for name, cell in zip(header, row):
            if cell in MISSING_TOKENS:
                raise DataError(f"line {lineno}: missing value in column {name!r}")
        rows.append(row)
    return header, rows


def _infer_column(cells: list[str]) -> tuple[Column, list]:
    parsed = [_parse_decimal(c) for c in cells]
    if all(p is not None for p in parsed):
        return Column("numeric"), parsed
    return Column("categorical", tuple(dict.fromkeys(cells))), cells


def _parse_columns(
    names: list[str],
    cells: dict[str, list[str]],
    schema: Mapping[str, Column] | None,
) -> tuple[dict[str, list], dict[str, Column]]:
    cols, out = {}, {}
    for name in names:
        _check_name(name, "predictor")
        col = schema.get(name) if schema else None
        if col is None:
            col, values = _infer_column(cells[name])
        elif col.kind == "numeric":
            values = [_parse_decimal(c) for c in cells[name]]
            if any(v is None for v in values):
                raise DataError(f"column {name!r} declared numeric has non-numeric cells")
        else:
            values = cells[name]
        cols[name], out[name] = values, col
    return cols, out


def read_observed(
    csv_text: str, response_name: str, schema: Mapping[str, Column] | None = None
) -> ObservedTable:
    """Parse observed data from CSV text with a mandatory header row.

    A predictor column is numeric iff every cell parses as a finite decimal;
    otherwise it is categorical with levels in first-appearance order.
    Empty and ``NA`` cells are rejected.
    """
    header, rows = _read_rows(csv_text)
    if response_name not in header:
        raise DataError(f"response column {response_name!r} not found in {header}")
    if not rows:
        raise DataError("observed table has no rows")
    for name in header:
        _check_name(name, "column")
    by_col = {name: [r[j] for r in rows] for j, name in enumerate(header)}
    response = []
    for lineno, cell in enumerate(by_col[response_name], start=2):
        v = _parse_decimal(cell)
        if v is None:
            raise DataError(f"line {lineno}: non-finite or non-numeric response {cell!r}")
        response.append(v)
    names = [h for h in header if h != response_name]
    cols, out_schema = _parse_columns(names, by_col, schema)
    return ObservedTable(response_name, response, cols, out_schema)


def read_predictors(
    csv_text: str, response_name: str, schema: Mapping[str, Column] | None = None
) -> ObservedTable:
    """Predictor values for new rows; the response column is optional (zero-filled when absent)."""
    header, rows = _read_rows(csv_text)
    if response_name in header:
        return read_observed(csv_text, response_name, schema)
    if not rows:
        raise DataError("predictor table has no rows")
    by_col = {name: [r[j] for r in rows] for j, name in enumerate(header)}
    cols, out_schema = _parse_columns(header, by_col, schema)
    return ObservedTable(response_name, [0.0] * len(rows), cols, out_schema)


def _cell(value, col: Column) -> str:
    return format_number(value) if col.kind == "numeric" else str(value)


def write_observed(obs: ObservedTable) -> str:
    """CSV text with the response first, then predictors in schema order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([obs.response_name, *obs.columns])
    for i in range(obs.n_rows):
        w.writerow(
            [format_number(obs.response[i])]
            + [_cell(v[i], obs.schema[k]) for k, v in obs.columns.items()]
        )
    return buf.getvalue()


def write_draws(draws: DrawsTable) -> str:
    """Long-format CSV: ``.draw,.row,.value,<predictors...>`` sorted by (draw, row)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*RESERVED_COLUMNS, *draws.predictors])
    cells = {k: [_cell(v, draws.schema[k]) for v in col] for k, col in draws.predictors.items()}
    r, n = draws.values.shape
    for j in range(r):
        for i in range(n):
            w.writerow(
                [str(j + 1), str(i + 1), format_number(draws.values[j, i])]
                + [cells[k][i] for k in cells]
            )
    return buf.getvalue()


def read_draws(
    csv_text: str, quantity: str = "y", schema: Mapping[str, Column] | None = None
) -> DrawsTable:
    """Inverse of :func:`write_draws`.

    Rows may come in any order; they must form complete, rectangular draw
    blocks with each ``(draw, row)`` pair exactly once and predictor values
    that agree across draws.
    """
    header, rows = _read_rows(csv_text)
    missing = [c for c in RESERVED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"draws CSV lacks reserved columns {missing}")
    pos = {name: j for j, name in enumerate(header)}
    if not rows:
        raise DataError("draws CSV has no rows")
    keyed: dict[tuple[int, int], list[str]] = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            d, i = int(row[pos[".draw"]]), int(row[pos[".row"]])
        except ValueError:
            raise DataError(f"line {lineno}: .draw/.row must be integers") from None
        if d < 1 or i < 1:
            raise DataError(f"line {lineno}: .draw/.row must be >= 1")
        if (d, i) in keyed:
            raise DataError(f"duplicate draw/row pair ({d}, {i})")
        keyed[(d, i)] = row
    draw_ids = sorted({d for d, _ in keyed})
    rows_per = {d: sorted(i for dd, i in keyed if dd == d) for d in draw_ids}
    n = len(rows_per[draw_ids[0]])
    if draw_ids != list(range(1, len(draw_ids) + 1)):
        raise DataError("non-rectangular draws: draw indices are not 1..r")
    for d in draw_ids:
        if rows_per[d] != list(range(1, n + 1)):
            raise DataError("non-rectangular draws: draw blocks differ in their row sets")
    r = len(draw_ids)
    values = np.empty((r, n))
    for (d, i), row in keyed.items():
        v = _parse_decimal(row[pos[".value"]])
        if v is None:
            raise DataError(f"draw {d} row {i}: non-finite value")
        values[d - 1, i - 1] = v
    names = [h for h in header if h not in RESERVED_COLUMNS]
    first = {name: [keyed[(1, i)][pos[name]] for i in range(1, n + 1)] for name in names}
    for name in names:
        for (d, i), row in keyed.items():
            if row[pos[name]] != first[name][i - 1]:
                raise DataError(f"predictor {name!r} differs across draws at row {i}")
    cols, out_schema = _parse_columns(names, first, schema)
    return DrawsTable(quantity, values, cols, out_schema)
