"""Sampling specification: which model quantity to draw, where, and how many times.

Quantity ids follow the surface syntax ``"y"``, ``"<param>"`` and
``"<link>_<param>"`` (``"logit_mu"``, ``"log_sigma"``).  Link-scale variants
exist only for non-identity links, so the list never contains aliases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vmcheck.errors import DataError, ModelError, SpecError
from vmcheck.models import Link, ModelBundle, inverse_link, linear_predictor_draws, sample_responses
from vmcheck.rng import RngKey, rng_uniform
from vmcheck.tables import DrawsTable, ObservedTable

__all__ = [
    "Quantity",
    "SamplingSpec",
    "enumerate_quantities",
    "parse_quantity",
    "resolve",
    "subsample_draws",
    "thin_indices",
    "rng_uniform",
    "RngKey",
]

RESPONSE_PURPOSE = "pp"


@dataclass(frozen=True)
class Quantity:
    """``kind`` is ``response``, ``param`` or ``param_link``."""

    kind: str
    param: str | None = None
    link: str | None = None

    @property
    def id(self) -> str:
        if self.kind == "response":
            return "y"
        if self.kind == "param":
            return self.param
        return f"{self.link}_{self.param}"

    def __str__(self) -> str:
        return self.id


def enumerate_quantities(bundle: ModelBundle) -> list[Quantity]:
    """Checkable quantities in canonical order: ``y``, then each parameter and its link-scale twin."""
    out = [Quantity("response")]
    for p in bundle.params:
        out.append(Quantity("param", p.name))
        if p.link is not Link.IDENTITY:
            out.append(Quantity("param_link", p.name, p.link.value))
    return out


def parse_quantity(text: str, bundle: ModelBundle) -> Quantity:
    for q in enumerate_quantities(bundle):
        if q.id == text:
            return q
    allowed = [q.id for q in enumerate_quantities(bundle)]
    raise SpecError("draw.quantity", f"quantity {text!r} is not checkable for this model; expected one of {allowed}")


@dataclass(frozen=True)
class SamplingSpec:
    """What to draw: ``quantity`` at ``predictor_values`` (fitted data when ``None``).

    ``n_draws=None`` keeps every posterior draw.
    """

    quantity: str = "y"
    predictor_values: ObservedTable | None = None
    n_draws: int | None = None
    seed: int = 0


def thin_indices(r: int, n: int) -> list[int]:
    """Evenly strided 1-based draw indices ``ceil((k + 1) r / n)`` for ``k < n``."""
    if not 1 <= n <= r:
        raise DataError(f"number of draws {n} outside 1..{r}")
    return [((k + 1) * r + n - 1) // n for k in range(n)]


def subsample_draws(draws: DrawsTable, n: int, seed: int = 0) -> DrawsTable:
    """Keep ``n`` evenly spaced draws, relabelled ``1..n`` in original order.

    The stride is deterministic; ``seed`` is only recorded in ``meta``.
    """
    idx = thin_indices(draws.n_draws, n)
    out = draws.select_draws(idx)
    source = draws.meta.get("source_draws")
    out.meta["source_draws"] = [source[i - 1] for i in idx] if source else idx
    out.meta["subsample_seed"] = seed
    return out


def resolve(
    spec: SamplingSpec,
    bundle: ModelBundle,
    row_order: Sequence[int] | None = None,
) -> DrawsTable:
    """Evaluate ``spec`` against ``bundle`` into a draws table.

    Response draws are keyed by (original draw index, row index), so the
    result does not depend on ``row_order``, the order in which rows are
    evaluated (exposed to test that claim).
    """
    q = parse_quantity(spec.quantity, bundle)
    newdata = bundle.fitted_data if spec.predictor_values is None else spec.predictor_values
    n = newdata.n_rows
    draw_ids = (
        list(range(1, bundle.n_draws + 1)) if spec.n_draws is None else thin_indices(bundle.n_draws, spec.n_draws)
    )
    order = np.arange(n) if row_order is None else np.asarray(row_order, dtype=int)
    if sorted(order.tolist()) != list(range(n)):
        raise DataError("row_order must be a permutation of the rows")
    try:
        subset = newdata.take(order)
        values = np.empty((len(draw_ids), n))
        if q.kind == "response":
            params = {
                p.name: inverse_link(p.link, linear_predictor_draws(bundle, p.name, subset, draw_ids))
                for p in bundle.params
            }
            d = np.asarray(draw_ids)[:, None]
            rows = (order + 1)[None, :]
            values[:, order] = sample_responses(bundle.family, params, spec.seed, RESPONSE_PURPOSE, d, rows)
        else:
            p = bundle.param(q.param)
            eta = linear_predictor_draws(bundle, p.name, subset, draw_ids)
            values[:, order] = eta if q.kind == "param_link" else inverse_link(p.link, eta)
    except ModelError as e:
        raise DataError(f"predictor values incompatible with the model: {e}") from None
    return DrawsTable(
        q.id,
        values,
        newdata.columns,
        newdata.schema,
        meta={"source_draws": draw_ids, "seed": spec.seed},
    )
