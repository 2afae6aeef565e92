"""Model bundles: GLM-style distributional regressions with posterior draws.

A :class:`ModelBundle` is the stand-in for a fitted model object.  Each
distributional parameter (``mu``, ``sigma``, ``phi``, ``lambda``) carries its
own link function, design and an ``(r, p)`` matrix of coefficient draws, so
that for draw ``j`` and predictor row ``x``::

    link(param) = design(x) @ coef_draws[j]

Bundles come from the closed-form Normal-Inverse-Gamma fit
(:func:`fit_gaussian_conjugate`, :func:`fit_grouped`) or from JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from vmcheck import rng
from vmcheck.errors import ModelError
from vmcheck.tables import Column, ObservedTable, read_observed, write_observed

__all__ = [
    "Link",
    "Family",
    "FAMILIES",
    "Term",
    "DesignSpec",
    "ParamSpec",
    "ModelBundle",
    "NIGPrior",
    "NIGPosterior",
    "SimConfig",
    "inverse_link",
    "linear_predictor",
    "linear_predictor_draws",
    "sample_response",
    "sample_responses",
    "nig_posterior",
    "fit_gaussian_conjugate",
    "fit_grouped",
    "simulate_dataset",
    "bundle_to_json",
    "bundle_from_json",
]

BUNDLE_VERSION = "vmc-bundle/1"
LOGIT_EPS = 1e-15


class Link(str, Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        if self is Link.IDENTITY:
            return v
        if self is Link.LOG:
            return np.log(v)
        return np.log(v) - np.log1p(-v)

    def inverse(self, eta):
        return inverse_link(self, eta)

    @property
    def range(self) -> tuple[float, float]:
        return {"identity": (-math.inf, math.inf), "log": (0.0, math.inf), "logit": (0.0, 1.0)}[self.value]


def inverse_link(link: Link | str, eta):
    """Map linear-predictor values back to the parameter scale.

    ``logit`` uses the sign-split form of the logistic function and clamps
    to ``[1e-15, 1 - 1e-15]``; ``log`` overflows to ``inf`` like ``exp``.
    Scalars in, scalars out.
    """
    link = Link(link)
    e = np.asarray(eta, dtype=float)
    if link is Link.IDENTITY:
        out = e.copy()
    elif link is Link.LOG:
        with np.errstate(over="ignore"):
            out = np.exp(e)
    else:
        with np.errstate(over="ignore"):
            z = np.exp(-np.abs(e))
        out = np.where(e >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        out = np.clip(out, LOGIT_EPS, 1.0 - LOGIT_EPS)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Family:
    name: str
    params: tuple[str, ...]
    default_links: Mapping[str, str]
    domains: Mapping[str, tuple[float, float]]
    discrete: bool = False

    def check_domain(self, name: str, values: np.ndarray) -> None:
        lo, hi = self.domains[name]
        v = np.asarray(values, dtype=float)
        closed_lo = self.name == "gaussian" and name == "sigma"  # sigma = 0 is a point mass
        bad = ~np.isfinite(v) | (v > hi if hi == math.inf else v >= hi)
        bad |= (v < lo) if closed_lo else (v <= lo if lo > -math.inf else False)
        if np.any(bad):
            first = v[bad].reshape(-1)[0]
            raise ModelError(f"{self.name} parameter {name}={first!r} is out of its domain ({lo}, {hi})")


FAMILIES: dict[str, Family] = {
    "gaussian": Family(
        "gaussian", ("mu", "sigma"), {"mu": "identity", "sigma": "log"},
        {"mu": (-math.inf, math.inf), "sigma": (0.0, math.inf)},
    ),
    "bernoulli": Family("bernoulli", ("mu",), {"mu": "logit"}, {"mu": (0.0, 1.0)}, discrete=True),
    "poisson": Family("poisson", ("lambda",), {"lambda": "log"}, {"lambda": (0.0, math.inf)}, discrete=True),
    "beta": Family(
        "beta", ("mu", "phi"), {"mu": "logit", "phi": "log"},
        {"mu": (0.0, 1.0), "phi": (0.0, math.inf)},
    ),
}


def get_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return FAMILIES[name]
    except KeyError:
        raise ModelError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}") from None


# -- designs --------------------------------------------------------------------


TERM_KINDS = ("intercept", "numeric", "log_numeric", "group_intercept", "group_slope")


@dataclass(frozen=True)
class Term:
    kind: str
    predictor: str | None = None
    group: str | None = None

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise ModelError(f"unknown design term {self.kind!r}")
        needs_pred = self.kind in ("numeric", "log_numeric", "group_slope")
        needs_group = self.kind in ("group_intercept", "group_slope")
        if needs_pred != (self.predictor is not None):
            raise ModelError(f"term {self.kind} {'needs' if needs_pred else 'takes no'} predictor")
        if needs_group != (self.group is not None):
            raise ModelError(f"term {self.kind} {'needs' if needs_group else 'takes no'} group")

    def to_dict(self) -> dict:
        d = {"type": self.kind}
        if self.group is not None:
            d["group"] = self.group
        if self.predictor is not None:
            d["predictor"] = self.predictor
        return d


@dataclass(frozen=True)
class DesignSpec:
    """Ordered design terms plus the level lists of grouping predictors."""

    terms: tuple[Term, ...]
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "levels", {k: tuple(v) for k, v in dict(self.levels).items()})
        for t in self.terms:
            if t.group is not None and t.group not in self.levels:
                raise ModelError(f"design term on group {t.group!r} has no level list")

    @classmethod
    def intercept_only(cls) -> "DesignSpec":
        return cls((Term("intercept"),))

    @property
    def coef_names(self) -> list[str]:
        names = []
        for t in self.terms:
            if t.kind == "intercept":
                names.append("intercept")
            elif t.kind == "numeric":
                names.append(t.predictor)
            elif t.kind == "log_numeric":
                names.append(f"log({t.predictor})")
            elif t.kind == "group_intercept":
                names += [f"{t.group}[{lv}]" for lv in self.levels[t.group]]
            else:
                names += [f"{t.group}[{lv}]:{t.predictor}" for lv in self.levels[t.group]]
        return names

    @property
    def predictors(self) -> list[str]:
        out = []
        for t in self.terms:
            for name in (t.group, t.predictor):
                if name is not None and name not in out:
                    out.append(name)
        return out

    def check(self, data: ObservedTable) -> None:
        for t in self.terms:
            if t.predictor is not None:
                if t.predictor not in data.schema:
                    raise ModelError(f"design predictor {t.predictor!r} missing from data")
                if data.schema[t.predictor].kind != "numeric":
                    raise ModelError(f"design predictor {t.predictor!r} must be numeric")
            if t.group is not None:
                if t.group not in data.schema:
                    raise ModelError(f"design group {t.group!r} missing from data")
                if data.schema[t.group].kind != "categorical":
                    raise ModelError(f"design group {t.group!r} must be categorical")

    def matrix(self, data: ObservedTable) -> np.ndarray:
        """``(n, p)`` design matrix evaluated on ``data``'s predictor columns."""
        self.check(data)
        n = data.n_rows
        cols = []
        for t in self.terms:
            if t.kind == "intercept":
                cols.append(np.ones(n))
                continue
            x = data.columns[t.predictor] if t.predictor else None
            if t.kind == "numeric":
                cols.append(np.asarray(x, float))
            elif t.kind == "log_numeric":
                if np.any(x <= 0):
                    raise ModelError(f"log_numeric term needs positive {t.predictor!r}")
                cols.append(np.log(x))
            else:
                g = data.columns[t.group]
                levels = self.levels[t.group]
                unseen = sorted(set(g) - set(levels))
                if unseen:
                    raise ModelError(f"unseen categorical level {unseen[0]!r} for group {t.group!r}")
                for lv in levels:
                    ind = (g == lv).astype(float)
                    cols.append(ind if t.kind == "group_intercept" else ind * x)
        return np.column_stack(cols)

    def to_dict(self) -> dict:
        return {"terms": [t.to_dict() for t in self.terms], "levels": {k: list(v) for k, v in self.levels.items()}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DesignSpec":
        terms = [Term(t["type"], t.get("predictor"), t.get("group")) for t in d["terms"]]
        return cls(tuple(terms), {k: tuple(v) for k, v in d.get("levels", {}).items()})


@dataclass(eq=False)
class ParamSpec:
    name: str
    link: Link
    coef_names: list[str]
    coef_draws: np.ndarray
    design: DesignSpec

    def __post_init__(self):
        self.link = Link(self.link)
        d = np.array(self.coef_draws, dtype=float, ndmin=2)
        if d.ndim != 2:
            raise ModelError(f"coefficient draws for {self.name} must be a matrix")
        if list(self.coef_names) != self.design.coef_names:
            raise ModelError(
                f"coef names {list(self.coef_names)} for {self.name} disagree with design {self.design.coef_names}"
            )
        if d.shape[1] != len(self.coef_names):
            raise ModelError(f"{self.name}: {d.shape[1]} coefficient columns for {len(self.coef_names)} names")
        if not np.all(np.isfinite(d)):
            raise ModelError(f"{self.name}: non-finite coefficient draws")
        d.setflags(write=False)
        self.coef_draws = d
        self.coef_names = list(self.coef_names)

    @property
    def n_draws(self) -> int:
        return int(self.coef_draws.shape[0])

    def __eq__(self, other):
        if not isinstance(other, ParamSpec):
            return NotImplemented
        return (
            self.name == other.name and self.link == other.link
            and self.coef_names == other.coef_names and self.design == other.design
            and np.array_equal(self.coef_draws, other.coef_draws)
        )


@dataclass(eq=False)
class ModelBundle:
    family: Family
    params: tuple[ParamSpec, ...]
    fitted_data: ObservedTable

    def __post_init__(self):
        self.family = get_family(self.family)
        self.params = tuple(self.params)
        names = [p.name for p in self.params]
        if sorted(names) != sorted(self.family.params) or len(set(names)) != len(names):
            raise ModelError(f"{self.family.name} needs parameters {list(self.family.params)}, got {names}")
        draws = {p.n_draws for p in self.params}
        if len(draws) != 1:
            raise ModelError(f"parameters disagree on the number of draws: {sorted(draws)}")
        for p in self.params:
            lo, hi = p.link.range
            dlo, dhi = self.family.domains[p.name]
            if lo < dlo or hi > dhi:
                raise ModelError(f"link {p.link.value} cannot map onto the domain of {p.name}")
            p.design.check(self.fitted_data)

    @property
    def n_draws(self) -> int:
        return self.params[0].n_draws

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise ModelError(f"unknown parameter {name!r}; bundle has {[p.name for p in self.params]}")

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.family == other.family and self.params == other.params
            and self.fitted_data == other.fitted_data
        )


def _dot_rows(coefs: np.ndarray, X: np.ndarray) -> np.ndarray:
    # fixed summation order over coefficients keeps results bit-stable across BLAS builds
    out = np.zeros((coefs.shape[0], X.shape[0]))
    for k in range(X.shape[1]):
        out += coefs[:, k, None] * X[None, :, k]
    return out


def linear_predictor_draws(
    bundle: ModelBundle, param_name: str, newdata: ObservedTable, draw_indices: Sequence[int] | None = None
) -> np.ndarray:
    """``(k, n)`` link-scale values for 1-based ``draw_indices`` (all draws by default)."""
    p = bundle.param(param_name)
    X = p.design.matrix(newdata)
    coefs = p.coef_draws if draw_indices is None else p.coef_draws[np.asarray(draw_indices, int) - 1]
    return _dot_rows(coefs, X)


def linear_predictor(bundle: ModelBundle, param_name: str, newdata: ObservedTable, draw_index: int) -> np.ndarray:
    """Link-scale predictor of ``param_name`` for each row of ``newdata`` at 1-based ``draw_index``."""
    if not 1 <= draw_index <= bundle.n_draws:
        raise ModelError(f"draw index {draw_index} outside 1..{bundle.n_draws}")
    return linear_predictor_draws(bundle, param_name, newdata, [draw_index])[0]


# -- response sampling ------------------------------------------------------------


def sample_responses(
    family: Family | str,
    params: Mapping[str, np.ndarray],
    seed: int,
    purpose: str,
    draw,
    row,
) -> np.ndarray:
    """Vectorised response draws; element ``e`` uses RNG labels ``(draw[e], row[e])``."""
    fam = get_family(family)
    vals = {k: np.asarray(params[k], float) for k in fam.params}
    for k, v in vals.items():
        fam.check_domain(k, v)
    shape = np.broadcast_shapes(*(v.shape for v in vals.values()), np.shape(draw), np.shape(row))
    draw = np.broadcast_to(draw, shape)
    row = np.broadcast_to(row, shape)
    if fam.name == "gaussian":
        z = rng.normals(seed, purpose, draw, row, 0).reshape(shape)
        return vals["mu"] + vals["sigma"] * z
    if fam.name == "bernoulli":
        u = rng.uniforms(seed, purpose, draw, row, 0).reshape(shape)
        return (u < vals["mu"]).astype(float)
    if fam.name == "poisson":
        return rng.poissons(seed, purpose, vals["lambda"], draw, row).reshape(shape)
    mu, phi = np.broadcast_arrays(vals["mu"], vals["phi"])
    ga = rng.gammas(seed, purpose + "/a", mu * phi, draw, row)
    gb = rng.gammas(seed, purpose + "/b", (1.0 - mu) * phi, draw, row)
    total = ga + gb
    with np.errstate(invalid="ignore"):
        out = np.where(total > 0, ga / np.where(total > 0, total, 1.0), mu)
    return np.clip(out, LOGIT_EPS, 1.0 - LOGIT_EPS).reshape(shape)


def sample_response(family: Family | str, param_values: Mapping[str, float], rng_key: rng.RngKey) -> float:
    """One response draw from ``family`` at ``param_values``; pure in ``rng_key``."""
    out = sample_responses(
        family, param_values, rng_key.seed, rng_key.purpose,
        np.array([rng_key.draw]), np.array([rng_key.row]),
    )
    return float(out.reshape(-1)[0])


# -- conjugate fitting -------------------------------------------------------------


@dataclass(frozen=True)
class NIGPrior:
    """Normal-Inverse-Gamma prior; ``None`` means ``m0 = 0``, ``V0 = 1e6 I``."""

    m0: Sequence[float] | None = None
    V0: Sequence[Sequence[float]] | None = None
    a0: float = 1e-3
    b0: float = 1e-3

    def resolve(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        if self.a0 <= 0 or self.b0 <= 0:
            raise ModelError("prior scales a0 and b0 must be positive")
        m0 = np.zeros(p) if self.m0 is None else np.asarray(self.m0, float).reshape(-1)
        V0 = 1e6 * np.eye(p) if self.V0 is None else np.asarray(self.V0, float)
        if m0.shape != (p,) or V0.shape != (p, p):
            raise ModelError(f"prior dimensions do not match the {p}-column design")
        if not np.allclose(V0, V0.T) or np.any(np.linalg.eigvalsh(V0) <= 0):
            raise ModelError("prior covariance V0 must be symmetric positive definite")
        return m0, V0


@dataclass(frozen=True)
class NIGPosterior:
    mn: np.ndarray
    Vn: np.ndarray
    an: float
    bn: float

    def draw(self, n_draws: int, seed: int, purpose: str = "fit") -> tuple[np.ndarray, np.ndarray]:
        """``(beta, sigma2)`` draws: sigma2 ~ InvGamma(an, bn), beta | sigma2 ~ N(mn, sigma2 Vn)."""
        if n_draws < 1:
            raise ModelError("n_draws must be at least 1")
        j = np.arange(1, n_draws + 1)
        g = rng.gammas(seed, purpose + "/sigma2", self.an, j, 0)
        sigma2 = self.bn / g
        p = self.mn.size
        z = rng.normals(seed, purpose + "/beta", j[:, None], np.arange(p)[None, :])
        L = np.linalg.cholesky(self.Vn)
        return self.mn[None, :] + np.sqrt(sigma2)[:, None] * _dot_rows(z, L), sigma2


def nig_posterior(X: np.ndarray, y: np.ndarray, prior: NIGPrior | None = None) -> NIGPosterior:
    """Closed-form NIG update for ``y = X beta + eps``, ``eps ~ N(0, sigma2)``.

    ``bn`` uses the residual form ``b0 + (|y - X mn|^2 + (mn - m0)' V0^-1 (mn - m0)) / 2``,
    algebraically equal to the textbook expression but free of its cancellation.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ModelError("design and response sizes disagree")
    n, p = X.shape
    if n < 1:
        raise ModelError("cannot fit with zero rows")
    if np.linalg.matrix_rank(X) < p:
        raise ModelError(f"rank-deficient design ({np.linalg.matrix_rank(X)} < {p} columns)")
    m0, V0 = (prior or NIGPrior()).resolve(p)
    V0inv = np.linalg.inv(V0)
    prec = V0inv + X.T @ X
    Vn = np.linalg.inv(prec)
    Vn = 0.5 * (Vn + Vn.T)
    mn = np.linalg.solve(prec, V0inv @ m0 + X.T @ y)
    resid = y - X @ mn
    dm = mn - m0
    an = (prior or NIGPrior()).a0 + n / 2.0
    bn = (prior or NIGPrior()).b0 + 0.5 * (resid @ resid + dm @ V0inv @ dm)
    return NIGPosterior(mn, Vn, float(an), float(bn))


def _sigma_param(log_sigma: np.ndarray) -> ParamSpec:
    design = DesignSpec.intercept_only()
    return ParamSpec("sigma", Link.LOG, design.coef_names, log_sigma[:, None], design)


def fit_gaussian_conjugate(
    obs: ObservedTable,
    design: DesignSpec,
    prior: NIGPrior | None = None,
    n_draws: int = 4000,
    seed: int = 0,
) -> ModelBundle:
    """Exact posterior draws for a Gaussian linear model of ``obs``'s response.

    The bundle's ``mu`` uses the identity link with ``design``; ``sigma`` is
    an intercept-only parameter on the log link holding ``log(sigma)`` draws.
    """
    X = design.matrix(obs)
    post = nig_posterior(X, obs.response, prior)
    beta, sigma2 = post.draw(n_draws, seed)
    mu = ParamSpec("mu", Link.IDENTITY, design.coef_names, beta, design)
    return ModelBundle(FAMILIES["gaussian"], (mu, _sigma_param(0.5 * np.log(sigma2))), obs)


def fit_grouped(
    obs: ObservedTable,
    group_predictor: str,
    numeric_predictor: str,
    prior: NIGPrior | None = None,
    n_draws: int = 4000,
    seed: int = 0,
) -> ModelBundle:
    """Per-group intercepts and slopes with a shared residual scale.

    Each level of ``group_predictor`` gets its own conjugate fit of
    ``y ~ 1 + x`` under the same prior.  The shared sigma is approximated
    per draw by the degrees-of-freedom weighted mean of the per-group
    variance draws, ``sigma2_j = sum_g w_g sigma2_gj`` with ``w_g ∝ 2 an_g``.
    """
    if group_predictor not in obs.schema or not obs.schema[group_predictor].is_categorical:
        raise ModelError(f"group predictor {group_predictor!r} must be a categorical column")
    levels = obs.schema[group_predictor].levels
    if len(levels) < 2:
        raise ModelError("need ≥2 levels in the group predictor")
    if obs.kind(numeric_predictor) != "numeric":
        raise ModelError(f"{numeric_predictor!r} must be numeric")
    base = DesignSpec((Term("intercept"), Term("numeric", numeric_predictor)))
    g = obs.columns[group_predictor]
    intercepts, slopes, sigma2s, dofs = [], [], [], []
    for level in levels:
        if np.count_nonzero(g == level) < 2:
            raise ModelError(f"group {level!r} has fewer rows than design columns (2)")
        sub = obs.take(g == level)
        post = nig_posterior(base.matrix(sub), sub.response, prior)
        beta, s2 = post.draw(n_draws, seed, purpose=f"fit/{group_predictor}={level}")
        intercepts.append(beta[:, 0])
        slopes.append(beta[:, 1])
        sigma2s.append(s2)
        dofs.append(2.0 * post.an)
    w = np.asarray(dofs) / np.sum(dofs)
    pooled = np.zeros(n_draws)
    for wg, s2 in zip(w, sigma2s):
        pooled += wg * s2
    design = DesignSpec(
        (Term("group_intercept", group=group_predictor), Term("group_slope", numeric_predictor, group_predictor)),
        {group_predictor: levels},
    )
    coefs = np.column_stack(intercepts + slopes)
    mu = ParamSpec("mu", Link.IDENTITY, design.coef_names, coefs, design)
    return ModelBundle(FAMILIES["gaussian"], (mu, _sigma_param(0.5 * np.log(pooled))), obs)


# -- simulation --------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Synthetic grouped regression: ``y = a_r + b_r x + sigma * eps``."""

    n: int
    slopes: Sequence[float]
    intercepts: Sequence[float] | None = None
    sigma: float = 1.0
    seed: int = 0
    regions: Sequence[str] | None = None
    x_range: tuple[float, float] = (0.0, 1.0)


def simulate_dataset(config: SimConfig) -> ObservedTable:
    """Deterministic table with columns ``y``, ``x`` (numeric) and ``region``."""
    slopes = np.asarray(config.slopes, float).reshape(-1)
    k = slopes.size
    intercepts = np.zeros(k) if config.intercepts is None else np.asarray(config.intercepts, float).reshape(-1)
    regions = [f"r{i + 1}" for i in range(k)] if config.regions is None else [str(r) for r in config.regions]
    if intercepts.size != k or len(regions) != k:
        raise ModelError("slopes, intercepts and regions must have equal lengths")
    if k == 0 or config.n < 1:
        raise ModelError("need at least one region and one row per region")
    if not config.sigma >= 0:
        raise ModelError("sigma must be non-negative")
    lo, hi = config.x_range
    reg = np.repeat(np.arange(k), config.n)
    idx = np.tile(np.arange(config.n), k)
    x = lo + (hi - lo) * rng.uniforms(config.seed, "sim/x", reg, idx, 0)
    eps = rng.normals(config.seed, "sim/eps", reg, idx)
    y = intercepts[reg] + slopes[reg] * x + config.sigma * eps
    names = np.array(regions, dtype=object)[reg]
    schema = {"x": Column("numeric"), "region": Column("categorical", tuple(regions))}
    return ObservedTable("y", y, {"x": x, "region": names}, schema)


# -- JSON ------------------------------------------------------------------------


def bundle_to_json(bundle: ModelBundle) -> str:
    doc = {
        "version": BUNDLE_VERSION,
        "family": bundle.family.name,
        "n_draws": bundle.n_draws,
        "params": [
            {
                "name": p.name,
                "link": p.link.value,
                "coef_names": p.coef_names,
                "design": p.design.to_dict(),
                "draws": [[float(v) for v in row] for row in p.coef_draws],
            }
            for p in bundle.params
        ],
        "fitted_data": {
            "response": bundle.fitted_data.response_name,
            "schema": {
                k: {"kind": c.kind, "levels": list(c.levels)} for k, c in bundle.fitted_data.schema.items()
            },
            "csv": write_observed(bundle.fitted_data),
        },
    }
    return json.dumps(doc, sort_keys=True, allow_nan=False)


def bundle_from_json(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"bundle is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("version") != BUNDLE_VERSION:
        raise ModelError(f"bundle version must be {BUNDLE_VERSION!r}")
    try:
        fd = doc["fitted_data"]
        schema = {k: Column(v["kind"], tuple(v.get("levels", ()))) for k, v in fd.get("schema", {}).items()}
        obs = read_observed(fd["csv"], fd["response"], schema)
        params = [
            ParamSpec(
                p["name"], Link(p["link"]), p["coef_names"],
                np.asarray(p["draws"], dtype=float), DesignSpec.from_dict(p["design"]),
            )
            for p in doc["params"]
        ]
        bundle = ModelBundle(get_family(doc["family"]), tuple(params), obs)
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"malformed bundle: {e!r}") from None
    if doc.get("n_draws", bundle.n_draws) != bundle.n_draws:
        raise ModelError("bundle n_draws disagrees with its coefficient draws")
    return bundle
