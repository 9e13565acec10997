"""Traversability beliefs: probability that an unobserved stochastic edge has
its high-cost status, given what has been observed so far."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .graph import AMBIGUOUS, HIGH, LOW, Graph, InfoSet

EPS = 1e-6


class BeliefError(ValueError):
    pass


class SamplingBudgetExceeded(BeliefError):
    pass


def _clamp(p):
    return np.clip(p, EPS, 1.0 - EPS)


@dataclass(frozen=True)
class LogisticHypothesis:
    """f(x) = 1 / (1 + exp(-a (x - b))) on a scalar feature."""

    a: float
    b: float
    dim = 1

    def __call__(self, features) -> float:
        x = float(features[0]) if np.ndim(features) else float(features)
        z = -self.a * (x - self.b)
        # stable in both tails
        if z >= 0:
            ez = math.exp(-z)
            p = ez / (1.0 + ez)
        else:
            p = 1.0 / (1.0 + math.exp(z))
        return float(_clamp(p))


@dataclass(frozen=True, eq=False)
class GridSurface:
    """Probability surface sampled on a rectilinear grid, multilinearly
    interpolated. Queries outside the grid are clamped to its boundary."""

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    _interp: RegularGridInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(len(a) for a in axes):
            raise BeliefError(
                f"surface shape {values.shape} does not match axes {[len(a) for a in axes]}")
        if np.any(values < 0) or np.any(values > 1):
            raise BeliefError("surface values must lie in [0, 1]")
        for a in axes:
            if len(a) < 2 or np.any(np.diff(a) <= 0):
                raise BeliefError("grid axes need at least two strictly increasing points")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_interp", RegularGridInterpolator(axes, values))

    @property
    def dim(self) -> int:
        return len(self.axes)

    def __call__(self, features) -> float:
        x = np.atleast_1d(np.asarray(features, dtype=float))
        if x.shape != (self.dim,):
            raise BeliefError(f"expected a {self.dim}-d feature vector, got {x.shape}")
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        return float(_clamp(self._interp(np.clip(x, lo, hi)[None, :])[0]))


Hypothesis = Union[LogisticHypothesis, GridSurface]


class CorrelatedBelief:
    """Mixture over hypotheses, reweighted by tempered Bernoulli likelihoods."""

    def __init__(self, hypotheses, prior_weights=None, theta=1.0):
        self.hypotheses = list(hypotheses)
        if not self.hypotheses:
            raise BeliefError("at least one hypothesis is required")
        n = len(self.hypotheses)
        if prior_weights is None:
            prior = np.full(n, 1.0 / n)
        else:
            prior = np.asarray(prior_weights, dtype=float)
            if prior.shape != (n,) or np.any(prior < 0):
                raise BeliefError("prior weights must be one nonnegative weight per hypothesis")
            if abs(prior.sum() - 1.0) > 1e-12:
                raise BeliefError(f"prior weights sum to {prior.sum()!r}, not 1")
        if not theta > 0:
            raise BeliefError("theta must be positive")
        self.prior = prior
        self.theta = float(theta)
        dims = {h.dim for h in self.hypotheses}
        if len(dims) != 1:
            raise BeliefError("hypotheses disagree on feature dimension")
        self.dim = dims.pop()

    def check(self, graph: Graph):
        for e in graph.stochastic_edges:
            if len(e.features) != self.dim:
                yield ("feature_dimension",
                       f"edge {e.id!r} has {len(e.features)} features, belief expects {self.dim}")

    def bind(self, graph: Graph) -> BoundBelief:
        return BoundBelief(self, graph)


class IndependentBelief:
    """Fixed per-edge high-status probabilities, keyed by edge id."""

    def __init__(self, p: dict[str, float]):
        self.p = {k: float(v) for k, v in p.items()}

    def check(self, graph: Graph):
        for e in graph.stochastic_edges:
            if e.id not in self.p:
                yield ("missing_probability", f"no probability given for edge {e.id!r}")
            elif not 0.0 <= self.p[e.id] <= 1.0:
                yield ("probability_range", f"edge {e.id!r} probability {self.p[e.id]} outside [0, 1]")
        known = {e.id for e in graph.stochastic_edges}
        for k in self.p:
            if k not in known:
                yield ("unknown_edge", f"probability given for unknown stochastic edge {k!r}")

    def bind(self, graph: Graph) -> BoundBelief:
        return BoundBelief(self, graph)


BeliefModel = Union[CorrelatedBelief, IndependentBelief]


class BoundBelief:
    """A belief model attached to one graph, with per-session memoization of
    posteriors keyed by the observed part of the information set."""

    def __init__(self, model: BeliefModel, graph: Graph):
        self.model = model
        self.graph = graph
        self._posterior = {}
        if isinstance(model, CorrelatedBelief):
            # probs[h, e]: hypothesis h's high-status probability for stochastic edge e
            self.probs = np.array(
                [[h(e.features) for e in graph.stochastic_edges] for h in model.hypotheses],
                dtype=float,
            ).reshape(len(model.hypotheses), graph.m_s)
            self._log_high = np.log(self.probs)
            self._log_low = np.log1p(-self.probs)
            self._log_prior = np.log(np.where(model.prior > 0, model.prior, 1.0))
            self._prior_mask = model.prior > 0
        else:
            self.p = np.array([model.p[e.id] for e in graph.stochastic_edges], dtype=float)

    def posterior(self, info: InfoSet) -> np.ndarray:
        model = self.model
        if not isinstance(model, CorrelatedBelief):
            raise BeliefError("posterior weights exist only for correlated beliefs")
        key = tuple((i, s) for i, s in enumerate(info) if s != AMBIGUOUS)
        w = self._posterior.get(key)
        if w is not None:
            return w
        if not key:
            w = model.prior.copy()
        else:
            loglik = np.zeros(len(model.hypotheses))
            for i, s in key:
                loglik += self._log_high[:, i] if s == HIGH else self._log_low[:, i]
            logw = self._log_prior + model.theta * loglik
            logw = np.where(self._prior_mask, logw, -np.inf)
            logw -= logw.max()
            w = np.exp(logw)
            w /= w.sum()
        self._posterior[key] = w
        return w

    def rho(self, index: int, info: InfoSet) -> float:
        status = info[index]
        if status == LOW:
            return 0.0
        if status == HIGH:
            return 1.0
        if isinstance(self.model, CorrelatedBelief):
            return float(self.posterior(info) @ self.probs[:, index])
        return float(self.p[index])


def posterior_weights(model: CorrelatedBelief, graph: Graph, info: InfoSet) -> np.ndarray:
    return BoundBelief(model, graph).posterior(info)


def rho(model: BeliefModel, graph: Graph, edge, info: InfoSet) -> float:
    """High-status probability of stochastic ``edge`` (an Edge or its index)."""
    index = edge if isinstance(edge, int) else edge.index
    return BoundBelief(model, graph).rho(index, info)


def sample_logistic_hypotheses(constraints: dict, count: int, seed=0,
                               a_range=(0.0, 10.0), b_range=None,
                               max_draws: int | None = None) -> list[LogisticHypothesis]:
    """Rejection-sample logistic curves that are low at ``low_x`` and high at ``high_x``.

    ``a`` is drawn uniformly from ``a_range`` and ``b`` from ``b_range``
    (default: between the two anchor points).
    """
    low_x = float(constraints["low_x"])
    high_x = float(constraints["high_x"])
    low_pmax = float(constraints["low_pmax"])
    high_pmin = float(constraints["high_pmin"])
    if not low_x < high_x:
        raise BeliefError("low_x must be below high_x")
    if not (0 < low_pmax < 1 and 0 < high_pmin < 1):
        raise BeliefError("probability bounds must lie in (0, 1)")
    if count < 0:
        raise BeliefError("count must be nonnegative")
    if count == 0:
        return []
    if b_range is None:
        b_range = (low_x, high_x)
    if max_draws is None:
        max_draws = 1000 * count + 100_000
    rng = np.random.default_rng(seed)
    accepted: list[LogisticHypothesis] = []
    drawn = 0
    batch = max(256, 4 * count)
    while len(accepted) < count:
        if drawn >= max_draws:
            raise SamplingBudgetExceeded(
                f"only {len(accepted)} of {count} hypotheses accepted after {drawn} draws")
        n = min(batch, max_draws - drawn)
        a = rng.uniform(*a_range, size=n)
        b = rng.uniform(*b_range, size=n)
        drawn += n
        for ai, bi in zip(a, b):
            h = LogisticHypothesis(float(ai), float(bi))
            if h(low_x) <= low_pmax and h(high_x) >= high_pmin:
                accepted.append(h)
                if len(accepted) == count:
                    break
    return accepted


@dataclass
class LoadedSurfaces:
    hypotheses: list[GridSurface]
    prior: np.ndarray | None = None
    rejected: list[tuple[int, float]] = field(default_factory=list)


def consistency_error(h: Hypothesis, points, labels) -> float:
    """Mean absolute error between predicted probabilities and 0/1 labels."""
    pred = np.array([h(p) for p in points])
    return float(np.mean(np.abs(pred - np.asarray(labels, dtype=float))))


def surfaces_from_dict(doc: dict) -> LoadedSurfaces:
    try:
        axes = [np.asarray(a, dtype=float) for a in doc["axes"]]
        raw = doc["surfaces"]
    except (KeyError, TypeError) as exc:
        raise BeliefError(f"grid surface document missing field: {exc}") from None
    surfaces = []
    for i, values in enumerate(raw):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != len(axes):
            raise BeliefError(f"surface {i} has {arr.ndim} dimensions, axes declare {len(axes)}")
        surfaces.append(GridSurface(tuple(axes), arr))
    prior = doc.get("prior")
    kept, rejected, kept_prior = [], [], []
    check = doc.get("consistency")
    for i, s in enumerate(surfaces):
        if check:
            points = np.asarray(check["points"], dtype=float)
            if points.ndim != 2 or points.shape[1] != len(axes):
                raise BeliefError("consistency points do not match the grid dimension")
            err = consistency_error(s, points, check["labels"])
            if not err < float(check.get("threshold", 0.1)):
                rejected.append((i, err))
                continue
        kept.append(s)
        if prior is not None:
            kept_prior.append(prior[i])
    if prior is not None:
        p = np.asarray(kept_prior, dtype=float)
        prior_arr = p / p.sum() if p.size and p.sum() > 0 else None
    else:
        prior_arr = None
    return LoadedSurfaces(kept, prior_arr, rejected)


def load_grid_hypotheses(path) -> LoadedSurfaces:
    """Read sampled probability surfaces from a JSON file.

    Schema: ``{"axes": [[...], ...], "surfaces": [values, ...], "prior": [...]?,
    "consistency": {"points": [[...]], "labels": [0|1], "threshold": 0.1}?}``.
    Surfaces failing the consistency check are listed in ``rejected``.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BeliefError(f"cannot read grid surfaces from {path}: {exc}") from None
    return surfaces_from_dict(doc)
