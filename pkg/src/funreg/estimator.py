"""Local-weighting regression with curve-valued responses.

The estimate at a target ``x`` is a convex combination of the responses,
``r_hat(x) = sum_i W_i Y_i``, where the weight vector comes from one of

* ``simple_knn``: ``1/k`` on the ``k`` nearest covariates;
* ``kernel_knn``: ``K(d_i / H)`` normalized, ``H`` the k-th nearest distance;
* ``nadaraya_watson``: ``K(d_i / h)`` normalized, ``h`` a fixed bandwidth;
* ``custom``: a non-increasing deterministic sequence placed on the ranks.

Distances are ranked with ties broken by the original index, and the ball
``B(x, H)`` is closed.  :class:`FunctionalKNeighborsRegressor` and
:class:`FunctionalNadarayaWatson` wrap these primitives in the scikit-learn
estimator interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .curves import Curve, Grid, SemiMetric
from .exceptions import ConfigError, DataError, EmptyNeighborhoodError


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _triangle(u):
    return np.clip(1.0 - np.abs(u), 0.0, None)


KERNELS = {"uniform": _uniform, "triangle": _triangle}
# kernels bounded below by c * 1[-1, 1] with c > 0
ENVELOPE_COMPLIANT = {"uniform": True, "triangle": False}
SCHEMES = ("simple_knn", "kernel_knn", "nadaraya_watson", "custom")


@dataclass(frozen=True)
class WeightScheme:
    kind: str
    k: int | None = None
    h: float | None = None
    kernel: str = "uniform"
    rank_weights: tuple | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown weight scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {tuple(KERNELS)}")
        if self.kind in ("simple_knn", "kernel_knn"):
            if self.k is None or int(self.k) < 1:
                raise ConfigError(f"{self.kind} needs k >= 1")
        if self.kind == "nadaraya_watson" and not (self.h is not None and self.h > 0):
            raise ConfigError("nadaraya_watson needs a bandwidth h > 0")
        if self.kind == "custom":
            v = np.asarray(self.rank_weights, dtype=float)
            if v.ndim != 1 or v.size == 0 or np.any(v < 0):
                raise ConfigError("custom rank weights must be a nonempty nonnegative sequence")
            if np.any(np.diff(v) > 0):
                raise ConfigError("custom rank weights must be non-increasing")
            if not math.isclose(math.fsum(v), 1.0, abs_tol=1e-12):
                raise ConfigError("custom rank weights must sum to 1")
            object.__setattr__(self, "rank_weights", tuple(float(t) for t in v))

    @classmethod
    def simple_knn(cls, k: int) -> "WeightScheme":
        return cls("simple_knn", k=k)

    @classmethod
    def kernel_knn(cls, k: int, kernel: str = "uniform") -> "WeightScheme":
        return cls("kernel_knn", k=k, kernel=kernel)

    @classmethod
    def nadaraya_watson(cls, h: float, kernel: str = "uniform") -> "WeightScheme":
        return cls("nadaraya_watson", h=h, kernel=kernel)

    @classmethod
    def custom(cls, rank_weights: Sequence[float]) -> "WeightScheme":
        return cls("custom", rank_weights=tuple(rank_weights))

    @property
    def envelope_compliant(self) -> bool:
        return self.kind not in ("kernel_knn", "nadaraya_watson") or ENVELOPE_COMPLIANT[self.kernel]


@dataclass(frozen=True)
class WeightStats:
    v_n1: float
    c_n2: float
    b_n: float


@dataclass
class WeightVector:
    """Weights ``W_i`` at a target point and the quantities derived from them.

    ``sorted`` holds ``v_i = W_{R_i}``, the weights read in rank order, which
    is non-increasing for every built-in scheme.
    """

    weights: np.ndarray
    sorted: np.ndarray
    radius: float
    k_effective: int
    ranks: np.ndarray
    distances: np.ndarray = field(repr=False)
    envelope_compliant: bool = True

    @property
    def n(self) -> int:
        return self.weights.size

    def stats(self, k: int | None = None) -> WeightStats:
        return weight_stats(self, self.k_effective if k is None else k)


def rank_from_distances(distances) -> np.ndarray:
    """Indices ordered by increasing distance, ties by index (0-based)."""
    d = np.asarray(distances, dtype=float)
    return np.argsort(d, kind="stable")


def rank_neighbors(xs, x, metric: SemiMetric) -> np.ndarray:
    """0-based ranks: ``xs[ranks[0]]`` is the nearest covariate to ``x``."""
    d = metric.distances(xs, x)
    if d.size < 1:
        raise DataError("need at least one covariate")
    return rank_from_distances(d)


def _kth_smallest(d: np.ndarray, k: int) -> float:
    k = int(k)
    if not 1 <= k <= d.size:
        raise ConfigError(f"k must lie in [1, {d.size}], got {k}")
    return float(np.partition(d, k - 1)[k - 1])


def knn_radius(xs, x, metric: SemiMetric, k: int) -> float:
    """Distance from ``x`` to its k-th nearest covariate."""
    return _kth_smallest(metric.distances(xs, x), k)


def _normalize(mass: np.ndarray) -> np.ndarray:
    total = math.fsum(mass)
    if total <= 0:
        raise EmptyNeighborhoodError("empty neighborhood: no covariate receives kernel mass")
    return mass / total


def _kernel_mass(kernel: str, d: np.ndarray, radius: float) -> np.ndarray:
    if radius > 0:
        u = d / radius
    else:
        u = np.where(d == 0, 0.0, np.inf)
    return KERNELS[kernel](u)


def weights_from_distances(scheme: WeightScheme, distances) -> WeightVector:
    d = np.asarray(distances, dtype=float).ravel()
    n = d.size
    if n < 1:
        raise DataError("need at least one covariate")
    ranks = rank_from_distances(d)
    kind = scheme.kind
    if kind in ("simple_knn", "kernel_knn", "custom"):
        k = scheme.k if kind != "custom" else min(len(scheme.rank_weights), n)
        if int(k) > n:
            raise ConfigError(f"k={k} exceeds the sample size n={n}")
    if kind == "simple_knn":
        k = int(scheme.k)
        w = np.zeros(n)
        w[ranks[:k]] = 1.0 / k
        radius = float(d[ranks[k - 1]])
        k_eff = k
    elif kind == "custom":
        v = np.asarray(scheme.rank_weights)
        if v.size > n and np.any(v[n:] > 0):
            raise ConfigError(f"custom weights put mass beyond the sample size n={n}")
        w = np.zeros(n)
        w[ranks[:min(v.size, n)]] = v[:n]
        k_eff = int(np.count_nonzero(v[:n]))
        radius = float(d[ranks[max(k_eff, 1) - 1]])
    else:
        radius = _kth_smallest(d, scheme.k) if kind == "kernel_knn" else float(scheme.h)
        w = _normalize(_kernel_mass(scheme.kernel, d, radius))
        k_eff = int(np.count_nonzero(d <= radius))
    return WeightVector(weights=w, sorted=w[ranks], radius=radius, k_effective=k_eff,
                        ranks=ranks, distances=d, envelope_compliant=scheme.envelope_compliant)


def compute_weights(scheme: WeightScheme, xs, x, metric: SemiMetric) -> WeightVector:
    return weights_from_distances(scheme, metric.distances(xs, x))


def estimate(weights, ys, grid: Grid | None = None):
    """Weighted combination ``sum_i W_i Y_i`` of the responses.

    ``ys`` is a sequence of :class:`Curve` (a Curve is returned) or an array
    of shape ``(n,)`` or ``(n, len(grid))``.  When ``grid`` is given the
    result is wrapped in a Curve.
    """
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    if isinstance(ys, Sequence) and ys and isinstance(ys[0], Curve):
        grid0 = ys[0].grid
        for c in ys[1:]:
            if c.grid != grid0:
                raise DataError(f"responses live on different grids (lengths {len(grid0)} and {len(c.grid)})")
        if grid is not None and grid != grid0:
            raise DataError(f"responses live on a grid of length {len(grid0)}, expected {len(grid)}")
        grid = grid0
        ys = np.array([c.values for c in ys])
    ys = np.asarray(ys, dtype=float)
    if ys.shape[0] != w.size:
        raise DataError(f"{w.size} weights but {ys.shape[0]} responses")
    if grid is not None and (ys.ndim != 2 or ys.shape[1] != len(grid)):
        raise DataError(f"responses have shape {ys.shape}, grid has {len(grid)} points")
    idx = np.flatnonzero(w)
    out = w[idx] @ ys[idx]
    return Curve(grid, out) if grid is not None else out


def weight_stats(weights, k: int) -> WeightStats:
    """``v_n1`` (largest weight), ``c_n2`` (Euclidean norm) and the mass
    ``b_n`` beyond the k largest weights."""
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    k = int(k)
    if not 1 <= k <= w.size:
        raise ConfigError(f"k must lie in [1, {w.size}], got {k}")
    v = np.sort(w)[::-1]
    return WeightStats(v_n1=float(v[0]), c_n2=math.sqrt(math.fsum(v * v)),
                       b_n=math.fsum(v[k:]))


def resolve_metric(metric, x_grid=None) -> SemiMetric:
    if isinstance(metric, SemiMetric):
        return metric
    if metric == "euclidean":
        return SemiMetric.euclidean()
    if metric == "l2":
        if x_grid is None:
            raise ConfigError("metric='l2' needs x_grid")
        return SemiMetric.l2(x_grid if isinstance(x_grid, Grid) else Grid(x_grid))
    raise ConfigError(f"metric must be 'euclidean', 'l2' or a SemiMetric instance, got {metric!r}")


class _LocalWeightingRegressor(RegressorMixin, BaseEstimator):
    """Shared fit/predict logic; subclasses define ``_scheme``."""

    def _scheme(self) -> WeightScheme:
        raise NotImplementedError

    def fit(self, X, Y):
        """Store the covariates ``X`` (n, p) and responses ``Y`` (n,) or (n, g)."""
        X, Y = check_X_y(X, Y, multi_output=True, y_numeric=True)
        self.metric_ = resolve_metric(self.metric, self.x_grid)
        self.scheme_ = self._scheme()
        self.X_fit_ = X
        self.Y_fit_ = Y
        self.n_features_in_ = X.shape[1]
        return self

    def weights(self, x) -> WeightVector:
        """Weight vector at the single target ``x``."""
        check_is_fitted(self)
        return compute_weights(self.scheme_, self.X_fit_, np.asarray(x, dtype=float).ravel(), self.metric_)

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.array([estimate(self.weights(x), self.Y_fit_) for x in X])


class FunctionalKNeighborsRegressor(_LocalWeightingRegressor):
    """k-nearest-neighbor regression in a semi-metric space.

    Parameters
    ----------
    n_neighbors : int, default=5
        Number of neighbors ``k``.
    kernel : {None, 'uniform', 'triangle'}, default=None
        ``None`` averages the k nearest responses; a kernel name weights
        them by ``K(d / H)`` with ``H`` the k-th nearest distance.
    metric : {'euclidean', 'l2'} or SemiMetric, default='euclidean'
    x_grid : Grid or array-like, optional
        Covariate grid, required for ``metric='l2'``.
    """

    def __init__(self, n_neighbors=5, kernel=None, metric="euclidean", x_grid=None):
        self.n_neighbors = n_neighbors
        self.kernel = kernel
        self.metric = metric
        self.x_grid = x_grid

    def _scheme(self):
        if self.kernel is None:
            return WeightScheme.simple_knn(self.n_neighbors)
        return WeightScheme.kernel_knn(self.n_neighbors, self.kernel)


class FunctionalNadarayaWatson(_LocalWeightingRegressor):
    """Kernel regression with a fixed bandwidth in a semi-metric space.

    Prediction raises :class:`EmptyNeighborhoodError` when no covariate lies
    in the closed ball of radius ``bandwidth`` around the target.
    """

    def __init__(self, bandwidth=1.0, kernel="uniform", metric="euclidean", x_grid=None):
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.metric = metric
        self.x_grid = x_grid

    def _scheme(self):
        return WeightScheme.nadaraya_watson(self.bandwidth, self.kernel)
