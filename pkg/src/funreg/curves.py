"""Discretized curves as elements of a Hilbert space, plus semi-metrics.

Curves live on a :class:`Grid` and are integrated with the trapezoid rule,
which is exact for the piecewise-linear interpolant of the stored values.
Arithmetic between curves on different grids raises instead of resampling.

Batches of curves (covariates or responses) are stored as 2-D arrays of
shape ``(n_curves, len(grid))``; the vectorized helpers below work on those
directly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, DataError, GridMismatchError

ORTHONORMALITY_TOL = 1e-8


class Grid:
    """Strictly increasing abscissae with cached trapezoid weights."""

    __slots__ = ("_points", "_weights")

    def __init__(self, points: Iterable[float]):
        pts = np.array(points, dtype=float).ravel()
        if pts.size < 2:
            raise DataError(f"a grid needs at least 2 points, got {pts.size}")
        if not np.all(np.isfinite(pts)):
            raise DataError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise DataError("grid points must be strictly increasing")
        pts.setflags(write=False)
        self._points = pts
        dt = np.diff(pts)
        w = np.zeros_like(pts)
        w[:-1] += dt / 2
        w[1:] += dt / 2
        w.setflags(write=False)
        self._weights = w

    @classmethod
    def uniform(cls, start: float = 0.0, stop: float = 1.0, num: int = 101) -> "Grid":
        return cls(np.linspace(start, stop, int(num)))

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, so that ``∫f ≈ weights @ f``."""
        return self._weights

    def __len__(self) -> int:
        return self._points.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or np.array_equal(self._points, other._points)

    def __hash__(self) -> int:
        return hash(self._points.tobytes())

    def __repr__(self) -> str:
        return f"Grid(n={len(self)}, [{self._points[0]:g}, {self._points[-1]:g}])"

    def to_dict(self) -> dict:
        return {"points": self._points.tolist()}


def check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatchError(
            f"curves live on different grids (lengths {len(a)} and {len(b)})"
        )


@dataclass(frozen=True, eq=False)
class Curve:
    """A function sampled on a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != len(self.grid):
            raise DataError(
                f"curve has {vals.size} values but the grid has {len(self.grid)} points"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Curve":
        return cls(grid, func(grid.points))

    @classmethod
    def zeros(cls, grid: Grid) -> "Curve":
        return cls(grid, np.zeros(len(grid)))

    def norm(self) -> float:
        return hilbert_norm(self)

    def _coerce(self, other: "Curve") -> np.ndarray:
        check_same_grid(self.grid, other.grid)
        return other.values

    def __add__(self, other: "Curve") -> "Curve":
        return Curve(self.grid, self.values + self._coerce(other))

    def __sub__(self, other: "Curve") -> "Curve":
        return Curve(self.grid, self.values - self._coerce(other))

    def __neg__(self) -> "Curve":
        return Curve(self.grid, -self.values)

    def __mul__(self, scalar: float) -> "Curve":
        return Curve(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Curve):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None


def inner_product(a: Curve, b: Curve) -> float:
    """Trapezoid approximation of ``∫ a(t) b(t) dt``."""
    check_same_grid(a.grid, b.grid)
    return float(np.dot(a.grid.weights, a.values * b.values))


def hilbert_norm(a: Curve) -> float:
    return float(np.sqrt(max(inner_product(a, a), 0.0)))


def batch_norms(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Hilbert norms of each row of ``values`` (shape ``(n, len(grid))``)."""
    values = np.atleast_2d(values)
    if values.shape[-1] != len(grid):
        raise GridMismatchError(
            f"values have {values.shape[-1]} columns but the grid has {len(grid)} points"
        )
    return np.sqrt(np.maximum((values * values) @ grid.weights, 0.0))


def weighted_orthonormalize(grid: Grid, raw: np.ndarray) -> np.ndarray:
    """Orthonormalize the rows of ``raw`` under the trapezoid inner product.

    Raises if the rows are numerically linearly dependent.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] != len(grid):
        raise GridMismatchError(
            f"basis rows have length {raw.shape[1]}, grid has {len(grid)} points"
        )
    sw = np.sqrt(grid.weights)
    q, r = np.linalg.qr((raw * sw).T)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise DataError("basis functions are linearly dependent on this grid")
    return (q / sw[:, None]).T


def fourier_basis(grid: Grid, dim: int) -> np.ndarray:
    """First ``dim`` trigonometric functions on the grid's interval,
    orthonormalized under the trapezoid inner product."""
    if dim < 1 or dim > len(grid):
        raise ConfigError(f"dim must lie in [1, {len(grid)}], got {dim}")
    t = grid.points
    u = (t - t[0]) / (t[-1] - t[0])
    rows = [np.ones_like(u)]
    freq = 1
    while len(rows) < dim:
        rows.append(np.sqrt(2) * np.cos(2 * np.pi * freq * u))
        if len(rows) < dim:
            rows.append(np.sqrt(2) * np.sin(2 * np.pi * freq * u))
        freq += 1
    return weighted_orthonormalize(grid, np.array(rows))


class SemiMetric:
    """Distance on the covariate space.

    Three kinds are available:

    ``l2``
        Hilbert distance between curves on ``grid``.
    ``projection``
        Euclidean distance between the first ``dim`` coefficients of the
        curves in a precomputed orthonormal ``basis`` (rows of an array).
    ``euclidean``
        Plain Euclidean distance between finite-dimensional vectors.
    """

    KINDS = ("l2", "projection", "euclidean")

    def __init__(self, kind: str = "euclidean", grid: Grid | None = None,
                 basis: np.ndarray | None = None, dim: int | None = None):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown semi-metric kind {kind!r}; expected one of {self.KINDS}")
        self.kind = kind
        self.grid = grid
        self.dim = dim
        self.basis = None
        if kind in ("l2", "projection") and grid is None:
            raise ConfigError(f"the {kind} semi-metric needs a grid")
        if kind == "projection":
            if basis is None:
                raise ConfigError("the projection semi-metric needs a basis")
            basis = np.atleast_2d(np.asarray(basis, dtype=float))
            if basis.shape[1] != len(grid):
                raise GridMismatchError(
                    f"basis rows have length {basis.shape[1]}, grid has {len(grid)} points"
                )
            if dim is None:
                dim = basis.shape[0]
            if not 1 <= dim <= basis.shape[0]:
                raise ConfigError(f"projection dim {dim} outside [1, {basis.shape[0]}]")
            basis = basis[:dim]
            gram = (basis * grid.weights) @ basis.T
            dev = np.max(np.abs(gram - np.eye(dim)))
            if dev > ORTHONORMALITY_TOL:
                raise DataError(f"projection basis is not orthonormal (Gram deviation {dev:.3g})")
            self.basis = basis
            self.dim = dim
            # coefficients are basis @ (w * f)
            self._projector = basis * grid.weights

    @classmethod
    def l2(cls, grid: Grid) -> "SemiMetric":
        return cls("l2", grid=grid)

    @classmethod
    def projection(cls, grid: Grid, basis, dim: int | None = None) -> "SemiMetric":
        if not isinstance(basis, np.ndarray):
            basis = np.array([c.values if isinstance(c, Curve) else c for c in basis])
        return cls("projection", grid=grid, basis=basis, dim=dim)

    @classmethod
    def euclidean(cls) -> "SemiMetric":
        return cls("euclidean")

    def __repr__(self) -> str:
        if self.kind == "projection":
            return f"SemiMetric('projection', dim={self.dim}, grid={self.grid!r})"
        if self.kind == "l2":
            return f"SemiMetric('l2', grid={self.grid!r})"
        return "SemiMetric('euclidean')"

    def _as_array(self, x) -> np.ndarray:
        if isinstance(x, Curve):
            if self.grid is not None:
                check_same_grid(self.grid, x.grid)
            return x.values
        return np.asarray(x, dtype=float)

    def _check_width(self, width: int) -> None:
        if self.grid is not None and width != len(self.grid):
            raise GridMismatchError(
                f"elements have {width} values but the metric grid has {len(self.grid)} points"
            )

    def distances(self, xs, x) -> np.ndarray:
        """Distances ``d(xs[i], x)`` for a batch ``xs`` of shape ``(n, p)``."""
        if isinstance(xs, Sequence) and xs and isinstance(xs[0], Curve):
            xs = np.array([self._as_array(c) for c in xs])
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        x = np.atleast_1d(self._as_array(x))
        if xs.shape[1] != x.size:
            raise GridMismatchError(
                f"covariates have {xs.shape[1]} values but the target has {x.size}"
            )
        self._check_width(x.size)
        diff = xs - x
        if self.kind == "euclidean":
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.kind == "l2":
            return np.sqrt(np.maximum((diff * diff) @ self.grid.weights, 0.0))
        coef = diff @ self._projector.T
        return np.sqrt(np.einsum("ij,ij->i", coef, coef))

    def __call__(self, x, y) -> float:
        return float(self.distances(np.atleast_1d(self._as_array(x))[None, :], y)[0])

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "projection":
            out["dim"] = self.dim
        return out


def semi_metric(spec: SemiMetric, x, y) -> float:
    return spec(x, y)


def read_curves_csv(path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Read a curve file: column ``t`` then one column per curve.

    Returns the abscissae, the curve identifiers and a ``(n_curves, len(t))``
    array of values.  A single row is allowed (scalar elements); wrap ``t``
    in a :class:`Grid` when it has at least two points.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise DataError(f"{path}: first header column must be 't'")
    if len(header) < 2:
        raise DataError(f"{path}: no curve columns")
    try:
        table = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if table.ndim != 2 or table.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    t = table[:, 0]
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: column 't' is not strictly increasing")
    return t, header[1:], table[:, 1:].T.copy()


def write_curves_csv(path, grid, values: np.ndarray, ids: Sequence[str] | None = None) -> None:
    """Write curves (rows of ``values``) in the ``t, id1, id2, ...`` layout.

    ``grid`` may be a :class:`Grid` or plain abscissae (e.g. coordinate
    indices for vector-valued elements).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    t = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float).ravel()
    if values.shape[1] != t.size:
        raise GridMismatchError(
            f"values have {values.shape[1]} columns but the grid has {t.size} points"
        )
    if ids is None:
        ids = [f"curve{i}" for i in range(values.shape[0])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *ids])
        for j, tj in enumerate(t):
            w.writerow([fmt(tj), *(fmt(v) for v in values[:, j])])


def fmt(value: float) -> str:
    """Round-trip exact float formatting (17 significant digits)."""
    return format(float(value), ".17g")
