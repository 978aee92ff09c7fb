"""Seeded generators for covariate and noise sequences.

Independent kinds (``iid_gaussian``, ``iid_uniform``, ``brownian_motion``)
and a stationary AR(1) recursion ``X_t = A X_{t-1} + alpha_t`` with
``A = rho * I`` (diagonal) or ``A = rho * S`` for a banded smoothing matrix
``S``.  AR(1) sequences are m-approximable: the coupled copy ``X_i^(m)``
keeps the innovations ``alpha_i, ..., alpha_{i-m+1}`` and replaces all older
ones by an independent stream, so that for the diagonal operator

    X_i - X_i^(m) = rho**m * (X_{i-m} - X'_{i-m})

where ``X'`` is the path driven only by the replacement stream.

Randomness
----------
Every draw comes from ``stream(seed, replication, purpose)``: a PCG64
generator seeded with ``SeedSequence([seed, replication, purpose])``.  The
purpose is ``MAIN`` for the observed path, ``PRIME`` for the replacement
innovations and ``AUX`` for auxiliary samples.  Replications therefore never
share state and can be produced in any order or in parallel.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .curves import Grid, SemiMetric, batch_norms
from .exceptions import ConfigError
from .orlicz import PsiSpec, orlicz_norm

MAIN, PRIME, AUX = 0, 1, 2

KINDS = ("iid_gaussian", "iid_uniform", "brownian_motion", "ar1")
INNOVATIONS = ("gaussian", "uniform", "brownian")
_ALIASES = {"iid_gaussian_finite": "iid_gaussian", "brownian": "brownian_motion"}
TRUNCATION_BIAS = 1e-12


def stream(seed: int, replication: int = 0, purpose: int = MAIN) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, replication, purpose])))


def child_seed(seed: int, *keys: int) -> int:
    """Derive an independent 63-bit seed from a master seed and integer keys."""
    ss = np.random.SeedSequence([seed, *keys])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def default_burn_in(rho: float) -> int:
    if rho == 0:
        return 0
    return int(math.ceil(math.log(TRUNCATION_BIAS) / math.log(abs(rho))))


def grid_from_dict(d) -> Grid:
    if isinstance(d, Grid):
        return d
    if d.get("points") is not None:
        return Grid(d["points"])
    return Grid.uniform(d.get("start", 0.0), d.get("stop", 1.0), int(d.get("num", 101)))


@dataclass(frozen=True)
class ProcessSpec:
    """Description of a stationary sequence of scalars, vectors or curves.

    Elements are vectors of length ``dim`` unless ``grid`` is given, in which
    case they are curves on that grid.  ``loc`` and ``scale`` parametrize the
    marginal (iid kinds) or innovation (``ar1``) law: Gaussian
    ``N(loc, scale**2)``, uniform on ``[loc - scale, loc + scale]``, or
    ``loc + scale * B(t)`` for Brownian motion.
    """

    kind: str
    seed: int
    dim: int = 1
    grid: Grid | None = None
    loc: float = 0.0
    scale: float = 1.0
    rho: float = 0.0
    innovation: str = "gaussian"
    operator: str = "diagonal"
    burn_in: int | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ConfigError(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must lie in [0, 2**64)")
        if self.grid is not None and not isinstance(self.grid, Grid):
            object.__setattr__(self, "grid", grid_from_dict(self.grid))
        if int(self.dim) < 1:
            raise ConfigError("dim must be a positive integer")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if kind == "brownian_motion" and self.grid is None:
            raise ConfigError("brownian_motion needs a grid")
        if kind == "ar1":
            if not -1 < self.rho < 1:
                raise ConfigError(f"ar1 needs |rho| < 1 for stationarity, got {self.rho}")
            if self.innovation not in INNOVATIONS:
                raise ConfigError(f"unknown innovation {self.innovation!r}; expected one of {INNOVATIONS}")
            if self.innovation == "brownian" and self.grid is None:
                raise ConfigError("brownian innovations need a grid")
            if self.operator not in ("diagonal", "smoothing"):
                raise ConfigError("operator must be 'diagonal' or 'smoothing'")
            if self.operator == "smoothing" and self.width < 3:
                raise ConfigError("the smoothing operator needs at least 3 coordinates")
        if self.burn_in is not None and int(self.burn_in) < 0:
            raise ConfigError("burn_in must be >= 0")

    @property
    def width(self) -> int:
        return len(self.grid) if self.grid is not None else int(self.dim)

    @property
    def effective_burn_in(self) -> int:
        if self.kind != "ar1":
            return 0
        return default_burn_in(self.rho) if self.burn_in is None else int(self.burn_in)

    @property
    def is_independent(self) -> bool:
        return self.kind != "ar1" or self.rho == 0

    @property
    def stationary_mean(self) -> float:
        """Mean of every coordinate of the stationary law."""
        if self.kind == "ar1":
            return self.loc / (1.0 - self.rho)
        return self.loc

    def with_seed(self, seed: int) -> "ProcessSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = None if self.grid is None else self.grid.to_dict()
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ProcessSpec":
        d = dict(d)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown process key(s): {sorted(unknown)}")
        if seed is not None:
            d["seed"] = seed
        if "seed" not in d:
            raise ConfigError("process spec needs a seed")
        if d.get("grid") is not None:
            d["grid"] = grid_from_dict(d["grid"])
        return cls(**d)


def smoothing_matrix(width: int) -> np.ndarray:
    """Symmetric, doubly stochastic tridiagonal smoother (spectral norm 1)."""
    s = np.zeros((width, width))
    idx = np.arange(width)
    s[idx, idx] = 0.5
    s[idx[:-1], idx[:-1] + 1] = 0.25
    s[idx[1:], idx[1:] - 1] = 0.25
    s[0, 0] = s[-1, -1] = 0.75
    return s


def _brownian(rng: np.random.Generator, rows: int, grid: Grid) -> np.ndarray:
    t = grid.points
    if t[0] < 0:
        raise ConfigError("Brownian paths need a grid on [0, inf)")
    dt = np.diff(np.concatenate([[0.0], t]))
    return np.cumsum(rng.standard_normal((rows, t.size)) * np.sqrt(dt), axis=1)


def _draw(rng: np.random.Generator, dist: str, rows: int, spec: ProcessSpec) -> np.ndarray:
    if dist == "gaussian":
        return spec.loc + spec.scale * rng.standard_normal((rows, spec.width))
    if dist == "uniform":
        return spec.loc + spec.scale * rng.uniform(-1.0, 1.0, (rows, spec.width))
    return spec.loc + spec.scale * _brownian(rng, rows, spec.grid)


def _innovation_dist(spec: ProcessSpec) -> str:
    return {"iid_gaussian": "gaussian", "iid_uniform": "uniform",
            "brownian_motion": "brownian"}.get(spec.kind, spec.innovation)


def _ar_filter(spec: ProcessSpec, alpha: np.ndarray) -> np.ndarray:
    """Run the recursion from a zero start over the rows of ``alpha``."""
    if spec.operator == "diagonal":
        return lfilter([1.0], [1.0, -spec.rho], alpha, axis=0)
    a = spec.rho * smoothing_matrix(spec.width)
    out = np.empty_like(alpha)
    prev = np.zeros(spec.width)
    for t in range(alpha.shape[0]):
        prev = a @ prev + alpha[t]
        out[t] = prev
    return out


def generate(spec: ProcessSpec, n: int, replication: int = 0, purpose: int = MAIN) -> np.ndarray:
    """Draw ``n`` consecutive elements; returns an array of shape ``(n, width)``."""
    if int(n) < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    n = int(n)
    rng = stream(spec.seed, replication, purpose)
    if spec.kind != "ar1":
        return _draw(rng, _innovation_dist(spec), n, spec)
    burn = spec.effective_burn_in
    alpha = _draw(rng, spec.innovation, burn + n, spec)
    return _ar_filter(spec, alpha)[burn:]


@dataclass
class CoupledPair:
    """Original path, its coupled copies and the replacement-driven path.

    ``prime`` and ``original_padded`` include the burn-in prefix (``offset``
    rows) so that lags reaching before the first observation are available.
    """

    original: np.ndarray
    coupled: dict[int, np.ndarray]
    prime_padded: np.ndarray
    original_padded: np.ndarray
    offset: int

    def lagged(self, which: str, m: int) -> np.ndarray:
        """Rows ``i - m`` for ``i = 1..n`` of the original or prime path."""
        arr = self.original_padded if which == "original" else self.prime_padded
        n = self.original.shape[0]
        return arr[self.offset - m:self.offset - m + n]


def generate_coupled(spec: ProcessSpec, n: int, m_list: Sequence[int], replication: int = 0) -> CoupledPair:
    """Original AR(1) path together with the coupled copies ``X^(m)``."""
    if spec.kind != "ar1":
        raise ConfigError("coupled copies are defined for ar1 processes only")
    m_list = [int(m) for m in m_list]
    if not m_list or min(m_list) < 1:
        raise ConfigError("every coupling lag m must be >= 1")
    n = int(n)
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    burn = max(spec.effective_burn_in, max(m_list))
    alpha = _draw(stream(spec.seed, replication, MAIN), spec.innovation, burn + n, spec)
    alpha_p = _draw(stream(spec.seed, replication, PRIME), spec.innovation, burn + n, spec)
    x = _ar_filter(spec, alpha)
    xp = _ar_filter(spec, alpha_p)

    if spec.operator == "diagonal":
        powers = lambda j: spec.rho**j  # noqa: E731
        apply = lambda p, v: p * v  # noqa: E731
    else:
        a = spec.rho * smoothing_matrix(spec.width)
        cache = {0: np.eye(spec.width)}

        def powers(j):
            if j not in cache:
                cache[j] = a @ powers(j - 1)
            return cache[j]

        def apply(p, v):
            return v @ p.T

    coupled = {}
    rows = np.arange(burn, burn + n)
    for m in m_list:
        # recent m innovations are shared, everything older comes from the prime path
        acc = apply(powers(m), xp[rows - m])
        for j in range(m):
            acc = acc + apply(powers(j), alpha[rows - j])
        coupled[m] = acc
    return CoupledPair(original=x[burn:], coupled=coupled, prime_padded=xp,
                       original_padded=x, offset=burn)


@dataclass(frozen=True)
class DecayEstimate:
    m: int
    gamma_hat: float
    norm_kind: str
    replications: int


def _element_distances(spec: ProcessSpec, a: np.ndarray, b: np.ndarray, metric: SemiMetric | None) -> np.ndarray:
    if metric is not None:
        return np.array([metric(u, v) for u, v in zip(a, b)])
    if spec.grid is not None:
        return batch_norms(a - b, spec.grid)
    return np.sqrt(np.sum((a - b) ** 2, axis=1))


def coupling_differences(spec: ProcessSpec, m: int, replications: int,
                         metric: SemiMetric | None = None) -> np.ndarray:
    """``|X_m - X_m^(m)|`` (norm or semi-metric) over independent replications."""
    out = np.empty(int(replications))
    for r in range(int(replications)):
        pair = generate_coupled(spec, m, [m], replication=r)
        out[r] = _element_distances(spec, pair.original[-1:], pair.coupled[m][-1:], metric)[0]
    return out


def estimate_gamma(spec: ProcessSpec, m: int, replications: int = 1000, norm_kind="l2",
                   metric: SemiMetric | None = None) -> DecayEstimate:
    """Monte Carlo estimate of the coupling error ``||X_m - X_m^(m)||``.

    ``norm_kind`` is ``"l2"`` (root mean square) or a :class:`PsiSpec`, in
    which case the Orlicz norm of the replicated differences is returned.
    With ``metric`` the semi-metric replaces the norm of the difference.
    """
    if int(replications) < 100:
        raise ConfigError("estimate_gamma needs at least 100 replications")
    diffs = coupling_differences(spec, m, replications, metric)
    if isinstance(norm_kind, PsiSpec):
        value = orlicz_norm(diffs, norm_kind).value
        label = str(norm_kind)
    elif norm_kind == "l2":
        value = float(np.sqrt(np.mean(diffs**2)))
        label = "l2"
    else:
        raise ConfigError(f"norm_kind must be 'l2' or a PsiSpec, got {norm_kind!r}")
    return DecayEstimate(int(m), value, label, int(replications))


def decay_slope(spec: ProcessSpec, ms: Sequence[int], replications: int = 1000, norm_kind="l2") -> float:
    """Least-squares slope of ``log gamma_hat(m)`` against ``m``."""
    gam = [estimate_gamma(spec, m, replications, norm_kind).gamma_hat for m in ms]
    return float(np.polyfit(np.asarray(ms, float), np.log(gam), 1)[0])


def noise_sequence(spec: ProcessSpec, n: int, target_space=None, replication: int = 0) -> np.ndarray:
    """Mean-zero noise: ``generate`` minus the closed-form stationary mean.

    ``target_space`` is a :class:`Grid` for curve-valued noise or ``None`` /
    ``"scalar"`` for scalar noise; it must match the spec.
    """
    if isinstance(target_space, Grid):
        if spec.grid is None or spec.grid != target_space:
            raise ConfigError("noise spec grid does not match the target space")
    elif target_space in (None, "scalar"):
        if spec.grid is not None or spec.dim != 1:
            if target_space == "scalar":
                raise ConfigError("scalar noise requested from a non-scalar spec")
    else:
        raise ConfigError(f"unsupported target space {target_space!r}")
    return generate(spec, n, replication) - spec.stationary_mean
