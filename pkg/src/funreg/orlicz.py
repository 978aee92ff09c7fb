"""Orlicz norms estimated from samples, and the standard tail facts about them.

Two Young functions are supported: the power family ``x**p`` (whose norm is
the L^p norm) and the exponential family ``exp(x**p) - 1``.  Norms are found
by bisection on the scale ``C`` of the plug-in criterion
``mean(psi(s / C)) <= 1``, which is continuous and strictly decreasing in
``C`` whenever some sample is positive.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError, DataError, NormDivergenceError

DEFAULT_TOL = 1e-6
_MAX_EXPANSION = 2.0**60
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class PsiSpec:
    """Young function ``psi``: ``family`` is ``"power"`` or ``"exp"``."""

    family: str
    p: float = 1.0

    def __post_init__(self):
        if self.family == "exponential":
            object.__setattr__(self, "family", "exp")
        if self.family not in ("power", "exp"):
            raise ConfigError(f"unknown psi family {self.family!r}; use 'power' or 'exp'")
        if not (self.p >= 1 and math.isfinite(self.p)):
            raise ConfigError(f"psi exponent p must be a finite real >= 1, got {self.p}")
        xs = np.linspace(0.0, 2.0, 201)
        ys = self(xs)
        if ys[0] != 0 or np.any(np.diff(ys) <= 0) or np.any(np.diff(ys, 2) < -1e-9 * ys[-1]):
            raise ConfigError(f"{self} is not convex and strictly increasing on [0, inf)")

    @classmethod
    def power(cls, p: float) -> "PsiSpec":
        return cls("power", p)

    @classmethod
    def exponential(cls, p: float) -> "PsiSpec":
        return cls("exp", p)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "power":
            return x**self.p
        with np.errstate(over="ignore"):
            return np.expm1(x**self.p)

    def inverse_at_one(self) -> float:
        """The point where ``psi`` equals one."""
        if self.family == "power":
            return 1.0
        return _LOG2 ** (1.0 / self.p)

    def __str__(self) -> str:
        return f"psi_{self.family}(p={self.p:g})"


@dataclass(frozen=True)
class OrliczEstimate:
    value: float
    mc_samples: int
    bracket: tuple[float, float]
    tolerance: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


def psi_eval(spec: PsiSpec, x: float) -> float:
    if x < 0:
        raise DataError(f"psi is defined on [0, inf), got x={x}")
    return float(spec(x))


def _exceeds_one(samples: np.ndarray, spec: PsiSpec, c: float) -> bool:
    """Whether ``mean(psi(samples / c)) > 1``."""
    z = samples / c
    if spec.family == "power":
        with np.errstate(over="ignore"):
            return float(np.mean(z**spec.p)) > 1.0
    # exp(x^p) - 1 averaged: mean(exp(z^p)) > 2, decided in log space.
    logs = z**spec.p
    if logs.max() - math.log(logs.size) > _LOG2:
        return True
    return float(logsumexp(logs)) - math.log(logs.size) > _LOG2


def orlicz_norm(samples, spec: PsiSpec, tolerance: float = DEFAULT_TOL) -> OrliczEstimate:
    """Plug-in Orlicz norm of the nonnegative ``samples``.

    The returned bracket ``(lo, hi)`` contains the exact root of the plug-in
    criterion and satisfies ``hi - lo <= tolerance * max(1, value)``; the
    value is the bracket midpoint.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise DataError("orlicz_norm needs at least one sample")
    if not np.all(np.isfinite(s)):
        raise DataError("samples must be finite")
    if np.any(s < 0):
        raise DataError("samples must be nonnegative (pass the norms |X|)")
    if tolerance <= 0:
        raise ConfigError("tolerance must be positive")
    smax = float(s.max())
    if smax == 0.0:
        return OrliczEstimate(0.0, s.size, (0.0, 0.0), tolerance, degenerate=True)

    base = smax / spec.inverse_at_one()
    lo, hi = base * 1e-6, base * 1e6
    factor = 1.0
    while not _exceeds_one(s, spec, lo):
        lo /= 2.0
        factor *= 2.0
        if factor > _MAX_EXPANSION:
            raise NormDivergenceError("lower bracket expansion exceeded 2**60")
    factor = 1.0
    while not math.isfinite(hi) or _exceeds_one(s, spec, hi):
        if not math.isfinite(hi):
            raise NormDivergenceError("norm effectively infinite for this sample")
        hi *= 2.0
        factor *= 2.0
        if factor > _MAX_EXPANSION:
            raise NormDivergenceError("norm effectively infinite for this sample")

    # geometric steps while the bracket spans orders of magnitude
    while hi > 2.0 * lo:
        mid = math.sqrt(lo) * math.sqrt(hi)
        if _exceeds_one(s, spec, mid):
            lo = mid
        else:
            hi = mid
    while hi - lo > tolerance * max(1.0, hi):
        mid = lo + 0.5 * (hi - lo)
        if mid <= lo or mid >= hi:
            break
        if _exceeds_one(s, spec, mid):
            lo = mid
        else:
            hi = mid
    return OrliczEstimate(0.5 * (lo + hi), s.size, (lo, hi), tolerance)


def tail_bound(norm: float, spec: PsiSpec, x: float) -> float:
    """Upper bound ``min(1, 1/psi(x/norm))`` on ``P(|X| > x)``."""
    if norm <= 0:
        raise ConfigError("norm must be positive")
    if x < 0:
        raise ConfigError("x must be nonnegative")
    val = float(spec(x / norm))
    if val <= 1.0:
        return 1.0
    return 1.0 / val


def norm_bound_from_tail(K: float, C: float, p: float) -> float:
    """psi_p-norm bound for a variable with ``P(|X| > x) <= K exp(-C x^p)``."""
    if K <= 0 or C <= 0 or p < 1:
        raise ConfigError("need K > 0, C > 0 and p >= 1")
    return ((1.0 + K) / C) ** (1.0 / p)


def conditional_contraction_check(values, groups, spec: PsiSpec, tolerance: float = DEFAULT_TOL,
                                  labels=None) -> tuple[float, float]:
    """Norms of ``X`` and of its conditional mean given a finite partition.

    ``groups`` assigns each value to a cell of the partition.  ``labels``
    optionally lists every cell that must be present.  Returns
    ``(norm_X, norm_condE)``.
    """
    x = np.asarray(values, dtype=float).ravel()
    g = np.asarray(groups).ravel()
    if x.size != g.size:
        raise DataError(f"{x.size} values but {g.size} group labels")
    uniq, inverse, counts = np.unique(g, return_inverse=True, return_counts=True)
    if labels is not None:
        missing = set(labels) - set(uniq.tolist())
        if missing:
            raise DataError(f"empty group(s): {sorted(missing)}")
    if counts.min() < 30:
        warnings.warn("some group has fewer than 30 samples; the check is noisy", stacklevel=2)
    means = np.bincount(inverse, weights=x) / counts
    lo = np.full(uniq.size, np.inf)
    hi = np.full(uniq.size, -np.inf)
    np.minimum.at(lo, inverse, x)
    np.maximum.at(hi, inverse, x)
    # constant cells keep their value exactly (sum/count may round)
    means = np.where(lo == hi, lo, means)
    cond = means[inverse]
    norm_x = orlicz_norm(np.abs(x), spec, tolerance).value
    norm_c = orlicz_norm(np.abs(cond), spec, tolerance).value
    return norm_x, norm_c
