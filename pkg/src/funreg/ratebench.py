"""Monte Carlo convergence experiments for the local-weighting estimators.

An experiment draws ``(X_i, Y_i)`` with ``Y_i = r(X_i) + eps_i`` for a known
regression map ``r``, estimates ``r(x)`` at a fixed target for every sample
size in ``n_grid`` and replication, and records the Hilbert-norm error
together with the weight statistics.  Per-n medians are fitted on the
log-log scale to give an empirical rate.

Replication ``r`` at sample size ``n`` draws covariates and noise from seeds
derived from ``(seed, n, role)`` and replication index ``r``, so any worker
count produces the same numbers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import REQUIRED, apply_schema
from .curves import Grid, SemiMetric, batch_norms, fmt, fourier_basis
from .datagen import AUX, ProcessSpec, child_seed, estimate_gamma, generate, grid_from_dict, noise_sequence
from .estimator import WeightScheme, WeightVector, estimate, weight_stats, weights_from_distances
from .exceptions import ConfigError, DataError, NumericError
from .rules import Rule

LIPSCHITZ_PAIRS = 1000
COVARIATES, NOISE = 0, 1

SCHEMA = {
    "label": "",
    "seed": None,
    "n_grid": REQUIRED,
    "replications": 100,
    "workers": 1,
    "target": "origin",
    "covariates": {"*": None},
    "noise": None,
    "truth": {
        "kind": "distance",
        "amplitude": 1.0,
        "alpha": 1.0,
        "cap": 10.0,
        "center": "origin",
        "response_grid": {"start": 0.0, "stop": 1.0, "num": 21, "points": None},
    },
    "scheme": {
        "kind": "simple_knn",
        "k": None,
        "h": None,
        "kernel": "uniform",
        "constants": {"*": None},
    },
    "metric": {"kind": "euclidean", "dim": None},
    "checks": {"slope_range": None, "bias_bound": True},
}


def _element(value, width: int, what: str) -> np.ndarray:
    if isinstance(value, str):
        if value == "origin":
            return np.zeros(width)
        raise ConfigError(f"{what}: expected 'origin' or a list of {width} numbers")
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size != width:
        raise ConfigError(f"{what} has {arr.size} values, covariates have {width}")
    return arr


class RegressionTruth:
    """Known regression map ``r(x)(t) = g(d(x, center)) * shape(t)``.

    ``shape(t) = sqrt(2) sin(pi t)`` on the response interval.  For
    ``kind="distance"``, ``g(s) = amplitude * min(s, cap)**alpha``, which is
    Hölder with constant ``M = amplitude * ||shape||`` and exponent
    ``alpha`` whenever the semi-metric obeys the triangle inequality, and
    bounded by ``B = amplitude * cap**alpha * ||shape||``.  For
    ``kind="constant"``, ``g = amplitude``.
    """

    def __init__(self, kind: str, response_grid: Grid, metric: SemiMetric, center: np.ndarray,
                 amplitude: float = 1.0, alpha: float = 1.0, cap: float = 10.0):
        if kind not in ("distance", "constant"):
            raise ConfigError(f"unknown truth kind {kind!r}")
        if not 0 < alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not (cap > 0 and math.isfinite(cap)):
            raise ConfigError("cap must be positive and finite")
        self.kind = kind
        self.grid = response_grid
        self.metric = metric
        self.center = np.asarray(center, dtype=float)
        self.amplitude = float(amplitude)
        self.alpha = float(alpha)
        self.cap = float(cap)
        t = response_grid.points
        u = (t - t[0]) / (t[-1] - t[0])
        self.shape = np.sqrt(2.0) * np.sin(np.pi * u)
        shape_norm = float(batch_norms(self.shape, response_grid)[0])
        if kind == "constant":
            self.M = 1.0
            self.B = abs(self.amplitude) * shape_norm
        else:
            self.M = abs(self.amplitude) * shape_norm
            self.B = abs(self.amplitude) * self.cap**self.alpha * shape_norm

    def profile(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.kind == "constant":
            return np.full(xs.shape[0], self.amplitude)
        d = self.metric.distances(xs, self.center)
        return self.amplitude * np.minimum(d, self.cap) ** self.alpha

    def __call__(self, xs) -> np.ndarray:
        """Responses ``r(x)`` for each row of ``xs``, shape ``(n, len(grid))``."""
        return self.profile(xs)[:, None] * self.shape

    def verify_lipschitz(self, samples: np.ndarray, pairs: int = LIPSCHITZ_PAIRS) -> None:
        """Check ``||r(x) - r(x')|| <= M d(x, x')**alpha`` on consecutive pairs."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] < 2 * pairs:
            raise ConfigError(f"need {2 * pairs} samples to verify the Lipschitz bound")
        a, b = samples[0:2 * pairs:2], samples[1:2 * pairs:2]
        lhs = batch_norms(self(a) - self(b), self.grid)
        d = np.array([self.metric(u, v) for u, v in zip(a, b)])
        rhs = self.M * d**self.alpha
        bad = lhs > rhs * (1 + 1e-9) + 1e-12
        if np.any(bad):
            raise ConfigError(f"truth violates its declared Lipschitz bound on {int(bad.sum())} pairs")


@dataclass
class ExperimentConfig:
    covariates: ProcessSpec
    noise: ProcessSpec | None
    truth: RegressionTruth
    metric: SemiMetric
    scheme_kind: str
    kernel: str
    rule: Rule
    n_grid: list
    replications: int
    target: np.ndarray
    seed: int
    workers: int = 1
    slope_range: tuple | None = None
    check_bias_bound: bool = True
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, seed: int | None = None, workers: int | None = None) -> "ExperimentConfig":
        cfg = apply_schema(data, SCHEMA)
        if seed is not None:
            cfg["seed"] = int(seed)
        if cfg["seed"] is None:
            raise ConfigError("a seed is mandatory (config key 'seed' or --seed)")
        if workers is not None:
            cfg["workers"] = int(workers)
        seed = int(cfg["seed"])
        n_grid = [int(n) for n in cfg["n_grid"]]
        if len(n_grid) < 1 or any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
            raise ConfigError("n_grid must be a strictly increasing list of positive integers")
        if int(cfg["replications"]) < 1 or int(cfg["workers"]) < 1:
            raise ConfigError("replications and workers must be positive")

        cov = _process(cfg["covariates"], "covariates")
        noise = None if cfg["noise"] is None else _process(cfg["noise"], "noise")
        mcfg = cfg["metric"]
        if mcfg["kind"] == "euclidean":
            metric = SemiMetric.euclidean()
        elif mcfg["kind"] in ("l2", "projection"):
            if cov.grid is None:
                raise ConfigError(f"metric.kind={mcfg['kind']} needs curve-valued covariates")
            metric = (SemiMetric.l2(cov.grid) if mcfg["kind"] == "l2"
                      else SemiMetric.projection(cov.grid, fourier_basis(cov.grid, int(mcfg["dim"] or 5))))
        else:
            raise ConfigError(f"unknown metric.kind {mcfg['kind']!r}")

        tcfg = cfg["truth"]
        rgrid = grid_from_dict(tcfg["response_grid"])
        truth = RegressionTruth(tcfg["kind"], rgrid, metric,
                                _element(tcfg["center"], cov.width, "truth.center"),
                                tcfg["amplitude"], tcfg["alpha"], tcfg["cap"])
        if noise is not None and noise.grid is not None and noise.grid != rgrid:
            raise ConfigError("noise grid must equal the truth response grid")
        if noise is not None and noise.grid is None and noise.dim != 1:
            raise ConfigError("vector-valued noise is not supported; use scalar or curve noise")

        scfg = cfg["scheme"]
        kind = scfg["kind"]
        if kind not in ("simple_knn", "kernel_knn", "nadaraya_watson"):
            raise ConfigError(f"unknown scheme.kind {kind!r}")
        key = "h" if kind == "nadaraya_watson" else "k"
        if scfg[key] is None:
            raise ConfigError(f"scheme.{key} rule is required for {kind}")
        rule = Rule(scfg[key], scfg["constants"])
        WeightScheme(kind, k=1, h=1.0, kernel=scfg["kernel"])

        if isinstance(cfg["target"], str) and cfg["target"] == "center":
            target = truth.center.copy()
        else:
            target = _element(cfg["target"], cov.width, "target")
        sr = cfg["checks"]["slope_range"]
        if sr is not None and (len(sr) != 2 or sr[0] > sr[1]):
            raise ConfigError("checks.slope_range must be [low, high]")

        cfg["seed"] = seed
        cfg["n_grid"] = n_grid
        out = cls(cov, noise, truth, metric, kind, scfg["kernel"], rule, n_grid,
                  int(cfg["replications"]), target, seed, int(cfg["workers"]),
                  None if sr is None else (float(sr[0]), float(sr[1])),
                  bool(cfg["checks"]["bias_bound"]), cfg)
        out.verify_truth()
        return out

    def verify_truth(self) -> None:
        sample = generate(self.covariates.with_seed(child_seed(self.seed, 0, COVARIATES)),
                          2 * LIPSCHITZ_PAIRS, purpose=AUX)
        self.truth.verify_lipschitz(sample)

    def scheme_at(self, n: int) -> WeightScheme:
        value = self.rule(n)
        if self.scheme_kind == "nadaraya_watson":
            return WeightScheme.nadaraya_watson(float(value), self.kernel)
        k = int(value)
        if not 1 <= k <= n:
            raise ConfigError(f"rule {self.rule.text!r} gives k={k} outside [1, {n}]")
        return WeightScheme(self.scheme_kind, k=k, kernel=self.kernel)

    def covariate_spec(self, n: int) -> ProcessSpec:
        return self.covariates.with_seed(child_seed(self.seed, n, COVARIATES))

    def noise_spec(self, n: int) -> ProcessSpec | None:
        return None if self.noise is None else self.noise.with_seed(child_seed(self.seed, n, NOISE))


def _process(d: dict, section: str) -> ProcessSpec:
    d = dict(d)
    d.setdefault("seed", 0)
    try:
        return ProcessSpec.from_dict(d)
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


@dataclass(frozen=True)
class Replicate:
    n: int
    replication: int
    error: float
    H: float
    k_eff: int
    v_n1: float
    c_n2: float
    b_n: float
    bias_bound: float
    status: str = "ok"


def _noise_curves(spec: ProcessSpec, n: int, truth: RegressionTruth, replication: int) -> np.ndarray:
    if spec.grid is not None:
        return noise_sequence(spec, n, truth.grid, replication)
    return noise_sequence(spec, n, "scalar", replication) * truth.shape


def run_replicate(config: ExperimentConfig, n: int, replication: int) -> Replicate:
    scheme = config.scheme_at(n)
    xs = generate(config.covariate_spec(n), n, replication)
    d = config.metric.distances(xs, config.target)
    try:
        wv = weights_from_distances(scheme, d)
    except NumericError as exc:
        nan = float("nan")
        status = "empty_neighborhood" if "empty neighborhood" in str(exc) else "numeric_error"
        return Replicate(n, replication, nan, nan, 0, nan, nan, nan, nan, status)
    idx = np.flatnonzero(wv.weights)
    ys = config.truth(xs[idx])
    nspec = config.noise_spec(n)
    if nspec is not None:
        ys = ys + _noise_curves(nspec, n, config.truth, replication)[idx]
    r_hat = estimate(wv.weights[idx], ys)
    r_x = config.truth(config.target[None, :])[0]
    err = float(batch_norms(r_hat - r_x, config.truth.grid)[0])
    k_stat = scheme.k if scheme.k is not None else max(wv.k_effective, 1)
    st = weight_stats(wv, min(k_stat, n))
    bound = config.truth.M * wv.radius**config.truth.alpha + 2 * config.truth.B * st.b_n
    return Replicate(n, replication, err, wv.radius, wv.k_effective, st.v_n1, st.c_n2, st.b_n, bound)


def _replicate_star(args):
    return run_replicate(*args)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_slope(ns, errors) -> SlopeFit:
    """Ordinary least squares of ``log error`` on ``log n``.

    ``residual`` is the residual sum of squares on the log scale.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size != errors.size:
        raise DataError("ns and errors differ in length")
    if ns.size < 3:
        raise DataError("need at least 3 points to fit a slope")
    if np.unique(ns).size != ns.size:
        raise DataError("sample sizes must be distinct")
    if np.any(ns <= 0) or np.any(~(errors > 0)):
        raise DataError("sample sizes and errors must be positive")
    x, y = np.log(ns), np.log(errors)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    res = float(np.sum((y - intercept - slope * x) ** 2))
    return SlopeFit(slope, intercept, res)


@dataclass
class ExperimentResult:
    config: ExperimentConfig = field(repr=False)
    replicates: list
    summary: list
    slope: SlopeFit | None
    gamma_1: float | None
    properties: dict

    @property
    def failures(self) -> int:
        return sum(r.status != "ok" for r in self.replicates)

    def errors(self, n: int) -> np.ndarray:
        return np.array([r.error for r in self.replicates if r.n == n])

    def medians(self) -> np.ndarray:
        return np.array([s["median"] for s in self.summary])


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run every (n, replication) cell and summarize.

    Estimator failures (e.g. an empty Nadaraya-Watson neighborhood) are kept
    as replicates with a non-``ok`` status and counted in the properties.
    """
    workers = config.workers if workers is None else int(workers)
    tasks = [(config, n, r) for n in config.n_grid for r in range(config.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_replicate_star, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        reps = [_replicate_star(t) for t in tasks]

    summary = []
    for n in config.n_grid:
        rows = [r for r in reps if r.n == n and r.status == "ok"]
        errs = np.array([r.error for r in rows])
        c_n2 = float(np.median([r.c_n2 for r in rows])) if rows else float("nan")
        m = math.ceil(math.log(n))
        summary.append({
            "n": n,
            "median": float(np.median(errs)) if rows else float("nan"),
            "q90": float(np.quantile(errs, 0.9)) if rows else float("nan"),
            "failures": config.replications - len(rows),
            "median_H": float(np.median([r.H for r in rows])) if rows else float("nan"),
            "median_k_eff": float(np.median([r.k_eff for r in rows])) if rows else float("nan"),
            "median_c_n2": c_n2,
            "dependent_rate_term": math.log(n) ** 2 * m * c_n2,
        })

    medians = np.array([s["median"] for s in summary])
    slope = None
    if len(medians) >= 3 and np.all(medians > 0):
        slope = fit_slope(config.n_grid, medians)

    gamma_1 = None
    nspec = config.noise
    if nspec is not None and not nspec.is_independent:
        gamma_1 = estimate_gamma(nspec.with_seed(child_seed(config.seed, 0, NOISE)), 1, 1000).gamma_hat

    props = {"no_estimator_failures": all(r.status == "ok" for r in reps)}
    if len(medians) >= 2:
        props["median_strictly_decreasing"] = bool(np.all(np.diff(medians) < 0))
    if config.slope_range is not None:
        lo, hi = config.slope_range
        props["slope_in_range"] = slope is not None and lo <= slope.slope <= hi
    if config.noise is None and config.check_bias_bound:
        props["bias_bound_holds"] = all(
            r.error <= r.bias_bound * (1 + 1e-12) + 1e-14 for r in reps if r.status == "ok")
    return ExperimentResult(config, reps, summary, slope, gamma_1, props)


@dataclass(frozen=True)
class VarianceDiagnostic:
    mean_Sn_norm: float
    c_n2: float
    v_n1: float
    gamma_1: float
    ratio: float


def variance_diagnostic(weights, noise: ProcessSpec, replications: int = 1000,
                        grid: Grid | None = None, gamma_replications: int = 1000) -> VarianceDiagnostic:
    """Monte Carlo ``E||sum_i W_i eps_i||`` against ``c_n2 + sqrt(gamma_1 v_n1)``.

    ``gamma_1`` is the L2 coupling error at lag 1 (zero for independent
    noise).  The noise must be scalar or live on ``grid``.
    """
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    n = w.size
    idx = np.flatnonzero(w)
    target = noise.grid if noise.grid is not None else "scalar"
    if grid is not None and noise.grid != grid:
        raise ConfigError("noise grid does not match the requested grid")
    norms = np.empty(int(replications))
    for r in range(int(replications)):
        eps = noise_sequence(noise, n, target, replication=r)
        s = w[idx] @ eps[idx]
        norms[r] = (batch_norms(s, noise.grid)[0] if noise.grid is not None
                    else float(np.sqrt(np.sum(s * s))))
    st = weight_stats(w, 1)
    gamma_1 = 0.0 if noise.is_independent else estimate_gamma(noise, 1, gamma_replications).gamma_hat
    mean = float(norms.mean())
    return VarianceDiagnostic(mean, st.c_n2, st.v_n1, gamma_1,
                              mean / (st.c_n2 + math.sqrt(gamma_1 * st.v_n1)))


RAW_COLUMNS = ("n", "replication", "error", "H", "k_eff", "v_n1", "c_n2", "b_n", "bias_bound", "status")
SUMMARY_COLUMNS = ("n", "median", "q90", "failures", "median_H", "median_k_eff",
                   "median_c_n2", "dependent_rate_term")


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(v)


def write_outputs(result: ExperimentResult, out_dir) -> list[Path]:
    """Write ``raw.csv`` and ``summary.csv``; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw, summ = out_dir / "raw.csv", out_dir / "summary.csv"
    with raw.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for r in result.replicates:
            w.writerow([_cell(getattr(r, c)) for c in RAW_COLUMNS])
    with summ.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in result.summary:
            w.writerow([_cell(s[c]) for c in SUMMARY_COLUMNS])
    return [raw, summ]


def result_manifest_fields(result: ExperimentResult) -> dict:
    s = result.slope
    return {
        "slope": None if s is None else {"slope": s.slope, "intercept": s.intercept, "residual": s.residual},
        "gamma_1": result.gamma_1,
        "rule": result.config.rule.text,
        "properties": result.properties,
        "failures": result.failures,
    }


__all__ = [
    "ExperimentConfig", "ExperimentResult", "RegressionTruth", "Replicate", "SlopeFit",
    "VarianceDiagnostic", "fit_slope", "run_experiment", "run_replicate", "variance_diagnostic",
    "write_outputs",
]
