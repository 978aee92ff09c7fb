"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` (or ``-rA``); the
verdict lines are also repeated in the terminal summary of any pytest run.
"""
import copy
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from funreg.cli import main
from funreg.config import load_file
from funreg.curves import Grid, SemiMetric
from funreg.datagen import ProcessSpec, decay_slope, estimate_gamma, generate_coupled
from funreg.estimator import WeightScheme, estimate, weight_stats, weights_from_distances
from funreg.orlicz import PsiSpec, conditional_contraction_check, orlicz_norm, tail_bound
from funreg.ratebench import ExperimentConfig, run_experiment, variance_diagnostic, write_outputs
from funreg.smallball import check_prop1, check_prop2, check_prop3, check_prop4

import oracles

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance_ratebench.toml"
TOL = 1e-6
N_GRID = [250, 500, 1000, 2000, 4000]


@pytest.fixture(scope="module")
def base_config():
    return load_file(CONFIG)


def test_c1_orlicz_exactness(verdict):
    t0 = time.perf_counter()
    draws = np.random.default_rng(20240611).exponential(size=100_000)
    value = orlicz_norm(draws, PsiSpec.exponential(1), TOL).value
    const = orlicz_norm(np.full(100, 3.0), PsiSpec.power(2), TOL).value
    const_ok = abs(const - 3.0) <= 2 * TOL * 3.0
    base = orlicz_norm(draws, PsiSpec.exponential(1), TOL).value
    scale_err = max(abs(orlicz_norm(lam * draws, PsiSpec.exponential(1), TOL).value - lam * base)
                    / max(1.0, lam * base) for lam in (0.5, 2.0, 10.0))
    elapsed = time.perf_counter() - t0
    ok = abs(value - 2.0) <= 0.05 and const_ok and scale_err <= 2 * TOL and elapsed < 5
    verdict("C1 Orlicz exactness", ok,
            f"psi1 norm {value:.5f} (2 +/- 0.05), constant {const:.8f}, "
            f"max relative scaling error {scale_err:.2e}, {elapsed:.2f}s < 5s")
    assert ok


def test_c2_orlicz_tail_and_contraction(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    draws = rng.exponential(size=100_000)
    norm = orlicz_norm(draws, PsiSpec.exponential(1)).value
    n = draws.size
    worst = -np.inf
    for x in np.arange(0.5, 8.01, 0.5):
        p = np.mean(draws > x)
        se = math.sqrt(max(p * (1 - p), 1 / n) / n)
        worst = max(worst, p - tail_bound(norm, PsiSpec.exponential(1), x) - 3 * se)
    tails_ok = worst <= 0
    designs = []
    signed = rng.choice([-1.0, 1.0], size=n) * draws
    gauss = rng.standard_normal(n)
    for name, x in (("exponential", signed), ("gaussian", gauss)):
        for spec in (PsiSpec.power(2), PsiSpec.exponential(1)):
            nx, nc = conditional_contraction_check(x, x > 0, spec)
            designs.append(nc <= nx + TOL * max(1.0, nx))
    power_ok = all(
        orlicz_norm(draws**p, PsiSpec.power(2), TOL).value
        <= orlicz_norm(draws, PsiSpec.power(2 * p), TOL).value ** p * (1 + 2 * p * TOL) + TOL
        for p in (1.0, 1.5, 2.0))
    elapsed = time.perf_counter() - t0
    ok = tails_ok and all(designs) and power_ok and elapsed < 30
    verdict("C2 Orlicz tail and contraction suite", ok,
            f"tail slack worst {worst:.2e} <= 0, contraction {sum(designs)}/{len(designs)} designs, "
            f"power rule {'ok' if power_ok else 'violated'}, {elapsed:.2f}s < 30s")
    assert ok


def test_c3_coupling(verdict):
    t0 = time.perf_counter()
    spec = ProcessSpec("ar1", seed=20240611, rho=0.5)
    ident = max(
        np.max(np.abs((p.original - p.coupled[m]) - 0.5**m * (p.lagged("original", m) - p.lagged("prime", m))))
        for m in range(1, 7) for p in [generate_coupled(spec, 1000, [m])])
    gamma1 = math.sqrt(8 / 3)
    rel = [abs(estimate_gamma(spec, m, 10_000).gamma_hat / (0.5**m * gamma1) - 1) for m in range(1, 7)]
    slope = decay_slope(spec, range(1, 9), 10_000)
    elapsed = time.perf_counter() - t0
    ok = ident <= 1e-12 and max(rel) <= 0.10 and abs(slope - math.log(0.5)) <= 0.07 and elapsed < 60
    verdict("C3 Coupling identity", ok,
            f"identity residual {ident:.1e} <= 1e-12, gamma max rel error {max(rel):.3f} <= 0.10, "
            f"decay slope {slope:.4f} (-0.693 +/- 0.07), {elapsed:.1f}s < 60s")
    assert ok


def test_c4_estimator_oracles(verdict):
    rng = np.random.default_rng(4)
    bad = {"rank": 0, "radius": 0, "weights": 0, "estimate": 0, "equivalence": 0}
    for trial in range(1000):
        n = int(rng.integers(1, 51))
        if trial % 2:
            d = rng.integers(0, 8, n) / 7.0  # ties
        else:
            d = rng.permutation(n) * 0.1 + rng.uniform(0, 0.05)
        k = int(rng.integers(1, n + 1))
        ranks = list(weights_from_distances(WeightScheme.simple_knn(k), d).ranks)
        bad["rank"] += ranks != oracles.ranks(list(d))
        H = oracles.radius(list(d), k)
        kk = weights_from_distances(WeightScheme.kernel_knn(k), d)
        bad["radius"] += kk.radius != H
        w = weights_from_distances(WeightScheme.simple_knn(k), d).weights
        err_w = max(np.max(np.abs(w - oracles.simple_knn_weights(list(d), k))),
                    np.max(np.abs(kk.weights - oracles.kernel_weights(list(d), H, "uniform"))))
        bad["weights"] += err_w > 1e-12
        ys = rng.normal(size=(n, 6))
        bad["estimate"] += np.max(np.abs(estimate(kk, ys) - oracles.weighted_sum(list(kk.weights), ys.tolist()))) > 1e-12
        if trial % 2 == 0:
            bad["equivalence"] += np.max(np.abs(kk.weights - w)) > 1e-12
    ok = not any(bad.values())
    verdict("C4 Estimator oracles", ok,
            "mismatches over 1000 instances: " + ", ".join(f"{k}={v}" for k, v in bad.items()))
    assert ok


def test_c5_bias_bound_noiseless(verdict, base_config):
    details, ok = [], True
    for scheme in ({"kind": "simple_knn", "k": "ceil(n^(2/3))"},
                   {"kind": "kernel_knn", "k": "ceil(n^(2/3))", "kernel": "triangle"}):
        raw = copy.deepcopy(base_config)
        raw.update(n_grid=[1000], replications=200, noise=None, scheme=scheme)
        raw["checks"] = {"bias_bound": True}
        cfg = ExperimentConfig.from_dict(raw)
        res = run_experiment(cfg)
        viol = sum(r.error > r.bias_bound * (1 + 1e-12) for r in res.replicates)
        ok &= viol == 0 and len(res.replicates) == 200
        details.append(f"{scheme['kind']}: {viol} violations / {len(res.replicates)}")
    verdict("C5 Bias bound", ok, "; ".join(details) + " (n=1000)")
    assert ok


@pytest.fixture(scope="module")
def rate_runs(base_config, tmp_path_factory):
    cfg = ExperimentConfig.from_dict(base_config)
    out = {}
    for workers in (1, 4):
        t0 = time.perf_counter()
        res = run_experiment(cfg, workers=workers)
        elapsed = time.perf_counter() - t0
        files = write_outputs(res, tmp_path_factory.mktemp(f"w{workers}"))
        out[workers] = (res, elapsed, [f.read_bytes() for f in files])
    return out


def test_c6_knn_rate(verdict, rate_runs):
    res, t1, bytes1 = rate_runs[1]
    _, t4, bytes4 = rate_runs[4]
    med = res.medians()
    decreasing = bool(np.all(np.diff(med) < 0))
    slope = res.slope.slope
    identical = bytes1 == bytes4
    ok = (res.config.n_grid == N_GRID and res.config.replications == 100 and decreasing
          and -0.6 <= slope <= -0.1 and t1 < 600 and t4 < 180 and identical and res.failures == 0)
    verdict("C6 k-NN rate", ok,
            f"medians {np.array2string(med, precision=4)} strictly decreasing={decreasing}, "
            f"slope {slope:.4f} in [-0.6, -0.1], {t1:.1f}s serial < 600s, {t4:.1f}s 4 workers < 180s, "
            f"identical outputs={identical}")
    assert ok


def test_c7_radius_and_count_checks(verdict):
    n, reps = 2000, 200
    gauss = ProcessSpec("iid_gaussian", seed=20240611, dim=2)
    euc = SemiMetric.euclidean()
    x = np.zeros(2)
    p1 = check_prop1(gauss, x, euc, n, math.ceil(n**0.6), reps)
    H = math.sqrt(-2 * math.log(1 - 60 * math.log(n) / n))  # n phi(H) = 60 log n
    p3 = check_prop3(gauss, x, euc, n, H, reps)
    ar0 = ProcessSpec("ar1", seed=20240611, rho=0.0)
    m = math.ceil(math.log(n))
    a1 = check_prop1(ar0, np.zeros(1), euc, n, math.ceil(n**0.6), reps)
    a2 = check_prop2(ar0, np.zeros(1), euc, n, math.ceil(n**0.6), reps, m=m)
    a3 = check_prop3(ar0, np.zeros(1), euc, n, 0.5, reps)
    a4 = check_prop4(ar0, np.zeros(1), euc, n, 0.5, reps, m=m)
    same = (np.array_equal(a1.statistics, a2.statistics) and a1.violation_fraction == a2.violation_fraction
            and np.array_equal(a3.statistics, a4.statistics) and a3.violation_fraction == a4.violation_fraction)
    ok = p1.passed is True and p3.passed is True and same
    verdict("C7 radius and count checks", ok,
            f"P1 violations {p1.violation_fraction:.3f} <= 0.05, P3 violations {p3.violation_fraction:.3f} <= 0.05 "
            f"({reps} reps), rho=0 dependent checks identical={same}")
    assert ok


def test_c8_variance_diagnostic(verdict):
    iid = ProcessSpec("iid_gaussian", seed=20240611)
    target = math.sqrt(2 / math.pi)
    scaled = []
    for k in (10, 40, 160):
        w = weights_from_distances(WeightScheme.simple_knn(k), np.arange(400, dtype=float))
        diag = variance_diagnostic(w, iid, 1000)
        scaled.append(diag.mean_Sn_norm / diag.c_n2 / target)
    ar = ProcessSpec("ar1", seed=20240611, rho=0.5)
    ratios = []
    for n in N_GRID:
        w = weights_from_distances(WeightScheme.simple_knn(math.ceil(n ** (2 / 3))), np.arange(n, dtype=float))
        ratios.append(variance_diagnostic(w, ar, 1000).ratio)
    spread = max(ratios) / min(ratios)
    ok = all(0.5 <= s <= 1.5 for s in scaled) and spread <= 3
    verdict("C8 variance diagnostic", ok,
            f"iid (mean|S|/c_n2)/sqrt(2/pi) = {', '.join(f'{s:.3f}' for s in scaled)} in [0.5, 1.5]; "
            f"ar1 ratio max/min {spread:.3f} <= 3")
    assert ok


def test_c9_regime_separation(verdict, base_config, rate_runs):
    fractal = rate_runs[1][0].slope.slope
    raw = copy.deepcopy(base_config)
    raw["covariates"] = {"kind": "brownian_motion", "grid": {"start": 0.0, "stop": 1.0, "num": 51}}
    raw["metric"] = {"kind": "l2"}
    raw["checks"] = {"slope_range": None, "bias_bound": True}
    brownian = run_experiment(ExperimentConfig.from_dict(raw)).slope.slope
    ok = brownian > fractal
    verdict("C9 Regime separation", ok, f"Brownian slope {brownian:.4f} > d=2 slope {fractal:.4f}")
    assert ok


def test_c10_reproducibility(verdict, tmp_path, rate_runs):
    runs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / name
        code = main(["ratebench", "--config", str(CONFIG), "--out-dir", str(out), "--workers", workers])
        runs.append((code, [(out / f).read_bytes() for f in ("raw.csv", "summary.csv")]))
    codes_ok = all(c == 0 for c, _ in runs)
    same_seed = runs[0][1] == runs[1][1]
    any_workers = runs[0][1] == runs[2][1] == rate_runs[1][2]
    ok = codes_ok and same_seed and any_workers
    verdict("C10 Reproducibility", ok,
            f"repeat run byte-identical={same_seed}, workers 1 vs 4 byte-identical={any_workers}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
