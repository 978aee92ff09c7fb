"""Command line front end: ``funreg {simulate,estimate,orlicz,smallball,ratebench}``.

Exit status is 0 on success, 1 for configuration errors, 2 for data errors
and 3 for numeric failures (for example an empty Nadaraya-Watson
neighborhood).  Randomized subcommands refuse to run without a seed.
Every written file is listed in exactly one ``*.manifest.json`` (or
``manifest.json`` for ``ratebench``), which is created before the
computation starts and finalized afterwards.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_file
from .curves import Grid, SemiMetric, fmt, fourier_basis, read_curves_csv, write_curves_csv
from .datagen import ProcessSpec, generate, generate_coupled
from .estimator import WeightScheme, compute_weights, estimate
from .exceptions import ConfigError, DataError, FunregError
from .orlicz import PsiSpec, orlicz_norm
from .ratebench import ExperimentConfig, result_manifest_fields, run_experiment, write_outputs
from .smallball import check_prop1, check_prop2, check_prop3, check_prop4, phi_estimate

OUT_DIR_ENV = "FUNREG_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class RunManifest:
    """Provenance record written next to the outputs of a run."""

    def __init__(self, path, subcommand: str, config: dict, seed):
        self.path = Path(path)
        self.data = {
            "subcommand": subcommand,
            "tool_version": __version__,
            "seed": seed,
            "config": _jsonable(config),
            "config_hash": config_hash(_jsonable(config)),
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": [],
        }
        self._write()

    def _write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    @contextmanager
    def guard(self):
        """Mark the manifest as failed if the wrapped computation raises."""
        try:
            yield self
        except FunregError as exc:
            self.finalize([], status="failed", error=str(exc))
            raise

    def finalize(self, outputs, status="ok", **extra):
        self.data["outputs"] = sorted(str(Path(p).name) for p in outputs)
        self.data["finished"] = _now()
        self.data["status"] = status
        self.data.update(_jsonable(extra))
        self._write()


def _require_seed(seed):
    if seed is None:
        raise ConfigError("--seed is mandatory; seeds are never generated automatically")
    if seed < 0:
        raise ConfigError("--seed must be nonnegative")
    return seed


def _load_process(path, seed) -> ProcessSpec:
    data = load_file(path)
    data.pop("seed", None)
    return ProcessSpec.from_dict(data, seed=seed)


def _element_abscissae(spec: ProcessSpec) -> np.ndarray:
    return spec.grid.points if spec.grid is not None else np.arange(spec.width, dtype=float)


def cmd_simulate(args) -> int:
    seed = _require_seed(args.seed)
    spec = _load_process(args.process, seed)
    out = Path(args.out)
    couple = [int(m) for m in args.couple.split(",")] if args.couple else []
    config = {"process": spec.to_dict(), "n": args.n, "couple": couple}
    manifest = RunManifest(out.with_suffix(".manifest.json"), "simulate", config, seed)
    t = _element_abscissae(spec)
    ids = [f"x{i + 1}" for i in range(args.n)]
    outputs = [out]
    with manifest.guard():
        if couple:
            pair = generate_coupled(spec, args.n, couple)
            write_curves_csv(out, t, pair.original, ids)
            for m in couple:
                path = out.with_name(f"{out.stem}_coupled_m{m}{out.suffix}")
                write_curves_csv(path, t, pair.coupled[m], ids)
                outputs.append(path)
        else:
            write_curves_csv(out, t, generate(spec, args.n), ids)
    manifest.finalize(outputs)
    return 0


def _metric_from_args(name: str, t: np.ndarray, dim) -> SemiMetric:
    if name == "euclidean":
        return SemiMetric.euclidean()
    grid = Grid(t)
    if name == "l2":
        return SemiMetric.l2(grid)
    if name == "projection":
        return SemiMetric.projection(grid, fourier_basis(grid, dim or min(5, len(grid))))
    raise ConfigError(f"unknown metric {name!r}")


def cmd_estimate(args) -> int:
    tx, _, x = read_curves_csv(args.x)
    td, _, xs = read_curves_csv(args.data)
    ty, _, ys = read_curves_csv(args.responses)
    if x.shape[0] != 1:
        raise DataError(f"{args.x} must hold exactly one curve, found {x.shape[0]}")
    if not np.array_equal(tx, td):
        raise DataError("target and covariates are on different grids")
    if xs.shape[0] != ys.shape[0]:
        raise DataError(f"{xs.shape[0]} covariates but {ys.shape[0]} responses")
    if args.scheme == "nw":
        if args.h is None:
            raise ConfigError("--h is required for the nw scheme")
        scheme = WeightScheme.nadaraya_watson(args.h, args.kernel)
    else:
        if args.k is None:
            raise ConfigError("--k is required for knn schemes")
        scheme = (WeightScheme.simple_knn(args.k) if args.scheme == "knn"
                  else WeightScheme.kernel_knn(args.k, args.kernel))
    metric = _metric_from_args(args.metric, td, args.dim)
    config = {"x": str(args.x), "data": str(args.data), "responses": str(args.responses),
              "scheme": args.scheme, "k": args.k, "h": args.h, "kernel": args.kernel,
              "metric": args.metric, "dim": args.dim}
    out = Path(args.out)
    manifest = RunManifest(out.with_suffix(".manifest.json"), "estimate", config, None)
    with manifest.guard():
        wv = compute_weights(scheme, xs, x[0], metric)
        r_hat = estimate(wv, ys)
        write_curves_csv(out, ty, r_hat[None, :], ["estimate"])
    st = wv.stats()
    manifest.finalize([out], radius=wv.radius, k_effective=wv.k_effective,
                      v_n1=st.v_n1, c_n2=st.c_n2, envelope_compliant=wv.envelope_compliant)
    return 0


def _read_samples(path) -> np.ndarray:
    vals = []
    try:
        with Path(path).open(newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip():
                    continue
                try:
                    vals.append(float(row[0]))
                except ValueError:
                    if vals:
                        raise DataError(f"{path}: non-numeric sample {row[0]!r}")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not vals:
        raise DataError(f"{path}: no samples")
    s = np.array(vals)
    if np.any(s < 0):
        raise DataError(f"{path}: samples must be nonnegative norms")
    return s


def cmd_orlicz(args) -> int:
    spec = PsiSpec(args.psi, args.p)
    est = orlicz_norm(_read_samples(args.input), spec, args.tol)
    print(json.dumps({"psi": args.psi, "p": args.p, "value": fmt(est.value),
                      "bracket": [fmt(est.bracket[0]), fmt(est.bracket[1])],
                      "tolerance": args.tol, "mc_samples": est.mc_samples,
                      "degenerate": est.degenerate}))
    return 0


def _parse_hgrid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(steps))
    except ValueError as exc:
        raise ConfigError(f"--hgrid must look like lo:hi:steps, got {text!r}") from exc
    return grid


def _target(arg, spec: ProcessSpec) -> np.ndarray:
    if arg in (None, "origin"):
        return np.zeros(spec.width)
    if Path(arg).is_file():
        _, _, vals = read_curves_csv(arg)
        x = vals[0]
    else:
        try:
            x = np.array([float(v) for v in arg.split(",")])
        except ValueError as exc:
            raise ConfigError(f"--x must be 'origin', a CSV file or comma-separated numbers") from exc
    if x.size != spec.width:
        raise DataError(f"target has {x.size} values, process elements have {spec.width}")
    return x


def cmd_smallball(args) -> int:
    seed = _require_seed(args.seed)
    spec = _load_process(args.process, seed)
    x = _target(args.x, spec)
    metric = _metric_from_args(args.metric, _element_abscissae(spec), args.dim)
    out = Path(args.out)
    config = {"process": spec.to_dict(), "x": x.tolist(), "metric": args.metric, "check": args.check,
              "n": args.n, "k": args.k, "H": args.H, "m": args.m, "reps": args.reps,
              "hgrid": args.hgrid}
    manifest = RunManifest(out.with_suffix(".manifest.json"), "smallball", config, seed)
    with manifest.guard():
        return _run_smallball(args, spec, x, metric, out, manifest)


def _run_smallball(args, spec, x, metric, out, manifest) -> int:
    if args.check == "phi":
        if not args.hgrid:
            raise ConfigError("--hgrid is required for --check phi")
        curve = phi_estimate(generate(spec, args.n), x, metric, _parse_hgrid(args.hgrid))
        with out.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "phi_hat"])
            for h, p in zip(curve.h_grid, curve.phi_hat):
                w.writerow([fmt(h), fmt(p)])
        manifest.finalize([out], rearranged=curve.rearranged)
        return 0
    if args.check in ("p1", "p2") and args.k is None:
        raise ConfigError(f"--k is required for --check {args.check}")
    if args.check in ("p3", "p4") and args.H is None:
        raise ConfigError(f"--H is required for --check {args.check}")
    if args.check == "p1":
        res = check_prop1(spec, x, metric, args.n, args.k, args.reps)
    elif args.check == "p2":
        res = check_prop2(spec, x, metric, args.n, args.k, args.reps, m=args.m)
    elif args.check == "p3":
        res = check_prop3(spec, x, metric, args.n, args.H, args.reps)
    else:
        res = check_prop4(spec, x, metric, args.n, args.H, args.reps, m=args.m)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "statistic", "violated"])
        for r, (s, v) in enumerate(zip(res.statistics, res.violated)):
            w.writerow([r, fmt(s), int(v)])
    manifest.finalize([out], result=res.summary())
    return 0


def cmd_ratebench(args) -> int:
    data = load_file(args.config)
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV)
    if not out_dir:
        raise ConfigError(f"--out-dir is required (or set {OUT_DIR_ENV})")
    cfg = ExperimentConfig.from_dict(data, seed=args.seed, workers=args.workers)
    out_dir = Path(out_dir)
    resolved = dict(cfg.raw)
    resolved.pop("workers", None)  # execution detail, not part of the experiment
    manifest = RunManifest(out_dir / "manifest.json", "ratebench", resolved, cfg.seed)
    with manifest.guard():
        result = run_experiment(cfg)
        files = write_outputs(result, out_dir)
    manifest.finalize(files, **result_manifest_fields(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="funreg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"funreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a covariate or noise sequence")
    s.add_argument("--process", required=True, help="process spec file (TOML or JSON)")
    s.add_argument("--n", type=int, required=True, help="sequence length")
    s.add_argument("--seed", type=int, help="master seed (mandatory)")
    s.add_argument("--out", required=True, help="output CSV (t column, one column per element)")
    s.add_argument("--couple", help="comma-separated coupling lags m1,m2,... (ar1 only)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate the regression curve at one target")
    e.add_argument("--x", required=True, help="CSV holding the target covariate")
    e.add_argument("--data", required=True, help="CSV of covariates")
    e.add_argument("--responses", required=True, help="CSV of response curves")
    e.add_argument("--scheme", choices=("knn", "kknn", "nw"), required=True,
                   help="simple k-NN, kernel k-NN or Nadaraya-Watson")
    e.add_argument("--k", type=int, help="number of neighbors (knn, kknn)")
    e.add_argument("--h", type=float, help="bandwidth (nw)")
    e.add_argument("--kernel", choices=("uniform", "triangle"), default="uniform")
    e.add_argument("--metric", choices=("l2", "euclidean", "projection"), default="l2")
    e.add_argument("--dim", type=int, help="projection dimension (projection metric)")
    e.add_argument("--out", required=True, help="output CSV for the estimated curve")
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("orlicz", help="Orlicz norm of nonnegative samples")
    o.add_argument("--psi", choices=("power", "exp"), required=True)
    o.add_argument("--p", type=float, default=1.0)
    o.add_argument("--input", required=True, help="CSV with samples in the first column")
    o.add_argument("--tol", type=float, default=1e-6, help="relative bisection tolerance")
    o.set_defaults(func=cmd_orlicz)

    b = sub.add_parser("smallball", help="small ball probabilities and concentration checks")
    b.add_argument("--process", required=True, help="process spec file (TOML or JSON)")
    b.add_argument("--x", default="origin", help="'origin', a curve CSV or comma-separated values")
    b.add_argument("--metric", choices=("l2", "euclidean", "projection"), default="euclidean")
    b.add_argument("--dim", type=int, help="projection dimension")
    b.add_argument("--hgrid", help="radius grid lo:hi:steps (check phi)")
    b.add_argument("--check", choices=("phi", "p1", "p2", "p3", "p4"), default="phi")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int)
    b.add_argument("--H", type=float)
    b.add_argument("--m", type=int, help="coupling lag for p2/p4")
    b.add_argument("--reps", type=int, default=200)
    b.add_argument("--seed", type=int, help="master seed (mandatory)")
    b.add_argument("--out", required=True, help="output CSV")
    b.set_defaults(func=cmd_smallball)

    r = sub.add_parser("ratebench", help="Monte Carlo convergence-rate experiment")
    r.add_argument("--config", required=True, help="experiment config (TOML or JSON)")
    r.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV})")
    r.add_argument("--seed", type=int, help="overrides the config seed")
    r.add_argument("--workers", type=int, help="process-pool size (outputs do not depend on it)")
    r.set_defaults(func=cmd_ratebench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FunregError as exc:
        print(f"funreg {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
