"""Command-line experiment driver.

    rkhspi run CONFIG
    rkhspi preset NAME [--out DIR] [--override key=value ...]
    rkhspi list-presets

Set ``RKHSPI_NUM_THREADS`` to cap the BLAS thread pool.
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .care import linearize, lqr_bounds, solve_care
from .config import PRESETS, ConfigError, load_config, parse_value, preset
from .exceptions import CAREError, DegenerateGramError, TrajectoryEscapeError, WellPosednessError
from .kernels import make_kernel
from .ocp import Psd, QuadraticBounds
from .problems import grid_2d, make_problem, sample_box, toy_problem
from .rkhs_pi import GreedyConfig, PIAbort, PIConfig, run_rkhs_pi

__all__ = ["main", "run_experiment", "build_problem"]

logger = logging.getLogger("rkhspi")

THREADS_ENV = "RKHSPI_NUM_THREADS"

GREEDY_COLUMNS = ("n_centers", "res_ghjb")
PI_COLUMNS = (
    "iter",
    "e_eta",
    "res_ghjb",
    "error_pi",
    "feasible",
    "worst_lower_violation",
    "worst_upper_violation",
    "rkhs_norm",
    "jitter_used",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_history(out, history):
    g = history.greedy
    _write_csv(out / "greedy.csv", GREEDY_COLUMNS, zip(g.n_centers, g.res_ghjb))
    rows = [
        (
            r.iter,
            r.e_eta,
            r.res_ghjb,
            r.error_pi,
            r.verification.feasible,
            r.verification.worst_lower_violation,
            r.verification.worst_upper_violation,
            r.rkhs_norm,
            r.jitter_used,
        )
        for r in history.records
    ]
    _write_csv(out / "pi.csv", PI_COLUMNS, rows)


def build_problem(cfg):
    p = cfg.problem
    if p.name == "toy":
        return toy_problem(p.initial_policy or "sin-product")
    if p.initial_policy is not None:
        raise ConfigError("problem.initial_policy only applies to the toy problem")
    return make_problem(p.name, p.n_nodes)


def _training_points(cfg, problem):
    t = cfg.train
    if t.kind == "grid":
        if problem.state_dim != 2:
            raise ConfigError("train.kind = grid needs a two-dimensional problem")
        (a1, a2), (b1, b2) = problem.domain
        if a1 != a2 or b1 != b2:
            raise ConfigError("train.kind = grid needs a square domain")
        return grid_2d(a1, b1, int(t.size))
    return sample_box(problem.domain, int(t.size), int(t.seed))


def _verification_mode(cfg, problem):
    v = cfg.verification
    if v.mode == "psd":
        return Psd()
    if v.mode == "bounds":
        return QuadraticBounds(float(v.alpha), float(v.beta))
    P = problem.metadata.get("P")
    if P is None:
        P = solve_care(linearize(problem))
    return QuadraticBounds(*lqr_bounds(P))


def run_experiment(cfg):
    """Run one configured experiment, writing its CSVs and manifest. Returns an exit status."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status, message = 0, "completed"
    manifest = {
        "config": cfg.to_mapping(),
        "library_version": _version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    history = None
    try:
        problem = build_problem(cfg)
        kernel = make_kernel(cfg.kernel.name, gamma=cfg.gamma)
        pool = _training_points(cfg, problem)
        test = sample_box(problem.domain, int(cfg.test.size), int(cfg.test.seed))
        gc = GreedyConfig(pool, int(cfg.greedy.max_centers), float(cfg.greedy.target_residual), int(cfg.greedy.batch))
        pc = PIConfig(
            epsilon=float(cfg.pi.epsilon),
            max_pi_iters=int(cfg.pi.max_iters),
            verification_mode=_verification_mode(cfg, problem),
            jitter=cfg.jitter_value,
            test_points=test if problem.exact_ovf is not None else None,
        )
        manifest["verification"] = repr(pc.verification_mode)
        s, history = run_rkhs_pi(problem, kernel, None, gc, pc)
        centers = s.functionals.points[s.functionals.is_grad]
        manifest.update(converged=history.converged, max_iters_hit=history.max_iters_hit)
    except PIAbort as exc:
        status, message = 1, f"solver abort: {exc}"
        history = exc.history
        centers = None
    except (CAREError, DegenerateGramError, WellPosednessError, TrajectoryEscapeError, np.linalg.LinAlgError) as exc:
        status, message = 1, f"solver abort: {exc}"
        centers = None
    if history is not None:
        _write_history(out, history)
        manifest["skipped_candidates"] = list(history.greedy.skipped)
    if centers is not None:
        N = centers.shape[1]
        _write_csv(out / "centers.csv", [f"x{i + 1}" for i in range(N)], centers.tolist())
    manifest.update(status=message, exit_code=status, wall_time_s=time.perf_counter() - start)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    if status:
        logger.error(message)
    else:
        logger.info("wrote results to %s", out)
    return status


def _version():
    try:
        return metadata.version("rkhspi")
    except metadata.PackageNotFoundError:
        return "unknown"


def _parse_override(text):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key=value, got {text!r}")
    return key.strip(), parse_value(value)


def _parser():
    ap = argparse.ArgumentParser(prog="rkhspi", description="RKHS policy iteration experiments")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config")
    pre = sub.add_parser("preset", help="run a named preset")
    pre.add_argument("name")
    pre.add_argument("--out", help="output directory")
    pre.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("list-presets", help="list preset names with their main settings")
    return ap


def _threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-presets":
        for name, cfg in PRESETS.items():
            n = f" n_nodes={cfg.problem.n_nodes}" if cfg.problem.n_nodes else ""
            print(f"{name:22s} problem={cfg.problem.name}{n} kernel={cfg.kernel.name} gamma={cfg.gamma:.6g}")
        return 0
    try:
        if args.command == "run":
            cfg = load_config(args.config)
        else:
            cfg = preset(args.name)
            overrides = dict(_parse_override(o) for o in args.override)
            if args.out:
                overrides["output_dir"] = args.out
            if overrides:
                cfg = cfg.with_overrides(overrides)
        threads = _threads()
    except ConfigError as exc:
        print(f"rkhspi: config error: {exc}", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=threads):
            return run_experiment(cfg)
    except ConfigError as exc:
        print(f"rkhspi: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
