"""Command-line interface: synthesize scenes, fit plane sets, run sweeps.

Exit codes: 0 on success, 1 on input/validation problems, 2 when a fit
terminates without a solution (no admissible cluster assignment, or no
hypothesis satisfying the constraints).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DEFAULT_DISTANCE_THRESHOLD, clustered_ransac, iterative_ransac
from .bench import (
    BENCH_BASELINE,
    METHODS,
    constraint_error,
    label_groups,
    results_csv,
    run_experiment,
    summary_csv,
)
from .geometry import DegenerateInput, as_unit
from .mcransac import McRansacConfig, NoSatisfyingFit, restrict_constraints, run_mcransac
from .normals import NormalEstimationConfig, estimate_normals
from .pcc import (
    NoSolution,
    PccConfig,
    read_constraint_matrix,
    run_pcc,
    solution_groups,
    write_constraint_matrix,
)
from .synth import (
    NoiseSpec,
    builtin_objects,
    generate_view,
    get_object,
    read_cloud,
    turntable_view,
    write_cloud,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NO_FIT = 2


class CliError(Exception):
    """Input or validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we reserve 2 for fit failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _read_config(path: str) -> dict[str, str]:
    """key=value file, one per line; '#' comments and blank lines ignored."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _default_seed() -> int:
    env = os.environ.get("MME_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise CliError(f"MME_SEED must be an integer, got {env!r}") from exc


def _apply_config(args, parser_defaults: dict, casts: dict):
    """Layer precedence: explicit flags > config file entries > defaults."""
    if not getattr(args, "config", None):
        return
    values = _read_config(args.config)
    for key, raw in values.items():
        if key not in casts:
            raise CliError(f"unknown config key {key!r}")
        if getattr(args, key) != parser_defaults[key]:
            continue  # flag given explicitly wins
        try:
            setattr(args, key, casts[key](raw))
        except ValueError as exc:
            raise CliError(f"config key {key}={raw!r}: {exc}") from exc


def _cmd_synth(args) -> int:
    obj = get_object(args.object)
    view = turntable_view(obj, args.view)
    cloud = generate_view(obj, view, noise=NoiseSpec(0.0, args.sigma), rng_seed=args.seed)
    out = Path(args.output)
    write_cloud(out, cloud, comments=(
        f"object={obj.name} view={view.view_index} azimuth={view.azimuth_deg:.9g} "
        f"elevation={view.elevation_deg:.9g} sigma={args.sigma:.9g} seed={args.seed}",))
    write_constraint_matrix(out.with_suffix(".constraints"), obj.model_matrix)
    print(f"wrote {len(cloud)} points to {out} "
          f"({out.with_suffix('.constraints').name} alongside)")
    return EXIT_OK


def _load_cloud(path: str):
    try:
        return read_cloud(path)
    except OSError as exc:
        raise CliError(f"cannot read cloud {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_constraints(path: str):
    try:
        return read_constraint_matrix(path)
    except OSError as exc:
        raise CliError(f"cannot read constraints {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _print_fit(planes, gamma: float, rho: float, inlier_count: int, total: int):
    print(f"planes={len(planes)} gamma={gamma:.6f} rho={rho:.6f} "
          f"inliers={inlier_count}/{total}")
    for i, p in enumerate(planes):
        n = p.normal
        print(f"# plane {i}: normal=({n[0]:.9g},{n[1]:.9g},{n[2]:.9g}) "
              f"offset={p.offset:.9g} inliers={p.inliers.shape[0]}")


def _cmd_fit(args) -> int:
    cloud = _load_cloud(args.cloud)
    constraints = _load_constraints(args.constraints)
    seed = args.seed

    if args.method == "mme":
        cloud = estimate_normals(cloud, NormalEstimationConfig(k_neighbors=args.k_neighbors))
        try:
            solution, clustering = run_pcc(
                cloud, constraints,
                PccConfig(constraint_tolerance_deg=args.pcc_tolerance, rng_seed=seed))
        except NoSolution as exc:
            print(f"no admissible assignment: {exc}", file=sys.stderr)
            return EXIT_NO_FIT
        groups = solution_groups(solution, clustering)
        sub = restrict_constraints(constraints, solution)
        refs = np.array([as_unit(cloud.normals[g].mean(axis=0)) for g in groups])
        cfg = McRansacConfig(iterations=args.iterations, sample_size=args.sample_size,
                             constraint_tolerance_deg=args.tolerance, rng_seed=seed)
        try:
            fit = run_mcransac(groups, cloud, sub, cfg, reference_directions=refs)
        except NoSatisfyingFit as exc:
            print(f"no constraint-satisfying fit: {exc}", file=sys.stderr)
            return EXIT_NO_FIT
        gamma, rho = constraint_error(fit.planes, sub, refs)
        _print_fit(fit.planes, gamma, rho, fit.total_inliers, len(cloud))
        return EXIT_OK

    cfg = replace(BENCH_BASELINE, iterations=args.iterations,
                  sample_size=args.sample_size, rng_seed=seed)
    if args.method == "clustered":
        if cloud.labels is None:
            raise CliError("clustered fitting needs a labelled cloud (label column)")
        groups, _ = label_groups(cloud, cfg.sample_size)
        if not groups:
            raise CliError("no labelled group is large enough to fit")
        planes = clustered_ransac(groups, cloud, cfg, args.distance_threshold)
    else:  # iterative
        planes = iterative_ransac(cloud, cfg, args.distance_threshold)
        if not planes:
            print("no plane found", file=sys.stderr)
            return EXIT_NO_FIT
    if len(planes) == constraints.size:
        gamma, rho = constraint_error(planes, constraints)
    else:
        gamma, rho = float("nan"), float("nan")
    inliers = sum(p.inliers.shape[0] for p in planes)
    _print_fit(planes, gamma, rho, inliers, len(cloud))
    return EXIT_OK


def _cmd_bench(args) -> int:
    objects = args.objects.split(",") if args.objects else [o.name for o in builtin_objects()]
    for name in objects:
        get_object(name)  # validate early
    sigmas = [float(s) for s in args.sigmas.split(",")]
    if any(s < 0 for s in sigmas):
        raise CliError("sigma must be non-negative")
    methods = args.methods.split(",") if args.methods else list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise CliError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    results = []
    for method in methods:
        logger.info("sweep: method=%s", method)
        results.extend(run_experiment(method, objects, sigmas,
                                      views=args.views, repeats=args.repeats,
                                      seed=args.seed))
    out = Path(args.output)
    out.write_text(results_csv(results, include_timing=not args.no_timing))
    summary_path = out.with_suffix(".summary.csv")
    summary_path.write_text(summary_csv(results))
    print(f"wrote {len(results)} cells to {out} (summary: {summary_path.name})")
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict]]:
    parser = _Parser(prog="mme", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults: dict[str, dict] = {}

    p = sub.add_parser("synth", parents=[], help="generate a synthetic view",
                       description="Generate one noisy rendered view of a built-in object.")
    p.add_argument("--object", required=True,
                   choices=sorted(o.name for o in builtin_objects()))
    p.add_argument("--view", type=int, default=1, help="turntable view index (1-based)")
    p.add_argument("--sigma", type=float, default=0.0, help="depth noise std dev")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("-o", "--output", required=True, help="cloud output path")
    p.set_defaults(func=_cmd_synth)
    defaults["synth"] = {"view": 1, "sigma": 0.0, "seed": None}

    p = sub.add_parser("fit", help="fit constrained planes to a cloud",
                       description="Fit a plane set to a point cloud under an "
                                   "inter-plane angle constraint matrix.")
    p.add_argument("--cloud", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--method", choices=METHODS, default="mme")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--sample-size", dest="sample_size", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=2.0,
                   help="constraint tolerance (degrees)")
    p.add_argument("--pcc-tolerance", dest="pcc_tolerance", type=float, default=20.0,
                   help="cluster-assignment angle tolerance (degrees)")
    p.add_argument("--k-neighbors", dest="k_neighbors", type=int, default=7)
    p.add_argument("--distance-threshold", dest="distance_threshold", type=float,
                   default=DEFAULT_DISTANCE_THRESHOLD)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_fit)
    defaults["fit"] = {
        "method": "mme", "iterations": 50, "sample_size": 3, "tolerance": 2.0,
        "pcc_tolerance": 20.0, "k_neighbors": 7,
        "distance_threshold": DEFAULT_DISTANCE_THRESHOLD, "seed": None,
    }

    p = sub.add_parser("bench", help="run the benchmark sweep",
                       description="Sweep methods over objects, noise levels, "
                                   "views and repeats; write per-cell and summary CSV.")
    p.add_argument("--methods", default=None, help="comma list (default: all)")
    p.add_argument("--objects", default=None, help="comma list (default: all)")
    p.add_argument("--sigmas", default="0,1e-5,4e-5,6e-5", help="comma list")
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--no-timing", action="store_true",
                   help="write zero runtimes for byte-reproducible output")
    p.add_argument("-o", "--output", required=True, help="results CSV path")
    p.set_defaults(func=_cmd_bench)
    defaults["bench"] = {
        "methods": None, "objects": None, "sigmas": "0,1e-5,4e-5,6e-5",
        "views": 8, "repeats": 3, "seed": None,
    }
    return parser, defaults


_CASTS = {
    "view": int, "sigma": float, "seed": int, "method": str, "iterations": int,
    "sample_size": int, "tolerance": float, "pcc_tolerance": float,
    "k_neighbors": int, "distance_threshold": float, "methods": str,
    "objects": str, "sigmas": str, "views": int, "repeats": int,
}


def main(argv=None) -> int:
    parser, defaults = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cmd_defaults = defaults.get(args.command, {})
        casts = {k: _CASTS[k] for k in cmd_defaults}
        _apply_config(args, cmd_defaults, casts)
        if getattr(args, "seed", None) is None:
            args.seed = _default_seed()
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateInput as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
