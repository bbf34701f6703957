"""Command-line front end for the full experimental pipeline.

Subcommands: ``generate`` (sample a dataset), ``fit`` (closed-form fit to a
model file), ``cv`` (grid search with k-fold cross-validation), ``eval``
(potential surfaces and the shifted error heatmap), ``converge`` (error
against sample size under lam = c * N**(-alpha)), ``noise`` (error against
observation noise), ``flow`` (true vs learned flow discrepancies), and
``online-demo`` (stream a dataset and compare with the batch solution).

Every command is deterministic given its full flag set: all randomness is
surfaced as an explicit ``--seed`` (default 0) and output files are written
atomically (temp + rename).  Report commands write CSV tables and, unless
``--no-plots`` is given, render the matching PNG figures next to them.

Exit codes: 0 success, 1 validation error, 2 numerical failure.  Failures
additionally emit one JSON line ``{"error": ..., "code": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from contextlib import contextmanager

import numpy as np

from .dynamics import IntegrationError, flow_sup_error, integrate, write_trajectory_csv
from .estimator import FittedModel, fit, normal_equation_residual, predict_field
from .evaluation import (
    GridSpec,
    convergence_study,
    model_potential_grid,
    noise_sweep,
    potential_grid,
    shifted_error,
    write_convergence_csv,
    write_grid_csv,
    write_noise_csv,
)
from .gram import FactorizationError
from .kernel import GaussianKernel
from .modelselect import PAPER_C_GRID, SearchFailedError, SearchSpec, grid_search, write_scores_csv
from .online import as_fitted_model, online_coeffs, online_init, online_update
from .systems import builtin, builtin_names, read_dataset, sample_dataset, write_dataset

__all__ = ["main", "save_model", "load_model"]


class _Parser(argparse.ArgumentParser):
    # argparse normally sys.exit(2)s on bad flags; route through the
    # validation-error path (exit code 1) instead
    def error(self, message):
        raise ValueError(message)


@contextmanager
def _atomic_path(path: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    # keep the real extension so format-sniffing writers (matplotlib) work
    suffix = os.path.splitext(path)[1] or ".tmp"
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=suffix)
    os.close(fd)
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)  # mkstemp defaults to 0600; honor the umask
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: FittedModel, path: str):
    """Write the model file: kernel, lambda, d, n, points, coeffs."""
    payload = {
        "kernel": {"eta": model.kernel.eta},
        "lambda": model.lam,
        "d": model.d,
        "n": model.n,
        "points": model.train_points.tolist(),
        "coeffs": model.coeffs.tolist(),
    }
    with _atomic_path(path) as tmp:
        with open(tmp, "w") as fh:
            json.dump(payload, fh)


def load_model(path: str) -> FittedModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    try:
        kernel = GaussianKernel(float(payload["kernel"]["eta"]))
        lam = float(payload["lambda"])
        d = int(payload["d"])
        n = int(payload["n"])
        points = np.asarray(payload["points"], dtype=float)
        coeffs = np.asarray(payload["coeffs"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed model file ({exc})") from None
    if points.shape != (n, 2 * d):
        raise ValueError(f"{path}: 'points' shape {points.shape} disagrees with n={n}, d={d}")
    if coeffs.shape != (2 * d * n,):
        raise ValueError(f"{path}: 'coeffs' length {coeffs.shape} must be 2dN = {2 * d * n}")
    return FittedModel(train_points=points, coeffs=coeffs, kernel=kernel, lam=lam, d=d, n=n)


# -- shared flag handling ------------------------------------------------------


def _parse_params(pairs):
    params = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"--param expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        try:
            params[name] = float(value)
        except ValueError:
            raise ValueError(f"--param {name}: {value!r} is not a number") from None
    return params


def _system_from_args(args):
    return builtin(args.system, **_parse_params(getattr(args, "param", None)))


def _box_from_args(args, system):
    if args.box is None:
        return system.default_box
    if len(args.box) == 2:
        return (args.box[0], args.box[1])
    if len(args.box) == 2 * 2 * system.d:
        vals = args.box
        return tuple((vals[2 * i], vals[2 * i + 1]) for i in range(2 * system.d))
    raise ValueError(
        f"--box expects 2 values (lo hi) or {4 * system.d} values (lo hi per coordinate), "
        f"got {len(args.box)}"
    )


def _grid_from_args(args) -> GridSpec:
    def one_or_two(values, name):
        if values is None:
            return None
        if len(values) == 1:
            return values[0]
        if len(values) == 2:
            return tuple(values)
        raise ValueError(f"{name} expects 1 or 2 values, got {len(values)}")

    lo = one_or_two(args.grid_lo, "--grid-lo")
    hi = one_or_two(args.grid_hi, "--grid-hi")
    res = one_or_two(args.grid_res, "--grid-res")
    kwargs = {}
    if lo is not None:
        kwargs["lo"] = lo
    if hi is not None:
        kwargs["hi"] = hi
    if res is not None:
        kwargs["resolution"] = res
    return GridSpec(**kwargs)


def _add_grid_flags(sub):
    sub.add_argument("--grid-lo", type=float, nargs="+", default=None,
                     help="grid lower bound(s) for q1 [q2]")
    sub.add_argument("--grid-hi", type=float, nargs="+", default=None,
                     help="grid upper bound(s) for q1 [q2]")
    sub.add_argument("--grid-res", type=int, nargs="+", default=None,
                     help="grid resolution(s), default 50")


def _ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(write_fn, path: str, *payload):
    with _atomic_path(path) as tmp:
        write_fn(tmp, *payload)


def _write_figure(path: str, render):
    # render is a callable taking the (temporary) target path; matplotlib is
    # imported lazily inside hamlearn.plots, away from the no-figure paths
    with _atomic_path(path) as tmp:
        render(tmp)


# -- commands -------------------------------------------------------------------


def _cmd_generate(args) -> int:
    system = _system_from_args(args)
    box = _box_from_args(args, system)
    dataset = sample_dataset(system, args.n, box, args.sigma, args.seed)
    write_dataset(dataset, args.out)
    print(
        f"wrote {args.out}: system={system.name} N={dataset.n} d={dataset.d} "
        f"sigma={dataset.sigma} seed={dataset.seed}"
    )
    return 0


def _cmd_fit(args) -> int:
    dataset = read_dataset(args.data)
    if args.c <= 0:
        raise ValueError(f"--c must be positive, got {args.c}")
    lam = args.c * dataset.n ** (-args.alpha)
    model = fit(dataset, GaussianKernel(args.eta), lam)
    residual = normal_equation_residual(model, dataset)
    save_model(model, args.out)
    print(
        f"wrote {args.out}: N={model.n} eta={args.eta} c={args.c} alpha={args.alpha} "
        f"lambda={lam:.6g} relative residual={residual:.3e}"
    )
    return 0


def _cmd_cv(args) -> int:
    dataset = read_dataset(args.data)
    spec = SearchSpec(
        eta_grid=tuple(args.eta_grid),
        c_grid=tuple(args.c_grid) if args.c_grid else PAPER_C_GRID,
        alpha=args.alpha,
        folds=args.folds,
        seed=args.seed,
    )
    result = grid_search(dataset, spec)
    _write_csv(write_scores_csv, args.out, result)
    print(
        f"selected eta={result.eta} c={result.c} lambda={result.lam:.6g} "
        f"({len(result.table)} configurations scored; table in {args.out})"
    )
    return 0


def _cmd_eval(args) -> int:
    system = _system_from_args(args)
    grid = _grid_from_args(args)
    out_dir = _ensure_out_dir(args.out_dir)

    truth = potential_grid(system.h, grid)
    _write_csv(write_grid_csv, os.path.join(out_dir, "potential_truth.csv"), truth, grid)
    if not args.no_plots:
        from . import plots

        _write_figure(os.path.join(out_dir, "potential_truth.png"),
                      lambda p: plots.save_surface(truth, grid, p, f"{system.name}: true potential"))

    if args.model is None:
        print(f"wrote truth-only potential grid for {system.name} to {out_dir}")
        return 0

    model = load_model(args.model)
    if model.d != 2:
        raise ValueError(f"eval grids require a d=2 model, got d={model.d}")
    learned = model_potential_grid(model, grid)
    report = shifted_error(truth, learned)
    _write_csv(write_grid_csv, os.path.join(out_dir, "potential_learned.csv"), learned, grid)
    _write_csv(write_grid_csv, os.path.join(out_dir, "error_heatmap.csv"),
               report.grid_abs_error, grid)
    if not args.no_plots:
        from . import plots

        _write_figure(os.path.join(out_dir, "potential_learned.png"),
                      lambda p: plots.save_surface(learned, grid, p,
                                                   f"{system.name}: learned potential"))
        _write_figure(os.path.join(out_dir, "error_heatmap.png"),
                      lambda p: plots.save_heatmap(report.grid_abs_error, grid, p,
                                                   "absolute error after vertical shift"))
    print(
        f"shift={report.shift:.6g} sup_error={report.sup_error:.6g} "
        f"mean_error={report.mean_error:.6g} rmse={report.rmse:.6g} "
        f"excluded_nodes={report.n_excluded}"
    )
    return 0


def _cmd_converge(args) -> int:
    system = _system_from_args(args)
    box = _box_from_args(args, system)
    grid = _grid_from_args(args)
    out_dir = _ensure_out_dir(args.out_dir)
    result = convergence_study(
        system, args.n_list, args.alpha, args.c, args.eta, args.sigma, args.seeds,
        box=box, grid=grid, full_space=args.full_space,
    )
    _write_csv(write_convergence_csv, os.path.join(out_dir, "convergence.csv"), result)
    if not args.no_plots:
        from . import plots

        _write_figure(os.path.join(out_dir, "convergence.png"),
                      lambda p: plots.save_convergence(result, p))
    slope = "n/a (single N)" if result.slope is None else f"{result.slope:.4f}"
    print(f"convergence study over N={args.n_list}: log-log slope = {slope}")
    return 0


def _cmd_noise(args) -> int:
    system = _system_from_args(args)
    box = _box_from_args(args, system)
    grid = _grid_from_args(args)
    out_dir = _ensure_out_dir(args.out_dir)
    result = noise_sweep(
        system, args.n, args.sigma_list, args.eta, args.c, args.alpha, args.seeds,
        box=box, grid=grid,
    )
    _write_csv(write_noise_csv, os.path.join(out_dir, "noise_sweep.csv"), result)
    if not args.no_plots and result.aggregates:
        from . import plots

        _write_figure(os.path.join(out_dir, "noise_sweep.png"),
                      lambda p: plots.save_noise_sweep(result, p))
    summary = ", ".join(f"sigma={s:g}: {m:.4g}" for s, _, m in result.aggregates) or "empty"
    print(f"noise sweep (mean grid error): {summary}")
    return 0


def _cmd_flow(args) -> int:
    system = _system_from_args(args)
    out_dir = _ensure_out_dir(args.out_dir)
    if len(args.init_box) == 2:
        lo, hi = args.init_box
        bounds = [(lo, hi)] * (2 * system.d)
    elif len(args.init_box) == 4 * system.d:
        bounds = [(args.init_box[2 * i], args.init_box[2 * i + 1]) for i in range(2 * system.d)]
    else:
        raise ValueError(f"--init-box expects 2 or {4 * system.d} values")
    if any(lo >= hi for lo, hi in bounds):
        raise ValueError("--init-box needs lo < hi")

    def true_field(z):
        return system.field(z)

    if args.model is None:
        learned_field = true_field
    else:
        model = load_model(args.model)

        def learned_field(z):
            return predict_field(model, z)

    rng = np.random.Generator(np.random.PCG64(args.seed))
    lows = np.array([b[0] for b in bounds])
    highs = np.array([b[1] for b in bounds])
    inits = rng.uniform(lows, highs, size=(args.n_init, 2 * system.d))

    errors = []
    for i, z0 in enumerate(inits):
        errors.append(flow_sup_error(true_field, learned_field, z0, args.t, args.dt))
        if args.write_trajectories:
            ref = integrate(true_field, z0, args.t, args.dt)
            est = integrate(learned_field, z0, args.t, args.dt)
            with _atomic_path(os.path.join(out_dir, f"trajectory_true_{i}.csv")) as tmp:
                write_trajectory_csv(ref, tmp)
            with _atomic_path(os.path.join(out_dir, f"trajectory_learned_{i}.csv")) as tmp:
                write_trajectory_csv(est, tmp)

    path = os.path.join(out_dir, "flow_errors.csv")
    with _atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            import csv as _csv

            writer = _csv.writer(fh)
            writer.writerow(["index"] + [f"z0_{k}" for k in range(2 * system.d)] + ["sup_error"])
            for i, (z0, err) in enumerate(zip(inits, errors)):
                writer.writerow([i] + [repr(float(v)) for v in z0] + [repr(err)])
    if not args.no_plots:
        from . import plots

        _write_figure(os.path.join(out_dir, "flow_errors.png"),
                      lambda p: plots.save_flow_errors(errors, p))
    print(
        f"flow comparison over {args.n_init} initial conditions (T={args.t}, dt={args.dt}): "
        f"max sup discrepancy = {max(errors):.6g}"
    )
    return 0


def _cmd_online_demo(args) -> int:
    dataset = read_dataset(args.data)
    if args.c is not None:
        C = args.c
    elif dataset.sigma > 0:
        C = dataset.sigma**2  # the noise level makes the stream match the GP mean
    else:
        raise ValueError("--c is required when the dataset is noise-free (sigma = 0)")

    kernel = GaussianKernel(args.eta)
    state = online_init(C, dataset.points[0], dataset.observations[0], kernel)
    worst = 0.0
    for i in range(1, dataset.n):
        online_update(state, dataset.points[i], dataset.observations[i])
        if i % args.compare_every == 0 or i == dataset.n - 1:
            stream = online_coeffs(state)
            batch = fit(_head(dataset, i + 1), kernel, C / (i + 1)).coeffs
            scale = max(float(np.linalg.norm(batch)), 1e-300)
            worst = max(worst, float(np.linalg.norm(stream - batch)) / scale)
    print(
        f"streamed N={dataset.n} points with C={C:g} (lambda(N) = C/N): "
        f"max coefficient deviation from batch = {worst:.3e}; "
        f"largest factorized block = {state.stats['largest_solve_dim']}"
    )
    return 0


def _head(dataset, k: int):
    from .systems import Dataset

    return Dataset(
        d=dataset.d,
        n=k,
        sigma=dataset.sigma,
        seed=dataset.seed,
        points=dataset.points[:k],
        observations=dataset.observations[:k],
        system=dataset.system,
        box=dataset.box,
    )


# -- parser ----------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="hamlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_system(p):
        p.add_argument("--system", required=True, choices=builtin_names())
        p.add_argument("--param", action="append", metavar="NAME=VALUE",
                       help="system parameter override (repeatable)")

    p = sub.add_parser("generate", help="sample a dataset from a benchmark system")
    add_system(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--box", type=float, nargs="+", default=None,
                   help="sampling box: lo hi, or lo hi per coordinate (default: system box)")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="closed-form fit with lambda = c * N**(-alpha)")
    p.add_argument("--data", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("cv", help="grid search with k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--eta-grid", type=float, nargs="+", required=True)
    p.add_argument("--c-grid", type=float, nargs="+", default=None,
                   help="default: the standard 12-point grid")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="score table CSV")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("eval", help="potential surfaces and shifted-error heatmap")
    add_system(p)
    p.add_argument("--model", default=None, help="model file (omit for truth-only export)")
    _add_grid_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("converge", help="grid error against sample size")
    add_system(p)
    p.add_argument("--n-list", type=int, nargs="+", required=True)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--box", type=float, nargs="+", default=None)
    _add_grid_flags(p)
    p.add_argument("--full-space", action="store_true",
                   help="score on a uniform phase-space sample instead of the grid slice")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("noise", help="grid error against observation noise")
    add_system(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma-list", type=float, nargs="*", default=[])
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--box", type=float, nargs="+", default=None)
    _add_grid_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("flow", help="flow discrepancy between true and learned fields")
    add_system(p)
    p.add_argument("--model", default=None, help="model file (omit to compare truth with itself)")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--init-box", type=float, nargs="+", default=[-0.5, 0.5])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--write-trajectories", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("online-demo", help="stream a dataset and compare with batch")
    p.add_argument("--data", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--c", type=float, default=None,
                   help="constant C in lambda(N) * N = C (default: dataset sigma^2 if > 0)")
    p.add_argument("--compare-every", type=int, default=1)
    p.set_defaults(func=_cmd_online_demo)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(json.dumps({"error": str(exc), "code": 1}), file=sys.stderr)
        return 1
    except (FactorizationError, IntegrationError, SearchFailedError, FloatingPointError) as exc:
        print(json.dumps({"error": str(exc), "code": 2}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
