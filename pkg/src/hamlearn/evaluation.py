"""Grid-based reconstruction metrics, convergence studies, and noise sweeps.

An estimated generator is compared to the truth on the (q1, q2) plane with
momenta set to zero.  Because the field determines its generator only up to
an additive constant, the learned surface is first shifted vertically by the
mean gap over the grid; errors are then measured on the shifted surface.
Grid nodes where the truth is non-finite (singular potentials) are excluded
from both surfaces symmetrically and counted.

``convergence_study`` refits the estimator for growing sample sizes under
the scaling lam = c * N**(-alpha) and reports the log-log slope of the mean
grid error; ``noise_sweep`` does the same across observation noise levels.
Both are deterministic for fixed seeds and assemble their tables in key
order, so concurrent evaluation of the (N, sigma, seed) cells would not
change any output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimator import fit, predict_h_batch
from .kernel import GaussianKernel
from .systems import HamiltonianSystem, sample_dataset

__all__ = [
    "GridSpec",
    "ErrorReport",
    "ConvergenceResult",
    "NoiseSweepResult",
    "potential_grid",
    "model_potential_grid",
    "shifted_error",
    "convergence_study",
    "noise_sweep",
    "write_grid_csv",
    "write_convergence_csv",
    "write_noise_csv",
]

# seed for the phase-space sample used by full-space convergence metrics;
# fixed so repeated studies score on the same evaluation points
_EVAL_POINTS_SEED = 20_240_101
_EVAL_POINTS_COUNT = 1000


def _pair(value, name: str):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 2)
    if arr.size != 2:
        raise ValueError(f"{name} must be a scalar or a pair, got {value!r}")
    return float(arr[0]), float(arr[1])


@dataclass(frozen=True)
class GridSpec:
    """Rectangular (q1, q2) evaluation grid; scalars apply to both axes."""

    lo: object = -1.0
    hi: object = 1.0
    resolution: object = 50

    def __post_init__(self):
        lo = _pair(self.lo, "lo")
        hi = _pair(self.hi, "hi")
        res = np.asarray(self.resolution).reshape(-1)
        if res.size == 1:
            res = np.repeat(res, 2)
        if res.size != 2 or not np.issubdtype(res.dtype, np.integer):
            raise ValueError(f"resolution must be an integer or pair, got {self.resolution!r}")
        res = (int(res[0]), int(res[1]))
        if any(r < 2 for r in res):
            raise ValueError(f"resolution must be >= 2 per axis, got {res}")
        if not (lo[0] < hi[0] and lo[1] < hi[1]):
            raise ValueError(f"grid needs lo < hi per axis, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    def axes(self):
        q1 = np.linspace(self.lo[0], self.hi[0], self.resolution[0])
        q2 = np.linspace(self.lo[1], self.hi[1], self.resolution[1])
        return q1, q2


def potential_grid(h, grid: GridSpec) -> np.ndarray:
    """Evaluate h(q1, q2, 0, 0) over the grid.

    ``h`` must accept a batch of phase points of shape (M, 4).  Orientation:
    rows follow the q2 axis and columns the q1 axis, i.e.
    ``out[i, j] = h(q1[j], q2[i], 0, 0)``.  Non-finite values come back as
    NaN and are excluded (symmetrically) by :func:`shifted_error`.
    """
    q1, q2 = grid.axes()
    Q1, Q2 = np.meshgrid(q1, q2)
    pts = np.stack([Q1, Q2, np.zeros_like(Q1), np.zeros_like(Q1)], axis=-1).reshape(-1, 4)
    vals = np.asarray(h(pts), dtype=float).reshape(Q1.shape)
    return np.where(np.isfinite(vals), vals, np.nan)


def model_potential_grid(model, grid: GridSpec) -> np.ndarray:
    """Potential slice of a fitted model (d = 2 models only)."""
    if model.d != 2:
        raise ValueError(f"grid slices are defined for d = 2 models, got d = {model.d}")
    return potential_grid(lambda pts: predict_h_batch(model, pts), grid)


@dataclass(frozen=True)
class ErrorReport:
    """Shifted-surface error summary; sup_error >= mean_error >= 0 always."""

    shift: float
    grid_abs_error: np.ndarray
    sup_error: float
    mean_error: float
    rmse: float
    n_excluded: int


def shifted_error(truth_grid: np.ndarray, learned_grid: np.ndarray) -> ErrorReport:
    """Compare two potential surfaces after removing the mean vertical gap.

    The shift is the mean of (truth - learned) over nodes finite in both
    surfaces, which minimizes the L2 gap over all constant shifts.  Errors
    are |learned + shift - truth| over those nodes; excluded nodes are NaN
    in the returned matrix and counted in ``n_excluded``.
    """
    truth = np.asarray(truth_grid, dtype=float)
    learned = np.asarray(learned_grid, dtype=float)
    if truth.shape != learned.shape:
        raise ValueError(f"grid shapes differ: {truth.shape} vs {learned.shape}")
    valid = np.isfinite(truth) & np.isfinite(learned)
    if not valid.any():
        raise ValueError("no grid node is finite in both surfaces")
    gaps = truth[valid] - learned[valid]
    shift = float(np.mean(gaps))
    abs_err = np.full(truth.shape, np.nan)
    abs_err[valid] = np.abs(learned[valid] + shift - truth[valid])
    errs = abs_err[valid]
    return ErrorReport(
        shift=shift,
        grid_abs_error=abs_err,
        sup_error=float(np.max(errs)),
        mean_error=float(np.mean(errs)),
        rmse=float(np.sqrt(np.mean(errs**2))),
        n_excluded=int(np.size(valid) - np.count_nonzero(valid)),
    )


def _point_cloud_error(system, model, box, count=_EVAL_POINTS_COUNT):
    # shifted absolute error on a fixed uniform sample of the training box
    from .systems import normalize_box

    bounds = normalize_box(box, 2 * system.d)
    lows = np.array([b[0] for b in bounds])
    highs = np.array([b[1] for b in bounds])
    rng = np.random.Generator(np.random.PCG64(_EVAL_POINTS_SEED))
    pts = rng.uniform(lows, highs, size=(count, 2 * system.d))
    truth = np.asarray(system.h(pts), dtype=float)
    learned = predict_h_batch(model, pts)
    finite = np.isfinite(truth)
    gaps = truth[finite] - learned[finite]
    shift = float(np.mean(gaps))
    errs = np.abs(learned[finite] + shift - truth[finite])
    return float(np.max(errs)), float(np.mean(errs))


@dataclass(frozen=True)
class ConvergenceResult:
    """Per-(N, seed) rows, per-N seed averages, and the fitted log-log slope."""

    rows: tuple  # (n, lam, seed, sup_error, mean_error)
    aggregates: tuple  # (n, lam, mean sup_error, mean mean_error)
    slope: Optional[float]


def convergence_study(
    system: HamiltonianSystem,
    n_list: Sequence[int],
    alpha: float,
    c: float,
    eta: float,
    sigma: float,
    seeds: Sequence[int],
    box=None,
    grid: GridSpec | None = None,
    full_space: bool = False,
) -> ConvergenceResult:
    """Refit across sample sizes with lam = c * N**(-alpha) and track grid error.

    The slope is the least-squares slope of log(seed-averaged mean error)
    against log(N); it is omitted for a single N and reported on the grid
    slice by default.  With ``full_space=True`` errors are measured on a
    fixed uniform sample of the box instead of the zero-momentum slice.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) == 0:
        raise ValueError("n_list must be nonempty")
    if any(b >= a for a, b in zip(n_list[1:], n_list[:-1])):
        raise ValueError(f"n_list must be strictly increasing, got {n_list}")
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if len(seeds) == 0:
        raise ValueError("seeds must be nonempty")
    if box is None:
        box = system.default_box
    if grid is None:
        grid = GridSpec()

    kernel = GaussianKernel(eta)
    truth = potential_grid(system.h, grid)
    rows = []
    aggregates = []
    for n in n_list:
        lam = c * n ** (-alpha)
        sups, means = [], []
        for seed in seeds:
            dataset = sample_dataset(system, n, box, sigma, seed)
            model = fit(dataset, kernel, lam)
            if full_space:
                sup, mean = _point_cloud_error(system, model, box)
            else:
                report = shifted_error(truth, model_potential_grid(model, grid))
                sup, mean = report.sup_error, report.mean_error
            rows.append((n, lam, seed, sup, mean))
            sups.append(sup)
            means.append(mean)
        aggregates.append((n, lam, float(np.mean(sups)), float(np.mean(means))))

    slope = None
    agg_means = np.array([a[3] for a in aggregates])
    if len(n_list) >= 2 and np.all(agg_means > 0):
        slope = float(np.polyfit(np.log(np.array(n_list, dtype=float)), np.log(agg_means), 1)[0])
    return ConvergenceResult(rows=tuple(rows), aggregates=tuple(aggregates), slope=slope)


@dataclass(frozen=True)
class NoiseSweepResult:
    """Per-(sigma, seed) rows and per-sigma seed averages."""

    rows: tuple  # (sigma, seed, sup_error, mean_error)
    aggregates: tuple  # (sigma, mean sup_error, mean mean_error)


def noise_sweep(
    system: HamiltonianSystem,
    n: int,
    sigma_list: Sequence[float],
    eta: float,
    c: float,
    alpha: float,
    seeds: Sequence[int],
    box=None,
    grid: GridSpec | None = None,
) -> NoiseSweepResult:
    """Reconstruction error across observation noise levels at fixed N.

    Each (sigma, seed) cell shares its phase points with every other sigma at
    the same seed (only the added noise differs), so the sigma = 0 entry is
    exactly the noise-free fit.
    """
    if any(s < 0 for s in sigma_list):
        raise ValueError("sigma values must be >= 0")
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if box is None:
        box = system.default_box
    if grid is None:
        grid = GridSpec()

    kernel = GaussianKernel(eta)
    lam = c * n ** (-alpha)
    truth = potential_grid(system.h, grid)
    rows = []
    aggregates = []
    for sigma in sigma_list:
        sups, means = [], []
        for seed in seeds:
            dataset = sample_dataset(system, n, box, sigma, seed)
            model = fit(dataset, kernel, lam)
            report = shifted_error(truth, model_potential_grid(model, grid))
            rows.append((float(sigma), seed, report.sup_error, report.mean_error))
            sups.append(report.sup_error)
            means.append(report.mean_error)
        aggregates.append((float(sigma), float(np.mean(sups)), float(np.mean(means))))
    return NoiseSweepResult(rows=tuple(rows), aggregates=tuple(aggregates))


# -- CSV output ----------------------------------------------------------------


def write_grid_csv(path: str, matrix: np.ndarray, grid: GridSpec):
    """Matrix plus axis vectors: header row carries q1, first column carries q2."""
    q1, q2 = grid.axes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q2\\q1"] + [repr(float(v)) for v in q1])
        for i, q2v in enumerate(q2):
            writer.writerow([repr(float(q2v))] + [repr(float(v)) for v in matrix[i]])


def write_convergence_csv(path: str, result: ConvergenceResult):
    """Columns N, lambda, seed, sup_error, mean_error; seed-averaged rows use 'mean'."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "lambda", "seed", "sup_error", "mean_error"])
        for n, lam, seed, sup, mean in result.rows:
            writer.writerow([n, repr(lam), seed, repr(sup), repr(mean)])
        for n, lam, sup, mean in result.aggregates:
            writer.writerow([n, repr(lam), "mean", repr(sup), repr(mean)])


def write_noise_csv(path: str, result: NoiseSweepResult):
    """Columns sigma, seed, sup_error, mean_error; seed-averaged rows use 'mean'."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "seed", "sup_error", "mean_error"])
        for sigma, seed, sup, mean in result.rows:
            writer.writerow([repr(sigma), seed, repr(sup), repr(mean)])
        for sigma, sup, mean in result.aggregates:
            writer.writerow([repr(sigma), "mean", repr(sup), repr(mean)])
