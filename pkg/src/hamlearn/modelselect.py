"""Hyperparameter selection by grid search with k-fold cross-validation.

The bandwidth eta and the ridge coefficient c are scored jointly: for each
grid cell the ridge parameter is lam = c * N**(-alpha) computed with the
full dataset size (so the chosen c transfers unchanged to the final fit),
and the score is the held-out mean squared vector-field error averaged over
folds.  Ties break toward smaller c, then smaller eta, preferring stronger
regularization and smoother estimates; the winner therefore never depends
on evaluation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimator import fit, predict_field_batch
from .gram import FactorizationError
from .kernel import GaussianKernel
from .systems import Dataset

__all__ = [
    "PAPER_C_GRID",
    "SearchSpec",
    "SearchFailedError",
    "GridSearchResult",
    "kfold_indices",
    "cv_score",
    "grid_search",
    "write_scores_csv",
]

# default 12-point grid for the ridge coefficient c
PAPER_C_GRID = (5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1.0)


class SearchFailedError(RuntimeError):
    """Every grid configuration failed to produce a finite score."""


@dataclass(frozen=True)
class SearchSpec:
    """Grids and protocol constants for the search."""

    eta_grid: Sequence[float]
    c_grid: Sequence[float] = PAPER_C_GRID
    alpha: float = 0.4
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if len(self.eta_grid) == 0 or len(self.c_grid) == 0:
            raise ValueError("eta_grid and c_grid must be nonempty")
        if any(v <= 0 for v in self.eta_grid) or any(v <= 0 for v in self.c_grid):
            raise ValueError("all grid values must be positive")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def kfold_indices(n: int, folds: int, seed: int):
    """Shuffled fold partition: every index held out exactly once, sizes differ <= 1."""
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cv_score(dataset: Dataset, kernel, lam: float, folds: int = 5, seed: int = 0) -> float:
    """Mean over folds of the held-out mean squared vector-field error.

    Each fold fits on the complement and scores
    mean_i ||predicted_field(z_i) - x_i||^2 over the held-out rows.  A fold
    whose fit fails numerically sends the whole configuration to +inf.
    """
    n = dataset.n
    if n < folds:
        raise ValueError(f"dataset has N={n} rows, fewer than folds={folds}")
    fold_parts = kfold_indices(n, folds, seed)
    scores = []
    for held_out in fold_parts:
        mask = np.ones(n, dtype=bool)
        mask[held_out] = False
        train = Dataset(
            d=dataset.d,
            n=int(mask.sum()),
            sigma=dataset.sigma,
            seed=dataset.seed,
            points=dataset.points[mask],
            observations=dataset.observations[mask],
            system=dataset.system,
            box=dataset.box,
        )
        try:
            model = fit(train, kernel, lam)
        except FactorizationError:
            return float("inf")
        pred = predict_field_batch(model, dataset.points[held_out])
        residual = pred - dataset.observations[held_out]
        scores.append(float(np.mean(np.sum(residual**2, axis=1))))
    return float(np.mean(scores))


@dataclass(frozen=True)
class GridSearchResult:
    eta: float
    c: float
    lam: float
    table: tuple  # rows (eta, c, lam, score)


def grid_search(dataset: Dataset, spec: SearchSpec) -> GridSearchResult:
    """Score every (eta, c) cell and return the minimizer plus the full table."""
    n = dataset.n
    table = []
    for eta in spec.eta_grid:
        kernel = GaussianKernel(float(eta))
        for c in spec.c_grid:
            lam = float(c) * n ** (-spec.alpha)
            score = cv_score(dataset, kernel, lam, spec.folds, spec.seed)
            table.append((float(eta), float(c), lam, score))
    finite = [row for row in table if np.isfinite(row[3])]
    if not finite:
        raise SearchFailedError("every (eta, c) configuration scored non-finite")
    best = min(finite, key=lambda row: (row[3], row[1], row[0]))
    return GridSearchResult(eta=best[0], c=best[1], lam=best[2], table=tuple(table))


def write_scores_csv(path: str, result: GridSearchResult):
    """Score table, columns eta, c, lambda, score."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "c", "lambda", "score"])
        for eta, c, lam, score in result.table:
            writer.writerow([repr(eta), repr(c), repr(lam), repr(score)])
