import numpy as np
import pytest

from hamlearn.systems import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_dataset(points, observations, d=None, sigma=0.0, seed=0):
    """Assemble a Dataset from raw arrays (box metadata is cosmetic here)."""
    points = np.asarray(points, dtype=float)
    observations = np.asarray(observations, dtype=float)
    if d is None:
        d = points.shape[1] // 2
    return Dataset(
        d=d,
        n=points.shape[0],
        sigma=sigma,
        seed=seed,
        points=points,
        observations=observations,
        system=None,
        box=((-1.0, 1.0),) * points.shape[1],
    )


def random_dataset(rng, n, d=2, scale=1.0):
    """Random points in [-1, 1]^{2d} with standard-normal observations."""
    pts = rng.uniform(-1.0, 1.0, (n, 2 * d))
    obs = scale * rng.standard_normal((n, 2 * d))
    return make_dataset(pts, obs)


def rel_err(a, b, floor=1e-300):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor)
