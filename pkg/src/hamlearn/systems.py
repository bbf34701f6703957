"""Benchmark energy functions, dataset sampling, and dataset file I/O.

Five planar (d = 2) systems ship with analytic energies and hand-derived
gradients; the vector field is always J grad H with the Darboux convention
J = [[0, I], [-I, 0]], so qdot = dH/dp and pdot = -dH/dq.

Datasets pair N phase points drawn uniformly from a box with observations

    x_n = J grad H(z_n) + sigma * eps_n,      eps_n ~ N(0, I_{2d}),

generated by numpy's PCG64 generator so a (seed, box, sigma) triple
reproduces bit for bit on any platform.  Files use a JSON schema with
full-precision floats, conventionally named ``*.hamdata.json``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "HamiltonianSystem",
    "Dataset",
    "builtin",
    "builtin_names",
    "sample_dataset",
    "write_dataset",
    "read_dataset",
    "normalize_box",
]

DATASET_SUFFIX = ".hamdata.json"

# below this radius the removable-singularity terms switch to series branches
_RADIAL_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class HamiltonianSystem:
    """An energy function H with analytic gradient and induced vector field.

    ``h`` and ``grad_h`` are vectorized over leading axes: input shape
    (..., 2d) gives values of shape (...) and gradients of shape (..., 2d).
    ``default_box`` is the sampling box the system is normally studied on.
    """

    name: str
    d: int
    params: dict
    default_box: tuple
    _h: Callable = None
    _grad: Callable = None

    def h(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check(z)
        return self._h(z)

    def grad_h(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check(z)
        return self._grad(z)

    def field(self, z) -> np.ndarray:
        """Vector field J grad H: (q, p) components are (dH/dp, -dH/dq)."""
        g = self.grad_h(z)
        out = np.empty_like(g)
        out[..., : self.d] = g[..., self.d :]
        out[..., self.d :] = -g[..., : self.d]
        return out

    def _check(self, z: np.ndarray):
        if z.shape[-1] != 2 * self.d:
            raise ValueError(
                f"{self.name}: phase points must have last dimension {2 * self.d}, "
                f"got {z.shape}"
            )


def _split(z):
    q1, q2, p1, p2 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    return q1, q2, p1, p2


# -- double pendulum ---------------------------------------------------------
# Two equal point masses m on massless rods of length l in a gravity field g,
# in angle/momentum coordinates.


def _double_pendulum(m: float, l: float, g: float):
    ml2 = m * l * l
    mgl = m * g * l

    def h(z):
        q1, q2, p1, p2 = _split(z)
        u = q1 - q2
        num = p1**2 + 2.0 * p2**2 - 2.0 * p1 * p2 * np.cos(u)
        den = 1.0 + np.sin(u) ** 2
        return num / (2.0 * ml2 * den) + mgl * (4.0 - 2.0 * np.cos(q1) - np.cos(q2))

    def grad(z):
        q1, q2, p1, p2 = _split(z)
        u = q1 - q2
        cu, su = np.cos(u), np.sin(u)
        A = p1**2 + 2.0 * p2**2 - 2.0 * p1 * p2 * cu
        B = 1.0 + su**2
        dT_du = su * (p1 * p2 * B - A * cu) / (ml2 * B**2)
        out = np.empty_like(z)
        out[..., 0] = dT_du + 2.0 * mgl * np.sin(q1)
        out[..., 1] = -dT_du + mgl * np.sin(q2)
        out[..., 2] = (p1 - p2 * cu) / (ml2 * B)
        out[..., 3] = (2.0 * p2 - p1 * cu) / (ml2 * B)
        return out

    return h, grad


# -- Henon-Heiles ------------------------------------------------------------


def _henon_heiles():
    def h(z):
        q1, q2, p1, p2 = _split(z)
        return 0.5 * (p1**2 + p2**2) + 0.5 * (q1**2 + q2**2) + q1**2 * q2 + q2**3 / 3.0

    def grad(z):
        q1, q2, p1, p2 = _split(z)
        out = np.empty_like(z)
        out[..., 0] = q1 + 2.0 * q1 * q2
        out[..., 1] = q2 + q1**2 + q2**2
        out[..., 2] = p1
        out[..., 3] = p2
        return out

    return h, grad


# -- Frenkel-Kontorova (two-site chain) ---------------------------------------


def _frenkel_kontorova(g: float):
    def h(z):
        q1, q2, p1, p2 = _split(z)
        return 0.5 * (p1**2 + p2**2) - np.cos(q1) - np.cos(q2) + 0.5 * g * (q2 - q1) ** 2

    def grad(z):
        q1, q2, p1, p2 = _split(z)
        out = np.empty_like(z)
        out[..., 0] = np.sin(q1) - g * (q2 - q1)
        out[..., 1] = np.sin(q2) + g * (q2 - q1)
        out[..., 2] = p1
        out[..., 3] = p2
        return out

    return h, grad


# -- highly non-convex potential ----------------------------------------------
# V(q) = sin(2 pi q1 / 3) cos(2 pi q2 / 3) + sin(r)/r with r = |q|.  The
# radial factor has a removable singularity at r = 0: value 1, gradient 0.


def _sinc_value(r):
    # sin(r)/r with a series branch to avoid 0/0 at the origin
    small = r < _RADIAL_SERIES_CUTOFF
    r_safe = np.where(small, 1.0, r)
    direct = np.sin(r_safe) / r_safe
    series = 1.0 - r**2 / 6.0 + r**4 / 120.0
    return np.where(small, series, direct)


def _sinc_radial_weight(r):
    # w(r) = (r cos r - sin r) / r^3, the factor in grad sin(r)/r = q * w(r);
    # the direct form cancels catastrophically near 0, the series does not
    small = r < _RADIAL_SERIES_CUTOFF
    r_safe = np.where(small, 1.0, r)
    direct = (r_safe * np.cos(r_safe) - np.sin(r_safe)) / r_safe**3
    series = -1.0 / 3.0 + r**2 / 30.0 - r**4 / 840.0
    return np.where(small, series, direct)


def _nonconvex():
    w = 2.0 * math.pi / 3.0

    def h(z):
        q1, q2, p1, p2 = _split(z)
        r = np.sqrt(q1**2 + q2**2)
        return 0.5 * (p1**2 + p2**2) + np.sin(w * q1) * np.cos(w * q2) + _sinc_value(r)

    def grad(z):
        q1, q2, p1, p2 = _split(z)
        r = np.sqrt(q1**2 + q2**2)
        rad = _sinc_radial_weight(r)
        out = np.empty_like(z)
        out[..., 0] = w * np.cos(w * q1) * np.cos(w * q2) + q1 * rad
        out[..., 1] = -w * np.sin(w * q1) * np.sin(w * q2) + q2 * rad
        out[..., 2] = p1
        out[..., 3] = p2
        return out

    return h, grad


# -- two gravitating bodies ----------------------------------------------------
# Kepler problem in relative coordinates; singular at q = 0, where values and
# gradients come out non-finite and downstream grids record the node as NaN.


def _two_body():
    def h(z):
        q1, q2, p1, p2 = _split(z)
        with np.errstate(divide="ignore"):
            return 0.5 * (p1**2 + p2**2) - 1.0 / np.sqrt(q1**2 + q2**2)

    def grad(z):
        q1, q2, p1, p2 = _split(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            r3 = (q1**2 + q2**2) ** 1.5
            out = np.empty_like(z)
            out[..., 0] = q1 / r3
            out[..., 1] = q2 / r3
            out[..., 2] = p1
            out[..., 3] = p2
        return out

    return h, grad


_BUILTIN_DEFAULTS = {
    "double_pendulum": ({"m": 1.0, "l": 1.0, "g": 1.0}, ((-3.0, 3.0),) * 4),
    "henon_heiles": ({}, ((-1.0, 1.0),) * 4),
    "frenkel_kontorova": ({"g": 1.0}, ((-1.0, 1.0),) * 4),
    "nonconvex": ({}, ((-3.0, 3.0),) * 4),
    "two_body": ({}, ((-1.0, 1.0),) * 4),
}


def builtin_names() -> tuple:
    return tuple(sorted(_BUILTIN_DEFAULTS))


def builtin(name: str, **params) -> HamiltonianSystem:
    """Construct a benchmark system by name.

    Recognized names: double_pendulum (params m, l, g), henon_heiles,
    frenkel_kontorova (param g), nonconvex, two_body.  Unknown names or
    parameters raise ValueError.
    """
    if name not in _BUILTIN_DEFAULTS:
        raise ValueError(f"unknown system {name!r}; choose from {', '.join(builtin_names())}")
    defaults, box = _BUILTIN_DEFAULTS[name]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"{name} does not accept parameter(s) {sorted(unknown)}")
    p = {**defaults, **{k: float(v) for k, v in params.items()}}

    if name == "double_pendulum":
        h, grad = _double_pendulum(p["m"], p["l"], p["g"])
    elif name == "henon_heiles":
        h, grad = _henon_heiles()
    elif name == "frenkel_kontorova":
        h, grad = _frenkel_kontorova(p["g"])
    elif name == "nonconvex":
        h, grad = _nonconvex()
    else:
        h, grad = _two_body()

    return HamiltonianSystem(name=name, d=2, params=p, default_box=box, _h=h, _grad=grad)


# -- datasets -----------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """N phase points with observed (noisy) field values and their metadata."""

    d: int
    n: int
    sigma: float
    seed: int
    points: np.ndarray
    observations: np.ndarray
    system: Optional[str]
    box: tuple

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.points.shape != (self.n, 2 * self.d):
            raise ValueError(
                f"points shape {self.points.shape} does not match (N, 2d) = "
                f"({self.n}, {2 * self.d})"
            )
        if self.observations.shape != self.points.shape:
            raise ValueError(
                f"observations shape {self.observations.shape} does not match points "
                f"shape {self.points.shape}"
            )


def normalize_box(box, dim: int) -> tuple:
    """Expand a (lo, hi) pair to per-coordinate bounds; validate lo < hi."""
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise ValueError(f"box must be (lo, hi) or {dim} such pairs, got shape {arr.shape}")
    if not np.all(arr[:, 0] < arr[:, 1]):
        raise ValueError("each box interval needs lo < hi")
    return tuple((float(lo), float(hi)) for lo, hi in arr)


def sample_dataset(system: HamiltonianSystem, n: int, box, sigma: float, seed: int) -> Dataset:
    """Draw N uniform phase points and their noisy field observations.

    Points are i.i.d. uniform on the box; observations are the analytic
    field plus sigma times i.i.d. standard normal noise per coordinate.
    The PCG64 stream draws points first and noise second, so datasets that
    share a seed share their points across noise levels.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    dim = 2 * system.d
    bounds = normalize_box(box, dim)
    lows = np.array([b[0] for b in bounds])
    highs = np.array([b[1] for b in bounds])
    rng = np.random.Generator(np.random.PCG64(seed))
    points = rng.uniform(lows, highs, size=(n, dim))
    noise = rng.standard_normal(size=(n, dim))
    observations = system.field(points) + sigma * noise
    return Dataset(
        d=system.d,
        n=n,
        sigma=float(sigma),
        seed=int(seed),
        points=points,
        observations=observations,
        system=system.name,
        box=bounds,
    )


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp defaults to 0600; honor the umask
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(dataset: Dataset, path: str):
    """Serialize to the JSON schema (written atomically; reals round-trip)."""
    payload = {
        "d": dataset.d,
        "N": dataset.n,
        "sigma": dataset.sigma,
        "seed": dataset.seed,
        "system": dataset.system,
        "box": [[lo, hi] for lo, hi in dataset.box],
        "points": dataset.points.tolist(),
        "observations": dataset.observations.tolist(),
    }
    _atomic_write_text(path, json.dumps(payload))


def _require(payload: dict, key: str, kind, path: str):
    if key not in payload:
        raise ValueError(f"{path}: missing dataset field '{key}'")
    value = payload[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ValueError(f"{path}: dataset field '{key}' has wrong type {type(value).__name__}")
    return value


def read_dataset(path: str) -> Dataset:
    """Parse and validate a dataset file; malformed content names the field."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: top level must be a JSON object")

    d = _require(payload, "d", int, path)
    n = _require(payload, "N", int, path)
    sigma = _require(payload, "sigma", float, path)
    seed = _require(payload, "seed", int, path)
    system = payload.get("system")
    if system is not None and not isinstance(system, str):
        raise ValueError(f"{path}: dataset field 'system' must be a string or null")
    box_raw = _require(payload, "box", list, path)
    points = np.asarray(_require(payload, "points", list, path), dtype=float)
    observations = np.asarray(_require(payload, "observations", list, path), dtype=float)

    if d < 1:
        raise ValueError(f"{path}: dataset field 'd' must be >= 1, got {d}")
    if sigma < 0:
        raise ValueError(f"{path}: dataset field 'sigma' must be >= 0, got {sigma}")
    if points.shape != (n, 2 * d):
        raise ValueError(
            f"{path}: 'points' shape {points.shape} disagrees with header N={n}, d={d}"
        )
    if observations.shape != (n, 2 * d):
        raise ValueError(
            f"{path}: 'observations' shape {observations.shape} disagrees with header "
            f"N={n}, d={d}"
        )
    try:
        box = normalize_box(box_raw, 2 * d)
    except ValueError as exc:
        raise ValueError(f"{path}: dataset field 'box' invalid: {exc}") from None

    return Dataset(
        d=d,
        n=n,
        sigma=sigma,
        seed=seed,
        points=points,
        observations=observations,
        system=system,
        box=box,
    )
