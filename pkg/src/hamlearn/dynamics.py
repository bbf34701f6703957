"""Fixed-step integration of phase-space vector fields and flow comparison.

Classical fourth-order Runge-Kutta on a fixed grid, with the final step
shortened to land exactly on the requested horizon.  True and learned fields
are always integrated under the same scheme and grid, so integrator bias
cancels in the discrepancy measurements; no symplectic scheme is needed (or
provided) for that purpose.

All routines are pure; trajectories for different initial conditions can be
computed concurrently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["IntegrationError", "Trajectory", "integrate", "flow_sup_error", "write_trajectory_csv"]


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state."""


@dataclass(frozen=True)
class Trajectory:
    """Times (strictly increasing, starting at 0) and states, one row per time."""

    times: np.ndarray
    states: np.ndarray


def _time_grid(t_final: float, dt: float) -> np.ndarray:
    if dt <= 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if t_final <= 0 or not np.isfinite(t_final):
        raise ValueError(f"T must be positive and finite, got {t_final}")
    if dt > t_final:
        raise ValueError(f"dt = {dt} exceeds the horizon T = {t_final}")
    steps = int(np.floor(t_final / dt + 1e-12))
    times = dt * np.arange(steps + 1)
    # land exactly on T: clamp a grid-coincident endpoint, else append a short step
    if abs(times[-1] - t_final) <= 1e-12 * max(1.0, t_final):
        times[-1] = t_final
    else:
        times = np.append(times, t_final)
    return times


def integrate(field, z0, t_final: float, dt: float) -> Trajectory:
    """Integrate dz/dt = field(z) from 0 to ``t_final`` with RK4 steps of ``dt``.

    ``field`` maps a phase point (2d,) to a velocity (2d,).  Deterministic:
    the grid and every arithmetic step depend only on the arguments.  A
    non-finite state raises :class:`IntegrationError` naming the time at
    which it appeared.
    """
    z = np.array(z0, dtype=float)
    if z.ndim != 1:
        raise ValueError(f"z0 must be a 1-d phase point, got shape {z.shape}")
    times = _time_grid(t_final, dt)
    states = np.empty((times.size, z.size))
    states[0] = z
    for i in range(times.size - 1):
        h = times[i + 1] - times[i]
        k1 = np.asarray(field(z), dtype=float)
        k2 = np.asarray(field(z + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(field(z + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(field(z + h * k3), dtype=float)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise IntegrationError(
                f"non-finite state at t = {times[i + 1]:.6g} (step {i + 1})"
            )
        states[i + 1] = z
    return Trajectory(times=times, states=states)


def flow_sup_error(true_field, learned_field, z0, t_final: float, dt: float) -> float:
    """Largest pointwise distance between the two flows over a shared grid.

    Both fields start from the same initial condition and are integrated on
    the same time grid; the reported value is max_t ||z_true(t) - z_learned(t)||_2.
    """
    ref = integrate(true_field, z0, t_final, dt)
    est = integrate(learned_field, z0, t_final, dt)
    return float(np.max(np.linalg.norm(ref.states - est.states, axis=1)))


def write_trajectory_csv(trajectory: Trajectory, path: str):
    """Write rows t, q1..qd, p1..pd with full-precision decimals."""
    dim = trajectory.states.shape[1]
    d = dim // 2
    header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in zip(trajectory.times, trajectory.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
