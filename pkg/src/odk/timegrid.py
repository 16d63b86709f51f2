"""Uniform time grids shared by all propagators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + h, ..., t_end`` with ``n_steps`` intervals."""

    t_end: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @property
    def h(self) -> float:
        return (self.t_end - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_end, self.n_steps + 1)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_end, self.n_steps * factor, self.t0)

    def index(self, t: float) -> int:
        i = int(round((t - self.t0) / self.h))
        if abs(self.t0 + i * self.h - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the grid")
        return i


def as_grid(grid) -> TimeGrid:
    if isinstance(grid, TimeGrid):
        return grid
    if isinstance(grid, dict):
        return TimeGrid(float(grid["t_end"]), int(grid["n_steps"]), float(grid.get("t0", 0.0)))
    t_end, n = grid
    return TimeGrid(float(t_end), int(n))


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def cumtrapz(y: np.ndarray, h: float) -> np.ndarray:
    """Cumulative trapezoidal integral starting at zero, along axis 0."""
    y = np.asarray(y)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    return out
