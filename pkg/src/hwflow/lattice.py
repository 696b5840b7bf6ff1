"""Rectangular windows of the space-time lattice.

Site (x, t) is even when x + t is even.  Arrays over a window have shape
``(nt, nx)`` and are indexed ``[t - t_min, x - x_min]``.  Evolving from time
``s`` to time ``t`` reads rows ``s .. t-1`` and is allowed when
``t_min <= s <= t <= t_max + 1`` and the light cone stays inside the x-range.
"""
from dataclasses import dataclass

import numpy as np

from .errors import OutOfWindow


def is_even(x, t):
    return (int(x) + int(t)) % 2 == 0


@dataclass(frozen=True)
class LatticeWindow:
    x_min: int
    x_max: int
    t_min: int
    t_max: int

    def __post_init__(self):
        for name in ("x_min", "x_max", "t_min", "t_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.x_min > self.x_max or self.t_min > self.t_max:
            raise ValueError(f"empty window {self}")

    @classmethod
    def centered(cls, x0, t0, horizon, margin=0):
        r = horizon + margin
        return cls(x0 - r, x0 + r, t0, t0 + horizon)

    @property
    def nx(self):
        return self.x_max - self.x_min + 1

    @property
    def nt(self):
        return self.t_max - self.t_min + 1

    @property
    def shape(self):
        return (self.nt, self.nx)

    def col(self, x):
        return int(x) - self.x_min

    def row(self, t):
        return int(t) - self.t_min

    def contains(self, x, t):
        return self.x_min <= x <= self.x_max and self.t_min <= t <= self.t_max

    def even_mask(self):
        t = np.arange(self.t_min, self.t_max + 1)[:, None]
        x = np.arange(self.x_min, self.x_max + 1)[None, :]
        return (x + t) % 2 == 0

    def xs(self):
        return np.arange(self.x_min, self.x_max + 1)

    def require_site(self, x, t):
        if not self.contains(x, t):
            raise OutOfWindow(f"site ({x}, {t}) outside {self}")

    def require_cone(self, xs, s, t):
        """Forward light cone of points ``xs`` at time s up to time t."""
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        if t < s:
            raise ValueError("t must be >= s")
        if s < self.t_min or t > self.t_max + 1:
            raise OutOfWindow(f"steps {s} -> {t} need rows outside [{self.t_min}, {self.t_max}]")
        if xs.size and (xs.min() - (t - s) < self.x_min or xs.max() + (t - s) > self.x_max):
            raise OutOfWindow(f"light cone of x in [{xs.min()}, {xs.max()}] over {t - s} steps leaves [{self.x_min}, {self.x_max}]")

    def require_backward_cone(self, xs, s, t):
        """Backward cone of points at time s down to time t < s (reads rows t .. s-1)."""
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        if t > s:
            raise ValueError("t must be <= s")
        if t < self.t_min or s > self.t_max + 1:
            raise OutOfWindow(f"steps {s} -> {t} need rows outside [{self.t_min}, {self.t_max}]")
        if xs.size and (xs.min() - (s - t) < self.x_min or xs.max() + (s - t) > self.x_max):
            raise OutOfWindow(f"backward cone over {s - t} steps leaves [{self.x_min}, {self.x_max}]")

    def rotated(self):
        """Window of the 180-degree rotation (x, t) -> (1 - x, -1 - t).

        The rotation maps the dual (odd) lattice onto the even lattice, turning
        backward dual paths into forward paths; an array over this window is
        ``arr[::-1, ::-1]`` of the original.
        """
        return LatticeWindow(1 - self.x_max, 1 - self.x_min, -1 - self.t_max, -1 - self.t_min)


def rotate_point(x, t):
    """Dual (odd) point (x, t) -> even point of the rotated lattice."""
    return 1 - x, -t


def unrotate_point(xr, tr):
    return 1 - xr, -tr
