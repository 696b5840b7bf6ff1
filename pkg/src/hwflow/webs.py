"""Forward and dual paths of an arrow field, coalescence and point switching."""
import csv
from dataclasses import dataclass

import numpy as np

from .environment import ArrowField
from .lattice import rotate_point, unrotate_point


@dataclass(frozen=True)
class WebPath:
    start: tuple
    steps: np.ndarray

    @property
    def times(self):
        return np.arange(self.start[1], self.start[1] + len(self.steps) + 1)

    @property
    def positions(self):
        return self.start[0] + np.concatenate([[0], np.cumsum(self.steps, dtype=np.int64)])

    def at(self, t):
        k = t - self.start[1]
        if not 0 <= k <= len(self.steps):
            raise IndexError(f"time {t} not on path")
        return int(self.start[0] + self.steps[:k].sum(dtype=np.int64))

    def to_csv(self, path):
        _dump_path(path, self.times, self.positions)


@dataclass(frozen=True)
class DualWebPath:
    start: tuple
    steps: np.ndarray

    @property
    def times(self):
        return np.arange(self.start[1], self.start[1] - len(self.steps) - 1, -1)

    @property
    def positions(self):
        return self.start[0] + np.concatenate([[0], np.cumsum(self.steps, dtype=np.int64)])

    def at(self, t):
        k = self.start[1] - t
        if not 0 <= k <= len(self.steps):
            raise IndexError(f"time {t} not on path")
        return int(self.start[0] + self.steps[:k].sum(dtype=np.int64))

    def to_csv(self, path):
        _dump_path(path, self.times, self.positions)


def _dump_path(path, times, positions):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "x"])
        for t, x in zip(times, positions):
            out.writerow([int(t), int(x)])


def follow(alpha, window, xs, s, T):
    """Positions (T + 1, len(xs)) of forward paths from sites (xs, s)."""
    xs = np.asarray(xs, dtype=np.int64)
    window.require_cone(xs, s, s + T)
    pos = np.empty((T + 1, xs.size), dtype=np.int64)
    pos[0] = xs
    r0 = window.row(s)
    for k in range(T):
        pos[k + 1] = pos[k] + alpha[r0 + k, pos[k] - window.x_min]
    return pos


def forward_path(field, z, horizon=None):
    x, s = z
    if (x + s) % 2:
        raise ValueError(f"{z} is not an even site")
    if horizon is None:
        horizon = field.window.t_max + 1 - s
    pos = follow(field.alpha, field.window, [x], s, horizon)[:, 0]
    return WebPath((x, s), np.diff(pos).astype(np.int8))


def rotated_field(field):
    """The arrow field seen from the rotated lattice, where dual paths run forward."""
    return ArrowField(field.window.rotated(), field.alpha[::-1, ::-1].copy(), field.seed)


def dual_path(field, z, horizon=None):
    """Backward path from the odd site z: p(t-1) = p(t) - alpha(p(t), t-1)."""
    x, s = z
    if (x + s) % 2 == 0:
        raise ValueError(f"{z} is not an odd site")
    if horizon is None:
        horizon = s - field.window.t_min
    field.window.require_backward_cone([x], s, s - horizon)
    rot = rotated_field(field)
    xr, tr = rotate_point(x, s)
    pos = follow(rot.alpha, rot.window, [xr], tr, horizon)[:, 0]
    back = np.array([unrotate_point(p, 0)[0] for p in pos], dtype=np.int64)
    return DualWebPath((x, s), np.diff(back).astype(np.int8))


def coalescence_time(field, z1, z2, horizon):
    """First time >= max(s1, s2) the two forward paths meet, or None within horizon."""
    (x1, s1), (x2, s2) = z1, z2
    s = max(s1, s2)
    end = min(s1, s2) + horizon
    if end < s:
        return None
    p1 = forward_path(field, z1, end - s1)
    p2 = forward_path(field, z2, end - s2)
    a = p1.positions[s - s1:]
    b = p2.positions[s - s2:]
    hit = np.nonzero(a == b)[0]
    return int(s + hit[0]) if hit.size else None


def switch_point(field, z):
    x, t = z
    field.window.require_site(x, t)
    alpha = field.alpha.copy()
    alpha[field.window.row(t), field.window.col(x)] *= -1
    return ArrowField(field.window, alpha, field.seed)


def first_passage_cdf(p_right, d0, T):
    """P[tau <= t], t = 0..T, for the gap of two independent walkers in one arrow field.

    The gap moves by +2 / -2 with probability p(1-p) each and is absorbed at 0.
    """
    if d0 % 2:
        raise ValueError("gap must be even")
    h = d0 // 2
    size = h + T + 2
    v = np.zeros(size)
    v[h] = 1.0
    a = p_right * (1.0 - p_right)
    cdf = np.empty(T + 1)
    absorbed = 1.0 if h == 0 else 0.0
    if h == 0:
        cdf[:] = 1.0
        return cdf
    cdf[0] = 0.0
    for k in range(1, T + 1):
        new = (1.0 - 2.0 * a) * v
        new[1:] += a * v[:-1]
        new[:-1] += a * v[1:]
        absorbed += new[0]
        new[0] = 0.0
        v = new
        cdf[k] = absorbed
    return cdf
