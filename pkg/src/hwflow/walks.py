"""Kernels, mass profiles and n-point motions of the discrete flow."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from ._backend import core
from .errors import NotProbability, OutOfWindow
from .seeding import derive_seeds, stream_key


@dataclass(frozen=True)
class MassProfile:
    time: int
    masses: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for x, m in self.masses.items():
            x = int(x)
            if m < 0.0:
                raise ValueError(f"negative mass at {x}")
            if (x + self.time) % 2:
                raise ValueError(f"site ({x}, {self.time}) has wrong parity")
            if m > 0.0:
                clean[x] = float(m)
        object.__setattr__(self, "masses", dict(sorted(clean.items())))

    @classmethod
    def delta(cls, x, time=0, mass=1.0):
        return cls(time, {x: mass})

    @property
    def total(self):
        return math.fsum(self.masses.values())

    @property
    def support(self):
        return list(self.masses)

    def dense(self, window):
        row = np.zeros(window.nx)
        for x, m in self.masses.items():
            row[window.col(x)] = m
        return row

    @classmethod
    def from_dense(cls, time, window, row):
        nz = np.nonzero(row)[0]
        return cls(time, {int(j) + window.x_min: float(row[j]) for j in nz})

    def __add__(self, other):
        if self.time != other.time:
            raise ValueError("profiles at different times")
        m = dict(self.masses)
        for x, v in other.masses.items():
            m[x] = m.get(x, 0.0) + v
        return MassProfile(self.time, m)

    def scaled(self, c):
        return MassProfile(self.time, {x: c * m for x, m in self.masses.items()})


@dataclass(frozen=True)
class KernelRow:
    source: tuple
    time: int
    probs: dict

    @property
    def total(self):
        return math.fsum(self.probs.values())


@dataclass(frozen=True)
class NPointPath:
    start_time: int
    positions: np.ndarray

    @property
    def n(self):
        return self.positions.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)])
            for k, row in enumerate(self.positions):
                out.writerow([self.start_time + k, *map(int, row)])


def kernel_row(env, x, s, t):
    if (x + s) % 2:
        raise ValueError(f"({x}, {s}) is not an even site")
    w = env.window
    w.require_cone([x], s, t)
    rho0 = np.zeros(w.nx)
    rho0[w.col(x)] = 1.0
    hist = core.hw_evolve(env.filled, rho0, w.row(s), t - s, False)
    last = np.asarray(hist)[-1]
    nz = np.nonzero(last)[0]
    return KernelRow((x, s), t, {int(j) + w.x_min: float(last[j]) for j in nz})


def kernel_matrix(env, s, t):
    """Dense K_{s,t} over the window columns (rows: source column, cols: target)."""
    w = env.window
    if s < w.t_min or t > w.t_max + 1:
        raise OutOfWindow(f"times [{s}, {t}] outside window")
    K = np.zeros((w.nx, w.nx))
    for j in range(w.nx):
        if (w.x_min + j + s) % 2:
            continue
        rho0 = np.zeros(w.nx)
        rho0[j] = 1.0
        K[j] = np.asarray(core.hw_evolve(env.filled, rho0, w.row(s), t - s, False))[-1]
    return K


def _check_profile(env, rho, T):
    if rho.masses:
        env.window.require_cone(rho.support, rho.time, rho.time + T)
    elif not (env.window.t_min <= rho.time and rho.time + T <= env.window.t_max + 1):
        raise OutOfWindow("profile time outside window")


def hw_step(env, rho):
    _check_profile(env, rho, 1)
    w = env.window
    new = np.zeros(w.nx)
    om = env.filled[w.row(rho.time)]
    for x, m in rho.masses.items():
        j = w.col(x)
        new[j + 1] += om[j] * m
        new[j - 1] += (1.0 - om[j]) * m
    return MassProfile.from_dense(rho.time + 1, w, new)


def evolve_profile(env, rho0, T):
    _check_profile(env, rho0, T)
    w = env.window
    hist = np.asarray(core.hw_evolve(env.filled, rho0.dense(w), w.row(rho0.time), T, False))
    return [MassProfile.from_dense(rho0.time + k, w, hist[k]) for k in range(T + 1)]


def evolve_by_kernels(env, rho0, T):
    """Same as evolve_profile but summed over kernel rows of each source site."""
    out = []
    for k in range(T + 1):
        acc = {}
        for x, m in rho0.masses.items():
            for y, p in kernel_row(env, x, rho0.time, rho0.time + k).probs.items():
                acc.setdefault(y, []).append(m * p)
        out.append(MassProfile(rho0.time + k, {y: math.fsum(v) for y, v in acc.items()}))
    return out


def _walker_keys(seeds):
    return np.array([stream_key(int(s), seeding.TAG_WALKER) for s in seeds], dtype=np.uint64)


def _omega_keys(seeds):
    c = np.array([stream_key(int(s), seeding.TAG_OMEGA_COMPONENT) for s in seeds], dtype=np.uint64)
    v = np.array([stream_key(int(s), seeding.TAG_OMEGA_VALUE) for s in seeds], dtype=np.uint64)
    return c, v


def _check_start(x0, start_time):
    x0 = np.asarray(x0, dtype=np.int64)
    if x0.ndim != 1 or x0.size == 0:
        raise ValueError("x0 must be a nonempty vector")
    if x0.size >= 1 << 16:
        raise ValueError("at most 65535 walkers")
    if np.any((x0 + start_time) % 2):
        raise ValueError("starting points must be even sites")
    return x0


def npoint_paths(mu, x0, T, seeds, mode="averaged", env=None, start_time=0):
    """Positions of shape (len(seeds), T + 1, n), one replica per seed.

    Averaged mode: replica r sees its own environment drawn lazily from seed r,
    so walkers on a shared site share one q ~ mu.  Quenched mode: all replicas
    share ``env`` and only the walker coins depend on the seed.
    """
    x0 = _check_start(x0, start_time)
    seeds = np.asarray(seeds, dtype=np.uint64)
    wkeys = _walker_keys(seeds)
    if mode == "averaged":
        if not mu.is_probability():
            raise NotProbability(f"total mass {mu.total_mass} != 1")
        ckeys, vkeys = _omega_keys(seeds)
        return np.asarray(core.npoint_paths(*mu.sampling_table(), ckeys, vkeys, wkeys, x0,
                                            start_time, T))
    if mode == "quenched":
        if env is None:
            raise ValueError("quenched mode needs an environment")
        env.window.require_cone(x0, start_time, start_time + T)
        return np.asarray(core.npoint_paths_env(env.filled, env.window.x_min, env.window.t_min,
                                                wkeys, x0, start_time, T))
    raise ValueError(f"unknown mode {mode!r}")


def npoint_sample(mu, x0, T, seed, mode="averaged", env=None, start_time=0):
    pos = npoint_paths(mu, x0, T, [seed], mode, env, start_time)[0]
    return NPointPath(start_time, pos)


def npoint_ensemble(mu, x0, T, master, replicas, start=0, mode="averaged", env=None, start_time=0):
    seeds = derive_seeds(master, seeding.TAG_REPLICA, np.arange(start, start + replicas))
    return npoint_paths(mu, x0, T, seeds, mode, env, start_time)


def split_probability(mu, k, l):
    return mu.moment(k, l)


def profiles_to_csv(profiles, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "x", "mass"])
        for rho in sorted(profiles, key=lambda r: r.time):
            for x, m in rho.masses.items():
                out.writerow([rho.time, x, format(m, ".17g")])
