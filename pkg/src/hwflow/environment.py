"""Seeded random environments and arrow fields on lattice windows.

Every site value is a function of (seed, stream tag, site), so fields are
reproducible bit for bit and do not depend on the window they are drawn in.
"""
import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import seeding
from ._backend import core
from .errors import BadSpeeds, EpsTooLarge, MissingMark, NotProbability
from .lattice import LatticeWindow
from .measures import CharacteristicMeasure, mu_k_net_family, net_constants
from .seeding import derive_seed, stream_key  # noqa: F401  (re-exported)


@dataclass(frozen=True, eq=False)
class Environment:
    window: LatticeWindow
    omega: np.ndarray
    seed: int = 0
    mu: CharacteristicMeasure = None

    def __post_init__(self):
        self.omega.flags.writeable = False

    def at(self, x, t):
        self.window.require_site(x, t)
        if (x + t) % 2:
            raise ValueError(f"({x}, {t}) is an odd site")
        return float(self.omega[self.window.row(t), self.window.col(x)])

    @cached_property
    def filled(self):
        """omega with zeros at odd sites, the form the kernels read."""
        return np.ascontiguousarray(np.nan_to_num(self.omega, nan=0.0))

    def to_csv(self, path):
        w = self.window
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x", "t", "omega"])
            for t in range(w.t_min, w.t_max + 1):
                for x in range(w.x_min, w.x_max + 1):
                    if (x + t) % 2 == 0:
                        out.writerow([x, t, format(self.omega[w.row(t), w.col(x)], ".17g")])


@dataclass(frozen=True, eq=False)
class ArrowField:
    window: LatticeWindow
    alpha: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.alpha.flags.writeable = False

    def at(self, x, t):
        self.window.require_site(x, t)
        return int(self.alpha[self.window.row(t), self.window.col(x)])

    def to_csv(self, path):
        _dump_sites(path, self.window, ["alpha"], [self.alpha])


@dataclass(frozen=True, eq=False)
class ArrowPairField:
    window: LatticeWindow
    alpha_l: np.ndarray
    alpha_r: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if np.any(self.alpha_l > self.alpha_r):
            raise ValueError("alpha_l must be <= alpha_r")
        self.alpha_l.flags.writeable = False
        self.alpha_r.flags.writeable = False

    @property
    def separation(self):
        return self.alpha_l < self.alpha_r

    def separation_sites(self):
        rows, cols = np.nonzero(self.separation)
        return [(int(c) + self.window.x_min, int(r) + self.window.t_min) for r, c in zip(rows, cols)]

    def left(self):
        return ArrowField(self.window, self.alpha_l.copy(), self.seed)

    def right(self):
        return ArrowField(self.window, self.alpha_r.copy(), self.seed)

    def to_csv(self, path):
        _dump_sites(path, self.window, ["alpha_l", "alpha_r"], [self.alpha_l, self.alpha_r])


@dataclass(frozen=True, eq=False)
class MarkField:
    """Marks on separation sites; NaN elsewhere."""

    window: LatticeWindow
    values: np.ndarray = field(repr=False)

    def __getitem__(self, site):
        x, t = site
        if not self.window.contains(x, t):
            raise MissingMark(f"no mark at {site}")
        v = self.values[self.window.row(t), self.window.col(x)]
        if np.isnan(v):
            raise MissingMark(f"no mark at {site}")
        return float(v)

    def as_dict(self):
        rows, cols = np.nonzero(~np.isnan(self.values))
        return {
            (int(c) + self.window.x_min, int(r) + self.window.t_min): float(self.values[r, c])
            for r, c in zip(rows, cols)
        }

    @classmethod
    def from_dict(cls, window, marks):
        v = np.full(window.shape, np.nan)
        for (x, t), q in marks.items():
            if window.contains(x, t):
                v[window.row(t), window.col(x)] = q
        return cls(window, v)

    @classmethod
    def constant(cls, pair, q):
        v = np.where(pair.separation, float(q), np.nan)
        return cls(pair.window, v)


def _dump_sites(path, window, names, arrays):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "t", *names])
        for t in range(window.t_min, window.t_max + 1):
            for x in range(window.x_min, window.x_max + 1):
                if (x + t) % 2 == 0:
                    r, c = window.row(t), window.col(x)
                    out.writerow([x, t, *(int(a[r, c]) for a in arrays)])


def _omega_keys(seed):
    return (
        stream_key(seed, seeding.TAG_OMEGA_COMPONENT),
        stream_key(seed, seeding.TAG_OMEGA_VALUE),
    )


def sample_environment(mu, window, seed):
    if not mu.is_probability():
        raise NotProbability(f"total mass {mu.total_mass} != 1")
    ckey, vkey = _omega_keys(seed)
    omega = core.fill_omega(*mu.sampling_table(), ckey, vkey, window.x_min, window.t_min,
                            window.nx, window.nt)
    return Environment(window, np.asarray(omega), int(seed), mu)


def sample_alpha(env, seed):
    key = stream_key(seed, seeding.TAG_ALPHA)
    alpha = core.fill_alpha(env.filled, key, env.window.x_min, env.window.t_min)
    return ArrowField(env.window, np.asarray(alpha), int(seed))


def pair_probabilities(b_minus, b_plus):
    """(P[separation], P[both arrows +1]) for a pair field with edge drifts b_minus, b_plus."""
    if not (-1.0 <= b_minus <= b_plus <= 1.0):
        raise BadSpeeds(f"need -1 <= b_minus <= b_plus <= 1, got ({b_minus}, {b_plus})")
    return 0.5 * (b_plus - b_minus), 0.5 * (1.0 + b_minus)


def sample_pair_field(b_minus, b_plus, window, seed):
    p_sep, p_plus = pair_probabilities(b_minus, b_plus)
    return _pair_field(p_sep, p_plus, window, seed)


def _pair_field(p_sep, p_plus, window, seed):
    key = stream_key(seed, seeding.TAG_PAIR)
    al, ar = core.fill_pair(key, window.x_min, window.t_min, window.nx, window.nt, p_sep, p_plus)
    return ArrowPairField(window, np.asarray(al), np.asarray(ar), int(seed))


def net_probabilities(p, eps):
    """(P[separation], P[both +1], nu_bar) for the net representation at scale eps."""
    mu_k_net_family(p, eps)  # validates the weights
    b, c, nu_bar = net_constants(p)
    p_sep = b * eps
    p_plus = 0.5 * (1.0 - (b - c) * eps)
    if p_sep + p_plus > 1.0 + 1e-12:
        raise EpsTooLarge(f"eps={eps} too large")
    return p_sep, p_plus, nu_bar


def sample_net_environment(p, window, eps, seed):
    """Pair field and separation marks whose induced omega has law mu_k_net_family(p, eps)."""
    p_sep, p_plus, nu_bar = net_probabilities(p, eps)
    pair = _pair_field(p_sep, p_plus, window, seed)
    values = np.full(window.shape, np.nan)
    if nu_bar.total_mass > 0.0:
        ckey = stream_key(seed, seeding.TAG_MARK_COMPONENT)
        vkey = stream_key(seed, seeding.TAG_MARK_VALUE)
        drawn = np.asarray(core.fill_omega(*nu_bar.sampling_table(), ckey, vkey,
                                           window.x_min, window.t_min, window.nx, window.nt))
        values = np.where(pair.separation, drawn, np.nan)
    return pair, MarkField(window, values)


def net_to_environment(pair, marks, mu=None):
    """omega = mark at separation sites, 1 where both arrows point right, 0 where both point left."""
    sep = pair.separation
    if np.any(sep & np.isnan(marks.values)):
        raise MissingMark("separation site without a mark")
    omega = np.where(pair.alpha_l == 1, 1.0, 0.0)
    omega = np.where(sep, marks.values, omega)
    omega = np.where(pair.window.even_mask(), omega, np.nan)
    return Environment(pair.window, omega, pair.seed, mu)
