"""Test functions and generator of the martingale problem, and residual checks on simulated paths."""
import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import ndtr

from .errors import ThetaTooSmall
from .estimators import Accumulator
from .measures import CharacteristicMeasure, FlowParams, beta_plus_from_theta, beta_pm, theta_from_flow


@dataclass(frozen=True)
class IndexSet:
    """Nonempty subset ``delta`` of {1, ..., n} (1-based)."""

    n: int
    delta: frozenset

    def __post_init__(self):
        d = frozenset(int(i) for i in self.delta)
        if not d:
            raise ValueError("delta must be nonempty")
        if min(d) < 1 or max(d) > self.n:
            raise ValueError(f"delta {sorted(d)} not within 1..{self.n}")
        object.__setattr__(self, "delta", d)

    @property
    def indices(self):
        return sorted(i - 1 for i in self.delta)

    def label(self):
        return ",".join(str(i) for i in sorted(self.delta))


def all_index_sets(n):
    return [IndexSet(n, frozenset(c)) for k in range(1, n + 1)
            for c in itertools.combinations(range(1, n + 1), k)]


def _is_integral(x):
    return np.issubdtype(np.asarray(x).dtype, np.integer)


def f_g_delta(d, x):
    x = np.asarray(x)
    vals = x[d.indices]
    f = vals.max()
    if _is_integral(x):
        g = int(np.count_nonzero(vals == f))
        return int(f), g
    tol = 1e-12 * max(1.0, float(np.abs(x).max()))
    g = int(np.count_nonzero(np.abs(vals - f) <= tol))
    return float(f), g


def f_delta_fn(d):
    return lambda x: f_g_delta(d, x)[0]


def _direction(n, I, J):
    v = np.zeros(n)
    for i in I:
        v[i - 1] = 1.0
    for j in J:
        v[j - 1] = -1.0
    return v


def cell_step(x):
    """Half the smallest positive gap between coordinates, or 1 if there is none."""
    x = np.asarray(x, dtype=np.float64)
    gaps = np.abs(x[:, None] - x[None, :])
    pos = gaps[gaps > 0.0]
    return 0.5 * float(pos.min()) if pos.size else 1.0


def one_sided_derivative(fn, x, I, J):
    """(f(x + h v) - f(x)) / h with h inside the current order cell; exact for piecewise-linear f."""
    I, J = set(I), set(J)
    if I & J:
        raise ValueError("I and J must be disjoint")
    x = np.asarray(x, dtype=np.float64)
    v = _direction(len(x), I, J)
    h = cell_step(x)
    return (fn(x + h * v) - fn(x)) / h


def clusters(x):
    """Map each value in the range of x to the 1-based indices sharing it."""
    out = {}
    for i, xi in enumerate(np.asarray(x).tolist()):
        out.setdefault(xi, []).append(i + 1)
    return out


def apply_A_theta(theta, d, x):
    """(literal operator sum, closed form beta_+(g_delta(x)))."""
    x = np.asarray(x)
    fn = f_delta_fn(d)
    groups = clusters(x)
    biggest = max(len(J) for J in groups.values())
    if biggest > theta.kmax:
        raise ThetaTooSmall(f"cluster of size {biggest} needs kmax >= {biggest}, table has {theta.kmax}")
    terms = []
    for J in groups.values():
        for k in range(len(J) + 1):
            for I in itertools.combinations(J, k):
                rest = [j for j in J if j not in I]
                deriv = one_sided_derivative(fn, x, I, rest)
                if deriv != 0.0:
                    terms.append(theta(len(I), len(rest)) * deriv)
    literal = math.fsum(terms)
    _, g = f_g_delta(d, x)
    return literal, beta_plus_from_theta(theta, g)


def basis_matrix(n):
    """Rows: points of {0,1}^n; columns: f_delta for every nonempty delta."""
    points = list(itertools.product((0, 1), repeat=n))
    sets = all_index_sets(n)
    return [[f_g_delta(d, np.array(p))[0] for d in sets] for p in points]


def exact_rank(rows):
    """Rank over the rationals by fraction-exact Gaussian elimination."""
    m = [[Fraction(v) for v in r] for r in rows]
    rank, ncols = 0, len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][c] != 0:
                f = m[r][c] / m[rank][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def random_flow(rng, natoms=3):
    atoms = tuple((float(rng.uniform(0.02, 0.98)), float(rng.exponential())) for _ in range(natoms))
    comps = ((float(rng.uniform(0.5, 4)), float(rng.uniform(0.5, 4)), float(rng.exponential())),)
    return FlowParams(float(rng.normal()), CharacteristicMeasure(atoms, comps))


def random_theta(rng, kmax, shift=True):
    t = theta_from_flow(random_flow(rng), kmax)
    return t.shifted(float(rng.normal())) if shift else t


# martingale residuals --------------------------------------------------------------

@dataclass
class ResidualRow:
    statistic: str
    mean: float
    stderr: float
    n: int
    compensator: float = 0.0

    @property
    def z(self):
        if self.stderr == 0.0:
            return 0.0 if self.mean == 0.0 else math.copysign(math.inf, self.mean)
        return self.mean / self.stderr

    def power(self, rel=0.1, nsigma=3.0):
        """P[|Z| > nsigma] when the compensator is off by ``rel`` of its mean."""
        if self.stderr == 0.0 or self.compensator == 0.0:
            return math.nan
        shift = rel * abs(self.compensator) / self.stderr
        return float(ndtr(shift - nsigma) + ndtr(-shift - nsigma))


@dataclass
class ResidualReport:
    rows: list = field(default_factory=list)

    def __getitem__(self, name):
        for r in self.rows:
            if r.statistic == name:
                return r
        raise KeyError(name)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["statistic", "mean", "stderr", "z"])
            for r in self.rows:
                out.writerow([r.statistic, format(r.mean, ".17g"), format(r.stderr, ".17g"),
                              format(r.z, ".17g")])


def residual_samples(paths, p, eps):
    """Per-replica residuals and compensators, keyed by statistic name."""
    X = np.asarray(paths, dtype=np.int64)
    R, steps1, n = X.shape
    N = steps1 - 1
    dt = eps * eps
    T = N * dt
    bplus = np.array([0.0] + [beta_pm(p, g, "plus") for g in range(1, n + 1)])
    nu_mass = p.nu.total_mass
    out = {}
    head = X[:, :-1, :]
    for d in all_index_sets(n):
        sub = head[:, :, d.indices]
        f = sub.max(axis=2)
        g = (sub == f[:, :, None]).sum(axis=2)
        comp = dt * bplus[g].sum(axis=1)
        fT = X[:, -1, d.indices].max(axis=1)
        f0 = X[:, 0, d.indices].max(axis=1)
        out[f"drift[{d.label()}]"] = (eps * (fT - f0) - comp, comp)
    disp = eps * (X[:, -1, :] - X[:, 0, :]) - p.drift * T
    for i, j in itertools.combinations_with_replacement(range(n), 2):
        occ = dt * (head[:, :, i] == head[:, :, j]).sum(axis=1)
        tag = f"{i + 1},{j + 1}"
        if i != j:
            gap = np.abs(X[:, :, i] - X[:, :, j])
            comp = 4.0 * nu_mass * occ
            out[f"theta_coupling[{tag}]"] = (eps * (gap[:, -1] - gap[:, 0]) - comp, comp)
            out[f"occupation[{tag}]"] = (occ, np.zeros(R))
        out[f"covariance[{tag}]"] = (disp[:, i] * disp[:, j] - occ, occ)
    return out


class ResidualAccumulator:
    def __init__(self):
        self.acc = {}
        self.comp = {}

    def add(self, paths, p, eps):
        for name, (res, comp) in residual_samples(paths, p, eps).items():
            self.acc.setdefault(name, Accumulator()).update_batch(res)
            self.comp.setdefault(name, Accumulator()).update_batch(comp)
        return self

    def report(self):
        rows = []
        for name, a in self.acc.items():
            est = a.estimate()
            rows.append(ResidualRow(name, est.mean, est.stderr, est.n, self.comp[name].estimate().mean))
        return ResidualReport(rows)


def martingale_residuals(paths, p, eps):
    return ResidualAccumulator().add(paths, p, eps).report()
