"""Characteristic measures on [0,1] and the martingale-problem constants they define.

A measure is a finite sum of atoms ``w * delta_q`` and Beta components with
density ``w * q**(a-1) * (1-q)**(b-1) / B(a, b)``.  All integrals of the form
``int q**k (1-q)**l nu(dq)`` with integer ``k, l >= -1`` are evaluated in closed
form through Pochhammer ratios, so divergences are detected from the shapes.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv

from .errors import (
    ConfigError,
    DegenerateSplit,
    EpsTooLarge,
    InfiniteB,
    InvalidTheta,
    NotProbability,
)

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

PROB_TOL = 1e-12


def _poch_ratio(x, n):
    """Gamma(x + n) / Gamma(x) for integer n; inf when a pole is hit."""
    r = 1.0
    if n >= 0:
        for i in range(n):
            r *= x + i
        return r
    for i in range(1, -n + 1):
        d = x - i
        if d <= 0.0:
            return math.inf
        r /= d
    return r


def _beta_ratio(a, b, k, l):
    """B(a + k, b + l) / B(a, b)."""
    if a + k <= 0.0 or b + l <= 0.0:
        return math.inf
    return _poch_ratio(a, k) * _poch_ratio(b, l) / _poch_ratio(a + b, k + l)


@dataclass(frozen=True)
class CharacteristicMeasure:
    atoms: tuple = ()
    beta: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(q), float(w)) for q, w in self.atoms)
        comps = tuple((float(a), float(b), float(w)) for a, b, w in self.beta)
        for i, (q, w) in enumerate(atoms):
            if not (0.0 <= q <= 1.0) or not w >= 0.0:
                raise ValueError(f"atoms[{i}] = ({q}, {w}) is not a location in [0,1] with weight >= 0")
        for i, (a, b, w) in enumerate(comps):
            if not (a > 0.0 and b > 0.0) or not w >= 0.0:
                raise ValueError(f"beta[{i}] = ({a}, {b}, {w}) needs positive shapes and weight >= 0")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "beta", comps)

    # constructors -----------------------------------------------------------

    @classmethod
    def delta(cls, q, w=1.0):
        return cls(atoms=((q, w),))

    @classmethod
    def beta_density(cls, a, b, w=1.0):
        return cls(beta=((a, b, w),))

    @classmethod
    def lebesgue(cls, w=1.0):
        return cls(beta=((1.0, 1.0, w),))

    @classmethod
    def zero(cls):
        return cls()

    # algebra ------------------------------------------------------------------

    def scaled(self, c):
        return CharacteristicMeasure(
            tuple((q, c * w) for q, w in self.atoms),
            tuple((a, b, c * w) for a, b, w in self.beta),
        )

    def __add__(self, other):
        return CharacteristicMeasure(self.atoms + other.atoms, self.beta + other.beta)

    def dropped_zeros(self):
        return CharacteristicMeasure(
            tuple(c for c in self.atoms if c[1] > 0.0),
            tuple(c for c in self.beta if c[2] > 0.0),
        )

    # integrals ------------------------------------------------------------------

    @property
    def total_mass(self):
        return math.fsum([w for _, w in self.atoms] + [w for _, _, w in self.beta])

    def is_probability(self, tol=PROB_TOL):
        return abs(self.total_mass - 1.0) <= tol

    def integral(self, k, l):
        """int q**k (1-q)**l d(self) for integers k, l >= -1; may be inf."""
        terms = []
        for q, w in self.atoms:
            if w == 0.0:
                continue
            if (k < 0 and q == 0.0) or (l < 0 and q == 1.0):
                return math.inf
            terms.append(w * q**k * (1.0 - q) ** l)
        for a, b, w in self.beta:
            if w == 0.0:
                continue
            r = _beta_ratio(a, b, k, l)
            if math.isinf(r):
                return math.inf
            terms.append(w * r)
        return math.fsum(terms)

    def moment(self, k, l):
        if k < 0 or l < 0:
            raise ValueError("moment needs k, l >= 0")
        return self.integral(k, l)

    # sampling ---------------------------------------------------------------------

    def sampling_table(self):
        """(cumulative weights, kind, p1, p2) arrays consumed by the kernels."""
        comps = [(w, 0, q, 0.0) for q, w in self.atoms if w > 0.0]
        comps += [(w, 1, a, b) for a, b, w in self.beta if w > 0.0]
        if not comps:
            raise NotProbability("empty measure")
        w = np.array([c[0] for c in comps], dtype=np.float64)
        return (
            np.cumsum(w),
            np.array([c[1] for c in comps], dtype=np.int8),
            np.array([c[2] for c in comps], dtype=np.float64),
            np.array([c[3] for c in comps], dtype=np.float64),
        )

    # serialization --------------------------------------------------------------

    def to_text(self):
        atoms = ", ".join(f"[{_fmt(q)}, {_fmt(w)}]" for q, w in self.atoms)
        comps = ", ".join(f"[{_fmt(a)}, {_fmt(b)}, {_fmt(w)}]" for a, b, w in self.beta)
        return f"atoms = [{atoms}]\nbeta = [{comps}]\n"

    @classmethod
    def from_text(cls, text):
        return measure_from_dict(tomllib.loads(text))

    def to_dict(self):
        return {"atoms": [list(c) for c in self.atoms], "beta": [list(c) for c in self.beta]}


def _fmt(x):
    s = format(float(x), ".17g")
    if "e" not in s and "." not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s


def measure_from_dict(d, prefix="nu"):
    """Parse ``{"atoms": [[q, w], ...], "beta": [[a, b, w], ...]}``."""
    if not isinstance(d, dict):
        raise ConfigError(prefix, "expected a table with 'atoms' and/or 'beta'")
    unknown = set(d) - {"atoms", "beta"}
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}", "unknown key")
    atoms, comps = [], []
    for i, item in enumerate(d.get("atoms", [])):
        key = f"{prefix}.atoms[{i}]"
        vals = _numbers(item, 2, key)
        if not (0.0 <= vals[0] <= 1.0):
            raise ConfigError(key, f"location {vals[0]} outside [0,1]")
        if not vals[1] >= 0.0:
            raise ConfigError(key, f"negative weight {vals[1]}")
        atoms.append(tuple(vals))
    for i, item in enumerate(d.get("beta", [])):
        key = f"{prefix}.beta[{i}]"
        vals = _numbers(item, 3, key)
        if not (vals[0] > 0.0 and vals[1] > 0.0):
            raise ConfigError(key, "Beta shapes must be positive")
        if not vals[2] >= 0.0:
            raise ConfigError(key, f"negative weight {vals[2]}")
        comps.append(tuple(vals))
    return CharacteristicMeasure(tuple(atoms), tuple(comps))


def _numbers(item, n, key):
    if not isinstance(item, (list, tuple)) or len(item) != n:
        raise ConfigError(key, f"expected a list of {n} numbers, got {item!r}")
    out = []
    for v in item:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(key, f"non-numeric entry {v!r}")
        out.append(float(v))
    return out


@dataclass(frozen=True)
class FlowParams:
    drift: float = 0.0
    nu: CharacteristicMeasure = field(default_factory=CharacteristicMeasure)

    def __post_init__(self):
        if not math.isfinite(self.drift):
            raise ValueError("drift must be finite")
        if not math.isfinite(self.nu.total_mass):
            raise ValueError("nu must be finite")

    def to_dict(self):
        return {"drift": self.drift, "nu": self.nu.to_dict()}


@dataclass(frozen=True)
class ThetaTable:
    kmax: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.kmax < 1 or v.shape != (self.kmax + 1, self.kmax + 1):
            raise InvalidTheta(f"values must have shape ({self.kmax + 1}, {self.kmax + 1})")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __call__(self, k, l):
        return float(self.values[k, l])

    def violations(self, tol=1e-10):
        """List of failed invariants (empty when the table is valid)."""
        v = self.values
        bad = []
        scale = max(1.0, float(np.abs(v).max()))
        for k in range(1, self.kmax + 1):
            for l in range(1, self.kmax + 1):
                if v[k, l] < -tol * scale:
                    bad.append(f"theta({k},{l}) = {v[k, l]} < 0")
        for k in range(self.kmax):
            for l in range(self.kmax):
                rhs = v[k + 1, l] + v[k, l + 1]
                if abs(v[k, l] - rhs) > tol * max(1.0, abs(v[k, l]), abs(rhs)):
                    bad.append(f"theta({k},{l}) != theta({k + 1},{l}) + theta({k},{l + 1})")
        return bad

    def shifted(self, c):
        """Equivalent table: add c * (1{k=0} + 1{l=0})."""
        v = self.values.copy()
        v[0, :] += c
        v[:, 0] += c
        return ThetaTable(self.kmax, v)


# martingale-problem constants -------------------------------------------------

def moment(nu, k, l):
    return nu.moment(k, l)


def stickiness_and_speeds(p):
    """(theta, beta_minus, beta_plus); infinite speeds come back as -inf / +inf."""
    theta = 2.0 * p.nu.total_mass
    inv_1mq = p.nu.integral(0, -1)
    inv_q = p.nu.integral(-1, 0)
    beta_minus = -math.inf if math.isinf(inv_1mq) else p.drift - 2.0 * inv_1mq
    beta_plus = math.inf if math.isinf(inv_q) else p.drift + 2.0 * inv_q
    return theta, beta_minus, beta_plus


def beta_pm(p, m, side="plus"):
    if m < 1:
        raise ValueError("m must be >= 1")
    if side == "plus":
        return p.drift + 2.0 * math.fsum(p.nu.moment(0, k) for k in range(m - 1))
    if side == "minus":
        return p.drift - 2.0 * math.fsum(p.nu.moment(k, 0) for k in range(m - 1))
    raise ValueError("side must be 'plus' or 'minus'")


def theta_from_flow(p, kmax):
    """Canonical theta table: theta(1,0) = theta(1,1) + beta/2, theta(0,1) = theta(1,1) - beta/2."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    v = np.zeros((kmax + 1, kmax + 1))
    for k in range(1, kmax + 1):
        for l in range(1, kmax + 1):
            v[k, l] = p.nu.moment(k - 1, l - 1)
    v[1, 0] = v[1, 1] + 0.5 * p.drift
    v[0, 1] = v[1, 1] - 0.5 * p.drift
    v[0, 0] = v[1, 0] + v[0, 1]
    for k in range(1, kmax):
        v[k + 1, 0] = v[k, 0] - v[k, 1]
        v[0, k + 1] = v[0, k] - v[1, k]
    return ThetaTable(kmax, v)


def flow_from_theta(t, tol=1e-10):
    """(beta, moment array m[k, l] = int q^k (1-q)^l nu) for k, l < kmax."""
    bad = t.violations(tol)
    if bad:
        raise InvalidTheta("; ".join(bad[:3]))
    beta = t(1, 0) - t(0, 1)
    return beta, t.values[1:, 1:].copy()


def beta_plus_from_theta(t, m):
    return t(0, 0) - 2.0 * t(0, m)


# scaling families -----------------------------------------------------------------

def net_constants(p):
    """(b, c, nu_bar) of the net representation; raises InfiniteB."""
    nu = p.nu.dropped_zeros()
    b = nu.integral(-1, -1)
    if math.isinf(b):
        raise InfiniteB("int nu(dq) / (q(1-q)) diverges")
    c = p.drift - nu.integral(0, -1) + nu.integral(-1, 0)
    if b == 0.0:
        return 0.0, c, CharacteristicMeasure()
    atoms = tuple((q, w / (b * q * (1.0 - q))) for q, w in nu.atoms)
    comps = tuple((a, bb, w * _beta_ratio(a, bb, -1, -1) / b) for a, bb, w in nu.beta)
    comps = tuple((a - 1.0, bb - 1.0, w) for a, bb, w in comps)
    return b, c, CharacteristicMeasure(atoms, comps)


def mu_k_net_family(p, eps):
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    b, c, nu_bar = net_constants(p)
    w_sep = b * eps
    w0 = 0.5 * (1.0 - (b + c) * eps)
    w1 = 0.5 * (1.0 - (b - c) * eps)
    for name, w in (("separation", w_sep), ("delta_0", w0), ("delta_1", w1)):
        if not (0.0 <= w <= 1.0):
            raise EpsTooLarge(f"{name} weight {w} outside [0,1] at eps={eps}")
    atoms = tuple((q, w_sep * w) for q, w in nu_bar.atoms) + ((0.0, w0), (1.0, w1))
    comps = tuple((a, bb, w_sep * w) for a, bb, w in nu_bar.beta)
    return CharacteristicMeasure(atoms, comps).dropped_zeros()


def le_jan_raimond_family(c, eps):
    """Beta(a, a) with int q(1-q) mu = c * eps; converges to nu = c * Lebesgue, beta = 0."""
    if not (0.0 < 4.0 * c * eps < 1.0):
        raise EpsTooLarge(f"need 0 < 4 c eps < 1, got c={c}, eps={eps}")
    a = 2.0 * c * eps / (1.0 - 4.0 * c * eps)
    return CharacteristicMeasure.beta_density(a, a)


def split_left_right(mu):
    p_right = mu.integral(1, 0)
    if p_right <= 0.0 or p_right >= 1.0:
        raise DegenerateSplit(f"int q mu(dq) = {p_right}")
    p_left = mu.integral(0, 1)
    mu_l = CharacteristicMeasure(
        tuple((q, w * (1.0 - q) / p_left) for q, w in mu.atoms),
        tuple((a, b + 1.0, w * b / (a + b) / p_left) for a, b, w in mu.beta),
    )
    mu_r = CharacteristicMeasure(
        tuple((q, w * q / p_right) for q, w in mu.atoms),
        tuple((a + 1.0, b, w * a / (a + b) / p_right) for a, b, w in mu.beta),
    )
    return mu_l, mu_r, p_right


def mucon_verify(family, eps_list, kmax=4):
    beta_hats, nu_hats = [], []
    for eps in eps_list:
        mu = family(eps)
        if not mu.is_probability():
            raise NotProbability(f"family member at eps={eps} has mass {mu.total_mass}")
        beta_hats.append((2.0 * mu.integral(1, 0) - mu.total_mass) / eps)
        m = np.array([[mu.integral(k + 1, l + 1) for l in range(kmax + 1)] for k in range(kmax + 1)])
        nu_hats.append(m / eps)
    return beta_hats, nu_hats


def quantile(mu, u1, u2):
    """Inverse-CDF map: u1 picks the component, u2 the value within a Beta component."""
    cumw, kind, p1, p2 = mu.sampling_table()
    u1 = np.asarray(u1, dtype=np.float64)
    comp = np.minimum(np.searchsorted(cumw, u1, side="right"), len(cumw) - 1)
    out = p1[comp].astype(np.float64)
    is_beta = kind[comp] == 1
    if np.any(is_beta):
        u2 = np.broadcast_to(np.asarray(u2, dtype=np.float64), u1.shape)
        c = comp[is_beta]
        out[is_beta] = betaincinv(p1[c], p2[c], u2[is_beta])
    return out


def sample_q(mu, rng, size=None):
    if not mu.is_probability():
        raise NotProbability(f"total mass {mu.total_mass} != 1")
    shape = () if size is None else size
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    out = quantile(mu, np.atleast_1d(u1), np.atleast_1d(u2))
    return float(out[0]) if size is None else out.reshape(shape)
