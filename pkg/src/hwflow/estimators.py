"""Monte Carlo estimators with standard errors, and the exact oracles they are tested against."""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from ._backend import BACKEND, core
from .errors import InfiniteSpeed, WindowTooSmall
from .measures import (
    CharacteristicMeasure,
    le_jan_raimond_family,
    mu_k_net_family,
    net_constants,
    stickiness_and_speeds,
)
from .seeding import derive_seeds, stream_key


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n: int
    manifest: dict = field(default_factory=dict)

    def z(self, target):
        if self.stderr == 0.0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.stderr

    def within(self, target, nsigma=3.0):
        return abs(self.z(target)) <= nsigma


class Accumulator:
    """Running (n, mean, M2) with streaming updates and an exact pairwise merge."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)
        return self

    def update_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64).ravel()
        if xs.size == 0:
            return self
        other = Accumulator()
        other.n = xs.size
        other.mean = float(xs.mean())
        other.m2 = float(((xs - other.mean) ** 2).sum())
        return self.merge(other)

    def merge(self, other):
        if other.n == 0:
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        return self

    @property
    def variance(self):
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def estimate(self, manifest=None):
        se = math.sqrt(self.variance / self.n) if self.n > 1 else 0.0
        return MCEstimate(self.mean, se, self.n, dict(manifest or {}))


def mc_accumulate(stream):
    acc = Accumulator()
    for x in stream:
        acc.update(float(x))
    return acc.estimate()


def run_batches(fn, replicas, batch, threads=1):
    """fn(start, count) over fixed replica batches; results in batch order regardless of threads."""
    starts = list(range(0, replicas, batch))
    jobs = [(s, min(batch, replicas - s)) for s in starts]
    if threads <= 1 or len(jobs) == 1:
        return [fn(s, c) for s, c in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _replica_seeds(seed, start, count):
    return derive_seeds(seed, seeding.TAG_REPLICA, np.arange(start, start + count))


def _keys(seeds, tag):
    return np.array([stream_key(int(s), tag) for s in seeds], dtype=np.uint64)


def _manifest(seed, **kw):
    return {"seed": int(seed), "backend": BACKEND, **kw}


# rescaling ----------------------------------------------------------------------

@dataclass(frozen=True)
class RescaledProfile:
    t: float
    x: np.ndarray
    mass: np.ndarray

    @property
    def total(self):
        return math.fsum(self.mass)

    def integrate(self, phi):
        return math.fsum(self.mass * phi(self.x))


def rescale_profile(rho, eps):
    xs = np.array(rho.support, dtype=np.float64)
    m = np.array([rho.masses[x] for x in rho.support], dtype=np.float64)
    return RescaledProfile(eps * eps * rho.time, eps * xs, m)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function, zero outside [knots[0], knots[-1]]."""

    knots: tuple
    values: tuple

    def __call__(self, x):
        return np.interp(x, self.knots, self.values, left=0.0, right=0.0)

    @classmethod
    def triangle(cls, center=0.0, half_width=1.0, height=1.0):
        return cls((center - half_width, center, center + half_width), (0.0, height, 0.0))

    @property
    def support(self):
        return self.knots[0], self.knots[-1]

    def integral(self):
        k, v = np.array(self.knots), np.array(self.values)
        return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(k)))

    def product_integral(self, other):
        """Exact int f g: Simpson's rule is exact for the quadratic on each merged interval."""
        pts = np.union1d(self.knots, other.knots)
        a, b = pts[:-1], pts[1:]
        m = 0.5 * (a + b)
        fg = lambda x: self(x) * other(x)  # noqa: E731
        return float(np.sum((b - a) / 6.0 * (fg(a) + 4.0 * fg(m) + fg(b))))


# speeds ---------------------------------------------------------------------------

def speed_estimate(p, eps, T, replicas, seed, threads=1, batch=2000):
    """Rescaled right edge of supp(rho_T) / T for rho_0 = delta_0 under the net family at scale eps.

    The right edge moves up exactly when omega > 0 at its own site, so only the
    omega values along it are drawn.
    """
    _, _, bplus = stickiness_and_speeds(p)
    if math.isinf(bplus):
        raise InfiniteSpeed("right speed is infinite")
    mu = mu_k_net_family(p, eps)
    table = mu.sampling_table()
    steps = int(round(T / eps**2))

    def job(start, count):
        seeds = _replica_seeds(seed, start, count)
        x = core.rightmost_walk(*table, _keys(seeds, seeding.TAG_OMEGA_COMPONENT),
                                _keys(seeds, seeding.TAG_OMEGA_VALUE), 0, 0, steps)
        return eps * np.asarray(x, dtype=np.float64) / (steps * eps**2)

    acc = Accumulator()
    for vals in run_batches(job, replicas, batch, threads):
        acc.update_batch(vals)
    return acc.estimate(_manifest(seed, eps=eps, T=T, steps=steps, target=bplus))


# nets -------------------------------------------------------------------------------

def density_estimate(b_minus, b_plus, t, replicas, seed, threads=1, batch=200):
    """Fraction of even sites at time t reached by the net from every site at time 0.

    Each replica is a ring of width 2t + 2, wide enough that no backward light
    cone wraps around; every replica contributes the mean over its sites.
    """
    from .environment import pair_probabilities

    p_sep, p_plus = pair_probabilities(b_minus, b_plus)
    W = 2 * t + 2
    occ0 = (np.arange(W) % 2 == 0).astype(np.uint8)

    def job(start, count):
        out = np.empty(count)
        for i, s in enumerate(_replica_seeds(seed, start, count)):
            key = stream_key(int(s), seeding.TAG_PAIR)
            al, ar = core.fill_pair(key, 0, 0, W, t, p_sep, p_plus)
            hist = np.asarray(core.reach_evolve(al, ar, occ0, 0, t, True))
            out[i] = hist[-1].sum() / (W // 2)
        return out

    acc = Accumulator()
    for vals in run_batches(job, replicas, batch, threads):
        acc.update_batch(vals)
    return acc.estimate(_manifest(seed, b_minus=b_minus, b_plus=b_plus, t=t, ring=W))


def relevant_count_estimate(b_minus, b_plus, U, replicas, seed, S=0, threads=1, batch=4):
    """Relevant separation points in [S, U) per even-site column, on rings of width 2(U - S) + 2."""
    from .environment import pair_probabilities
    from .nets import relevance_masks

    p_sep, p_plus = pair_probabilities(b_minus, b_plus)
    W = 2 * (U - S) + 2

    def job(start, count):
        out = np.empty(count)
        for i, s in enumerate(_replica_seeds(seed, start, count)):
            key = stream_key(int(s), seeding.TAG_PAIR)
            al, ar = (np.asarray(a) for a in core.fill_pair(key, 0, S, W, U - S, p_sep, p_plus))
            F, D = relevance_masks(al, ar, 0, S, S, U, True)
            rel = (al < ar) & (F == 1) & (D == 1)
            out[i] = rel.sum() / (W // 2)
        return out

    acc = Accumulator()
    for vals in run_batches(job, replicas, batch, threads):
        acc.update_batch(vals)
    return acc.estimate(_manifest(seed, b_minus=b_minus, b_plus=b_plus, S=S, U=U, ring=W))


# invariant law -----------------------------------------------------------------------

def invariant_family(p, eps):
    """Scaling family for the invariant-law check: net family if b < inf, else Beta(a, a)."""
    try:
        net_constants(p)
        return mu_k_net_family(p, eps), "net"
    except Exception as exc:  # InfiniteB
        nu = p.nu.dropped_zeros()
        lebesgue_multiple = not nu.atoms and len(nu.beta) == 1 and nu.beta[0][:2] == (1.0, 1.0)
        if lebesgue_multiple and p.drift == 0.0:
            return le_jan_raimond_family(nu.beta[0][2], eps), "beta"
        raise ValueError("no finite-eps family available for this (drift, nu)") from exc


def two_point_sums(mu, steps, radius):
    """S_N(d) = sum_{d0 even} P_{d0}[D_N = d] for even |d| <= radius.

    D is the gap between two walkers under the averaged law: from 0 it moves
    +-2 w.p. int q(1-q) mu each, elsewhere +-2 w.p. p(1-p) each, p = int q mu.
    """
    pr = mu.integral(1, 0)
    a = pr * (1.0 - pr)
    a0 = mu.integral(1, 1)
    h = radius // 2 + steps + 1
    v = np.ones(2 * h + 1)
    jump = np.full(2 * h + 1, a)
    jump[h] = a0
    for _ in range(steps):
        out = v * (1.0 - 2.0 * jump)
        out[1:] += (v * jump)[:-1]
        out[:-1] += (v * jump)[1:]
        v = out
    r = radius // 2
    return np.arange(-r, r + 1) * 2, v[h - r:h + r + 1]


def invariant_second_moment_exact(mu, eps, steps, phi, psi):
    """Exact E[translate-averaged int rho phi * int rho psi] for the lattice started from 2 eps per even site."""
    lo = min(phi.support[0], psi.support[0])
    hi = max(phi.support[1], psi.support[1])
    span = int(math.ceil((hi - lo) / eps)) + 2
    radius = span + (span % 2)
    d, S = two_point_sums(mu, steps, radius)
    u = np.arange(int(math.floor(phi.support[0] / eps)) - 1, int(math.ceil(phi.support[1] / eps)) + 2)
    g = phi(eps * u)
    C = np.array([np.dot(g, psi(eps * (u + dd))) for dd in d])
    return 2.0 * eps * eps * math.fsum(S * C)


@dataclass
class InvariantEstimate:
    T: float
    steps: int
    first: MCEstimate
    second: MCEstimate
    excess: MCEstimate
    first_target: float
    excess_target: float
    second_exact: float


def _ring_correlate(rho, g_ring):
    """A(s) = sum_x rho(x) g(x - s) on the ring, all shifts s at once."""
    return np.fft.irfft(np.fft.rfft(rho) * np.conj(np.fft.rfft(g_ring)), n=rho.size)


def _ring_kernel(f, eps, L):
    d = np.arange(L)
    d = np.where(d > L // 2, d - L, d)
    return f(eps * d)


def invariant_moment_estimate(p, eps, T, window_width, replicas, seed, phi, psi,
                              threads=1, batch=8):
    """Moments of the profile started from Lebesgue measure (mass 2 eps per even site).

    ``T`` may be a list; one run records every requested time.
    ``window_width`` is the ring width in lattice sites.  The second moment
    averages over all ring translates.  The first moment averages over
    disjoint translates, one per block at least as wide as the support of
    phi, which keeps it unbiased with an honest standard error.
    """
    Ts = sorted(T) if isinstance(T, (list, tuple)) else [T]
    mu, _ = invariant_family(p, eps)
    steps = [int(round(t / eps**2)) for t in Ts]
    N = max(steps)
    lo = min(phi.support[0], psi.support[0])
    hi = max(phi.support[1], psi.support[1])
    need = 2 * N + int(math.ceil((hi - lo) / eps)) + 2
    L = int(window_width)
    if L < need or L % 2:
        raise WindowTooSmall(f"ring width {L} must be even and >= {need} for horizon {N}")
    table = mu.sampling_table()
    rho0 = np.where(np.arange(L) % 2 == 0, 2.0 * eps, 0.0)
    snaps = np.array(steps, dtype=np.int64)
    gphi = _ring_kernel(phi, eps, L)
    gpsi = _ring_kernel(psi, eps, L)
    int_phi, int_psi = phi.integral(), psi.integral()
    block = int(math.ceil((phi.support[1] - phi.support[0]) / eps)) + 2
    block += block % 2
    shifts = np.arange(0, L - block + 1, block)

    def job(start, count):
        rows = []
        for s in _replica_seeds(seed, start, count):
            ck = stream_key(int(s), seeding.TAG_OMEGA_COMPONENT)
            vk = stream_key(int(s), seeding.TAG_OMEGA_VALUE)
            hist = np.asarray(core.hw_evolve_hashed(*table, ck, vk, 0, 0, rho0, N, snaps, True))
            vals = []
            for rho in hist:
                A = _ring_correlate(rho, gphi)
                B = _ring_correlate(rho, gpsi)
                vals.append((float(np.mean(A[shifts])), float(np.mean(A * B))))
            rows.append(vals)
        return np.array(rows)

    chunks = run_batches(job, replicas, batch, threads)
    data = np.concatenate(chunks, axis=0)
    out = []
    nu_mass = p.nu.total_mass
    for i, (t, n) in enumerate(zip(Ts, steps)):
        first = Accumulator().update_batch(data[:, i, 0]).estimate()
        second = Accumulator().update_batch(data[:, i, 1]).estimate()
        excess = Accumulator().update_batch(data[:, i, 1] - int_phi * int_psi).estimate()
        exact = invariant_second_moment_exact(mu, eps, n, phi, psi)
        out.append(InvariantEstimate(
            t, n, first, second, excess, int_phi,
            phi.product_integral(psi) / (2.0 * nu_mass), exact,
        ))
    return out
