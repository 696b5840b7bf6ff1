"""Discrete nets: reachable sets, density oracles, relevant separation points."""
import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from . import seeding
from ._backend import core
from .environment import ArrowField, MarkField
from .errors import BadSpeeds, MissingMark, OutOfWindow
from .seeding import stream_key
from .walks import KernelRow


@dataclass(frozen=True)
class ReachSet:
    time: int
    positions: tuple

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(sorted(int(x) for x in self.positions)))
        if any((x + self.time) % 2 for x in self.positions):
            raise ValueError("parity mismatch")


def reach_history(pair, A, t0, t):
    """Occupancy rows (t - t0 + 1, nx) of the net started from A x {t0}."""
    w = pair.window
    A = sorted(set(int(a) for a in A))
    if any((a + t0) % 2 for a in A):
        raise ValueError("starting set must consist of even sites")
    w.require_cone(A, t0, t)
    occ0 = np.zeros(w.nx, dtype=np.uint8)
    occ0[[w.col(a) for a in A]] = 1
    return np.asarray(core.reach_evolve(pair.alpha_l, pair.alpha_r, occ0, w.row(t0), t - t0, False))


def reachable_set(pair, A, t0, t):
    hist = reach_history(pair, A, t0, t)
    return ReachSet(t, np.nonzero(hist[-1])[0] + pair.window.x_min)


def reachable_brute_force(pair, A, t0, t):
    """Enumerate every net path from A x {t0}; exponential, for small windows only."""
    w = pair.window
    ends = set()

    def walk(x, u):
        if u == t:
            ends.add(x)
            return
        r, c = w.row(u), w.col(x)
        for a in {int(pair.alpha_l[r, c]), int(pair.alpha_r[r, c])}:
            walk(x + a, u + 1)

    for a in A:
        walk(int(a), t0)
    return ReachSet(t, ends)


# density oracles ------------------------------------------------------------------

def _gammas(b_minus, b_plus):
    if not (-1.0 <= b_minus <= b_plus <= 1.0):
        raise BadSpeeds(f"need -1 <= b_minus <= b_plus <= 1, got ({b_minus}, {b_plus})")
    up = 0.25 * (1.0 - b_minus) * (1.0 + b_plus)
    down = 0.25 * (1.0 + b_minus) * (1.0 - b_plus)
    return up, down


def survival_curve(b_minus, b_plus, T):
    """P_1[tau_0 > t] for t = 0..T of the lazy walk D (up gamma_+, down gamma_-)."""
    up, down = _gammas(b_minus, b_plus)
    hold = 1.0 - up - down
    v = np.zeros(T + 2)
    v[1] = 1.0
    out = np.empty(T + 1)
    out[0] = 1.0
    for k in range(1, T + 1):
        new = hold * v
        new[1:] += up * v[:-1]
        new[:-1] += down * v[1:]
        new[0] = 0.0
        v = new
        out[k] = math.fsum(v)
    return out


def density_exact(b_minus, b_plus, t):
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(survival_curve(b_minus, b_plus, int(t))[-1])


def density_plateau(b_minus, b_plus):
    """Long-time limit of density_exact: 1 - gamma_- / gamma_+."""
    up, down = _gammas(b_minus, b_plus)
    return max(0.0, 1.0 - down / up) if up > 0.0 else 0.0


def psi_continuum(b, t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0):
        raise ValueError("t must be positive")
    val = np.exp(-b * b * t) / np.sqrt(np.pi * t) + 2.0 * b * ndtr(b * np.sqrt(2.0 * t))
    return float(val) if val.ndim == 0 else val


def density_table(b_minus, b_plus, eps, times, path=None):
    """Rows (t, psi_discrete, psi_continuum) at rescaled times; b = b_plus / eps."""
    steps = [int(math.floor(t / eps**2)) for t in times]
    curve = survival_curve(b_minus, b_plus, max(steps))
    b = b_plus / eps
    rows = [(t, curve[n] / (2.0 * eps), psi_continuum(b, t)) for t, n in zip(times, steps)]
    if path is not None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "psi_discrete", "psi_continuum"])
            for r in rows:
                out.writerow([format(v, ".17g") for v in r])
    return rows


def relevant_expected(b_minus, b_plus, S, U):
    """Expected relevant separation points per even site column over [S, U)."""
    curve = survival_curve(b_minus, b_plus, U - S)
    s = 0.5 * (b_plus - b_minus)
    return s * math.fsum(curve[t - S] * curve[U - t - 1] for t in range(S, U))


def relevant_continuum(b, U):
    """int_0^U 2b Psi_b(t) Psi_b(U - t) dt, per unit length."""
    # t = U sin^2(phi) removes the inverse square-root endpoint singularities
    def f(phi):
        t = U * math.sin(phi) ** 2
        jac = 2.0 * U * math.sin(phi) * math.cos(phi)
        return 2.0 * b * psi_continuum(b, t) * psi_continuum(b, U - t) * jac

    val, _ = quad(f, 0.0, math.pi / 2, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


# relevant separation points ----------------------------------------------------------

def relevance_masks(al, ar, x_min, t_min, S, U, periodic):
    """Forward occupancy F[t-S] and dual occupancy D[t-S] at (x, t+1), t in [S, U).

    Both are computed by the forward reachability kernel; the dual net is the
    forward net of the field rotated by 180 degrees.
    """
    nt, nx = al.shape
    xs = np.arange(nx) + x_min
    r0 = S - t_min
    occ0 = (((xs + S) & 1) == 0).astype(np.uint8)
    F = np.asarray(core.reach_evolve(al, ar, occ0, r0, U - S - 1, periodic))
    rl, rr = al[::-1, ::-1], ar[::-1, ::-1]
    t_max = t_min + nt - 1
    x_max = x_min + nx - 1
    xr = np.arange(nx) + (1 - x_max)
    occ0r = (((xr - U) & 1) == 0).astype(np.uint8)
    Dr = np.asarray(core.reach_evolve(np.ascontiguousarray(rl), np.ascontiguousarray(rr), occ0r,
                                      t_max + 1 - U, U - S - 1, periodic))
    # rotated row k is original odd time U - k, i.e. t + 1 with t = U - 1 - k
    D = Dr[::-1, ::-1]
    return F, D


def relevant_mask(pair, S, U, periodic=False):
    w = pair.window
    if not S < U:
        raise ValueError("need S < U")
    if S < w.t_min or U > w.t_max + 1:
        raise OutOfWindow(f"slab [{S}, {U}] not covered by {w}")
    F, D = relevance_masks(pair.alpha_l, pair.alpha_r, w.x_min, w.t_min, S, U, periodic)
    sep = pair.separation[S - w.t_min:U - w.t_min]
    return sep & (F == 1) & (D == 1)


def relevant_separation_points(pair, S, U, periodic=False):
    mask = relevant_mask(pair, S, U, periodic)
    rows, cols = np.nonzero(mask)
    return [(int(c) + pair.window.x_min, int(r) + S) for r, c in zip(rows, cols)]


# webs inside nets ----------------------------------------------------------------------

def sample_web_in_net(pair, r=None, marks=None, seed=0):
    """Arrow field between alpha_l and alpha_r: at separation sites pick alpha_r w.p. r or the mark."""
    sep = pair.separation
    if marks is not None:
        vals = marks.values if isinstance(marks, MarkField) else MarkField.from_dict(pair.window, marks).values
        if np.any(sep & np.isnan(vals)):
            raise MissingMark("separation site without a mark")
        prob_sep = vals
    elif r is not None:
        if not 0.0 <= r <= 1.0:
            raise ValueError("r must lie in [0,1]")
        prob_sep = np.full(pair.window.shape, float(r))
    else:
        raise ValueError("give r or marks")
    prob = np.where(sep, prob_sep, np.where(pair.alpha_l == 1, 1.0, 0.0))
    key = stream_key(seed, seeding.TAG_WEB_IN_NET)
    alpha = np.asarray(core.fill_alpha(np.ascontiguousarray(prob), key, pair.window.x_min,
                                       pair.window.t_min))
    alpha = np.where(sep, alpha, pair.alpha_l).astype(np.int8)
    return ArrowField(pair.window, alpha, seed)


def net_flow_kernel(pair, marks, x, s, t):
    """Mass splits mark / 1 - mark at separation sites and follows the arrow elsewhere."""
    w = pair.window
    if (x + s) % 2:
        raise ValueError(f"({x}, {s}) is not an even site")
    w.require_cone([x], s, t)
    vals = marks.values if isinstance(marks, MarkField) else MarkField.from_dict(w, marks).values
    row = {x: 1.0}
    for u in range(s, t):
        r = w.row(u)
        new = {}
        for y, m in sorted(row.items()):
            c = w.col(y)
            if pair.alpha_l[r, c] < pair.alpha_r[r, c]:
                q = vals[r, c]
                if np.isnan(q):
                    raise MissingMark(f"no mark at ({y}, {u})")
                new[y + 1] = new.get(y + 1, 0.0) + q * m
                new[y - 1] = new.get(y - 1, 0.0) + (1.0 - q) * m
            else:
                y2 = y + int(pair.alpha_l[r, c])
                new[y2] = new.get(y2, 0.0) + m
        row = {y: m for y, m in new.items() if m > 0.0}
    return KernelRow((x, s), t, dict(sorted(row.items())))


def reach_to_csv(sets, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "x"])
        for rs in sets:
            for x in rs.positions:
                out.writerow([rs.time, x])
