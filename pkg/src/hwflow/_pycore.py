"""NumPy reference implementation of the lattice kernels.

Every function here has a twin in ``_core.pyx`` with the same signature that
must return bit-identical arrays.  Arrays are indexed ``[row, col]`` with
``row = t - t_min`` and ``col = x - x_min``; sites with ``x + t`` odd carry
zeros (or NaN for ω in ``fill_omega``).
"""
import numpy as np
from scipy.special import betaincinv

from .seeding import GOLDEN, hash_counters, mix64_array, unit_array

BACKEND = "numpy"

_U32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def _counters(x, t):
    x = np.asarray(x, dtype=np.int64).astype(np.uint64) & _U32
    t = np.asarray(t, dtype=np.int64).astype(np.uint64) & _U32
    return (t << _S32) | x


def _walker_counters(t, i):
    t = np.asarray(t, dtype=np.int64).astype(np.uint64)
    i = np.asarray(i, dtype=np.int64).astype(np.uint64)
    return (t << np.uint64(16)) | i


def quantile(cumw, kind, p1, p2, u1, vkey, counters):
    """Map component uniforms to samples; Beta picks draw a second uniform."""
    u1 = np.asarray(u1, dtype=np.float64)
    comp = np.searchsorted(cumw, u1, side="right")
    np.minimum(comp, len(cumw) - 1, out=comp)
    out = p1[comp].astype(np.float64)
    is_beta = kind[comp] == 1
    if is_beta.any():
        c = comp[is_beta]
        u2 = unit_array(hash_counters(vkey, np.asarray(counters)[is_beta]))
        out[is_beta] = betaincinv(p1[c], p2[c], u2)
    return out


def _even_mask(x_min, t_min, nx, nt):
    t = np.arange(nt, dtype=np.int64)[:, None] + t_min
    x = np.arange(nx, dtype=np.int64)[None, :] + x_min
    return ((x + t) & 1) == 0, x, t


def fill_omega(cumw, kind, p1, p2, ckey, vkey, x_min, t_min, nx, nt):
    even, x, t = _even_mask(x_min, t_min, nx, nt)
    out = np.full((nt, nx), np.nan)
    xs = np.broadcast_to(x, (nt, nx))[even]
    ts = np.broadcast_to(t, (nt, nx))[even]
    ctr = _counters(xs, ts)
    u1 = unit_array(hash_counters(ckey, ctr))
    out[even] = quantile(cumw, kind, p1, p2, u1, vkey, ctr)
    return out


def fill_alpha(omega, key, x_min, t_min):
    nt, nx = omega.shape
    even, x, t = _even_mask(x_min, t_min, nx, nt)
    out = np.zeros((nt, nx), dtype=np.int8)
    xs = np.broadcast_to(x, (nt, nx))[even]
    ts = np.broadcast_to(t, (nt, nx))[even]
    u = unit_array(hash_counters(key, _counters(xs, ts)))
    out[even] = np.where(u < omega[even], 1, -1)
    return out


def fill_pair(key, x_min, t_min, nx, nt, p_sep, p_plus):
    """Pair field: separation with prob p_sep, else both +1 with prob p_plus."""
    even, x, t = _even_mask(x_min, t_min, nx, nt)
    al = np.zeros((nt, nx), dtype=np.int8)
    ar = np.zeros((nt, nx), dtype=np.int8)
    xs = np.broadcast_to(x, (nt, nx))[even]
    ts = np.broadcast_to(t, (nt, nx))[even]
    u = unit_array(hash_counters(key, _counters(xs, ts)))
    sep = u < p_sep
    plus = (~sep) & (u < p_sep + p_plus)
    al[even] = np.where(plus, 1, -1)
    ar[even] = np.where(sep | plus, 1, -1)
    return al, ar


def _step(rho, w, periodic):
    right = w * rho
    left = (1.0 - w) * rho
    new = np.zeros_like(rho)
    if periodic:
        new += np.roll(right, 1)
        new += np.roll(left, -1)
    else:
        new[1:] += right[:-1]
        new[:-1] += left[1:]
    return new


def hw_evolve(omega, rho0, row0, steps, periodic):
    """Mass history over ``steps`` steps; ω must be 0 at odd sites."""
    hist = np.empty((steps + 1, rho0.shape[0]))
    hist[0] = rho0
    for k in range(steps):
        hist[k + 1] = _step(hist[k], omega[row0 + k], periodic)
    return hist


def hw_evolve_hashed(cumw, kind, p1, p2, ckey, vkey, x_min, t_min, rho0, steps,
                     snaps, periodic):
    """Evolve with ω generated on the fly; returns rows at the ``snaps`` steps."""
    nx = rho0.shape[0]
    x = np.arange(nx, dtype=np.int64) + x_min
    out = np.empty((len(snaps), nx))
    rho = rho0.astype(np.float64).copy()
    want = {int(s): i for i, s in enumerate(snaps)}
    if 0 in want:
        out[want[0]] = rho
    for k in range(steps):
        t = t_min + k
        even = ((x + t) & 1) == 0
        w = np.zeros(nx)
        ctr = _counters(x[even], np.full(even.sum(), t))
        u1 = unit_array(hash_counters(ckey, ctr))
        w[even] = quantile(cumw, kind, p1, p2, u1, vkey, ctr)
        rho = _step(rho, w, periodic)
        if k + 1 in want:
            out[want[k + 1]] = rho
    return out


def reach_evolve(al, ar, occ0, row0, steps, periodic):
    nx = occ0.shape[0]
    hist = np.zeros((steps + 1, nx), dtype=np.uint8)
    hist[0] = occ0
    for k in range(steps):
        occ = hist[k].astype(bool)
        a_l = al[row0 + k]
        a_r = ar[row0 + k]
        go_r = occ & ((a_l == 1) | (a_r == 1))
        go_l = occ & ((a_l == -1) | (a_r == -1))
        if periodic:
            new = np.roll(go_r, 1) | np.roll(go_l, -1)
        else:
            new = np.zeros(nx, dtype=bool)
            new[1:] |= go_r[:-1]
            new[:-1] |= go_l[1:]
        hist[k + 1] = new
    return hist


def npoint_paths(cumw, kind, p1, p2, ckeys, vkeys, wkeys, x0, t0, steps):
    """Walkers driven by per-replica hashed environments (averaged law)."""
    R = len(ckeys)
    n = len(x0)
    out = np.empty((R, steps + 1, n), dtype=np.int32)
    pos = np.broadcast_to(np.asarray(x0, dtype=np.int64), (R, n)).copy()
    out[:, 0] = pos
    idx = np.arange(n, dtype=np.int64)
    ckeys = np.asarray(ckeys, dtype=np.uint64)
    vkeys = np.asarray(vkeys, dtype=np.uint64)
    wkeys = np.asarray(wkeys, dtype=np.uint64)
    for k in range(steps):
        t = t0 + k
        ctr = _counters(pos, np.full(pos.shape, t))
        u1 = unit_array(mix64_array(ckeys[:, None] + (ctr + np.uint64(1)) * np.uint64(GOLDEN)))
        q = _quantile_rows(cumw, kind, p1, p2, u1, vkeys, ctr)
        wc = _walker_counters(np.full(n, t), idx)
        u = unit_array(mix64_array(wkeys[:, None] + (wc[None, :] + np.uint64(1)) * np.uint64(GOLDEN)))
        pos += np.where(u < q, 1, -1)
        out[:, k + 1] = pos
    return out


def _quantile_rows(cumw, kind, p1, p2, u1, vkeys, ctr):
    comp = np.searchsorted(cumw, u1, side="right")
    np.minimum(comp, len(cumw) - 1, out=comp)
    out = p1[comp].astype(np.float64)
    is_beta = kind[comp] == 1
    if is_beta.any():
        keys = np.broadcast_to(vkeys[:, None], u1.shape)[is_beta]
        c = ctr[is_beta]
        u2 = unit_array(mix64_array(keys + (c + np.uint64(1)) * np.uint64(GOLDEN)))
        cc = comp[is_beta]
        out[is_beta] = betaincinv(p1[cc], p2[cc], u2)
    return out


def npoint_paths_env(omega, x_min, t_min, wkeys, x0, t0, steps):
    """Walkers in one fixed environment, one walker stream per replica."""
    R = len(wkeys)
    n = len(x0)
    out = np.empty((R, steps + 1, n), dtype=np.int32)
    pos = np.broadcast_to(np.asarray(x0, dtype=np.int64), (R, n)).copy()
    out[:, 0] = pos
    idx = np.arange(n, dtype=np.int64)
    wkeys = np.asarray(wkeys, dtype=np.uint64)
    for k in range(steps):
        t = t0 + k
        q = omega[t - t_min, pos - x_min]
        wc = _walker_counters(np.full(n, t), idx)
        u = unit_array(mix64_array(wkeys[:, None] + (wc[None, :] + np.uint64(1)) * np.uint64(GOLDEN)))
        pos += np.where(u < q, 1, -1)
        out[:, k + 1] = pos
    return out


def rightmost_walk(cumw, kind, p1, p2, ckeys, vkeys, x0, t0, steps):
    """Right edge of the support of a mass started at x0: moves up iff ω > 0."""
    ckeys = np.asarray(ckeys, dtype=np.uint64)
    vkeys = np.asarray(vkeys, dtype=np.uint64)
    pos = np.full(len(ckeys), x0, dtype=np.int64)
    for k in range(steps):
        ctr = _counters(pos, np.full(pos.shape, t0 + k))
        u1 = unit_array(mix64_array(ckeys + (ctr + np.uint64(1)) * np.uint64(GOLDEN)))
        q = _quantile_rows(cumw, kind, p1, p2, u1[:, None], vkeys, ctr[:, None])[:, 0]
        pos += np.where(q > 0.0, 1, -1)
    return pos
