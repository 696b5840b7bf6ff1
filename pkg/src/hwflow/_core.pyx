# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled lattice kernels; bit-identical twins of ``_pycore``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int32_t, int8_t, uint8_t
from libc.math cimport NAN
from scipy.special.cython_special cimport betaincinv

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unit(uint64_t key, uint64_t ctr) noexcept nogil:
    return <double>(mix64(key + (ctr + 1) * GOLDEN) >> 11) * INV53


cdef inline uint64_t site_ctr(int64_t x, int64_t t) noexcept nogil:
    return ((<uint64_t>t & 0xFFFFFFFFULL) << 32) | (<uint64_t>x & 0xFFFFFFFFULL)


cdef inline uint64_t walker_ctr(int64_t t, int64_t i) noexcept nogil:
    return (<uint64_t>t << 16) | <uint64_t>i


cdef inline double draw(const double[:] cumw, const int8_t[:] kind,
                        const double[:] p1, const double[:] p2,
                        uint64_t ckey, uint64_t vkey, uint64_t ctr) noexcept nogil:
    cdef double u1 = unit(ckey, ctr)
    cdef Py_ssize_t m = cumw.shape[0]
    cdef Py_ssize_t c = 0
    while c < m and cumw[c] <= u1:
        c += 1
    if c > m - 1:
        c = m - 1
    if kind[c] == 1:
        return betaincinv(p1[c], p2[c], unit(vkey, ctr))
    return p1[c]


def fill_omega(const double[:] cumw, const int8_t[:] kind, const double[:] p1, const double[:] p2,
               uint64_t ckey, uint64_t vkey, int64_t x_min, int64_t t_min,
               Py_ssize_t nx, Py_ssize_t nt):
    out_arr = np.full((nt, nx), np.nan)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t i, j
    cdef int64_t x, t
    with nogil:
        for i in range(nt):
            t = t_min + i
            for j in range(nx):
                x = x_min + j
                if ((x + t) & 1) == 0:
                    out[i, j] = draw(cumw, kind, p1, p2, ckey, vkey, site_ctr(x, t))
    return out_arr


def fill_alpha(const double[:, :] omega, uint64_t key, int64_t x_min, int64_t t_min):
    cdef Py_ssize_t nt = omega.shape[0], nx = omega.shape[1]
    out_arr = np.zeros((nt, nx), dtype=np.int8)
    cdef int8_t[:, :] out = out_arr
    cdef Py_ssize_t i, j
    cdef int64_t x, t
    with nogil:
        for i in range(nt):
            t = t_min + i
            for j in range(nx):
                x = x_min + j
                if ((x + t) & 1) == 0:
                    out[i, j] = 1 if unit(key, site_ctr(x, t)) < omega[i, j] else -1
    return out_arr


def fill_pair(uint64_t key, int64_t x_min, int64_t t_min, Py_ssize_t nx,
              Py_ssize_t nt, double p_sep, double p_plus):
    al_arr = np.zeros((nt, nx), dtype=np.int8)
    ar_arr = np.zeros((nt, nx), dtype=np.int8)
    cdef int8_t[:, :] al = al_arr
    cdef int8_t[:, :] ar = ar_arr
    cdef Py_ssize_t i, j
    cdef int64_t x, t
    cdef double u, thr = p_sep + p_plus
    with nogil:
        for i in range(nt):
            t = t_min + i
            for j in range(nx):
                x = x_min + j
                if ((x + t) & 1) == 0:
                    u = unit(key, site_ctr(x, t))
                    if u < p_sep:
                        al[i, j] = -1
                        ar[i, j] = 1
                    elif u < thr:
                        al[i, j] = 1
                        ar[i, j] = 1
                    else:
                        al[i, j] = -1
                        ar[i, j] = -1
    return al_arr, ar_arr


cdef void _step(const double[:] rho, const double[:] w, double[:] new,
                bint periodic) noexcept nogil:
    cdef Py_ssize_t nx = rho.shape[0], j, jr, jl
    cdef double m
    for j in range(nx):
        new[j] = 0.0
    for j in range(nx):
        m = rho[j]
        if m == 0.0:
            continue
        jr = j + 1
        jl = j - 1
        if periodic:
            if jr == nx:
                jr = 0
            if jl < 0:
                jl = nx - 1
        if jr < nx:
            new[jr] += w[j] * m
        if jl >= 0:
            new[jl] += (1.0 - w[j]) * m


def hw_evolve(const double[:, :] omega, const double[:] rho0, Py_ssize_t row0,
              Py_ssize_t steps, bint periodic):
    cdef Py_ssize_t nx = rho0.shape[0], k
    hist_arr = np.empty((steps + 1, nx))
    cdef double[:, :] hist = hist_arr
    hist[0, :] = rho0
    with nogil:
        for k in range(steps):
            _step(hist[k], omega[row0 + k], hist[k + 1], periodic)
    return hist_arr


def hw_evolve_hashed(const double[:] cumw, const int8_t[:] kind, const double[:] p1, const double[:] p2,
                     uint64_t ckey, uint64_t vkey, int64_t x_min, int64_t t_min,
                     const double[:] rho0, Py_ssize_t steps, const int64_t[:] snaps,
                     bint periodic):
    cdef Py_ssize_t nx = rho0.shape[0], k, j, s, ns = snaps.shape[0]
    out_arr = np.empty((ns, nx))
    cdef double[:, :] out = out_arr
    cdef double[:] rho = np.array(rho0, dtype=np.float64)
    cdef double[:] new = np.empty(nx)
    cdef double[:] w = np.zeros(nx)
    cdef double[:] tmp
    cdef int64_t t, x
    with nogil:
        for s in range(ns):
            if snaps[s] == 0:
                out[s, :] = rho
        for k in range(steps):
            t = t_min + k
            for j in range(nx):
                x = x_min + j
                if ((x + t) & 1) == 0 and rho[j] != 0.0:
                    w[j] = draw(cumw, kind, p1, p2, ckey, vkey, site_ctr(x, t))
                else:
                    w[j] = 0.0
            _step(rho, w, new, periodic)
            tmp = rho
            rho = new
            new = tmp
            for s in range(ns):
                if snaps[s] == k + 1:
                    out[s, :] = rho
    return out_arr


def reach_evolve(const int8_t[:, :] al, const int8_t[:, :] ar, const uint8_t[:] occ0,
                 Py_ssize_t row0, Py_ssize_t steps, bint periodic):
    cdef Py_ssize_t nx = occ0.shape[0], k, j, jr, jl
    hist_arr = np.zeros((steps + 1, nx), dtype=np.uint8)
    cdef uint8_t[:, :] hist = hist_arr
    cdef int8_t a, b
    hist[0, :] = occ0
    with nogil:
        for k in range(steps):
            for j in range(nx):
                if hist[k, j] == 0:
                    continue
                a = al[row0 + k, j]
                b = ar[row0 + k, j]
                jr = j + 1
                jl = j - 1
                if periodic:
                    if jr == nx:
                        jr = 0
                    if jl < 0:
                        jl = nx - 1
                if (a == 1 or b == 1) and jr < nx:
                    hist[k + 1, jr] = 1
                if (a == -1 or b == -1) and jl >= 0:
                    hist[k + 1, jl] = 1
    return hist_arr


def npoint_paths(const double[:] cumw, const int8_t[:] kind, const double[:] p1, const double[:] p2,
                 const uint64_t[:] ckeys, const uint64_t[:] vkeys, const uint64_t[:] wkeys,
                 const int64_t[:] x0, int64_t t0, Py_ssize_t steps):
    cdef Py_ssize_t R = ckeys.shape[0], n = x0.shape[0], r, k, i
    out_arr = np.empty((R, steps + 1, n), dtype=np.int32)
    cdef int32_t[:, :, :] out = out_arr
    cdef int64_t x, t
    cdef double q
    with nogil:
        for r in range(R):
            for i in range(n):
                out[r, 0, i] = <int32_t>x0[i]
            for k in range(steps):
                t = t0 + k
                for i in range(n):
                    x = out[r, k, i]
                    q = draw(cumw, kind, p1, p2, ckeys[r], vkeys[r], site_ctr(x, t))
                    if unit(wkeys[r], walker_ctr(t, i)) < q:
                        out[r, k + 1, i] = <int32_t>(x + 1)
                    else:
                        out[r, k + 1, i] = <int32_t>(x - 1)
    return out_arr


def npoint_paths_env(const double[:, :] omega, int64_t x_min, int64_t t_min,
                     const uint64_t[:] wkeys, const int64_t[:] x0, int64_t t0, Py_ssize_t steps):
    cdef Py_ssize_t R = wkeys.shape[0], n = x0.shape[0], r, k, i
    out_arr = np.empty((R, steps + 1, n), dtype=np.int32)
    cdef int32_t[:, :, :] out = out_arr
    cdef int64_t x, t
    cdef double q
    with nogil:
        for r in range(R):
            for i in range(n):
                out[r, 0, i] = <int32_t>x0[i]
            for k in range(steps):
                t = t0 + k
                for i in range(n):
                    x = out[r, k, i]
                    q = omega[t - t_min, x - x_min]
                    if unit(wkeys[r], walker_ctr(t, i)) < q:
                        out[r, k + 1, i] = <int32_t>(x + 1)
                    else:
                        out[r, k + 1, i] = <int32_t>(x - 1)
    return out_arr


def rightmost_walk(const double[:] cumw, const int8_t[:] kind, const double[:] p1, const double[:] p2,
                   const uint64_t[:] ckeys, const uint64_t[:] vkeys, int64_t x0, int64_t t0,
                   Py_ssize_t steps):
    cdef Py_ssize_t R = ckeys.shape[0], r, k
    out_arr = np.empty(R, dtype=np.int64)
    cdef int64_t[:] out = out_arr
    cdef int64_t x
    with nogil:
        for r in range(R):
            x = x0
            for k in range(steps):
                if draw(cumw, kind, p1, p2, ckeys[r], vkeys[r], site_ctr(x, t0 + k)) > 0.0:
                    x += 1
                else:
                    x -= 1
            out[r] = x
    return out_arr
