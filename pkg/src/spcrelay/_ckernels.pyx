# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, log2, sqrt, expm1, INFINITY

cnp.import_array()

cdef double LOG2E = 1.4426950408889634


cdef inline double _sqrt_disp(double g) nogil:
    return LOG2E * sqrt(-expm1(-2.0 * log1p(g)))


def mc_clipped_moments(u, double gamma_r, double eve_scale, double l_u, double q_eps, double q_eta):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double sq_l = sqrt(l_u)
    cdef double main = log2(1.0 + gamma_r) - _sqrt_disp(gamma_r) / sq_l * q_eps
    cdef double g_e, r, s = 0.0, s2 = 0.0
    with nogil:
        for i in range(n):
            g_e = eve_scale * (-log1p(-uv[i]))
            r = main - (log2(1.0 + g_e) + _sqrt_disp(g_e) / sq_l * q_eta)
            if r > 0.0:
                s += r
                s2 += r * r
    return s, s2


def grid_best(cap_u, pen_u, p_a, cap_d, pen_d, p_r, long l_max,
              double p_tot_a, double p_tot_r, double eps_r, double eps_b):
    cdef const double[::1] cu = np.ascontiguousarray(cap_u, dtype=np.float64)
    cdef const double[::1] pu = np.ascontiguousarray(pen_u, dtype=np.float64)
    cdef const double[::1] pa = np.ascontiguousarray(p_a, dtype=np.float64)
    cdef const double[::1] cd = np.ascontiguousarray(cap_d, dtype=np.float64)
    cdef const double[::1] pd = np.ascontiguousarray(pen_d, dtype=np.float64)
    cdef const double[::1] pr = np.ascontiguousarray(p_r, dtype=np.float64)
    cdef Py_ssize_t na = pa.shape[0], nr = pr.shape[0], i, j
    cdef long lu, ld
    cdef double best = -INFINITY, up, dn, v, dlu, dld
    cdef Py_ssize_t bi = -1, bj = -1
    cdef long bl = -1
    cdef double[::1] dn_row = np.empty(nr, dtype=np.float64)
    cdef char[::1] ok_r = np.empty(nr, dtype=np.int8)
    with nogil:
        for lu in range(1, l_max):
            ld = l_max - lu
            dlu = <double>lu
            dld = <double>ld
            for j in range(nr):
                ok_r[j] = pr[j] * dld <= p_tot_r
                dn_row[j] = (cd[j] - pd[j] / sqrt(dld)) * dld * (1.0 - eps_b)
            for i in range(na):
                if not (pa[i] * dlu <= p_tot_a):
                    continue
                up = (cu[i] - pu[i] / sqrt(dlu)) * dlu * (1.0 - eps_r)
                for j in range(nr):
                    if not ok_r[j]:
                        continue
                    dn = dn_row[j]
                    v = up if up < dn else dn
                    if v < 0.0:
                        v = 0.0
                    if v > best:
                        best = v
                        bi = i
                        bj = j
                        bl = lu
    return best, bi, bj, bl
