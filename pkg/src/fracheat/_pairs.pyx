# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled far-field element-pair kernel; see _pairs_py for the reference version."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


def far_pairs(double[:, ::1] A, const double[::1] nodes, const long[:, ::1] elements,
              const long[::1] pair_k, const long[::1] pair_l, const double[::1] mult,
              const double[::1] xi, const double[::1] wi, double power):
    cdef Py_ssize_t p, i, j, a, b, q = xi.shape[0]
    cdef long k, l
    cdef double x0k, hk, x0l, hl, x, y, d, scale
    cdef double loc[4][4]
    cdef double vx[2]
    cdef double vy[2]
    cdef long g[4]
    for p in range(pair_k.shape[0]):
        k = pair_k[p]
        l = pair_l[p]
        x0k = nodes[elements[k, 0]]
        hk = nodes[elements[k, 1]] - x0k
        x0l = nodes[elements[l, 0]]
        hl = nodes[elements[l, 1]] - x0l
        scale = hk * hl * mult[p]
        for a in range(4):
            for b in range(4):
                loc[a][b] = 0.0
        for i in range(q):
            x = x0k + hk * xi[i]
            vx[0] = 1.0 - xi[i]
            vx[1] = xi[i]
            for j in range(q):
                y = x0l + hl * xi[j]
                d = wi[i] * wi[j] * pow(fabs(x - y), -power)
                vy[0] = -(1.0 - xi[j])
                vy[1] = -xi[j]
                loc[0][0] += d * vx[0] * vx[0]
                loc[0][1] += d * vx[0] * vx[1]
                loc[1][1] += d * vx[1] * vx[1]
                loc[2][2] += d * vy[0] * vy[0]
                loc[2][3] += d * vy[0] * vy[1]
                loc[3][3] += d * vy[1] * vy[1]
                loc[0][2] += d * vx[0] * vy[0]
                loc[0][3] += d * vx[0] * vy[1]
                loc[1][2] += d * vx[1] * vy[0]
                loc[1][3] += d * vx[1] * vy[1]
        loc[1][0] = loc[0][1]
        loc[3][2] = loc[2][3]
        loc[2][0] = loc[0][2]
        loc[3][0] = loc[0][3]
        loc[2][1] = loc[1][2]
        loc[3][1] = loc[1][3]
        g[0] = elements[k, 0]
        g[1] = elements[k, 1]
        g[2] = elements[l, 0]
        g[3] = elements[l, 1]
        for a in range(4):
            for b in range(4):
                A[g[a], g[b]] += scale * loc[a][b]
    return np.asarray(A)
