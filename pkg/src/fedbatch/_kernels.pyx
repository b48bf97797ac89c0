# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see _kernels_py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def minmax_compositions(comm, quantum, long B):
    cdef double[::1] T = np.ascontiguousarray(comm, dtype=np.float64)
    cdef double[::1] q = np.ascontiguousarray(quantum, dtype=np.float64)
    cdef Py_ssize_t K = T.shape[0]
    cdef cnp.int64_t[::1] b = np.ones(K, dtype=np.int64)
    best_alloc = np.zeros(K, dtype=np.int64)
    cdef cnp.int64_t[::1] best_b = best_alloc
    cdef double best = INFINITY, worst, lat
    cdef Py_ssize_t k, j
    cdef long used
    if K == 1:
        best_b[0] = B
        return T[0] + B * q[0], best_alloc
    # odometer over (b_1..b_{K-1}) in lexicographic order; b_K is the remainder
    b[K - 2] = 0
    while True:
        j = K - 2
        while j >= 0:
            b[j] += 1
            used = 0
            for k in range(K - 1):
                used += b[k]
            if used <= B - 1:
                break
            b[j] = 1
            j -= 1
        if j < 0:
            break
        b[K - 1] = B - used
        worst = -INFINITY
        for k in range(K):
            lat = T[k] + b[k] * q[k]
            if lat > worst:
                worst = lat
        if worst < best:
            best = worst
            for k in range(K):
                best_b[k] = b[k]
    return best, best_alloc


def greedy_fill(comm, quantum, counts, long extra, double cap):
    cdef double[::1] T = np.ascontiguousarray(comm, dtype=np.float64)
    cdef double[::1] q = np.ascontiguousarray(quantum, dtype=np.float64)
    out = np.array(counts, dtype=np.int64)
    cdef cnp.int64_t[::1] n = out
    cdef Py_ssize_t K = T.shape[0], k, pick
    cdef double tol = 1e-12 * (fabs(cap) if fabs(cap) > 1.0 else 1.0)
    cdef double lat, slack, best_slack, best_lat
    cdef long i
    for i in range(extra):
        pick = -1
        best_slack = -INFINITY
        for k in range(K):
            lat = T[k] + n[k] * q[k]
            if lat + q[k] <= cap + tol:
                slack = (cap - lat) / q[k]
                if slack > best_slack:
                    best_slack = slack
                    pick = k
        if pick < 0:
            best_lat = INFINITY
            for k in range(K):
                lat = T[k] + (n[k] + 1) * q[k]
                if lat < best_lat:
                    best_lat = lat
                    pick = k
        n[pick] += 1
    return out


def local_sgd_devices(w, curvature, double lr, noise_scale, z):
    cdef double[:, :, ::1] Z = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(curvature, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(noise_scale, dtype=np.float64)
    cdef double[::1] w0 = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t K = Z.shape[0], H = Z.shape[1], D = Z.shape[2], k, t, i
    out = np.empty((K, D), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double x
    for k in range(K):
        for i in range(D):
            x = w0[i]
            for t in range(H):
                x = x - lr * (c[i] * x + s[k] * Z[k, t, i])
            o[k, i] = x
    return out
