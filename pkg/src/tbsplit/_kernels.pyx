# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

DEF FCFS = 0
DEF LCFS = 1
DEF RANDOM = 2


def lindley_backlog(times, double rate, double u0=0.0):
    cdef const double[::1] a = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double t0 = 0.0, w = u0, c = 0.0, u
    for i in range(n):
        u = w + c - rate * (a[i] - t0)
        if u <= 0.0:
            out[i] = 0.0
            t0 = a[i]
            w = 1.0
            c = 0.0
        else:
            out[i] = u
            c += 1.0
    return out_arr


def bucket_departures(times, double rate, double burst, double x0, int order=FCFS,
                      uniforms=None):
    cdef const double[::1] a = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], i, j, k, head = 0, tail = 0, p = 0
    dep_arr = np.empty(n)
    cdef double[::1] dep = dep_arr
    cdef const double[::1] u
    cdef double t_ref = 0.0, x_ref = x0, m = 0.0, x, nd, t
    if n == 0:
        return dep_arr
    if burst < 1.0:
        dep_arr[:] = np.inf
        return dep_arr
    if order == RANDOM:
        if uniforms is None or len(uniforms) < n:
            raise ValueError("RANDOM order needs one uniform variate per job")
        u = np.ascontiguousarray(uniforms, dtype=np.float64)
    else:
        u = np.zeros(1)
    q_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] q = q_arr

    i = 0
    while True:
        if i < n:
            t = a[i]
        else:
            t = INFINITY
        while tail > head:
            nd = t_ref + (m + 1.0 - x_ref) / rate
            if nd > t:
                break
            if order == FCFS:
                j = q[head]
                head += 1
            elif order == LCFS:
                tail -= 1
                j = q[tail]
            else:
                k = head + <Py_ssize_t>(u[p] * (tail - head))
                p += 1
                j = q[k]
                tail -= 1
                q[k] = q[tail]
            dep[j] = nd
            m += 1.0
        if i == n:
            break
        if tail > head:
            q[tail] = i
            tail += 1
        else:
            x = x_ref + rate * (t - t_ref) - m
            if x >= burst:
                t_ref = t
                x_ref = burst
                m = 0.0
                x = burst
            if x >= 1.0:
                dep[i] = t
                m += 1.0
            else:
                head = 0
                tail = 0
                q[tail] = i
                tail += 1
        i += 1
    return dep_arr


def compensated_cumsum(values):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    out_arr = np.zeros(n + 1)
    cdef double[::1] out = out_arr
    cdef double s = 0.0, c = 0.0, t, x
    for i in range(n):
        x = v[i]
        t = s + x
        if fabs(s) >= fabs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i + 1] = s + c
    return out_arr
