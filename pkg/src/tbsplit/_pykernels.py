"""Pure-Python kernels. Same algorithms, same results as ``_kernels.pyx``."""

import math

import numpy as np

FCFS, LCFS, RANDOM = 0, 1, 2


def lindley_backlog(times, rate, u0=0.0):
    """Unfinished work (token units) found by each arrival, U(a_i^-).

    Evaluates ``U_i = max(0, U_{i-1} + 1 - rate * (a_i - a_{i-1}))`` in
    closed form within each busy period, ``w + c - rate * (a_i - t0)``
    from the period's start ``t0``, so rounding does not accumulate.
    """
    times = [float(t) for t in times]
    n = len(times)
    out = np.empty(n)
    t0, w, c = 0.0, u0, 0.0
    for i in range(n):
        a = times[i]
        u = w + c - rate * (a - t0)
        if u <= 0.0:
            out[i] = 0.0
            t0, w, c = a, 1.0, 0.0
        else:
            out[i] = u
            c += 1.0
    return out


def bucket_departures(times, rate, burst, x0, order=FCFS, uniforms=None):
    """Departure instant of every job through one token bucket.

    The token level is kept relative to an anchor ``(t_ref, x_ref)`` minus
    the ``m`` tokens consumed since, so departure instants inside a busy
    stretch are computed in one step instead of by accumulation. The anchor
    moves only when the bucket fills up.
    """
    times = [float(t) for t in times]
    n = len(times)
    dep = np.empty(n)
    if n == 0:
        return dep
    if burst < 1.0:
        dep[:] = math.inf
        return dep
    if order == RANDOM and (uniforms is None or len(uniforms) < n):
        raise ValueError("RANDOM order needs one uniform variate per job")
    t_ref, x_ref, m = 0.0, x0, 0.0
    q = [0] * n
    head = tail = 0
    p = 0

    def pop():
        nonlocal head, tail, p
        if order == FCFS:
            j = q[head]
            head += 1
        elif order == LCFS:
            tail -= 1
            j = q[tail]
        else:
            k = head + int(uniforms[p] * (tail - head))
            p += 1
            j = q[k]
            tail -= 1
            q[k] = q[tail]
        return j

    for i in range(n):
        a = times[i]
        while tail > head:
            nd = t_ref + (m + 1.0 - x_ref) / rate
            if nd > a:
                break
            dep[pop()] = nd
            m += 1.0
        if tail > head:
            q[tail] = i
            tail += 1
            continue
        x = x_ref + rate * (a - t_ref) - m
        if x >= burst:
            t_ref, x_ref, m, x = a, burst, 0.0, burst
        if x >= 1.0:
            dep[i] = a
            m += 1.0
        else:
            if head == tail:
                head = tail = 0
            q[tail] = i
            tail += 1
    while tail > head:
        dep[pop()] = t_ref + (m + 1.0 - x_ref) / rate
        m += 1.0
    return dep


def compensated_cumsum(values):
    """Running sums with Neumaier compensation; ``out[0] == 0``."""
    n = len(values)
    out = np.zeros(n + 1)
    s = c = 0.0
    for i, v in enumerate(values.tolist() if hasattr(values, "tolist") else values):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i + 1] = s + c
    return out
