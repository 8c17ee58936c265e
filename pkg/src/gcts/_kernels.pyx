# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled consensus-projection loop."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def consensus_rounds(
    double[:, :, ::1] proj,
    double[:, ::1] weights,
    double[:, ::1] x0,
    double[::1] target,
    double tol,
    long max_rounds,
    bint use_target,
):
    """Run synchronous rounds until every agent is within ``tol`` of ``target``.

    Without a target the loop stops once the largest per-round change drops
    below ``tol``.  Returns ``(x, rounds, residual_trace, disagreement_trace)``.
    """
    cdef Py_ssize_t m = x0.shape[0]
    cdef Py_ssize_t n = x0.shape[1]
    cdef Py_ssize_t i, j, k, l
    cdef long r
    cdef double acc, err, worst, res, dis, step, mean_k
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    nxt_arr = np.empty((m, n), dtype=np.float64)
    d_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] nxt = nxt_arr
    cdef double[::1] d = d_arr
    res_trace = np.empty(max_rounds + 1, dtype=np.float64)
    dis_trace = np.empty(max_rounds + 1, dtype=np.float64)
    cdef double[::1] rt = res_trace
    cdef double[::1] dt = dis_trace

    r = 0
    while True:
        # residual to target and disagreement around the mean
        res = 0.0
        worst = 0.0
        dis = 0.0
        for k in range(n):
            mean_k = 0.0
            for i in range(m):
                mean_k += x[i, k]
            mean_k /= m
            for i in range(m):
                dis += (x[i, k] - mean_k) * (x[i, k] - mean_k)
                if use_target:
                    err = x[i, k] - target[k]
                    res += err * err
                    if fabs(err) > worst:
                        worst = fabs(err)
        rt[r] = sqrt(res)
        dt[r] = sqrt(dis)
        if use_target and worst <= tol:
            break
        if r >= max_rounds:
            break
        step = 0.0
        for i in range(m):
            for k in range(n):
                acc = 0.0
                for j in range(m):
                    acc += weights[i, j] * x[j, k]
                d[k] = acc - x[i, k]
            for k in range(n):
                acc = 0.0
                for l in range(n):
                    acc += proj[i, k, l] * d[l]
                nxt[i, k] = x[i, k] + acc
                if fabs(acc) > step:
                    step = fabs(acc)
        x[:, :] = nxt
        r += 1
        if not use_target and step <= tol:
            rt[r] = 0.0
            dt[r] = 0.0
            break
    return x_arr, r, res_trace[: r + 1].copy(), dis_trace[: r + 1].copy()
