# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def is_acyclic(adj_in):
    cdef cnp.uint8_t[:, ::1] adj = np.ascontiguousarray(adj_in, dtype=np.uint8)
    cdef Py_ssize_t d = adj.shape[0]
    cdef Py_ssize_t i, j, top = 0, seen = 0
    cdef cnp.int64_t[::1] indeg = np.zeros(d, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = np.empty(d, dtype=np.int64)
    for i in range(d):
        for j in range(d):
            if adj[i, j]:
                indeg[j] += 1
    for j in range(d):
        if indeg[j] == 0:
            stack[top] = j
            top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        seen += 1
        for j in range(d):
            if adj[i, j]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    stack[top] = j
                    top += 1
    return seen == d


def full_dag_from_perm(perm_in):
    cdef cnp.int64_t[::1] perm = np.ascontiguousarray(perm_in, dtype=np.int64)
    cdef Py_ssize_t d = perm.shape[0]
    cdef Py_ssize_t a, b
    out = np.zeros((d, d), dtype=bool)
    cdef cnp.uint8_t[:, ::1] view = out.view(np.uint8)
    for a in range(d):
        for b in range(a + 1, d):
            view[perm[a], perm[b]] = 1
    return out


def rss_from_gram(cov_in, adj_in, double ridge):
    cdef const double[:, ::1] cov = np.ascontiguousarray(cov_in, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] adj = np.ascontiguousarray(adj_in, dtype=np.uint8)
    cdef Py_ssize_t d = cov.shape[0]
    rss_arr = np.empty(d)
    failed_arr = np.zeros(d, dtype=bool)
    cdef double[::1] rss = rss_arr
    cdef cnp.uint8_t[::1] failed = failed_arr.view(np.uint8)
    cdef double[:, ::1] chol = np.empty((d, d))
    cdef double[::1] w = np.empty(d)
    cdef double[::1] beta = np.empty(d)
    cdef cnp.int64_t[::1] par = np.empty(d, dtype=np.int64)
    cdef Py_ssize_t j, p, a, b, c
    cdef double s, yy, ww, bb, val
    cdef bint ok
    for j in range(d):
        p = 0
        for a in range(d):
            if adj[a, j]:
                par[p] = a
                p += 1
        yy = cov[j, j]
        if p == 0:
            rss[j] = yy if yy > 0.0 else 0.0
            continue
        ok = True
        for a in range(p):
            for b in range(a + 1):
                s = cov[par[a], par[b]]
                if a == b:
                    s += ridge
                for c in range(b):
                    s -= chol[a, c] * chol[b, c]
                if a == b:
                    if s <= 0.0:
                        ok = False
                        break
                    chol[a, a] = sqrt(s)
                else:
                    chol[a, b] = s / chol[b, b]
            if not ok:
                break
        if not ok:
            failed[j] = 1
            rss[j] = 0.0
            continue
        # forward solve L w = b
        for a in range(p):
            s = cov[par[a], j]
            for c in range(a):
                s -= chol[a, c] * w[c]
            w[a] = s / chol[a, a]
        # back solve L^T beta = w
        for a in range(p - 1, -1, -1):
            s = w[a]
            for c in range(a + 1, p):
                s -= chol[c, a] * beta[c]
            beta[a] = s / chol[a, a]
        ww = 0.0
        bb = 0.0
        for a in range(p):
            ww += w[a] * w[a]
            bb += beta[a] * beta[a]
        val = yy - ww - ridge * bb
        rss[j] = val if val > 0.0 else 0.0
    return rss_arr, failed_arr
