# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled retrieval kernel: greedy word alignment scoring over a corpus."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _cos(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double ab = 0.0, aa = 0.0, bb = 0.0
    cdef Py_ssize_t k
    for k in range(d):
        ab += a[k] * b[k]
        aa += a[k] * a[k]
        bb += b[k] * b[k]
    if aa == 0.0 or bb == 0.0:
        return 0.0
    return ab / (sqrt(aa) * sqrt(bb))


cdef double _score_one(
    const double[:, ::1] q,
    const double[:, ::1] q_unit,
    const double[:, ::1] c,
    const double[:, ::1] c_unit,
    Py_ssize_t lo,
    Py_ssize_t hi,
    double threshold,
    char* used,
    char* matched,
    double* r1,
    double* r2,
) noexcept nogil:
    cdef Py_ssize_t n_q = q.shape[0], d = q.shape[1]
    cdef Py_ssize_t m, n, k, best_n, rest_q = 0, rest_c = 0
    cdef double best, s, sem_int = 0.0, sem_diff, total
    for n in range(hi - lo):
        used[n] = 0
    for m in range(n_q):
        matched[m] = 0
        best = -INFINITY
        best_n = -1
        for n in range(hi - lo):
            if used[n]:
                continue
            s = 0.0
            for k in range(d):
                s += q_unit[m, k] * c_unit[lo + n, k]
            if s > best:
                best = s
                best_n = n
        if best_n >= 0 and best > threshold:
            sem_int += best
            used[best_n] = 1
            matched[m] = 1
    for k in range(d):
        r1[k] = 0.0
        r2[k] = 0.0
    for m in range(n_q):
        if not matched[m]:
            rest_q += 1
            for k in range(d):
                r1[k] += q[m, k]
    for n in range(hi - lo):
        if not used[n]:
            rest_c += 1
            for k in range(d):
                r2[k] += c[lo + n, k]
    if rest_q == 0 and rest_c == 0:
        sem_diff = 0.0
    else:
        sem_diff = (rest_q if rest_q > rest_c else rest_c) * (1.0 - _cos(r1, r2, d))
    total = sem_int + sem_diff
    if total > 0.0:
        return sem_int / total
    return 0.0


def _unit_rows(x):
    norms = np.sqrt((x * x).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    return np.ascontiguousarray(x / safe[:, None])


def semantic_scores(q_emb, corpus_emb, offsets, double threshold):
    cdef const double[:, ::1] q = np.ascontiguousarray(q_emb, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(corpus_emb, dtype=np.float64)
    cdef const double[:, ::1] q_unit = _unit_rows(np.asarray(q))
    cdef const double[:, ::1] c_unit = _unit_rows(np.asarray(c))
    cdef cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n_cand = off.shape[0] - 1, k, widest = 0
    out = np.empty(max(n_cand, 0), dtype=np.float64)
    cdef double[::1] res = out
    for k in range(n_cand):
        if off[k + 1] - off[k] > widest:
            widest = off[k + 1] - off[k]
    cdef Py_ssize_t d = q.shape[1]
    cdef char* used = <char*> malloc(widest + 1)
    cdef char* matched = <char*> malloc(q.shape[0] + 1)
    cdef double* r1 = <double*> malloc((d + 1) * sizeof(double))
    cdef double* r2 = <double*> malloc((d + 1) * sizeof(double))
    if used == NULL or matched == NULL or r1 == NULL or r2 == NULL:
        free(used); free(matched); free(r1); free(r2)
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_cand):
                res[k] = _score_one(q, q_unit, c, c_unit, off[k], off[k + 1], threshold, used, matched, r1, r2)
    finally:
        free(used)
        free(matched)
        free(r1)
        free(r2)
    return out
