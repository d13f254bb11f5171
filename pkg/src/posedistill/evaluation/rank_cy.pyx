# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ranking kernel: camera-filtered CMC/AP scan per query.

Arithmetically identical to rank_py.rank_scan (same traversal order, same
sequential precision accumulation); only the per-query scan runs as C loops.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def rank_scan(
    double[:, ::1] distances,
    cnp.int64_t[::1] q_ids,
    cnp.int64_t[::1] q_cams,
    cnp.int64_t[::1] g_ids,
    cnp.int64_t[::1] g_cams,
    Py_ssize_t max_rank,
):
    cdef Py_ssize_t nq = distances.shape[0]
    cdef Py_ssize_t ng = distances.shape[1]

    cmc_np = np.zeros((nq, max_rank), dtype=np.int8)
    ap_np = np.full(nq, np.nan, dtype=np.float64)
    valid_np = np.zeros((nq, ng), dtype=np.uint8)

    cdef signed char[:, ::1] cmc = cmc_np
    cdef double[::1] ap = ap_np
    cdef unsigned char[:, ::1] valid = valid_np

    cdef Py_ssize_t q, g, t, rank, hits, first
    cdef double acc
    cdef cnp.intp_t[::1] order

    for q in range(nq):
        for g in range(ng):
            valid[q, g] = 0 if (g_ids[g] == q_ids[q] and g_cams[g] == q_cams[q]) else 1
        order = np.argsort(np.asarray(distances[q]), kind="stable")

        rank = 0
        hits = 0
        acc = 0.0
        first = -1
        for t in range(ng):
            g = order[t]
            if not valid[q, g]:
                continue
            rank += 1
            if g_ids[g] == q_ids[q]:
                hits += 1
                acc += (<double> hits) / (<double> rank)
                if first < 0:
                    first = rank - 1
        if hits > 0:
            ap[q] = acc / (<double> hits)
            if first < max_rank:
                for t in range(first, max_rank):
                    cmc[q, t] = 1

    return cmc_np, ap_np, valid_np
