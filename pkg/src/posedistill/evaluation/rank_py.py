"""Pure numpy/Python ranking kernel (fallback when the extension is absent).

Must stay arithmetically identical to the compiled kernel in rank_cy.pyx:
stable argsort per query, sequential precision accumulation, ties broken by
gallery index.
"""

import numpy as np


def rank_scan(distances, q_ids, q_cams, g_ids, g_cams, max_rank):
    """Per-query CMC hits, average precision, and the camera-filter mask.

    Gallery entries sharing both identity and camera with the query are
    excluded. Returns (cmc_hits (nq, max_rank) int8, ap (nq,) float64 with
    NaN for queries without any valid positive, valid_mask (nq, ng) uint8).
    """
    nq, ng = distances.shape
    cmc_hits = np.zeros((nq, max_rank), dtype=np.int8)
    ap = np.full(nq, np.nan, dtype=np.float64)
    valid_mask = np.zeros((nq, ng), dtype=np.uint8)

    for q in range(nq):
        valid = ~((g_ids == q_ids[q]) & (g_cams == q_cams[q]))
        valid_mask[q] = valid
        order = np.argsort(distances[q], kind="stable")
        kept = order[valid[order]]
        matches = g_ids[kept] == q_ids[q]
        hit_positions = np.nonzero(matches)[0]
        if hit_positions.size == 0:
            continue
        first = int(hit_positions[0])
        if first < max_rank:
            cmc_hits[q, first:] = 1
        acc = 0.0
        for h, pos in enumerate(hit_positions, start=1):
            acc += h / (pos + 1.0)
        ap[q] = acc / hit_positions.size
    return cmc_hits, ap, valid_mask
