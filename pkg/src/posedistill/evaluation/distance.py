"""Query/gallery distance matrices."""

import numpy as np

from ..errors import ConfigurationError, DataError


def distance_matrix(queries, gallery, metric="cosine"):
    """(n_q, n_g) distances between feature rows.

    cosine: 1 - cosine similarity (zero-norm rows treated as zero vectors);
    euclidean: plain L2.
    """
    q = np.asarray(queries, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise DataError(
            f"feature dims do not match: {q.shape} vs {g.shape}"
        )
    if metric == "cosine":
        qn = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-12)
        gn = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)
        return 1.0 - qn @ gn.T
    if metric == "euclidean":
        diff = q[:, None, :] - g[None, :, :]
        return np.sqrt((diff * diff).sum(axis=-1))
    raise ConfigurationError(f"unknown distance metric {metric!r}")
