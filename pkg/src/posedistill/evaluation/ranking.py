"""CMC / mAP ranking evaluation with cross-camera filtering."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import EvaluationError
from . import get_rank_backend


@dataclass
class RankingReport:
    """Distance matrix plus the metrics computed from it."""

    distances: np.ndarray
    cmc: dict  # rank -> accuracy
    map: float
    per_query_ap: np.ndarray  # NaN where the query had no valid positive
    valid_mask: np.ndarray  # (n_q, n_g) after camera filtering
    num_valid_queries: int
    num_skipped_queries: int
    feature_used: str = "G"
    backend: str = "python"
    cmc_curve: np.ndarray = field(default=None, repr=False)

    def to_json(self):
        return json.dumps(
            {
                "feature_used": self.feature_used,
                "cmc": {str(k): v for k, v in self.cmc.items()},
                "map": self.map,
                "num_valid_queries": self.num_valid_queries,
                "num_skipped_queries": self.num_skipped_queries,
                "per_query_ap": [None if np.isnan(a) else a for a in self.per_query_ap],
                "backend": self.backend,
            },
            indent=1,
            sort_keys=True,
        )

    def csv_row(self):
        row = {"feature": self.feature_used}
        row.update({f"rank{k}": self.cmc[k] for k in sorted(self.cmc)})
        row["map"] = self.map
        row["valid_queries"] = self.num_valid_queries
        row["skipped_queries"] = self.num_skipped_queries
        return row

    def save(self, json_path, csv_path):
        with open(json_path, "w") as fh:
            fh.write(self.to_json())
        row = self.csv_row()
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)


def evaluate_ranking(
    distances,
    q_ids,
    q_cams,
    g_ids,
    g_cams,
    ranks=(1, 5, 10),
    feature_used="G",
    backend=None,
):
    """Rank every query against the gallery and aggregate CMC/mAP.

    Gallery entries with the query's identity AND camera are excluded per
    query; queries left without any valid positive are skipped (counted in
    the report). Ties in distance resolve by gallery index.
    """
    distances = np.ascontiguousarray(distances, dtype=np.float64)
    q_ids = np.ascontiguousarray(q_ids, dtype=np.int64)
    q_cams = np.ascontiguousarray(q_cams, dtype=np.int64)
    g_ids = np.ascontiguousarray(g_ids, dtype=np.int64)
    g_cams = np.ascontiguousarray(g_cams, dtype=np.int64)

    max_rank = min(max(ranks), distances.shape[1])
    kernel = get_rank_backend(backend)
    backend_name = "cython" if kernel.__module__.endswith("_rank_cy") else "python"
    cmc_hits, ap, valid_mask = kernel(distances, q_ids, q_cams, g_ids, g_cams, max_rank)

    valid = ~np.isnan(ap)
    num_valid = int(valid.sum())
    if num_valid == 0:
        raise EvaluationError("no query has a valid cross-camera positive")

    curve = np.zeros(max_rank, dtype=np.float64)
    for k in range(max_rank):
        hits = 0
        for q in range(len(ap)):
            if valid[q]:
                hits += int(cmc_hits[q, k])
        curve[k] = hits / num_valid

    acc = 0.0
    for q in range(len(ap)):
        if valid[q]:
            acc += float(ap[q])
    mean_ap = acc / num_valid

    cmc = {k: float(curve[min(k, max_rank) - 1]) for k in ranks}
    return RankingReport(
        distances=distances,
        cmc=cmc,
        map=mean_ap,
        per_query_ap=ap,
        valid_mask=valid_mask.astype(bool),
        num_valid_queries=num_valid,
        num_skipped_queries=int(len(ap) - num_valid),
        feature_used=feature_used,
        backend=backend_name,
        cmc_curve=curve,
    )
