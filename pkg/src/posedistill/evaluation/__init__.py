"""Evaluation: feature extraction, distances, CMC/mAP ranking, complexity.

The ranking scan has two interchangeable kernels: a compiled Cython
extension (built by setup.py) and a pure numpy/Python fallback. The
compiled one is preferred when importable; POSEDISTILL_RANK_BACKEND
(``python`` or ``cython``) overrides the choice.
"""

import os

from ..errors import ConfigurationError
from . import rank_py

try:
    from . import _rank_cy
except ImportError:
    _rank_cy = None


def available_backends():
    backends = {"python": rank_py.rank_scan}
    if _rank_cy is not None:
        backends["cython"] = _rank_cy.rank_scan
    return backends


def get_rank_backend(name=None):
    """Resolve a kernel by name, env var, or availability."""
    backends = available_backends()
    name = name or os.environ.get("POSEDISTILL_RANK_BACKEND")
    if name is None:
        name = "cython" if "cython" in backends else "python"
    if name not in backends:
        raise ConfigurationError(
            f"ranking backend {name!r} unavailable; have {sorted(backends)}"
        )
    return backends[name]


from .distance import distance_matrix  # noqa: E402
from .features import extract_features, read_pgft, write_pgft  # noqa: E402
from .ranking import RankingReport, evaluate_ranking  # noqa: E402
from .complexity import complexity_report  # noqa: E402

__all__ = [
    "RankingReport",
    "available_backends",
    "complexity_report",
    "distance_matrix",
    "evaluate_ranking",
    "extract_features",
    "get_rank_backend",
    "read_pgft",
    "write_pgft",
]
