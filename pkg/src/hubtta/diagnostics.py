"""k-occurrence analysis, hubness metrics, and Recall@K.

The k-occurrence vector counts, per gallery item, how many queries rank it in
their top-k. Six scalar metrics summarize how unbalanced that vector is; a
perfectly balanced vector scores 0 on all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from .core import rank_rows
from .errors import BadK, DegenerateMean, DegenerateSum, MissingGroundTruth


def k_occurrence(rankings: np.ndarray, k: int) -> np.ndarray:
    """Count, for each gallery item, its appearances in the queries' top-k.

    ``rankings`` is (Q, N_G): each row a permutation of gallery indices,
    best first. The output sums to k * Q.
    """
    rankings = np.asarray(rankings)
    n_gallery = rankings.shape[1]
    if not 1 <= k <= n_gallery:
        raise BadK(f"k must lie in [1, {n_gallery}], got {k}")
    return np.bincount(rankings[:, :k].ravel(), minlength=n_gallery)


def skewness(x: np.ndarray, return_flag: bool = False):
    """Third standardized moment with population (biased) moments.

    Returns 0.0 for vectors with (near-)zero variance; pass
    ``return_flag=True`` to also get that degeneracy flag.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return (0.0, True) if return_flag else 0.0
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 <= 1e-24:
        return (0.0, True) if return_flag else 0.0
    value = float(np.mean(d**3) / m2**1.5)
    return (value, False) if return_flag else value


def truncated_skewness(n_k: np.ndarray, return_flag: bool = False):
    """Skewness of the k-occurrence vector with antihubs (zero counts) removed."""
    n_k = np.asarray(n_k)
    return skewness(n_k[n_k > 0], return_flag=return_flag)


def atkinson_index(x: np.ndarray, epsilon: float = 0.5) -> float:
    """Atkinson inequality index with aversion ``epsilon`` in (0, 1)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    if mu <= 0:
        raise DegenerateMean("Atkinson index requires a positive mean")
    ede = np.mean(x ** (1.0 - epsilon)) ** (1.0 / (1.0 - epsilon))
    return float(1.0 - ede / mu)


def robin_hood_index(x: np.ndarray) -> float:
    """Hoover index: the share of total mass that would move to equalize counts."""
    x = np.asarray(x, dtype=np.float64)
    total = x.sum()
    if total <= 0:
        raise DegenerateSum("Robin Hood index requires positive total mass")
    return float(0.5 * np.abs(x - x.mean()).sum() / total)


def antihub_rate(n_k: np.ndarray) -> float:
    """Fraction of gallery items never retrieved in any top-k list."""
    n_k = np.asarray(n_k)
    return float(np.mean(n_k == 0))


def hub_occurrence(n_k: np.ndarray, k: int, hub_factor: float = 2.0) -> float:
    """Share of all top-k slots occupied by hubs (items with count > hub_factor * k)."""
    n_k = np.asarray(n_k, dtype=np.float64)
    total = n_k.sum()
    if total <= 0:
        raise DegenerateSum("hub occurrence requires positive total mass")
    hubs = n_k > hub_factor * k
    return float(n_k[hubs].sum() / total)


def recall_at_k(
    rankings: np.ndarray,
    ground_truth: np.ndarray,
    ks: Iterable[int] = (1, 5, 10),
    strict: bool = True,
) -> Dict[int, float]:
    """Percentage of queries whose true gallery match ranks within the top K.

    ``ground_truth[i]`` is the single correct gallery index for query ``i``.
    With ``strict`` (full permutations) every index must fall inside the
    gallery; ``strict=False`` accepts truncated top-K lists, where an absent
    match simply counts as a miss.
    """
    rankings = np.asarray(rankings)
    ground_truth = np.asarray(ground_truth)
    n_queries, width = rankings.shape
    if ground_truth.shape != (n_queries,):
        raise MissingGroundTruth(
            f"need one gallery index per query ({n_queries}), got shape {ground_truth.shape}"
        )
    if np.any(ground_truth < 0) or (strict and np.any(ground_truth >= width)):
        raise MissingGroundTruth("ground-truth indices outside the gallery range")
    matches = rankings == ground_truth[:, None]
    found = matches.any(axis=1)
    positions = np.where(found, np.argmax(matches, axis=1), width)
    return {int(k): float(100.0 * np.mean(positions < k)) for k in ks}


@dataclass
class HubnessReport:
    """k-occurrence vector, the six hubness scalars, and optional Recall@K."""

    k: int
    n_k: np.ndarray
    skew: float
    trunc_skew: float
    atkinson: float
    robin_hood: float
    antihub_rate: float
    hub_occurrence: float
    recall_at: Dict[int, float] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "n_k": [int(c) for c in self.n_k],
            "skew": float(self.skew),
            "trunc_skew": float(self.trunc_skew),
            "atkinson": float(self.atkinson),
            "robin_hood": float(self.robin_hood),
            "antihub_rate": float(self.antihub_rate),
            "hub_occurrence": float(self.hub_occurrence),
            "recall_at": {str(k): float(v) for k, v in self.recall_at.items()},
            "flags": dict(self.flags),
        }


def hubness_report(
    rankings: np.ndarray,
    k: int = 15,
    ground_truth: Optional[np.ndarray] = None,
    recall_ks: Iterable[int] = (1, 5, 10),
    epsilon: float = 0.5,
    hub_factor: float = 2.0,
) -> HubnessReport:
    """Full diagnostics for a set of per-query gallery rankings."""
    n_k = k_occurrence(rankings, k)
    skew, skew_flag = skewness(n_k, return_flag=True)
    trunc, trunc_flag = truncated_skewness(n_k, return_flag=True)
    recall = {} if ground_truth is None else recall_at_k(rankings, ground_truth, recall_ks)
    return HubnessReport(
        k=k,
        n_k=n_k,
        skew=skew,
        trunc_skew=trunc,
        atkinson=atkinson_index(n_k, epsilon),
        robin_hood=robin_hood_index(n_k),
        antihub_rate=antihub_rate(n_k),
        hub_occurrence=hub_occurrence(n_k, k, hub_factor),
        recall_at=recall,
        flags={"skew_degenerate": skew_flag, "trunc_skew_degenerate": trunc_flag},
    )


def rankings_from_scores(scores: np.ndarray) -> np.ndarray:
    """Deterministic descending rankings for a (Q, N_G) score matrix."""
    return rank_rows(scores)
