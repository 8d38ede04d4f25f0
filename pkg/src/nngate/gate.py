"""Neighbour-count acceptance rule and confidence-curve construction.

A prediction is accepted when at least ``n`` base embeddings lie within
cosine distance ``l_threshold`` of the query, which is the same as the
``n``-th smallest cached distance being ``<= l_threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ConfidenceCurve, GateParams, NeighborCache, PredictionSet


def _check_depth(cache: NeighborCache, n: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > cache.k:
        raise ValueError(f"n={n} exceeds neighbor-cache depth k={cache.k}")


def nth_neighbor_distance(cache: NeighborCache, sample_id: str, n: int) -> float:
    _check_depth(cache, n)
    return float(cache.distances[cache.row_of(sample_id), n - 1])


def nth_distances(cache: NeighborCache, n: int, sample_ids=None) -> np.ndarray:
    """Vector of n-th neighbour distances, in cache order or for ``sample_ids``."""
    _check_depth(cache, n)
    col = cache.distances[:, n - 1]
    if sample_ids is None:
        return col.copy()
    rows = [cache.row_of(sid) for sid in sample_ids]
    return col[rows]


@dataclass(frozen=True, eq=False)
class GateDecisionSet:
    params: GateParams
    sample_ids: tuple[str, ...]
    accepted: np.ndarray
    nth_distance: np.ndarray

    @property
    def decisions(self) -> dict[str, tuple[bool, float]]:
        return {
            sid: (bool(a), float(d))
            for sid, a, d in zip(self.sample_ids, self.accepted, self.nth_distance)
        }

    @property
    def coverage(self) -> float:
        return float(self.accepted.mean()) if self.sample_ids else 0.0

    def accepted_ids(self) -> set[str]:
        return {sid for sid, a in zip(self.sample_ids, self.accepted) if a}


def decide(cache: NeighborCache, params: GateParams) -> GateDecisionSet:
    d = nth_distances(cache, params.n)
    return GateDecisionSet(params, cache.query_ids, d <= params.l_threshold, d)


def aligned_distances(cache: NeighborCache, preds: PredictionSet, n: int) -> tuple[np.ndarray, np.ndarray]:
    if len(preds) == 0:
        raise ValueError("empty prediction set")
    missing = [sid for sid in preds.sample_ids if sid not in cache]
    if missing:
        raise ValueError(f"{len(missing)} predicted samples missing from neighbor cache, e.g. {missing[0]!r}")
    if len(cache) != len(preds):
        extra = set(cache.query_ids) - set(preds.sample_ids)
        raise ValueError(f"{len(extra)} cached samples have no prediction, e.g. {sorted(extra)[0]!r}")
    d = nth_distances(cache, n, preds.sample_ids)
    correct = np.array([r.correct for r in preds.records], dtype=bool)
    return d, correct


def curve_from_scores(scores: np.ndarray, correct: np.ndarray, n: int = 1) -> ConfidenceCurve:
    """Sweep the acceptance threshold over every distinct score.

    One point per distinct score value: the prefix of all samples whose score
    is ``<=`` that value. Lower score means more confident.
    """
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    total = scores.size
    if total == 0:
        raise ValueError("cannot build a curve from zero samples")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    hits = np.cumsum(correct[order])
    # last position of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    m = ends + 1
    coverage = m / total
    accuracy = hits[ends] / m
    acc_b = float(hits[-1] / total)
    return ConfidenceCurve(n, coverage, accuracy, acc_b)


def confidence_curve(cache: NeighborCache, preds: PredictionSet, n: int) -> ConfidenceCurve:
    """Every achievable (coverage, accuracy) pair for fixed ``n``.

    Coverage is ``m / total`` where the ``m`` accepted samples are those whose
    n-th neighbour distance is at most the current threshold. The last point
    accepts everything and therefore equals ``(1, acc_b)``.
    """
    d, correct = aligned_distances(cache, preds, n)
    return curve_from_scores(d, correct, n)


def gated_accuracy(cache: NeighborCache, preds: PredictionSet, params: GateParams) -> tuple[float, float]:
    """(coverage, accuracy) of one fixed gate; accuracy is nan when nothing is accepted."""
    d, correct = aligned_distances(cache, preds, params.n)
    acc = d <= params.l_threshold
    cov = acc.sum() / d.size
    return float(cov), float(correct[acc].mean()) if acc.any() else float("nan")
