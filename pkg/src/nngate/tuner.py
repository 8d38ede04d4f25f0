"""Choosing N per (classifier, embedder) pair and greedily combining embedders."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .gate import aligned_distances, confidence_curve
from .metrics import IntegrationConfig, evaluate_curve
from .model import GainReport, NeighborCache, PredictionSet

DEFAULT_N_GRID: tuple[int, ...] = tuple(range(1, 101)) + (150, 200)


def parse_n_grid(spec: str) -> list[int]:
    """Parse ``"1-100,150,200"`` style grids. Ranges are inclusive."""
    grid: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if lo > hi:
                raise ValueError(f"empty range {part!r} in n-grid")
            grid.extend(range(lo, hi + 1))
        else:
            grid.append(int(part))
    if not grid or min(grid) < 1:
        raise ValueError(f"n-grid {spec!r} must contain positive integers")
    return sorted(set(grid))


@dataclass(frozen=True)
class TuneResult:
    classifier_name: str
    embedder_name: str
    grid: tuple[int, ...]
    per_n: Mapping[int, GainReport]
    best_n: int

    @property
    def best(self) -> GainReport:
        return self.per_n[self.best_n]

    def to_dict(self) -> dict:
        return {
            "classifier_name": self.classifier_name,
            "embedder_name": self.embedder_name,
            "grid": list(self.grid),
            "best_n": self.best_n,
            "best_normalized_confidence_gain": self.best.normalized_confidence_gain,
            "per_n": {str(n): self.per_n[n].to_dict() for n in self.grid},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TuneResult":
        grid = tuple(int(n) for n in d["grid"])
        per_n = {int(n): GainReport.from_dict(r) for n, r in d["per_n"].items()}
        return cls(d["classifier_name"], d["embedder_name"], grid, per_n, int(d["best_n"]))


def pick_best_n(per_n: Mapping[int, GainReport]) -> int:
    # max NCG; exact ties go to the smaller N
    return min(per_n, key=lambda n: (-per_n[n].normalized_confidence_gain, n))


def tune_n(
    cache: NeighborCache,
    preds: PredictionSet,
    grid: Sequence[int] = DEFAULT_N_GRID,
    cfg: IntegrationConfig = IntegrationConfig(),
    threads: int | None = None,
) -> TuneResult:
    """Evaluate the Normalized Confidence Gain for each N and keep the best."""
    grid = tuple(grid)
    if not grid:
        raise ValueError("empty N grid")
    too_deep = [n for n in grid if n > cache.k]
    if too_deep:
        raise ValueError(f"N values {too_deep[:5]} exceed neighbor-cache depth k={cache.k}")

    def one(n: int) -> GainReport:
        return evaluate_curve(confidence_curve(cache, preds, n), cfg)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, grid))
    else:
        reports = [one(n) for n in grid]
    per_n = dict(zip(grid, reports))
    return TuneResult(preds.classifier_name, cache.embedder_name, grid, per_n, pick_best_n(per_n))


@dataclass(frozen=True)
class PlannedModel:
    embedder_name: str
    best_n: int
    normalized_confidence_gain: float


@dataclass(frozen=True)
class CombinationPlan:
    per_model_coverage: float
    ordered_models: tuple[PlannedModel, ...]


def plan_combination(
    best_ns: Mapping[str, int],
    training_gains: Mapping[str, float],
    per_model_coverage: float,
) -> CombinationPlan:
    """Order embedders by descending training NCG, ties by name."""
    if not 0.0 < per_model_coverage < 1.0:
        raise ValueError(f"per-model coverage must lie in (0, 1), got {per_model_coverage}")
    missing = set(best_ns) ^ set(training_gains)
    if missing:
        raise ValueError(f"best N and training gain given for different embedders: {sorted(missing)}")
    names = sorted(best_ns, key=lambda m: (-training_gains[m], m))
    return CombinationPlan(
        per_model_coverage,
        tuple(PlannedModel(m, int(best_ns[m]), float(training_gains[m])) for m in names),
    )


@dataclass(frozen=True)
class CombinedDecision:
    sample_id: str
    accepted_by: str | None
    total_coverage: float


def accept_count(coverage: float, total: int) -> int:
    """``ceil(coverage * total)``, tolerant of products like ``0.3 * 10``."""
    return max(1, min(total, math.ceil(round(coverage * total, 9))))


def coverage_threshold(nth: np.ndarray, coverage: float) -> float:
    """Smallest distance threshold accepting at least ``ceil(coverage * total)`` samples."""
    return float(np.sort(nth)[accept_count(coverage, nth.size) - 1])


def combine(
    caches: Sequence[tuple[str, NeighborCache, int]],
    preds: PredictionSet,
    per_model_coverage: float,
    training_gains: Mapping[str, float],
) -> tuple[list[CombinedDecision], float, float]:
    """Greedy union of per-embedder acceptance sets.

    Each embedder's threshold is the coverage quantile of its best-N
    distances over *all* samples, so alone it accepts
    ``ceil(coverage * total)`` samples plus any ties. A sample is credited
    to the first embedder in plan order that accepts it.

    Returns the per-sample decisions, the accuracy over accepted samples and
    the total coverage.
    """
    if not caches:
        raise ValueError("no embedders to combine")
    names = [name for name, _, _ in caches]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate embedder names: {names}")
    plan = plan_combination({m: n for m, _, n in caches}, training_gains, per_model_coverage)
    by_name = {name: (cache, n) for name, cache, n in caches}

    total = len(preds)
    owner = np.full(total, -1, dtype=np.int64)
    correct = None
    for rank, model in enumerate(plan.ordered_models):
        cache, n = by_name[model.embedder_name]
        try:
            nth, correct = aligned_distances(cache, preds, n)
        except ValueError as exc:
            raise ValueError(f"embedder {model.embedder_name!r}: {exc}") from None
        accepted = nth <= coverage_threshold(nth, per_model_coverage)
        owner[(owner < 0) & accepted] = rank

    taken = owner >= 0
    total_coverage = float(taken.sum() / total)
    accuracy = float(correct[taken].mean())
    decisions = [
        CombinedDecision(
            sid,
            plan.ordered_models[o].embedder_name if o >= 0 else None,
            total_coverage,
        )
        for sid, o in zip(preds.sample_ids, owner.tolist())
    ]
    return decisions, accuracy, total_coverage
