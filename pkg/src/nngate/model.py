"""Domain types shared across the package.

All containers are frozen dataclasses holding read-only numpy arrays, so they
can be shared between threads without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def cosine_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """1 - cosine similarity, clipped to [0, 2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero-norm vectors")
    sim = float(np.dot(a / na, b / nb))
    return min(2.0, max(0.0, 1.0 - sim))


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Named matrix of embeddings addressed by sample id.

    ``vectors`` is stored as float64, row ``i`` belonging to ``ids[i]``.
    Construction does not validate; use :func:`validate_embedding_set`.
    """

    name: str
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vecs = np.array(self.vectors, dtype=np.float64, copy=True)
        if vecs.ndim == 1 and vecs.size == 0:
            vecs = vecs.reshape(0, 0)
        if vecs.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vecs.shape}")
        if vecs.shape[0] != len(self.ids):
            raise ValueError(f"{len(self.ids)} ids for {vecs.shape[0]} vectors")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", _readonly(vecs))

    @classmethod
    def from_items(cls, name: str, items, dim: int | None = None) -> "EmbeddingSet":
        items = list(items)
        ids = tuple(sid for sid, _ in items)
        if items:
            vectors = np.array([np.asarray(v, dtype=np.float64) for _, v in items])
        else:
            vectors = np.zeros((0, dim or 0))
        return cls(name, ids, vectors)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return zip(self.ids, self.vectors)

    def subset(self, ids: Sequence[str], name: str | None = None) -> "EmbeddingSet":
        pos = {sid: i for i, sid in enumerate(self.ids)}
        rows = [pos[sid] for sid in ids]
        return EmbeddingSet(name or self.name, tuple(ids), self.vectors[rows])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.name == other.name
            and self.ids == other.ids
            and self.vectors.shape == other.vectors.shape
            and np.array_equal(self.vectors, other.vectors)
        )

    __hash__ = None  # type: ignore[assignment]


def validate_embedding_set(emb: EmbeddingSet) -> list[str]:
    """Return every invariant violation; an empty list means the set is valid."""
    problems: list[str] = []
    if emb.dim <= 0 and len(emb) > 0:
        problems.append(f"non-positive dim {emb.dim}")
    seen: set[str] = set()
    for sid in emb.ids:
        if sid in seen:
            problems.append(f"duplicate id {sid}")
        seen.add(sid)
    norms = np.linalg.norm(emb.vectors, axis=1) if len(emb) else np.zeros(0)
    for sid, norm in zip(emb.ids, norms):
        if not np.isfinite(norm):
            problems.append(f"non-finite vector at {sid}")
        elif norm == 0.0:
            problems.append(f"zero-norm vector at {sid}")
    return problems


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    predicted_label: str
    true_label: str

    @property
    def correct(self) -> bool:
        return self.predicted_label == self.true_label


@dataclass(frozen=True)
class PredictionSet:
    classifier_name: str
    records: tuple[PredictionRecord, ...]

    def __post_init__(self) -> None:
        recs = tuple(
            r if isinstance(r, PredictionRecord) else PredictionRecord(*r)
            for r in self.records
        )
        object.__setattr__(self, "records", recs)
        seen: set[str] = set()
        for r in recs:
            if r.sample_id in seen:
                raise ValueError(f"duplicate sample_id {r.sample_id!r} in predictions")
            seen.add(r.sample_id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(r.sample_id for r in self.records)

    def correctness(self) -> dict[str, bool]:
        return {r.sample_id: r.correct for r in self.records}

    @property
    def accuracy(self) -> float:
        if not self.records:
            raise ValueError("accuracy of an empty prediction set")
        return sum(r.correct for r in self.records) / len(self.records)

    def subset(self, ids) -> "PredictionSet":
        keep = set(ids)
        return PredictionSet(self.classifier_name, tuple(r for r in self.records if r.sample_id in keep))


@dataclass(frozen=True, eq=False)
class NeighborCache:
    """Sorted cosine distances from each query to its nearest base rows.

    Row ``i`` of ``neighbor_ids`` / ``distances`` belongs to ``query_ids[i]``.
    ``k`` is the realised depth, i.e. the requested depth clamped to the
    base-set size, so every row has exactly ``k`` columns.
    """

    base_set_name: str
    embedder_name: str
    k: int
    query_ids: tuple[str, ...]
    neighbor_ids: np.ndarray
    distances: np.ndarray
    _row: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.query_ids:
            dist = np.array(self.distances, dtype=np.float64, copy=True)
            dist = dist.reshape(len(self.query_ids), -1)
        else:
            dist = np.zeros((0, self.k))
        nids = np.array(self.neighbor_ids, dtype=object, copy=True).reshape(dist.shape)
        if self.k < 1:
            raise ValueError(f"cache depth must be positive, got {self.k}")
        if dist.shape[1] != self.k:
            raise ValueError(f"entries have {dist.shape[1]} neighbors, expected k={self.k}")
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "distances", _readonly(dist))
        object.__setattr__(self, "neighbor_ids", _readonly(nids))
        row = {sid: i for i, sid in enumerate(self.query_ids)}
        if len(row) != len(self.query_ids):
            raise ValueError("duplicate query ids in neighbor cache")
        object.__setattr__(self, "_row", row)

    def __len__(self) -> int:
        return len(self.query_ids)

    def __contains__(self, sample_id: object) -> bool:
        return sample_id in self._row

    def row_of(self, sample_id: str) -> int:
        try:
            return self._row[sample_id]
        except KeyError:
            raise KeyError(f"sample {sample_id!r} not in neighbor cache") from None

    def entry(self, sample_id: str) -> list[tuple[str, float]]:
        i = self.row_of(sample_id)
        return list(zip(self.neighbor_ids[i].tolist(), self.distances[i].tolist()))

    @property
    def entries(self) -> dict[str, list[tuple[str, float]]]:
        return {sid: self.entry(sid) for sid in self.query_ids}

    def subset(self, sample_ids: Sequence[str]) -> "NeighborCache":
        rows = [self.row_of(sid) for sid in sample_ids]
        return NeighborCache(
            self.base_set_name, self.embedder_name, self.k, tuple(sample_ids),
            self.neighbor_ids[rows], self.distances[rows],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NeighborCache):
            return NotImplemented
        return (
            self.base_set_name == other.base_set_name
            and self.embedder_name == other.embedder_name
            and self.k == other.k
            and self.query_ids == other.query_ids
            and np.array_equal(self.distances, other.distances)
            and np.array_equal(self.neighbor_ids, other.neighbor_ids)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class GateParams:
    n: int
    l_threshold: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.l_threshold >= 0:
            raise ValueError(f"l_threshold must be >= 0, got {self.l_threshold}")


@dataclass(frozen=True, eq=False)
class ConfidenceCurve:
    """Accuracy on the accepted subset as a function of coverage, for one N."""

    n: int
    coverage: np.ndarray
    accuracy: np.ndarray
    acc_b: float

    def __post_init__(self) -> None:
        cov = np.array(self.coverage, dtype=np.float64, copy=True)
        acc = np.array(self.accuracy, dtype=np.float64, copy=True)
        if cov.shape != acc.shape or cov.ndim != 1:
            raise ValueError("coverage and accuracy must be 1-D arrays of equal length")
        if cov.size and (np.any(np.diff(cov) <= 0) or cov[0] <= 0 or cov[-1] > 1):
            raise ValueError("coverages must be strictly increasing within (0, 1]")
        if np.any((acc < 0) | (acc > 1)):
            raise ValueError("accuracies must lie in [0, 1]")
        if not 0.0 <= self.acc_b <= 1.0:
            raise ValueError(f"acc_b must lie in [0, 1], got {self.acc_b}")
        object.__setattr__(self, "coverage", _readonly(cov))
        object.__setattr__(self, "accuracy", _readonly(acc))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.coverage.tolist(), self.accuracy.tolist()))

    def __len__(self) -> int:
        return int(self.coverage.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfidenceCurve):
            return NotImplemented
        return (
            self.n == other.n
            and self.acc_b == other.acc_b
            and np.array_equal(self.coverage, other.coverage)
            and np.array_equal(self.accuracy, other.accuracy)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class GainReport:
    acc_b: float
    confidence_gain: float
    max_confidence_gain: float
    normalized_confidence_gain: float
    n: int | None = None
    # set when the curve had to be extended below its lowest coverage
    extrapolated_left: bool = False
    extrapolated_right: bool = False

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "acc_b": self.acc_b,
            "confidence_gain": self.confidence_gain,
            "max_confidence_gain": self.max_confidence_gain,
            "normalized_confidence_gain": self.normalized_confidence_gain,
            "extrapolated_left": self.extrapolated_left,
            "extrapolated_right": self.extrapolated_right,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainReport":
        return cls(
            acc_b=d["acc_b"],
            confidence_gain=d["confidence_gain"],
            max_confidence_gain=d["max_confidence_gain"],
            normalized_confidence_gain=d["normalized_confidence_gain"],
            n=d.get("n"),
            extrapolated_left=d.get("extrapolated_left", False),
            extrapolated_right=d.get("extrapolated_right", False),
        )
