"""Seeded synthetic datasets and label-grouped train/test splits."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import EmbeddingSet, PredictionSet


@dataclass
class ClusterSpec:
    label: str
    count: int
    stddev: float
    acc_near: float
    acc_far: float
    center: list[float] | None = None


@dataclass
class SynthConfig:
    """Gaussian clusters in the base set; queries near a centre or on a far shell.

    Far ("out-of-distribution") queries are orthogonal to every cluster centre
    when there are fewer clusters than dimensions. ``decoys_per_ood`` adds
    that many near-copies of each far query to the base set, which makes the
    first few neighbours of an OOD query deceptively close.
    """

    clusters: list[ClusterSpec]
    dim: int = 64
    n_queries: int = 1000
    ood_fraction: float = 0.3
    ood_radius: float = 1.0
    decoys_per_ood: int = 0
    decoy_stddev: float = 1e-3
    seed: int = 0
    base_name: str = "synthetic-base"
    query_name: str = "synthetic-queries"
    classifier_name: str = "synthetic"

    def __post_init__(self) -> None:
        self.clusters = [c if isinstance(c, ClusterSpec) else ClusterSpec(**c) for c in self.clusters]
        problems = []
        if not self.clusters:
            problems.append("at least one cluster is required")
        if self.dim < 1:
            problems.append(f"dim must be positive, got {self.dim}")
        if self.n_queries < 0:
            problems.append(f"n_queries must be >= 0, got {self.n_queries}")
        if not 0.0 <= self.ood_fraction <= 1.0:
            problems.append(f"ood_fraction must lie in [0, 1], got {self.ood_fraction}")
        if self.ood_radius <= 0:
            problems.append(f"ood_radius must be positive, got {self.ood_radius}")
        if self.decoys_per_ood < 0 or self.decoy_stddev < 0:
            problems.append("decoy settings must be non-negative")
        labels = [c.label for c in self.clusters]
        if len(set(labels)) != len(labels):
            problems.append(f"cluster labels must be unique: {labels}")
        for c in self.clusters:
            if c.count < 1 or c.stddev < 0:
                problems.append(f"cluster {c.label!r}: count must be >= 1 and stddev >= 0")
            if not (0 <= c.acc_near <= 1 and 0 <= c.acc_far <= 1):
                problems.append(f"cluster {c.label!r}: accuracies must lie in [0, 1]")
            if c.center is not None and (len(c.center) != self.dim or not np.any(c.center)):
                problems.append(f"cluster {c.label!r}: center must be a nonzero {self.dim}-vector")
        if problems:
            raise ValueError("invalid synthetic config: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


def _as_f32(x: np.ndarray) -> np.ndarray:
    # keep values exactly representable in the f32 file format
    return x.astype(np.float32).astype(np.float64)


def generate_synthetic(cfg: SynthConfig) -> tuple[EmbeddingSet, EmbeddingSet, PredictionSet]:
    """Build (base, queries, predictions) deterministically from ``cfg.seed``.

    Query ids end in ``-id`` or ``-ood`` so tests can recover the ground truth.
    """
    rng = np.random.default_rng(cfg.seed)
    k = len(cfg.clusters)
    centers = np.empty((k, cfg.dim))
    for j, c in enumerate(cfg.clusters):
        if c.center is not None:
            centers[j] = c.center
        else:
            g = rng.standard_normal(cfg.dim)
            centers[j] = g / np.linalg.norm(g)

    base_ids: list[str] = []
    base_rows: list[np.ndarray] = []
    for j, c in enumerate(cfg.clusters):
        base_rows.append(centers[j] + c.stddev * rng.standard_normal((c.count, cfg.dim)))
        base_ids += [f"b{j:03d}-{i:06d}" for i in range(c.count)]

    n_ood = int(round(cfg.ood_fraction * cfg.n_queries))
    n_id = cfg.n_queries - n_ood
    weights = np.array([c.count for c in cfg.clusters], dtype=np.float64)
    weights /= weights.sum()
    id_cluster = rng.choice(k, size=n_id, p=weights)
    ood_cluster = rng.choice(k, size=n_ood, p=weights)

    id_q = centers[id_cluster] + np.array([cfg.clusters[j].stddev for j in id_cluster])[:, None] \
        * rng.standard_normal((n_id, cfg.dim))
    g = rng.standard_normal((n_ood, cfg.dim))
    if k < cfg.dim:
        q, _ = np.linalg.qr(centers.T)
        g = g - (g @ q) @ q.T
    ood_q = cfg.ood_radius * g / np.linalg.norm(g, axis=1, keepdims=True)

    is_ood = np.concatenate([np.zeros(n_id, bool), np.ones(n_ood, bool)])
    cluster = np.concatenate([id_cluster, ood_cluster])
    vectors = np.vstack([id_q, ood_q]) if cfg.n_queries else np.zeros((0, cfg.dim))
    order = rng.permutation(cfg.n_queries)
    is_ood, cluster, vectors = is_ood[order], cluster[order], vectors[order]
    qids = [f"q{i:06d}-{'ood' if o else 'id'}" for i, o in enumerate(is_ood)]

    if cfg.decoys_per_ood:
        for i in np.flatnonzero(is_ood):
            unit = vectors[i] / np.linalg.norm(vectors[i])
            noise = cfg.decoy_stddev * rng.standard_normal((cfg.decoys_per_ood, cfg.dim))
            base_rows.append(unit + noise)
            base_ids += [f"decoy-{qids[i]}-{t}" for t in range(cfg.decoys_per_ood)]

    draws = rng.random(cfg.n_queries)
    wrong_pick = rng.integers(0, max(k - 1, 1), size=cfg.n_queries)
    records = []
    for i, sid in enumerate(qids):
        spec = cfg.clusters[cluster[i]]
        p = spec.acc_far if is_ood[i] else spec.acc_near
        if draws[i] < p:
            predicted = spec.label
        elif k > 1:
            others = [c.label for c in cfg.clusters if c.label != spec.label]
            predicted = others[wrong_pick[i]]
        else:
            predicted = f"not-{spec.label}"
        records.append((sid, predicted, spec.label))

    base = EmbeddingSet(cfg.base_name, tuple(base_ids), _as_f32(np.vstack(base_rows)))
    queries = EmbeddingSet(cfg.query_name, tuple(qids), _as_f32(vectors))
    return base, queries, PredictionSet(cfg.classifier_name, tuple(records))


def make_split(
    preds: PredictionSet,
    train_fraction: float = 0.75,
    subsets: int = 3,
    seed: int = 0,
    prefix: str = "internal_test",
) -> dict[str, list[str]]:
    """Seeded train/test split with label-grouped test subsets.

    ``round(train_fraction * n)`` samples go to ``"train"``. The remaining
    samples' true labels are shuffled and dealt round-robin into ``subsets``
    groups named ``{prefix}_1 .. {prefix}_{subsets}``, so each label's test
    samples land in exactly one subset. Ids keep their input order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if subsets < 1:
        raise ValueError(f"subsets must be >= 1, got {subsets}")
    rng = np.random.default_rng(seed)
    ids = preds.sample_ids
    n_train = round(train_fraction * len(ids))
    perm = rng.permutation(len(ids))
    train_rows = set(perm[:n_train].tolist())

    test_records = [r for i, r in enumerate(preds.records) if i not in train_rows]
    labels = sorted({r.true_label for r in test_records})
    if len(labels) < subsets:
        raise ValueError(f"{len(labels)} test labels cannot fill {subsets} label-disjoint subsets")
    shuffled = [labels[i] for i in rng.permutation(len(labels))]
    group = {lab: pos % subsets for pos, lab in enumerate(shuffled)}

    out: dict[str, list[str]] = {"train": [ids[i] for i in sorted(train_rows)]}
    for g in range(subsets):
        out[f"{prefix}_{g + 1}"] = [r.sample_id for r in test_records if group[r.true_label] == g]
    return out
