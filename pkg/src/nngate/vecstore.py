"""Exact cosine nearest-neighbour search over a base embedding set."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EmbeddingSet, NeighborCache, validate_embedding_set

# queries scored per einsum call; bounds the (block, n_base) distance buffer
QUERY_BLOCK = 256


@dataclass(frozen=True, eq=False)
class VectorIndex:
    base_set_name: str
    row_ids: tuple[str, ...]
    normalized: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.normalized.shape[1])

    def __len__(self) -> int:
        return len(self.row_ids)


def _unit_rows(vectors: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero-norm vector at {ids[zero[0]]}")
    return vectors / norms[:, None]


def build_index(base: EmbeddingSet) -> VectorIndex:
    """L2-normalise every base vector, keeping insertion order.

    Raises ValueError naming the first offending sample for zero vectors,
    and listing all problems for any other invariant violation.
    """
    problems = validate_embedding_set(base)
    if problems:
        raise ValueError("invalid base set: " + "; ".join(problems))
    unit = _unit_rows(base.vectors, base.ids) if len(base) else base.vectors.copy()
    unit.setflags(write=False)
    return VectorIndex(base.name, tuple(base.ids), unit)


def _block_distances(index: VectorIndex, unit_queries: np.ndarray) -> np.ndarray:
    # einsum evaluates every (query, row) dot with the same summation order,
    # so identical rows give bit-identical distances; BLAS gemm does not.
    sims = np.einsum("qd,nd->qn", unit_queries, index.normalized, optimize=False)
    np.subtract(1.0, sims, out=sims)
    return np.clip(sims, 0.0, 2.0, out=sims)


def _select_k(dist_row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances, ties broken by row position."""
    n = dist_row.size
    if k >= n:
        return np.argsort(dist_row, kind="stable")
    kth = np.partition(dist_row, k - 1)[k - 1]
    cand = np.flatnonzero(dist_row <= kth)
    order = np.lexsort((cand, dist_row[cand]))
    return cand[order[:k]]


def _check_queries(index: VectorIndex, queries: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    if queries.shape[1] != index.dim:
        raise ValueError(f"dimension mismatch: query dim {queries.shape[1]} vs index dim {index.dim}")
    return _unit_rows(queries, ids)


def knn(index: VectorIndex, query_vector: Sequence[float], k: int) -> list[tuple[str, float]]:
    """The ``min(k, len(index))`` nearest rows as ascending (id, distance) pairs."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query_vector, dtype=np.float64).reshape(1, -1)
    unit = _check_queries(index, q, ["<query>"])
    if len(index) == 0:
        return []
    dist = _block_distances(index, unit)[0]
    sel = _select_k(dist, k)
    return [(index.row_ids[j], float(dist[j])) for j in sel]


def _search_block(index: VectorIndex, unit_block: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    dist = _block_distances(index, unit_block)
    idx = np.empty((unit_block.shape[0], k), dtype=np.int64)
    for i, row in enumerate(dist):
        idx[i] = _select_k(row, k)
    return idx, np.take_along_axis(dist, idx, axis=1)


def build_neighbor_cache(
    index: VectorIndex,
    queries: EmbeddingSet,
    k: int,
    embedder_name: str | None = None,
    threads: int | None = None,
) -> NeighborCache:
    """Run :func:`knn` for every query; the cache depth is ``min(k, len(index))``.

    Blocks of queries may be searched on a thread pool; rows are always
    assembled in query order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise ValueError("cannot search an empty index")
    problems = validate_embedding_set(queries)
    if problems:
        raise ValueError("invalid query set: " + "; ".join(problems))
    depth = min(k, len(index))
    name = embedder_name if embedder_name is not None else index.base_set_name
    if len(queries) == 0:
        return NeighborCache(index.base_set_name, name, depth, (), np.zeros((0, depth), dtype=object),
                             np.zeros((0, depth)))
    unit = _check_queries(index, queries.vectors, queries.ids)
    starts = range(0, len(queries), QUERY_BLOCK)
    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _search_block(index, unit[s:s + QUERY_BLOCK], depth), starts))
    else:
        parts = [_search_block(index, unit[s:s + QUERY_BLOCK], depth) for s in starts]
    idx = np.concatenate([p[0] for p in parts])
    dist = np.concatenate([p[1] for p in parts])
    row_ids = np.array(index.row_ids, dtype=object)
    return NeighborCache(index.base_set_name, name, depth, queries.ids, row_ids[idx], dist)
