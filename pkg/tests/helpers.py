import numpy as np

from nngate.model import NeighborCache, PredictionSet


def make_cache(distances, query_ids=None, k=None, neighbor_ids=None):
    distances = np.asarray(distances, dtype=float)
    q, depth = distances.shape
    query_ids = query_ids or [f"s{i}" for i in range(q)]
    if neighbor_ids is None:
        neighbor_ids = np.array([[f"b{j}" for j in range(depth)]] * q, dtype=object).reshape(q, depth)
    return NeighborCache("base", "emb", k or depth, tuple(query_ids), neighbor_ids, distances)


def make_preds(correct, ids=None, name="clf"):
    ids = ids or [f"s{i}" for i in range(len(correct))]
    return PredictionSet(name, tuple((sid, "a" if c else "b", "a") for sid, c in zip(ids, correct)))
