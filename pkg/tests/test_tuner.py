import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_cache, make_preds
from nngate.gate import confidence_curve
from nngate.metrics import IntegrationConfig, evaluate_curve
from nngate.model import GainReport
from nngate.synth import SynthConfig, generate_synthetic
from nngate.tuner import (
    DEFAULT_N_GRID,
    TuneResult,
    accept_count,
    combine,
    parse_n_grid,
    pick_best_n,
    plan_combination,
    tune_n,
)
from nngate.vecstore import build_index, build_neighbor_cache
from oracles import quantile_accept

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def random_case(rng, q=40, k=10):
    cache = make_cache(np.sort(rng.uniform(0, 2, (q, k)), axis=1))
    return cache, make_preds((rng.random(q) < 0.6).tolist())


def test_parse_n_grid():
    assert parse_n_grid("1-3,7,5") == [1, 2, 3, 5, 7]
    assert tuple(parse_n_grid("1-100,150,200")) == DEFAULT_N_GRID
    for bad in ("", "0-3", "5-2"):
        with pytest.raises(ValueError):
            parse_n_grid(bad)


def test_singleton_grid(rng):
    cache, preds = random_case(rng)
    assert tune_n(cache, preds, [1]).best_n == 1


def test_tune_matches_direct_evaluation(rng):
    cache, preds = random_case(rng)
    res = tune_n(cache, preds, range(1, 11))
    for n in range(1, 11):
        assert res.per_n[n] == evaluate_curve(confidence_curve(cache, preds, n), IntegrationConfig())
    best = max(res.per_n.values(), key=lambda r: r.normalized_confidence_gain)
    assert res.best.normalized_confidence_gain == best.normalized_confidence_gain


def test_tune_rejects_deep_n(rng):
    cache, preds = random_case(rng, k=5)
    with pytest.raises(ValueError, match="depth"):
        tune_n(cache, preds, [3, 6])


def test_tie_goes_to_smaller_n():
    r = GainReport(0.5, 0.1, 0.45, 0.2222)
    worse = GainReport(0.5, 0.0, 0.45, 0.0)
    assert pick_best_n({7: r, 3: r, 1: worse}) == 3


def test_tune_threads_deterministic(rng):
    cache, preds = random_case(rng)
    a = tune_n(cache, preds, range(1, 11), threads=1)
    b = tune_n(cache, preds, range(1, 11), threads=4)
    assert a.to_dict() == b.to_dict()


def test_tune_result_json_round_trip(rng):
    cache, preds = random_case(rng)
    res = tune_n(cache, preds, [1, 2, 5])
    again = TuneResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert again == res


def test_constructed_n4_dataset():
    base, queries, preds = generate_synthetic(SynthConfig.load(CONFIGS / "n4_dominant.json"))
    cache = build_neighbor_cache(build_index(base), queries, 50)
    res = tune_n(cache, preds, range(1, 9))
    assert res.best_n == 4
    ncg = {n: res.per_n[n].normalized_confidence_gain for n in res.grid}
    assert all(ncg[4] > ncg[n] for n in (1, 2, 3))


def test_plan_orders_by_gain_then_name():
    plan = plan_combination({"b": 1, "a": 2, "c": 3}, {"b": 0.4, "a": 0.4, "c": 0.5}, 0.3)
    assert [m.embedder_name for m in plan.ordered_models] == ["c", "a", "b"]
    with pytest.raises(ValueError):
        plan_combination({"a": 1}, {"a": 0.1}, 1.0)


def test_accept_count_is_robust_to_float_products():
    assert accept_count(0.3, 10) == 3
    assert accept_count(0.7, 10) == 7
    assert accept_count(0.31, 10) == 4
    assert accept_count(0.001, 10) == 1


def test_single_model_equals_own_gate(rng):
    cache, preds = random_case(rng)
    decisions, acc, total = combine([("m", cache, 3)], preds, 0.4, {"m": 0.1})
    mask = quantile_accept(cache.distances[:, 2].tolist(), 0.4)
    correct = [r.correct for r in preds.records]
    assert total == sum(mask) / len(mask)
    assert acc == pytest.approx(sum(c for c, m in zip(correct, mask) if m) / sum(mask), abs=1e-15)
    assert [d.accepted_by == "m" for d in decisions] == mask


def test_identical_models_add_nothing(rng):
    cache, preds = random_case(rng)
    _, _, total = combine([("a", cache, 2), ("b", cache, 2)], preds, 0.25, {"a": 0.3, "b": 0.2})
    assert total == 0.25


def test_disjoint_models_sum():
    n = 20
    near, far = 0.05, 1.5
    da = [[near] if i < 6 else [far + i * 0.01] for i in range(n)]
    db = [[near] if 6 <= i < 12 else [far + i * 0.01] for i in range(n)]
    ids = [f"s{i}" for i in range(n)]
    preds = make_preds([True] * n, ids)
    decisions, acc, total = combine(
        [("a", make_cache(da, ids), 1), ("b", make_cache(db, ids), 1)], preds, 0.3, {"a": 0.9, "b": 0.8}
    )
    assert total == pytest.approx(0.6, abs=1 / n)
    owners = [d.accepted_by for d in decisions]
    assert owners[:6] == ["a"] * 6 and owners[6:12] == ["b"] * 6


def test_combine_rejects_id_mismatch(rng):
    cache, preds = random_case(rng)
    other = make_cache(cache.distances[:-1])
    with pytest.raises(ValueError, match="embedder 'b'"):
        combine([("a", cache, 1), ("b", other, 1)], preds, 0.5, {"a": 1.0, "b": 0.5})


@st.composite
def combos(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    q = int(rng.integers(1, 40))
    models = int(rng.integers(1, 5))
    ids = [f"s{i}" for i in range(q)]
    caches = []
    for m in range(models):
        d = np.sort(np.round(rng.uniform(0, 2, (q, 4)), int(rng.integers(1, 4))), axis=1)
        caches.append((f"m{m}", make_cache(d, ids), int(rng.integers(1, 5))))
    gains = {name: float(np.round(rng.uniform(), 1)) for name, _, _ in caches}
    preds = make_preds((rng.random(q) < 0.5).tolist(), ids)
    cov = float(rng.uniform(0.01, 0.99))
    return caches, preds, cov, gains


@given(combos())
def test_total_coverage_lower_bound(case):
    caches, preds, cov, gains = case
    _, _, total = combine(caches, preds, cov, gains)
    assert total >= cov - 1 / len(preds)


@given(combos())
def test_adding_a_model_never_lowers_coverage(case):
    caches, preds, cov, gains = case
    _, _, total = combine(caches, preds, cov, gains)
    if len(caches) > 1:
        _, _, fewer = combine(caches[:-1], preds, cov, {k: gains[k] for k, _, _ in caches[:-1]})
        assert total >= fewer


@given(combos(), st.data())
def test_accepted_set_is_order_independent(case, data):
    caches, preds, cov, gains = case
    perm = data.draw(st.permutations(list(gains)))
    reordered = {name: float(len(perm) - i) for i, name in enumerate(perm)}
    a, acc_a, tot_a = combine(caches, preds, cov, gains)
    b, acc_b, tot_b = combine(caches, preds, cov, reordered)
    assert {d.sample_id for d in a if d.accepted_by} == {d.sample_id for d in b if d.accepted_by}
    assert (acc_a, tot_a) == (acc_b, tot_b)


@given(combos())
def test_union_matches_quantile_oracle(case):
    caches, preds, cov, gains = case
    decisions, _, total = combine(caches, preds, cov, gains)
    masks = [quantile_accept(c.distances[:, n - 1].tolist(), cov) for _, c, n in caches]
    union = [any(col) for col in zip(*masks)]
    assert [d.accepted_by is not None for d in decisions] == union
    assert total == sum(union) / len(union)
    order = sorted(range(len(caches)), key=lambda i: (-gains[caches[i][0]], caches[i][0]))
    for j, d in enumerate(decisions):
        first = next((caches[i][0] for i in order if masks[i][j]), None)
        assert d.accepted_by == first


@given(combos())
def test_combine_deterministic(case):
    caches, preds, cov, gains = case
    assert combine(caches, preds, cov, gains) == combine(caches, preds, cov, gains)


def test_every_grid_point_reported(rng):
    cache, preds = random_case(rng, k=12)
    res = tune_n(cache, preds, [1, 5, 12])
    assert sorted(res.per_n) == [1, 5, 12] and res.grid == (1, 5, 12)
    assert list(itertools.chain(res.to_dict()["per_n"])) == ["1", "5", "12"]
