import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankmedian.consensus import RankingSample, exact_kemeny, is_stochastically_transitive, pairwise_matrix
from rankmedian.data import NUMERIC, Feature, RankingDataset, Schema
from rankmedian.ensemble import (
    BaggedForest,
    aggregate_rankings,
    fit_bagged,
    largest_subpartition_aggregate,
    leaf_regions,
    predict_aggregated,
)
from rankmedian.errors import BudgetExceeded, InvalidInput
from rankmedian.mallows import SyntheticScenario, generate_scenario
from rankmedian.models import load_model
from rankmedian.perm import Permutation
from rankmedian.tree import GrowConfig, grow

P = lambda *r: Permutation(tuple(r))  # noqa: E731


def _agg(*rankings):
    return Permutation(tuple(aggregate_rankings(np.array(rankings)[:, None, :])[0]))


def test_aggregation_examples():
    assert _agg((2, 1, 3), (2, 1, 3)) == P(2, 1, 3)
    assert _agg((1, 2, 3), (1, 2, 3), (2, 1, 3)) == P(1, 2, 3)
    assert _agg((1, 2, 3), (2, 3, 1), (3, 1, 2)) == P(1, 2, 3)


def test_identity_resample_matches_grow():
    d = generate_scenario(SyntheticScenario.preset(1, 4, 1.0, seed=1), 300)
    cfg = GrowConfig(3, 15)
    forest = fit_bagged(d, 1, cfg, seed=0, bootstrap=False)
    tree = grow(d, cfg)
    assert forest.trees[0].to_json()["nodes"] == tree.to_json()["nodes"]
    assert np.array_equal(forest.predict_many(d.X), tree.predict_many(d.X))


def test_constant_data_gives_stumps():
    schema = Schema((Feature("x", NUMERIC),))
    d = RankingDataset(schema, np.random.default_rng(0).random((50, 1)), [[3, 1, 2]] * 50)
    forest = fit_bagged(d, 4, GrowConfig(3, 2), seed=2)
    assert all(t.depth == 0 and t.root.consensus == P(3, 1, 2) for t in forest.trees)


def test_noiseless_bootstrap_trees_fit_exactly():
    d = generate_scenario(SyntheticScenario.preset(1, 3, None, seed=0), 1000)
    forest = fit_bagged(d, 25, GrowConfig(3, 1), seed=7, threads=4)
    assert all(t.training_risk() == 0 for t in forest.trees)


def test_idempotence():
    d = generate_scenario(SyntheticScenario.preset(2, 4, 1.0, seed=3), 300)
    t = grow(d, GrowConfig(3, 10))
    forest = BaggedForest([t, t, t], 0, t.config)
    Q = generate_scenario(SyntheticScenario.preset(2, 4, 1.0, seed=4), 200).X
    assert np.array_equal(forest.predict_many(Q), t.predict_many(Q))
    assert predict_aggregated(forest, Q[0]) == t.predict(Q[0])


def test_thread_independence_and_json(tmp_path):
    d = generate_scenario(SyntheticScenario.preset(3, 4, 2.0, seed=5), 300)
    a = fit_bagged(d, 6, GrowConfig(3, 10, max_features=1), seed=11, threads=1)
    b = fit_bagged(d, 6, GrowConfig(3, 10, max_features=1), seed=11, threads=3)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    a.save(tmp_path / "f.json")
    back = load_model(tmp_path / "f.json")
    assert isinstance(back, BaggedForest) and back.B == 6
    assert np.array_equal(back.predict_many(d.X), a.predict_many(d.X))


def test_invalid_configs():
    d = generate_scenario(SyntheticScenario.preset(1, 3, None, seed=0), 50)
    with pytest.raises(InvalidInput):
        fit_bagged(d, 0)
    with pytest.raises(InvalidInput):
        fit_bagged(d, 2, fraction=0.0)
    with pytest.raises(InvalidInput):
        BaggedForest([], 0, GrowConfig())


def test_b1_overlay_is_the_tree():
    d = generate_scenario(SyntheticScenario.preset(1, 4, 1.0, seed=2), 300)
    forest = fit_bagged(d, 1, GrowConfig(3, 10), seed=1)
    rule = largest_subpartition_aggregate(forest)
    regions = leaf_regions(forest.trees[0])
    assert len(rule) == len(regions)
    assert [p for _, p in rule.cells] == [p for _, p in regions]


def test_two_stumps_make_three_cells():
    schema = Schema((Feature("x", NUMERIC),))
    d1 = RankingDataset(schema, np.array([[0.1], [0.2], [0.5], [0.9]]), [[1, 2]] * 2 + [[2, 1]] * 2)
    d2 = RankingDataset(schema, np.array([[0.1], [0.5], [0.6], [0.9]]), [[1, 2]] * 3 + [[2, 1]])
    t1, t2 = grow(d1, GrowConfig(1, 1)), grow(d2, GrowConfig(1, 1))
    assert t1.root.split.threshold < t2.root.split.threshold
    rule = largest_subpartition_aggregate(BaggedForest([t1, t2], 0, t1.config))
    assert len(rule) == 3


def test_budget_error():
    d = generate_scenario(SyntheticScenario.preset(1, 4, 1.0, seed=2), 400)
    forest = fit_bagged(d, 5, GrowConfig(4, 2), seed=1)
    with pytest.raises(BudgetExceeded):
        largest_subpartition_aggregate(forest, max_cells=20)


@given(st.integers(0, 10_000), st.integers(1, 5), st.sampled_from([1, 2, 3]), st.sampled_from([3, 4]))
def test_route_equivalence(seed, B, setting, n):
    s = SyntheticScenario.preset(setting, n, [None, 2.0, 0.7][seed % 3], seed)
    d = generate_scenario(s, 150)
    forest = fit_bagged(d, B, GrowConfig(3, 5), seed=seed)
    rule = largest_subpartition_aggregate(forest)
    Q = generate_scenario(s, 300, seed=seed + 1).X
    assert np.array_equal(rule.predict_many(Q), forest.predict_many(Q))


def test_cell_labels_are_kemeny_when_sst():
    d = generate_scenario(SyntheticScenario.preset(1, 4, 0.7, seed=8), 300)
    forest = fit_bagged(d, 5, GrowConfig(3, 5), seed=8)
    rule = largest_subpartition_aggregate(forest)
    checked = 0
    for region, label in rule.cells:
        x = np.array([[(max(lo, 0.0) + min(hi, 1.0)) / 2 for lo, hi in zip(region.lo, region.hi)]])
        votes = np.array([t.predict_many(x)[0] for t in forest.trees])
        m = pairwise_matrix(RankingSample(votes))
        if is_stochastically_transitive(m, strict=True):
            assert label == exact_kemeny(m).median
            checked += 1
    assert checked > 0

