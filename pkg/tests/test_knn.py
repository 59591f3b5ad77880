import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankmedian.consensus import RankingSample, pseudo_median
from rankmedian.data import CATEGORICAL, NUMERIC, Feature, RankingDataset, Schema
from rankmedian.errors import InvalidInput, SchemaError
from rankmedian.knn import KnnRanker, Metric
from rankmedian.mallows import SyntheticScenario, generate_scenario
from rankmedian.perm import Permutation

P = lambda *r: Permutation(tuple(r))  # noqa: E731
LINE = Schema((Feature("x", NUMERIC),))


def _line(xs, ranks):
    return RankingDataset(LINE, np.array(xs, dtype=float)[:, None], ranks)


def test_k_equals_n_is_global_median():
    d = generate_scenario(SyntheticScenario.preset(1, 4, 1.0, seed=0), 60)
    model = KnnRanker(60).fit(d)
    pred = model.predict_many(np.random.default_rng(0).random((25, 2)))
    glob = pseudo_median(RankingSample(d.ranks)).median
    assert np.all(pred == glob.ranks)


def test_rejections():
    with pytest.raises(InvalidInput):
        KnnRanker(3).fit(_line([0.1, 0.2], [[1, 2], [2, 1]]))
    with pytest.raises(InvalidInput):
        KnnRanker(0).fit(_line([0.1], [[1, 2]]))
    d = generate_scenario(SyntheticScenario.preset(2, 3, None, seed=0), 50)
    with pytest.raises(InvalidInput):
        KnnRanker(3).fit(d)
    m = KnnRanker(3, Metric(mixed=True)).fit(d)
    with pytest.raises(SchemaError):
        m.predict_many(np.zeros((1, 3)))


def test_k1_returns_nearest_ranking():
    d = _line([0.0, 1.0, 2.0], [[1, 2, 3], [3, 2, 1], [2, 1, 3]])
    m = KnnRanker(1).fit(d)
    assert m.predict([0.9]) == P(3, 2, 1)
    assert m.predict([1.6]) == P(2, 1, 3)


def test_consensus_example_neighbours():
    d = _line([0.0, 0.1, 0.2, 5.0], [[1, 2, 3], [1, 2, 3], [2, 1, 3], [3, 2, 1]])
    assert KnnRanker(3).fit(d).predict([0.05]) == P(1, 2, 3)


def test_two_clusters():
    rng = np.random.default_rng(0)
    xs = np.concatenate([rng.normal(0, 0.1, 20), rng.normal(10, 0.1, 20)])
    ranks = [[1, 2, 3]] * 20 + [[3, 1, 2]] * 20
    m = KnnRanker(7).fit(_line(xs, ranks))
    assert m.predict([0.2]) == P(1, 2, 3)
    assert m.predict([9.8]) == P(3, 1, 2)


def test_distance_ties_use_record_index():
    d = _line([1.0, -1.0, 1.0], [[2, 1], [1, 2], [1, 2]])
    m = KnnRanker(1).fit(d)
    assert m.neighbors(np.array([[0.0]]))[0].tolist() == [0]
    assert m.predict([0.0]) == P(2, 1)


def test_training_risk_zero_with_k1():
    d = _line(np.linspace(0, 1, 30), [list(np.random.default_rng(i).permutation(4) + 1) for i in range(30)])
    assert KnnRanker(1).fit(d).risk(d) == 0


def test_locality():
    rng = np.random.default_rng(1)
    xs = rng.random(40)
    ranks = np.array([rng.permutation(4) + 1 for _ in range(40)])
    q = np.array([[0.5]])
    m = KnnRanker(5).fit(_line(xs, ranks))
    near = set(m.neighbors(q)[0].tolist())
    changed = ranks.copy()
    for i in range(40):
        if i not in near:
            changed[i] = [4, 3, 2, 1]
    assert m.predict(q[0]) == KnnRanker(5).fit(_line(xs, changed)).predict(q[0])


def test_mixed_metric():
    schema = Schema((Feature("x", NUMERIC), Feature("g", CATEGORICAL, ("a", "b"))))
    X = np.array([[0.0, 0], [0.0, 1], [0.3, 0]])
    d = RankingDataset(schema, X, [[1, 2], [2, 1], [1, 2]])
    m = KnnRanker(1, Metric(mixed=True)).fit(d)
    # level mismatch costs 1 in squared distance, more than a 0.3 numeric gap
    assert m.neighbors(np.array([[0.01, 0]]))[0].tolist() == [0]
    assert m.predict([0.0, 1]) == P(2, 1)


def test_standardize_changes_scale():
    schema = Schema((Feature("a", NUMERIC), Feature("b", NUMERIC)))
    d = RankingDataset(schema, np.array([[0.0, 0.0], [1.0, 60.0]]), [[1, 2], [2, 1]])
    q = np.array([[0.1, 35.0]])
    assert KnnRanker(1).fit(d).neighbors(q)[0][0] == 1
    assert KnnRanker(1, Metric(standardize=True)).fit(d).neighbors(q)[0][0] == 0


def test_json_round_trip():
    d = generate_scenario(SyntheticScenario.preset(2, 3, 1.0, seed=4), 120)
    m = KnnRanker(5, Metric(mixed=True)).fit(d)
    back = KnnRanker.from_json(m.to_json())
    Q = generate_scenario(SyntheticScenario.preset(2, 3, 1.0, seed=5), 60).X
    assert np.array_equal(m.predict_many(Q), back.predict_many(Q))


@given(st.integers(1, 10), st.integers(0, 2**31))
def test_chunking_is_invisible(k, seed):
    d = generate_scenario(SyntheticScenario.preset(1, 4, 1.0, seed=seed % 1000), 60)
    m = KnnRanker(k).fit(d)
    Q = np.random.default_rng(seed).random((37, 2))
    assert np.array_equal(m.predict_many(Q, chunk=5), m.predict_many(Q))
