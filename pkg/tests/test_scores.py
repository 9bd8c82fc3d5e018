from types import SimpleNamespace

import numpy as np
import pytest

from mgmnet.community import partition_from_mapping
from mgmnet.data_model import Dataset, ModelConfig, categorical, gaussian
from mgmnet.errors import ScoreError
from mgmnet.mgm import NetworkFit
from mgmnet.scores import RAW, community_scores, network_loadings, score_standardization
from oracles import random_signed_graph

G = gaussian()


def _net(W):
    n = W.shape[0]
    return NetworkFit(tuple(f"v{i}" for i in range(n)), (G,) * n, W, np.sign(W).astype(int), "and")


def _part(labels):
    nodes = [f"v{i}" for i in range(len(labels))]
    return partition_from_mapping(nodes, dict(zip(nodes, labels)))


def _fit(W, labels, data, kinds=None, reps=None):
    net = _net(W)
    part = _part(labels)
    kinds = kinds or {v: G for v in net.nodes}
    return SimpleNamespace(
        loadings={"1": network_loadings(net, part)}, kinds=kinds, data=data,
        score_standardization=score_standardization(data, net.nodes), is_multilayer=False,
        replicate_loadings=reps, config=ModelConfig())


def test_two_node_community_loadings():
    W = np.array([[0, 0.5], [0.5, 0.0]])
    L = network_loadings(_net(W), _part([1, 1]))
    np.testing.assert_array_equal(L.raw, [[0.5], [0.5]])
    np.testing.assert_array_equal(L.values, [[0.5], [0.5]])


def test_loadings_match_restricted_strength_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        W, _ = random_signed_graph(rng, 7)
        lab = [int(c) if c else None for c in rng.integers(0, 3, 7)]
        part = _part(lab)
        if part.k == 0:
            continue
        L = network_loadings(_net(W), part, normalization=RAW)
        for i in range(7):
            for k, c in enumerate(L.communities):
                want = sum(W[i, j] for j in range(7) if j != i and lab[i] == c and lab[j] == c)
                assert L.raw[i, k] == pytest.approx(want, abs=1e-15)
        assert np.all((L.values != 0).sum(axis=1) <= 1)


def test_node_without_intracommunity_edges_loads_zero():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 0.4
    L = network_loadings(_net(W), _part([1, 1, 1]))
    assert L.values[2, 0] == 0 and L.values[:, 0].sum() == pytest.approx(1.0)


def _data(n=40, p=3, seed=1):
    x = np.random.default_rng(seed).normal(size=(n, p))
    return Dataset(tuple(f"v{i}" for i in range(p)), (G,) * p, x)


def _z(data, v):
    x = data.column(v)
    return (x - x.mean()) / x.std(ddof=1)


def test_equal_loadings_give_mean_z_score():
    W = np.ones((3, 3)) - np.eye(3)
    data = _data()
    s = community_scores(_fit(0.3 * W, [1, 1, 1], data)).scores
    want = np.mean([_z(data, f"v{i}") for i in range(3)], axis=0)
    np.testing.assert_allclose(s["1"], want, atol=1e-14)


def test_zero_loading_community_scores_zero():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 0.4
    s = community_scores(_fit(W, [1, 1, 2], _data())).scores
    assert (s["2"] == 0).all()


def test_scores_are_row_wise():
    W, _ = random_signed_graph(np.random.default_rng(2), 3, density=1.0)
    data = _data(n=30)
    fit = _fit(W, [1, 1, 1], data)
    full = community_scores(fit).scores.to_numpy()
    top = community_scores(fit, data.take_rows(np.arange(12))).scores.to_numpy()
    bottom = community_scores(fit, data.take_rows(np.arange(12, 30))).scores.to_numpy()
    np.testing.assert_allclose(np.vstack([top, bottom]), full, atol=1e-14)


def test_external_data_use_training_standardization():
    W = np.array([[0, 0.5], [0.5, 0.0]])
    data = _data(p=2)
    fit = _fit(W, [1, 1], data)
    shifted = Dataset(data.column_names, data.kinds, data.values + 10.0)
    s = community_scores(fit, shifted).scores["1"]
    base = community_scores(fit).scores["1"]
    sd = [data.column(v).std(ddof=1) for v in data.column_names]
    np.testing.assert_allclose(s - base, 0.5 * 10 / sd[0] + 0.5 * 10 / sd[1], atol=1e-12)


def test_missing_column_and_missing_data_are_errors():
    W = np.array([[0, 0.5], [0.5, 0.0]])
    data = _data(p=2)
    fit = _fit(W, [1, 1], data)
    with pytest.raises(ScoreError, match="v1"):
        community_scores(fit, data.select(["v0"]))
    fit.data = None
    with pytest.raises(ScoreError, match="save_data"):
        community_scores(fit)


def test_multilevel_member_is_rejected():
    kinds = {"v0": G, "v1": categorical(["a", "b", "c"])}
    x = np.column_stack([np.arange(6.0), [0, 1, 2, 0, 1, 2]])
    data = Dataset(("v0", "v1"), (G, kinds["v1"]), x)
    W = np.array([[0, 0.5], [0.5, 0.0]])
    with pytest.raises(ScoreError, match="multilevel"):
        community_scores(_fit(W, [1, 1], data, kinds=kinds))


def test_binary_member_uses_z_scored_coding():
    kinds = {"v0": G, "v1": categorical(["no", "yes"])}
    x = np.column_stack([np.arange(6.0), [0, 1, 1, 0, 1, 0]])
    data = Dataset(("v0", "v1"), (G, kinds["v1"]), x)
    W = np.array([[0, 0.5], [0.5, 0.0]])
    s = community_scores(_fit(W, [1, 1], data, kinds=kinds)).scores["1"]
    np.testing.assert_allclose(s, 0.5 * _z(data, "v0") + 0.5 * _z(data, "v1"), atol=1e-14)


def test_bootstrap_regions_from_replicate_loadings():
    W = np.ones((3, 3)) - np.eye(3)
    data = _data()
    reps = [{"1": np.full((3, 1), 1 / 3)}] * 4
    res = community_scores(_fit(W, [1, 1, 1], data, reps=reps))
    np.testing.assert_allclose(res.score_lower["1"], res.scores["1"], atol=1e-14)
    np.testing.assert_allclose(res.score_upper["1"], res.scores["1"], atol=1e-14)
    assert (res.loading_regions["boot_se"] == 0).all()
