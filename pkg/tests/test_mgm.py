import numpy as np
import pandas as pd
import pytest

from mgmnet.data_model import Dataset, ModelConfig, categorical, gaussian, infer_types, poisson
from mgmnet.errors import EstimationError
from mgmnet.mgm import (NodewiseFit, aggregate_edges, build_design, dummy_columns,
                        estimate_network, fit_nodewise, full_mask)

G, B, C3 = gaussian(), categorical([0, 1]), categorical(["a", "b", "c"])


def _pair(block_sr, block_rs, kinds=(G, G), rule="and"):
    fits = [NodewiseFit("s", ("r",), {"r": np.atleast_2d(block_sr)}, {}),
            NodewiseFit("r", ("s",), {"s": np.atleast_2d(block_rs)}, {})]
    return aggregate_edges(fits, rule, kinds)


def test_dummy_coding_drops_reference_level():
    cols = dummy_columns(np.array([0.0, 2.0, 1.0, 0.0]), C3)
    np.testing.assert_array_equal(cols, [[0, 0], [0, 1], [1, 0], [0, 0]])


def test_design_columns_and_blocks():
    values = np.column_stack([np.arange(6.0), [0, 1, 2, 0, 1, 2], [1, 0, 1, 0, 1, 1], [3, 1, 4, 1, 5, 9]])
    ds = Dataset(("g", "c", "b", "age"), (G, C3, B, poisson()), values)
    d = build_design(ds, "g", ["c", "b"], covariates=("age",))
    assert d.problem.X.shape == (6, 4)
    assert list(d.blocks) == ["c", "b"] and list(d.covariate_blocks) == ["age"]
    np.testing.assert_array_equal(d.blocks["c"], [0, 1])
    np.testing.assert_array_equal(d.covariate_blocks["age"], [3])
    with pytest.raises(EstimationError):
        build_design(ds, "g", [])


def test_and_rule_averages_both_directions():
    net = _pair(0.4, 0.2)
    assert net.weights[0, 1] == pytest.approx(0.3) and net.signs[0, 1] == 1


def test_and_requires_both_or_keeps_single():
    assert _pair(0.4, 0.0).weights[0, 1] == 0
    net = _pair(0.4, 0.0, rule="or")
    assert net.weights[0, 1] == pytest.approx(0.4)
    assert net.provenance[(0, 1)].combination == "single"


def test_sign_conflict_gives_undefined_sign():
    net = _pair(0.4, -0.2)
    assert net.weights[0, 1] == pytest.approx(0.3)
    assert net.signs[0, 1] == 0 and net.provenance[(0, 1)].sign_conflict


def test_categorical_block_magnitude_and_sign():
    # three-level predictor into a gaussian node, gaussian predictor into the multinomial
    net = _pair([[0.2, -0.4]], [[-0.1], [0.0], [0.1]], kinds=(G, C3))
    assert net.weights[0, 1] == pytest.approx(0.5 * (0.3 + 0.2 / 3))
    assert net.signs[0, 1] == 1
    # binary response: sign from the difference of the symmetric class coefficients
    net = _pair([[-0.3]], [[0.2], [-0.2]], kinds=(G, B))
    assert net.signs[0, 1] == -1


def test_asymmetric_mask_is_an_error():
    fits = [NodewiseFit("s", ("r",), {"r": np.ones((1, 1))}, {}), NodewiseFit("r", (), {}, {})]
    with pytest.raises(EstimationError):
        aggregate_edges(fits, "and", (G, G))


def _random_data(seed, n=300):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 5))
    x[:, 1] += 0.6 * x[:, 0]
    x[:, 3] -= 0.5 * x[:, 2]
    return Dataset(tuple("abcde"), (G,) * 5, x)


@pytest.mark.parametrize("method", ["cv", "ebic"])
def test_or_graph_contains_and_graph(method):
    ds = _random_data(4)
    a = estimate_network(ds, ModelConfig(lambda_selection=method, rule="and"))
    o = estimate_network(ds, ModelConfig(lambda_selection=method, rule="or"))
    assert np.all((a.weights > 0) <= (o.weights > 0))


def test_two_correlated_gaussians_give_positive_edge():
    rng = np.random.default_rng(0)
    z = rng.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]], size=500)
    net = estimate_network(Dataset(("x", "y"), (G, G), z), ModelConfig())
    assert net.weights[0, 1] > 0 and net.signs[0, 1] == 1
    assert np.allclose(net.weights, net.weights.T)


def test_independent_nodes_give_empty_graph():
    rng = np.random.default_rng(1)
    ds = Dataset(tuple("abcd"), (G,) * 4, rng.normal(size=(500, 4)))
    assert estimate_network(ds, ModelConfig(lambda_selection="ebic")).n_edges == 0


def test_covariates_are_not_nodes():
    rng = np.random.default_rng(2)
    age = rng.normal(size=400)
    x = np.column_stack([age + rng.normal(size=400), age + rng.normal(size=400), age])
    ds = Dataset(("a", "b", "age"), (G, G, G), x)
    net = estimate_network(ds, ModelConfig(lambda_selection="ebic", covariates=("age",)))
    assert net.nodes == ("a", "b")
    # the a-b association is explained by the shared covariate
    assert net.n_edges == 0
    plain = estimate_network(ds.select(["a", "b"]), ModelConfig(lambda_selection="ebic"))
    assert plain.n_edges == 1


def test_node_with_no_allowed_predictors_is_isolated():
    ds = _random_data(5)
    mask = full_mask(ds.column_names)
    mask = {k: v - {"e"} for k, v in mask.items()}
    mask["e"] = frozenset()
    fits = fit_nodewise(ds, ModelConfig(lambda_selection="ebic"), mask)
    assert fits[-1].blocks == {} and fits[-1].lam is None


def test_mixed_types_run_end_to_end():
    rng = np.random.default_rng(6)
    n = 300
    g = rng.normal(size=n)
    b = (g + rng.normal(size=n) > 0).astype(int)
    c = rng.poisson(np.exp(0.5 * g))
    k = rng.choice(["x", "y", "z"], n)
    ds = infer_types(pd.DataFrame({"g": g, "b": b, "c": c, "k": k}))
    net = estimate_network(ds, ModelConfig(lambda_selection="ebic"))
    assert net.weights[0, 1] > 0 and net.signs[0, 1] == 1
    assert net.weights[0, 2] > 0
    assert set(net.selection) == {"g", "b", "c", "k"}
