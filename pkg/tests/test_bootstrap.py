import numpy as np
import pandas as pd
import pytest

from mgmnet import bootstrap
from mgmnet.analysis import analyse
from mgmnet.bootstrap import (align, membership_stability, quantile_region, resample,
                              resample_rows, run_bootstrap, summarize_values)
from mgmnet.community import partition_from_mapping
from mgmnet.data_model import Dataset, ModelConfig, categorical, gaussian, infer_types
from mgmnet.errors import BootstrapError, DataError


def _gauss(n=60, p=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    x[:, 1] += x[:, 0]
    x[:, 3] += x[:, 2]
    return Dataset(tuple(f"x{i}" for i in range(p)), (gaussian(),) * p, x)


def test_resample_is_deterministic_per_key():
    ds = _gauss()
    a, _ = resample_rows(ds, 3, 42)
    b, _ = resample_rows(ds, 3, 42)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, resample_rows(ds, 4, 42)[0])
    assert not np.array_equal(a, resample_rows(ds, 3, 43)[0])


def test_replicates_are_pairwise_distinct():
    ds = _gauss(n=100)
    seen = {tuple(np.sort(resample_rows(ds, r, 1)[0])) for r in range(150)}
    assert len(seen) == 150


def test_single_row_is_rejected():
    with pytest.raises(DataError):
        resample(_gauss(n=1), 0, 1)


def test_degenerate_draws_are_redrawn():
    # one rare level: most single draws keep it, but some attempts must retry
    codes = np.array([1] + [0] * 7, dtype=float)
    ds = Dataset(("c", "g"), (categorical(["a", "b"]), gaussian()),
                 np.column_stack([codes, np.arange(8.0)]))
    attempts = [resample_rows(ds, r, 0)[1] for r in range(60)]
    assert max(attempts) > 1
    for r in range(60):
        rows, _ = resample_rows(ds, r, 0)
        assert 0 in rows


def test_quantile_examples():
    assert quantile_region([5, 5, 5], 0.95) == (5, 5)
    lo, hi = quantile_region(np.arange(1, 101), 0.95)
    assert lo == pytest.approx(3.475, abs=1e-12) and hi == pytest.approx(97.525, abs=1e-12)
    assert quantile_region([3, 1, 2], 1.0) == (1, 3)
    with pytest.raises(ValueError):
        quantile_region([], 0.95)


def test_summary_of_a_single_replicate():
    est, mean, se, lo, hi, n = summarize_values(0.2, [0.7], 0.95)
    assert (est, mean, se, lo, hi, n) == (0.2, 0.7, 0.0, 0.7, 0.7, 1)
    _, _, se, lo, hi, _ = summarize_values(0.0, [0.3] * 10, 0.95)
    assert se == 0 and lo == hi == 0.3


def test_quantile_coverage_for_a_sample_mean():
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(300):
        x = rng.normal(1.0, 2.0, size=50)
        means = x[rng.integers(0, 50, size=(400, 50))].mean(axis=1)
        lo, hi = quantile_region(means, 0.95)
        hits += lo <= 1.0 <= hi
    assert 0.88 <= hits / 300 <= 0.99


def _partition(labels):
    nodes = [f"n{i}" for i in range(len(labels))]
    return partition_from_mapping(nodes, dict(zip(nodes, labels))), nodes


def test_identical_replicates_give_full_stability():
    p, _ = _partition([1, 1, 2, 2, 3])
    rep = membership_stability(p, [dict(p.assignment)] * 5)
    assert all(v == 1.0 for v in rep.proportions.values())


def test_stability_is_invariant_to_relabelling():
    rng = np.random.default_rng(0)
    p, nodes = _partition([1, 1, 1, 2, 2, 3, 3, 3])
    reps = [dict(zip(nodes, rng.integers(1, 4, 8).tolist())) for _ in range(20)]
    base = membership_stability(p, reps).proportions
    for _ in range(5):
        perm = rng.permutation([1, 2, 3]) + 10
        shuffled = [{v: int(perm[c - 1]) for v, c in r.items()} for r in reps]
        assert membership_stability(p, shuffled).proportions == base


def test_excluded_in_replicate_counts_as_not_same():
    p, nodes = _partition([1, 1, 2, 2])
    rep = membership_stability(p, [{"n0": 1, "n1": None, "n2": 2, "n3": 2}, dict(p.assignment)])
    assert rep.proportions == {"n0": 1.0, "n1": 0.5, "n2": 1.0, "n3": 1.0}


def test_originally_excluded_nodes_have_no_entry():
    p, _ = _partition([1, None, 2])
    assert set(membership_stability(p, [dict(p.assignment)]).proportions) == {"n0", "n2"}
    with pytest.raises(BootstrapError):
        membership_stability(p, [])


def test_cutoff_flags():
    p, nodes = _partition([1, 1, 2, 2])
    reps = [dict(p.assignment)] * 7 + [{"n0": 2, "n1": 1, "n2": 2, "n3": 2}] * 3
    r = membership_stability(p, reps, cutoff=0.7)
    assert r.proportions["n0"] == 0.7 and r.stable["n0"]
    assert not r.with_cutoff(0.71).stable["n0"]
    assert all(r.with_cutoff(0.0).stable.values())
    assert r.with_cutoff(1.0).unstable_nodes == ["n0"]


def test_align_maximizes_overlap_with_lowest_id_tie_break():
    assert align(np.array([[3, 1], [1, 3]])) == {0: 0, 1: 1}
    assert align(np.array([[1, 5], [0, 6]])) == {0: 0, 1: 1}
    assert align(np.array([[2, 2], [2, 2]])) == {0: 0, 1: 1}
    assert align(np.array([[4], [4]])) == {0: 0}


def test_bootstrap_with_one_replicate(tmp_path):
    ds = _gauss()
    cfg = ModelConfig(lambda_selection="ebic", reps=1)
    a = analyse(ds, cfg)
    store = run_bootstrap(ds, cfg, None, a)
    assert store.n_success == 1
    tables = bootstrap.summarize(a.quantities(), store, 0.95)
    edges = tables["edges"]
    assert (edges["boot_se"] == 0).all() and (edges["lower"] == edges["upper"]).all()


def test_edge_summaries_include_zero_replicates():
    ds = _gauss(seed=3)
    cfg = ModelConfig(lambda_selection="ebic", reps=6)
    a = analyse(ds, cfg)
    store = run_bootstrap(ds, cfg, None, a)
    tables = bootstrap.summarize(a.quantities(), store, 0.95)
    assert (tables["edges"]["n"] == 6).all()


def _failing(monkeypatch, bad):
    real = bootstrap.resample_rows

    def fake(dataset, r, seed):
        if r in bad:
            raise DataError("forced failure")
        return real(dataset, r, seed)
    monkeypatch.setattr(bootstrap, "resample_rows", fake)


def test_failures_up_to_twenty_percent_are_tolerated(monkeypatch):
    ds = _gauss()
    cfg = ModelConfig(lambda_selection="ebic", reps=10)
    a = analyse(ds, cfg)
    _failing(monkeypatch, {2, 7})
    store = run_bootstrap(ds, cfg, None, a)
    assert store.n_success == 8 and [f.index for f in store.failures] == [2, 7]


def test_more_than_twenty_percent_failures_raise(monkeypatch):
    ds = _gauss()
    cfg = ModelConfig(lambda_selection="ebic", reps=10)
    a = analyse(ds, cfg)
    _failing(monkeypatch, {1, 2, 3})
    with pytest.raises(BootstrapError, match="3 of 10"):
        run_bootstrap(ds, cfg, None, a)


def test_reps_zero_is_rejected():
    ds = _gauss()
    cfg = ModelConfig(lambda_selection="ebic")
    with pytest.raises(BootstrapError):
        run_bootstrap(ds, cfg, None, analyse(ds, cfg))


def test_mixed_data_bootstrap_runs():
    rng = np.random.default_rng(5)
    n = 120
    g = rng.normal(size=n)
    df = pd.DataFrame({"g": g, "h": g + rng.normal(size=n), "b": (g > 0).astype(int),
                       "c": rng.poisson(2, n)})
    ds = infer_types(df)
    cfg = ModelConfig(lambda_selection="ebic", reps=4)
    store = run_bootstrap(ds, cfg, None, analyse(ds, cfg))
    assert store.n_success + len(store.failures) == 4
