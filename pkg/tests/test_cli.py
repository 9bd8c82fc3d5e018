import json

import networkx as nx
import numpy as np
import pandas as pd
import pytest

from mgmnet import archive, bootstrap
from mgmnet.cli import main, parse_run_config
from mgmnet.errors import ConfigError


def _write_data(path, n=150, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    c = rng.normal(size=n)
    df = pd.DataFrame({
        "id": np.arange(n),
        "a": a, "b": a + 0.6 * rng.normal(size=n),
        "c": c, "d": c + 0.6 * rng.normal(size=n),
        "flag": (a + rng.normal(size=n) > 0).astype(int),
    })
    df.to_csv(path, index=False)
    return df


def _config(tmp_path, extra="", model="lambda_selection: ebic", layers=""):
    _write_data(tmp_path / "d.csv")
    text = f"data: d.csv\ndrop_columns: [id]\nmodel:\n  {model}\n  save_data: true\n{extra}{layers}"
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


def _fit(tmp_path, capsys, **kw):
    cfg = _config(tmp_path, **kw)
    assert main(["fit", str(cfg), "--output", str(tmp_path / "out")]) == 0
    return tmp_path / "out" / "fit.json", capsys.readouterr().out


def test_fit_prints_summary_and_writes_archive(tmp_path, capsys):
    path, out = _fit(tmp_path, capsys)
    assert "Type: Single layer MGM" in out
    assert "Data: 150 subjects x 5 variables" in out
    assert "Bootstrap" not in out
    doc = json.loads(path.read_text())
    assert doc["format"] == "mgmnet-archive" and "bootstrap" not in doc


def test_archive_round_trip_is_exact(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys, model="lambda_selection: ebic\n  reps: 4")
    fit = archive.load(path)
    assert archive.dumps(fit) == path.read_text()
    again = archive.load(archive.save(fit, tmp_path / "again.json"))
    np.testing.assert_array_equal(again.weights, fit.weights)
    for fam, frame in fit.boot.items():
        pd.testing.assert_frame_equal(again.boot[fam], frame)


@pytest.mark.parametrize("text, match", [
    ("data: d.csv\ncolour: red\n", "colour"),
    ("data: d.csv\nmodel:\n  lamda: 1\n", "lamda"),
    ("data: d.csv\nlayers:\n  labels: [x]\n  extra: 1\n", "extra"),
    ("model:\n  reps: 1\n", "data"),
    ("data: d.csv\nmodel:\n  rule: xor\n", "rule"),
    ("data: d.csv\nlayers:\n  labels: [x]\n  members: {y: [a]}\n", "undeclared"),
])
def test_config_rejection(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        parse_run_config(text, tmp_path)


def test_nested_rules_and_rows_agree(tmp_path):
    base = "data: d.csv\nlayers:\n  labels: [x, y]\n  members: {x: [a], y: [b]}\n"
    rows = parse_run_config(base + "  rules: [[1, 1], [null, 1]]\n", tmp_path)["layers"]
    nested = parse_run_config(base + "  rules: {x: {y: 1}}\n", tmp_path)["layers"]
    assert rows.rules[0, 1] == 1 and nested.rules[0, 1] == 1


def test_exit_codes(tmp_path, capsys, monkeypatch):
    cfg = _config(tmp_path, extra="colour: red\n")
    assert main(["fit", str(cfg)]) == 3
    assert "mgmnet.cli" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("data: missing.csv\n")
    assert main(["fit", str(bad)]) == 4
    cfg = _config(tmp_path, model="cluster_method: infomap")
    assert main(["fit", str(cfg), "--output", str(tmp_path)]) == 5
    assert "mgmnet.community" in capsys.readouterr().err
    cfg = _config(tmp_path, model="lambda_selection: ebic\n  reps: 5")

    def boom(*a):
        raise bootstrap.DataError("forced")
    monkeypatch.setattr(bootstrap, "resample_rows", boom)
    assert main(["fit", str(cfg), "--output", str(tmp_path)]) == 6


def test_summary_tables(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys, model="lambda_selection: ebic\n  reps: 3")
    assert main(["summary", str(path), "--top-n", "2", "--csv", str(tmp_path / "e.csv")]) == 0
    table = pd.read_csv(tmp_path / "e.csv")
    assert len(table) == 2 and table["estimated"].abs().is_monotonic_decreasing
    assert {"boot_mean", "boot_se", "lower", "upper"} <= set(table.columns)
    assert main(["summary", str(path), "--top-n", "500", "--csv", str(tmp_path / "all.csv")]) == 0
    assert len(pd.read_csv(tmp_path / "all.csv")) == archive.load(path).network().n_edges
    assert main(["summary", str(path), "--what", "indices", "--statistics", "strength"]) == 0
    assert main(["summary", str(path), "--what", "interlayer_edges"]) != 0


def test_stability_cutoffs(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys, model="lambda_selection: ebic\n  reps: 5")
    csv = tmp_path / "s.csv"
    assert main(["stability", str(path), "--cutoff", "0", "--csv", str(csv)]) == 0
    t = pd.read_csv(csv)
    assert list(t.columns) == ["node", "layer", "community", "proportion", "stable", "cutoff"]
    assert t["stable"].all()
    assert main(["stability", str(path), "--cutoff", "1", "--csv", str(csv)]) == 0
    t = pd.read_csv(csv)
    assert (t["stable"] == (t["proportion"] == 1)).all()


def test_stability_without_bootstrap_fails(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys)
    assert main(["stability", str(path)]) != 0


def test_scores_from_stored_and_external_data(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys, model="lambda_selection: ebic\n  reps: 3")
    out = tmp_path / "scores"
    assert main(["scores", str(path), "--output", str(out)]) == 0
    s = pd.read_csv(out / "scores.csv")
    assert len(s) == 150
    assert (out / "scores_lower.csv").exists() and (out / "loading_regions.csv").exists()
    assert main(["scores", str(path), "--data", str(tmp_path / "d.csv"),
                 "--output", str(tmp_path / "ext")]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "ext" / "scores.csv"), s)


def test_scores_need_data(tmp_path, capsys):
    cfg = _config(tmp_path)
    cfg.write_text(cfg.read_text().replace("save_data: true", "save_data: false"))
    main(["fit", str(cfg), "--output", str(tmp_path / "o")])
    assert main(["scores", str(tmp_path / "o" / "fit.json"), "--output", str(tmp_path)]) == 5
    assert "save_data" in capsys.readouterr().err


def test_edge_list_round_trip_and_other_formats(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys)
    fit = archive.load(path)
    csv = tmp_path / "e.csv"
    assert main(["export", str(path), "--output", str(csv)]) == 0
    edges = pd.read_csv(csv)
    for r in edges.itertuples():
        i, j = fit.nodes.index(r.source), fit.nodes.index(r.target)
        assert r.weight == fit.weights[i, j] and r.sign == fit.signs[i, j]
    assert len(edges) == fit.network().n_edges
    gml = tmp_path / "g.graphml"
    assert main(["export", str(path), "--format", "graphml", "--output", str(gml)]) == 0
    g = nx.read_graphml(gml)
    assert set(g.nodes) == set(fit.nodes) and g.number_of_edges() == len(edges)
    assert {"kind", "layer", "community", "excluded_reason"} <= set(g.nodes["a"])
    dot = tmp_path / "g.dot"
    assert main(["export", str(path), "--format", "dot", "--output", str(dot)]) == 0
    assert dot.read_text().startswith("graph mgmnet {") and "penwidth" in dot.read_text()


def test_empty_graph_exports_header_only(tmp_path, capsys):
    rng = np.random.default_rng(1)
    pd.DataFrame(rng.normal(size=(200, 3)), columns=list("xyz")).to_csv(tmp_path / "n.csv",
                                                                         index=False)
    (tmp_path / "run.yaml").write_text("data: n.csv\nmodel:\n  lambda_selection: ebic\n")
    assert main(["fit", str(tmp_path / "run.yaml"), "--output", str(tmp_path)]) == 0
    assert main(["export", str(tmp_path / "fit.json"), "--output", str(tmp_path / "e.csv")]) == 0
    assert (tmp_path / "e.csv").read_text().strip() == \
        "source,target,weight,sign,layer_source,layer_target,type"


def test_multilayer_fit_and_interlayer_summary(tmp_path, capsys):
    layers = ("layers:\n  labels: [L1, L2]\n  members: {L1: [a, b, flag], L2: [c, d]}\n"
              "  rules: [[1, 1], [null, 1]]\n")
    path, out = _fit(tmp_path, capsys, layers=layers)
    assert "Multilayer" in out and "L1_L2" in out
    assert main(["summary", str(path), "--what", "interlayer_indices"]) == 0


def test_workers_precedence(tmp_path, monkeypatch):
    cfg = _config(tmp_path)
    monkeypatch.setenv("MGMNET_WORKERS", "3")
    assert parse_run_config(cfg.read_text(), tmp_path)["config"].workers == 3
    text = cfg.read_text().replace("model:\n", "model:\n  workers: 2\n")
    assert parse_run_config(text, tmp_path)["config"].workers == 2
    monkeypatch.setenv("MGMNET_WORKERS", "many")
    with pytest.raises(ConfigError):
        parse_run_config(cfg.read_text(), tmp_path)


def test_exclude_unstable_refit(tmp_path, capsys):
    path, _ = _fit(tmp_path, capsys, model="lambda_selection: ebic\n  reps: 4")
    cfg = tmp_path / "run.yaml"
    assert main(["fit", str(cfg), "--exclude-unstable", str(path), "--cutoff", "1.0",
                 "--output", str(tmp_path / "refit")]) == 0
    prior = archive.load(path)
    refit = archive.load(tmp_path / "refit" / "fit.json")
    for node in prior.unstable_nodes(1.0):
        assert refit.partitions["1"].assignment[node] is None
