"""Command-line driver.

Subcommands ``fit``, ``summary``, ``stability``, ``scores`` and ``export``.
``fit`` reads a YAML run configuration and writes a JSON archive; the other
subcommands work from that archive alone and never refit the model.

Exit codes: 0 success, 3 configuration, 4 data, 5 estimation, 6 bootstrap.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
import yaml

from . import __version__, archive
from .data_model import Dataset, LayerSpec, ModelConfig, read_csv
from .errors import ConfigError, DataError, MgmError
from .fit import (SUMMARY_WHAT, ModelFit, fit_model, format_fit, format_table,
                  refit_excluding_unstable, summary_table)
from .scores import community_scores

WORKERS_ENV = "MGMNET_WORKERS"
ARCHIVE_NAME = "fit.json"
EXPORT_FORMATS = ("edgelist", "graphml", "dot")

_TOP_KEYS = {"data", "drop_columns", "types", "output", "model", "layers"}
_LAYER_KEYS = {"labels", "members", "rules"}
_MODEL_KEYS = {f.name for f in fields(ModelConfig)}


# ---- configuration --------------------------------------------------------

def _reject_unknown(section: dict, allowed: set, where: str):
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")


def _mapping(obj, where: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping")
    return obj


def parse_run_config(text: str, base: Path | None = None) -> dict[str, Any]:
    """Validate a run configuration; returns data path, overrides, model and layers."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    raw = _mapping(raw, "configuration")
    _reject_unknown(raw, _TOP_KEYS, "configuration")
    if "data" not in raw:
        raise ConfigError("configuration needs a 'data' path")
    base = base or Path(".")
    data = Path(str(raw["data"]))
    model = _mapping(raw.get("model"), "model")
    _reject_unknown(model, _MODEL_KEYS, "model")
    if "workers" not in model and os.environ.get(WORKERS_ENV):
        try:
            model = {**model, "workers": int(os.environ[WORKERS_ENV])}
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer") from None
    try:
        config = ModelConfig(**model)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    layers = None
    if raw.get("layers") is not None:
        lay = _mapping(raw["layers"], "layers")
        _reject_unknown(lay, _LAYER_KEYS, "layers")
        labels = [str(x) for x in lay.get("labels") or []]
        members = _mapping(lay.get("members"), "layers.members")
        if not labels:
            raise ConfigError("layers.labels must list at least one layer")
        unknown = sorted(set(map(str, members)) - set(labels))
        if unknown:
            raise ConfigError(f"layers.members names undeclared layers: {unknown}")
        layer_of = {}
        for label, nodes in members.items():
            for v in nodes or []:
                if str(v) in layer_of:
                    raise ConfigError(f"node {v!r} is listed in more than one layer")
                layer_of[str(v)] = str(label)
        layers = LayerSpec(layer_of, tuple(labels), _rules(lay.get("rules"), labels))
    return {
        "data": data if data.is_absolute() else base / data,
        "drop_columns": list(raw.get("drop_columns") or []),
        "types": {str(k): str(v) for k, v in _mapping(raw.get("types"), "types").items()},
        "output": raw.get("output"),
        "config": config,
        "layers": layers,
    }


def _rules(rows, labels: Sequence[str]):
    """Rule rows to an object matrix; ``null`` marks an unspecified pair."""
    if rows is None:
        return np.full((len(labels), len(labels)), np.nan)
    if isinstance(rows, dict):
        # {bio: {ant: 1}} style
        m = np.full((len(labels), len(labels)), np.nan)
        for a, row in rows.items():
            for b, v in _mapping(row, f"layers.rules.{a}").items():
                if str(a) not in labels or str(b) not in labels:
                    raise ConfigError(f"layers.rules names unknown layer pair ({a}, {b})")
                m[labels.index(str(a)), labels.index(str(b))] = np.nan if v is None else v
        return m
    try:
        return np.array([[np.nan if v is None else float(v) for v in row] for row in rows])
    except (TypeError, ValueError):
        raise ConfigError("layers.rules must be rows of 0, 1 or null") from None


def load_run_config(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_run_config(text, path.parent)


# ---- subcommands ----------------------------------------------------------

def _write_csv(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False)


def cmd_fit(args) -> int:
    run = load_run_config(args.config)
    dataset = read_csv(run["data"], run["types"], run["drop_columns"])
    config = run["config"]
    out_dir = Path(args.output or run["output"] or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.exclude_unstable:
        prior = archive.load(args.exclude_unstable)
        fit = refit_excluding_unstable(dataset, prior, args.cutoff, args.workers, config=config,
                                       layer_spec=run["layers"])
    else:
        fit = fit_model(dataset, config, run["layers"], args.workers)
    path = archive.save(fit, out_dir / ARCHIVE_NAME)
    print(format_fit(fit))
    print(f"\nArchive written to {path}")
    return 0


def cmd_summary(args) -> int:
    fit = archive.load(args.archive)
    stats = [s for s in (args.statistics or "").split(",") if s] or None
    table = summary_table(fit, args.what, stats, args.top_n)
    print(format_table(table))
    if args.csv:
        _write_csv(table, args.csv)
    return 0


def cmd_stability(args) -> int:
    fit = archive.load(args.archive)
    if not fit.stability:
        raise MgmError("the archive has no bootstrap results (reps = 0)")
    cutoff = fit.config.stability_cutoff if args.cutoff is None else args.cutoff
    if not 0 <= cutoff <= 1:
        raise ConfigError("cutoff must lie in [0, 1]")
    table = pd.concat([r.with_cutoff(cutoff).to_frame() for r in fit.stability.values()],
                      ignore_index=True)
    print(format_table(table))
    unstable = table.loc[~table["stable"], "node"].tolist()
    print(f"\nBelow cutoff {cutoff}: {', '.join(unstable) if unstable else 'none'}")
    if args.csv:
        _write_csv(table, args.csv)
    return 0


def external_dataset(frame: pd.DataFrame, fit: ModelFit) -> Dataset:
    """Typed view of new data using the fit's variable kinds and level codes."""
    kinds = fit.kinds
    names = [c for c in frame.columns if c in kinds]
    cols = []
    for name in names:
        kind = kinds[name]
        s = frame[name]
        if s.isna().any():
            raise DataError(f"column {name!r} has missing values", name)
        if kind.is_categorical:
            lookup = {str(lev): i for i, lev in enumerate(kind.levels)}
            try:
                cols.append(np.array([lookup[str(v)] for v in s], dtype=float))
            except KeyError as exc:
                raise DataError(f"column {name!r} has level {exc.args[0]!r} unknown to the fit",
                                name) from None
        else:
            try:
                cols.append(s.to_numpy(dtype=float))
            except (TypeError, ValueError):
                raise DataError(f"column {name!r} is not numeric", name) from None
    values = np.column_stack(cols) if cols else np.zeros((len(frame), 0))
    return Dataset(tuple(names), tuple(kinds[c] for c in names), values)


def cmd_scores(args) -> int:
    fit = archive.load(args.archive)
    data = None
    if args.data:
        try:
            frame = pd.read_csv(args.data)
        except (OSError, pd.errors.ParserError) as exc:
            raise DataError(f"cannot read {args.data}: {exc}") from exc
        data = external_dataset(frame, fit)
    result = community_scores(fit, data, args.quantile_level)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(result.scores, out / "scores.csv")
    _write_csv(result.loadings, out / "loadings.csv")
    if result.loading_regions is not None:
        _write_csv(result.loading_regions, out / "loading_regions.csv")
        _write_csv(result.score_lower, out / "scores_lower.csv")
        _write_csv(result.score_upper, out / "scores_upper.csv")
    print(f"{result.scores.shape[0]} subjects x {result.scores.shape[1]} communities "
          f"written to {out}")
    return 0


def _node_table(fit: ModelFit) -> pd.DataFrame:
    kinds = fit.kinds
    rows = []
    for v, lay in zip(fit.nodes, fit.node_layers):
        part = fit.partitions[lay]
        rows.append((v, kinds[v].name, lay, part.assignment.get(v) or 0,
                     part.excluded_reasons.get(v, "")))
    return pd.DataFrame(rows, columns=["node", "kind", "layer", "community", "excluded_reason"])


def edge_list(fit: ModelFit) -> pd.DataFrame:
    lay = fit.node_layers
    rows = [(fit.nodes[i], fit.nodes[j], w, s, lay[i], lay[j],
             "intra" if lay[i] == lay[j] else "inter")
            for i, j, w, s in fit.network().edges()]
    return pd.DataFrame(rows, columns=["source", "target", "weight", "sign", "layer_source",
                                       "layer_target", "type"])


def _dot_id(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(fit: ModelFit) -> str:
    nodes = _node_table(fit)
    edges = edge_list(fit)
    wmax = float(edges["weight"].max()) if len(edges) else 1.0
    colour = {1: "darkgreen", -1: "red", 0: "gray"}
    lines = ["graph mgmnet {"]
    for r in nodes.itertuples(index=False):
        lines.append(f"  {_dot_id(r.node)} [kind={_dot_id(r.kind)}, layer={_dot_id(r.layer)}, "
                     f"community={r.community}, excluded_reason={_dot_id(r.excluded_reason)}];")
    for r in edges.itertuples(index=False):
        width = 0.5 + 4.5 * r.weight / wmax
        lines.append(f"  {_dot_id(r.source)} -- {_dot_id(r.target)} [weight={r.weight!r}, "
                     f"sign={r.sign}, penwidth={width:.3f}, color={colour[r.sign]}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_graphml(fit: ModelFit, path) -> None:
    import networkx as nx

    g = nx.Graph()
    for r in _node_table(fit).itertuples(index=False):
        g.add_node(r.node, kind=r.kind, layer=r.layer, community=int(r.community),
                   excluded_reason=r.excluded_reason)
    for r in edge_list(fit).itertuples(index=False):
        g.add_edge(r.source, r.target, weight=float(r.weight), sign=int(r.sign))
    nx.write_graphml(g, path)


def cmd_export(args) -> int:
    fit = archive.load(args.archive)
    suffix = {"edgelist": ".csv", "graphml": ".graphml", "dot": ".dot"}[args.format]
    out = Path(args.output or Path(args.archive).with_suffix(suffix))
    if args.format == "edgelist":
        _write_csv(edge_list(fit), out)
    elif args.format == "graphml":
        to_graphml(fit, out)
    else:
        out.write_text(to_dot(fit))
    print(f"wrote {out}")
    return 0


# ---- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgmnet", description="Mixed graphical model networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate a model from a YAML run configuration")
    f.add_argument("config")
    f.add_argument("--output", help="output directory (overrides the config)")
    f.add_argument("--workers", type=int, help=f"bootstrap workers (default: config or ${WORKERS_ENV})")
    f.add_argument("--exclude-unstable", metavar="ARCHIVE",
                   help="exclude the nodes found unstable in ARCHIVE from community detection")
    f.add_argument("--cutoff", type=float, help="stability cutoff used with --exclude-unstable")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("summary", help="edge or index table with bootstrap summaries")
    s.add_argument("archive")
    s.add_argument("--what", choices=SUMMARY_WHAT, default="edges")
    s.add_argument("--statistics", help="comma-separated metric names for index tables")
    s.add_argument("--top-n", type=int)
    s.add_argument("--csv", help="also write the table to this CSV file")
    s.set_defaults(func=cmd_summary)

    st = sub.add_parser("stability", help="membership stability table")
    st.add_argument("archive")
    st.add_argument("--cutoff", type=float)
    st.add_argument("--csv")
    st.set_defaults(func=cmd_stability)

    sc = sub.add_parser("scores", help="community scores and loadings as CSV")
    sc.add_argument("archive")
    sc.add_argument("--data", help="CSV of new subjects (default: data stored in the archive)")
    sc.add_argument("--quantile-level", type=float)
    sc.add_argument("--output", default=".")
    sc.set_defaults(func=cmd_scores)

    e = sub.add_parser("export", help="graph export")
    e.add_argument("archive")
    e.add_argument("--format", choices=EXPORT_FORMATS, default="edgelist")
    e.add_argument("--output")
    e.set_defaults(func=cmd_export)
    return p


def _origin(exc: BaseException) -> str:
    """Innermost package module on the traceback, e.g. ``mgmnet.glm``."""
    name, tb = "mgmnet", exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("mgmnet"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MgmError as exc:
        print(f"mgmnet: {_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
