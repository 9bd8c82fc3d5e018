"""Versioned JSON archive of a :class:`~mgmnet.fit.ModelFit`.

Floats are written with Python's shortest round-trip repr, so every number
reloads bit-exactly. Weights are stored as a sparse edge list. The worker
count is execution detail and is left out, so archives written with any
number of workers are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .bootstrap import StabilityReport
from .community import Partition
from .data_model import Dataset, InferenceReport, LayerSpec, ModelConfig, VariableKind
from .errors import ConfigError
from .fit import ModelFit
from .scores import LoadingsMatrix

FORMAT = "mgmnet-archive"
VERSION = 1
_NOT_ARCHIVED = ("workers",)


def _frame_out(df: pd.DataFrame | None):
    if df is None:
        return None
    rows = [[_scalar(x) for x in row] for row in df.itertuples(index=False)]
    return {"columns": list(df.columns), "rows": rows}


def _frame_in(obj) -> pd.DataFrame | None:
    if obj is None:
        return None
    return pd.DataFrame(obj["rows"], columns=obj["columns"])


def _scalar(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def _kind_out(k: VariableKind):
    return {"name": k.name, "levels": list(k.levels)} if k.is_categorical else {"name": k.name}


def _kind_in(d) -> VariableKind:
    return VariableKind(d["name"], tuple(d.get("levels", ())))


def _partition_out(p: Partition):
    return {"nodes": list(p.nodes), "assignment": [p.assignment[v] for v in p.nodes],
            "method": p.method, "excluded_reasons": dict(p.excluded_reasons)}


def _partition_in(d) -> Partition:
    return Partition(tuple(d["nodes"]), dict(zip(d["nodes"], d["assignment"])), d["method"],
                     dict(d["excluded_reasons"]))


def _matrix(a: np.ndarray):
    return [[float(x) for x in row] for row in np.asarray(a)]


def _loadings_out(L: LoadingsMatrix):
    return {"layer": L.layer, "nodes": list(L.nodes), "communities": list(L.communities),
            "raw": _matrix(L.raw), "values": _matrix(L.values),
            "membership": list(L.membership), "normalization": L.normalization}


def _loadings_in(d) -> LoadingsMatrix:
    k = len(d["communities"])
    shape = (len(d["nodes"]), k)
    return LoadingsMatrix(d["layer"], tuple(d["nodes"]), tuple(d["communities"]),
                          np.array(d["raw"], dtype=float).reshape(shape),
                          np.array(d["values"], dtype=float).reshape(shape),
                          tuple(d["membership"]), d["normalization"])


def to_document(fit: ModelFit) -> dict:
    config = {k: v for k, v in fit.config.echo().items() if k not in _NOT_ARCHIVED}
    edges = [[i, j, w, s] for i, j, w, s in fit.network().edges()]
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": config,
        "layers": None if fit.layer_spec is None else {
            "labels": list(fit.layer_spec.layer_labels),
            "layer_of": dict(fit.layer_spec.layer_of),
            "rules": _matrix(fit.layer_spec.rules),
        },
        "data_info": {
            "n_subjects": fit.n_subjects,
            "columns": list(fit.column_names),
            "kinds": [_kind_out(k) for k in fit.column_kinds],
            "inferred_categorical": list(fit.inference.inferred_categorical),
            "overridden": list(fit.inference.overridden),
            "notes": list(fit.inference.notes),
        },
        "nodes": list(fit.nodes),
        "node_layers": list(fit.node_layers),
        "edges": edges,
        "selection": {v: list(lam_alpha) for v, lam_alpha in fit.selection.items()},
        "partitions": {lab: _partition_out(p) for lab, p in fit.partitions.items()},
        "indices": {
            "general": _frame_out(fit.general),
            "bridge": _frame_out(fit.bridge),
            "excluded": _frame_out(fit.excluded),
            "interlayer": _frame_out(fit.interlayer),
        },
        "loadings": {lab: _loadings_out(L) for lab, L in fit.loadings.items()},
        "score_standardization": {v: list(ms) for v, ms in fit.score_standardization.items()},
        "data": None if fit.data is None else _matrix(fit.data.values),
    }
    if fit.boot is not None:
        doc["bootstrap"] = {
            "successful_replicates": fit.n_replicates,
            "failures": [list(f) for f in fit.failures],
            "summaries": {fam: _frame_out(df) for fam, df in fit.boot.items()},
            "stability": {lab: {"original": r.original, "proportions": r.proportions,
                                "cutoff": r.cutoff, "n_replicates": r.n_replicates}
                          for lab, r in fit.stability.items()},
            "replicate_loadings": [{lab: _matrix(a) for lab, a in rep.items()}
                                   for rep in fit.replicate_loadings],
        }
    return doc


def from_document(doc: dict) -> ModelFit:
    if doc.get("format") != FORMAT:
        raise ConfigError("not an mgmnet archive")
    if doc.get("version") != VERSION:
        raise ConfigError(f"unsupported archive version {doc.get('version')!r}")
    config = ModelConfig(**doc["config"])
    info = doc["data_info"]
    kinds = tuple(_kind_in(k) for k in info["kinds"])
    inference = InferenceReport(tuple(info["inferred_categorical"]), tuple(info["overridden"]),
                                tuple(info["notes"]))
    nodes = tuple(doc["nodes"])
    p = len(nodes)
    W = np.zeros((p, p))
    S = np.zeros((p, p), dtype=int)
    for i, j, w, s in doc["edges"]:
        W[i, j] = W[j, i] = w
        S[i, j] = S[j, i] = s
    lay = doc["layers"]
    spec = None if lay is None else LayerSpec(lay["layer_of"], tuple(lay["labels"]),
                                              np.array(lay["rules"], dtype=float))
    data = None
    if doc["data"] is not None:
        data = Dataset(tuple(info["columns"]), kinds, np.array(doc["data"], dtype=float).reshape(
            info["n_subjects"], len(kinds)), inference)
    idx = doc["indices"]
    fit = ModelFit(
        config=config, layer_spec=spec, n_subjects=info["n_subjects"],
        column_names=tuple(info["columns"]), column_kinds=kinds, inference=inference,
        nodes=nodes, node_layers=tuple(doc["node_layers"]), weights=W, signs=S,
        partitions={lab: _partition_in(d) for lab, d in doc["partitions"].items()},
        general=_frame_in(idx["general"]), bridge=_frame_in(idx["bridge"]),
        excluded=_frame_in(idx["excluded"]), interlayer=_frame_in(idx["interlayer"]),
        loadings={lab: _loadings_in(d) for lab, d in doc["loadings"].items()},
        score_standardization={v: tuple(ms) for v, ms in doc["score_standardization"].items()},
        selection={v: tuple(x) for v, x in doc["selection"].items()},
        data=data,
    )
    b = doc.get("bootstrap")
    if b is not None:
        fit.n_replicates = b["successful_replicates"]
        fit.failures = [tuple(f) for f in b["failures"]]
        fit.boot = {fam: _frame_in(d) for fam, d in b["summaries"].items()}
        fit.stability = {lab: StabilityReport(lab, d["original"], d["proportions"], d["cutoff"],
                                              d["n_replicates"])
                         for lab, d in b["stability"].items()}
        fit.replicate_loadings = [
            {lab: np.array(a, dtype=float).reshape(fit.loadings[lab].values.shape)
             for lab, a in rep.items()}
            for rep in b["replicate_loadings"]]
    return fit


def dumps(fit: ModelFit) -> str:
    return json.dumps(to_document(fit), indent=1, allow_nan=True)


def save(fit: ModelFit, path) -> Path:
    path = Path(path)
    path.write_text(dumps(fit))
    return path


def load(path) -> ModelFit:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read archive {path}: {exc}") from exc
    return from_document(doc)
