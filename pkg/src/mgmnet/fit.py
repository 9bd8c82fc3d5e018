"""Fitted-model container, the top-level ``fit_model`` driver and summary tables.

A :class:`ModelFit` holds only plain arrays, frames and small dataclasses so
that it can be archived and reloaded without recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from . import bootstrap as boot
from .analysis import SINGLE_LAYER, Analysis, analyse
from .community import UNSTABLE, Partition
from .data_model import Dataset, InferenceReport, LayerSpec, ModelConfig, VariableKind
from .errors import MgmError
from .indices import BridgeProfile, find_bridge_communities
from .mgm import NetworkFit
from .scores import LoadingsMatrix, score_standardization

BOOTSTRAPPED = ("general_index", "interlayer_index", "bridge_index", "excluded_index",
                "community", "loadings")
SUMMARY_WHAT = ("edges", "indices", "interlayer_edges", "interlayer_indices")


@dataclass
class ModelFit:
    config: ModelConfig
    layer_spec: LayerSpec | None
    n_subjects: int
    column_names: tuple[str, ...]
    column_kinds: tuple[VariableKind, ...]
    inference: InferenceReport
    nodes: tuple[str, ...]
    node_layers: tuple[str, ...]
    weights: np.ndarray
    signs: np.ndarray
    partitions: dict[str, Partition]
    general: pd.DataFrame
    bridge: pd.DataFrame
    excluded: pd.DataFrame
    interlayer: pd.DataFrame | None
    loadings: dict[str, LoadingsMatrix]
    score_standardization: dict[str, tuple[float, float]]
    selection: dict[str, tuple[float, float]] = field(default_factory=dict)
    data: Dataset | None = None
    boot: dict[str, pd.DataFrame] | None = None
    stability: dict[str, boot.StabilityReport] | None = None
    replicate_loadings: list[dict[str, np.ndarray]] | None = None
    n_replicates: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def is_multilayer(self) -> bool:
        return self.layer_spec is not None

    @property
    def layer_labels(self) -> tuple[str, ...]:
        return self.layer_spec.layer_labels if self.layer_spec else (SINGLE_LAYER,)

    @property
    def kinds(self) -> dict[str, VariableKind]:
        return dict(zip(self.column_names, self.column_kinds))

    @property
    def n_variables(self) -> int:
        return len(self.column_names)

    def network(self) -> NetworkFit:
        kinds = self.kinds
        return NetworkFit(self.nodes, tuple(kinds[v] for v in self.nodes), self.weights,
                          self.signs, self.config.rule, covariates=self.config.covariates)

    def _layer_mask(self, label: str) -> np.ndarray:
        inside = np.array(self.node_layers) == label
        return inside[:, None] & inside[None, :]

    def layer_network(self, label: str) -> NetworkFit:
        net = self.network()
        return net if not self.is_multilayer else net.subgraph(self._layer_mask(label))

    def edge_counts(self) -> tuple[dict[str, int], dict[str, int]]:
        lay = self.node_layers
        intra = {lab: 0 for lab in self.layer_labels}
        inter = {}
        if self.is_multilayer:
            labels = self.layer_labels
            for ia, a in enumerate(labels):
                for b in labels[ia + 1:]:
                    if self.layer_spec.allowed(a, b):
                        inter[self.layer_spec.pair_key(a, b)] = 0
        for i, j, _, _ in self.network().edges():
            if lay[i] == lay[j]:
                intra[lay[i]] += 1
            else:
                key = self.layer_spec.pair_key(lay[i], lay[j])
                inter[key] = inter.get(key, 0) + 1
        return intra, inter

    def bridge_profile(self, node: str) -> BridgeProfile:
        if node not in self.nodes:
            raise MgmError(f"unknown node {node!r}")
        label = self.node_layers[self.nodes.index(node)]
        return find_bridge_communities(self.layer_network(label), self.partitions[label], node)

    def unstable_nodes(self, cutoff: float | None = None) -> list[str]:
        if not self.stability:
            return []
        cut = self.config.stability_cutoff if cutoff is None else cutoff
        return [v for rep in self.stability.values() for v in rep.with_cutoff(cut).unstable_nodes]


def fit_model(dataset: Dataset, config: ModelConfig, layer_spec: LayerSpec | None = None,
              workers: int | None = None) -> ModelFit:
    """Estimate the network, communities and indices, then bootstrap if ``reps > 0``."""
    a = analyse(dataset, config, layer_spec)
    spec = a.multilayer.layer_spec if a.multilayer is not None else None
    fit = ModelFit(
        config=config, layer_spec=spec, n_subjects=dataset.n,
        column_names=dataset.column_names, column_kinds=dataset.kinds,
        inference=dataset.inference, nodes=a.network.nodes, node_layers=tuple(a.node_layers),
        weights=a.network.weights, signs=a.network.signs, partitions=dict(a.partitions),
        general=a.general, bridge=a.bridge, excluded=a.excluded, interlayer=a.interlayer,
        loadings=a.loadings,
        score_standardization=score_standardization(dataset, a.network.nodes),
        selection=dict(a.network.selection),
        data=dataset if config.save_data else None,
    )
    if config.reps > 0:
        _attach_bootstrap(fit, a, dataset, config, layer_spec, workers)
    return fit


def _attach_bootstrap(fit: ModelFit, a: Analysis, dataset, config, layer_spec, workers):
    store = boot.run_bootstrap(dataset, config, layer_spec, a, workers)
    fit.boot = boot.summarize(a.quantities(), store, config.quantile_level)
    fit.stability = boot.stability_reports(a, store, config.stability_cutoff)
    fit.replicate_loadings = boot.replicate_loadings(a, store)
    fit.n_replicates = store.n_success
    fit.failures = [(f.index, f.reason) for f in store.failures]


def refit_excluding_unstable(dataset: Dataset, fit: ModelFit, cutoff: float | None = None,
                             workers: int | None = None, config: ModelConfig | None = None,
                             layer_spec: LayerSpec | None = None) -> ModelFit:
    """Refit with the unstable nodes of ``fit`` excluded from community detection.

    ``config`` and ``layer_spec`` default to those of ``fit``.
    """
    unstable = fit.unstable_nodes(cutoff)
    if config is None:
        config, layer_spec = fit.config, fit.layer_spec
    config = replace(config, exclude_from_cluster=tuple(
        dict.fromkeys(config.exclude_from_cluster + tuple(unstable))))
    new = fit_model(dataset, config, layer_spec, workers)
    for part in new.partitions.values():
        for v in unstable:
            if v in part.assignment:
                part.excluded_reasons[v] = UNSTABLE
    return new


# ---- tables ---------------------------------------------------------------

def _edge_rows(fit: ModelFit, interlayer: bool) -> pd.DataFrame:
    lay = fit.node_layers
    S = fit.weights * np.where(fit.signs == 0, 1, fit.signs)
    rows = []
    for i, j, _, _ in fit.network().edges():
        if (lay[i] != lay[j]) != interlayer:
            continue
        layer = lay[i] if lay[i] == lay[j] else fit.layer_spec.pair_key(lay[i], lay[j])
        rows.append((fit.nodes[i], fit.nodes[j], layer, float(S[i, j])))
    est = pd.DataFrame(rows, columns=["node_a", "node_b", "layer", "estimated"])
    est.insert(0, "id", est["node_a"] + "--" + est["node_b"])
    if fit.boot is not None:
        b = fit.boot["edges"].drop(columns=["estimated"])
        est = est.merge(b, on=["node_a", "node_b", "layer"], how="left")
    return est.drop(columns=["node_a", "node_b"])


def _index_rows(fit: ModelFit, frames: Sequence[tuple[str, pd.DataFrame | None]],
                statistics: Sequence[str] | None) -> pd.DataFrame:
    parts = []
    for family, frame in frames:
        if frame is None or frame.empty:
            continue
        f = frame.rename(columns={"value": "estimated"}).drop(columns=["undefined_sign"])
        if fit.boot is not None and family in fit.boot:
            b = fit.boot[family].drop(columns=["estimated"])
            f = f.merge(b, on=["node", "layer", "metric"], how="left")
        parts.append(f)
    if not parts:
        return pd.DataFrame(columns=["id", "layer", "metric", "estimated"])
    out = pd.concat(parts, ignore_index=True)
    if statistics:
        unknown = set(statistics) - set(out["metric"])
        if unknown:
            raise MgmError(f"statistics not present in this fit: {sorted(unknown)}")
        out = out[out["metric"].isin(statistics)]
    return out.rename(columns={"node": "id"}).reset_index(drop=True)


def summary_table(fit: ModelFit, what: str = "edges", statistics: Sequence[str] | None = None,
                  top_n: int | None = None) -> pd.DataFrame:
    """Estimates with bootstrap summaries, ranked by |estimated| when ``top_n`` is set."""
    if what not in SUMMARY_WHAT:
        raise MgmError(f"what must be one of {SUMMARY_WHAT}")
    if what.startswith("interlayer") and not fit.is_multilayer:
        raise MgmError("interlayer summaries need a multilayer fit")
    if what == "edges":
        table = _edge_rows(fit, False)
    elif what == "interlayer_edges":
        table = _edge_rows(fit, True)
    elif what == "indices":
        table = _index_rows(fit, [("general_index", fit.general), ("bridge_index", fit.bridge),
                                  ("excluded_index", fit.excluded)], statistics)
    else:
        table = _index_rows(fit, [("interlayer_index", fit.interlayer)], statistics)
    if top_n is not None:
        order = np.argsort(-table["estimated"].abs().to_numpy(), kind="stable")
        table = table.iloc[order[:top_n]].reset_index(drop=True)
    return table


def _wrap(label: str, items: Sequence[str], width: int = 78) -> list[str]:
    """``label item, item, ...`` wrapped with continuation lines under the first item."""
    indent = " " * (len(label) + 1)
    lines, line = [], label
    for k, item in enumerate(items):
        piece = item + ("," if k < len(items) - 1 else "")
        if line != label and len(line) + 1 + len(piece) > width:
            lines.append(line)
            line = indent + piece
        else:
            line = f"{line} {piece}"
    lines.append(line)
    return lines


def format_fit(fit: ModelFit) -> str:
    """Console overview of a fit, built from archived fields only."""
    intra, inter = fit.edge_counts()
    n_edges = sum(intra.values()) + sum(inter.values())
    out = ["mgmnet fit"]
    if fit.is_multilayer:
        out.append("  Type: Multilayer MGM")
    else:
        out.append("  Type: Single layer MGM")
    out.append(f"  Data: {fit.n_subjects} subjects x {fit.n_variables} variables")
    if fit.is_multilayer:
        out.append(f"  Layers ({len(fit.layer_labels)}):")
        for lab in fit.layer_labels:
            count = sum(1 for x in fit.node_layers if x == lab)
            out.append(f"    - {lab}: {count} nodes, {intra[lab]} edges")
        if inter:
            out.append("  Interlayer edges:")
            out += [f"    - {k}: {v} edges" for k, v in inter.items()]
    out.append(f"  Graph: {len(fit.nodes)} nodes, {n_edges} edges")
    if fit.is_multilayer:
        out.append("  Communities per layer:")
        out += [f"    - {lab}: {fit.partitions[lab].k}" for lab in fit.layer_labels]
    else:
        out.append(f"  Communities: {fit.partitions[SINGLE_LAYER].k}")
    excluded = [v for p in fit.partitions.values() for v in p.excluded]
    if excluded:
        out += _wrap("  Excluded from communities:", excluded)
    if fit.config.covariates:
        out.append("  Covariates (adjusted for): " + ", ".join(fit.config.covariates))
    out.append(f"  Community detection: {fit.config.cluster_method}")
    if fit.boot is not None:
        out.append(f"  Bootstrap replications: {fit.config.reps}")
        if fit.failures:
            out.append(f"  Failed replications: {len(fit.failures)}")
        names = [q for q in BOOTSTRAPPED if q != "interlayer_index" or fit.is_multilayer]
        out += _wrap("  Bootstrapped quantities:", names)
    inferred = list(fit.inference.inferred_categorical)
    if inferred:
        out.append("  Data info:")
        out += _wrap("    - Inferred as 'c' (categorical):", inferred)
    return "\n".join(out)


def format_table(table: pd.DataFrame, digits: int = 3) -> str:
    return table.to_string(index=False, float_format=lambda x: f"{x:.{digits}f}")
