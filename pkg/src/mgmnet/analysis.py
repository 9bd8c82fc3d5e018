"""One pass of the full pipeline on one dataset.

Used both for the original fit and for every bootstrap replicate, so the two
are computed by exactly the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import pandas as pd

from . import indices
from .community import Partition, detect_from_config
from .data_model import Dataset, LayerSpec, ModelConfig
from .mgm import NetworkFit, estimate_network
from .multilayer import MultilayerFit, estimate_multilayer
from .scores import LoadingsMatrix, network_loadings

SINGLE_LAYER = "1"


@dataclass
class Analysis:
    network: NetworkFit
    multilayer: MultilayerFit | None
    layer_labels: tuple[str, ...]
    node_layers: list[str]
    partitions: dict[str, Partition]
    detected: dict[str, Partition]
    general: pd.DataFrame
    bridge: pd.DataFrame
    excluded: pd.DataFrame
    interlayer: pd.DataFrame | None
    loadings: dict[str, LoadingsMatrix] = field(default_factory=dict)

    @property
    def is_multilayer(self) -> bool:
        return self.multilayer is not None

    def allowed_pairs(self) -> list[tuple[int, int]]:
        p = self.network.p
        if self.multilayer is None:
            return [(i, j) for i in range(p) for j in range(i + 1, p)]
        spec = self.multilayer.layer_spec
        lay = self.node_layers
        return [(i, j) for i in range(p) for j in range(i + 1, p) if spec.allowed(lay[i], lay[j])]

    def edge_layer(self, i: int, j: int) -> str:
        a, b = self.node_layers[i], self.node_layers[j]
        if a == b:
            return a
        return self.multilayer.layer_spec.pair_key(a, b)

    def quantities(self) -> dict[str, dict[tuple, float]]:
        """Flat per-family values keyed for bootstrap summaries."""
        nodes = self.network.nodes
        S = self.network.signed_weights
        out = {"edges": {(nodes[i], nodes[j], self.edge_layer(i, j)): float(S[i, j])
                         for i, j in self.allowed_pairs()}}
        for family, frame in (("general_index", self.general), ("bridge_index", self.bridge),
                              ("excluded_index", self.excluded),
                              ("interlayer_index", self.interlayer)):
            if frame is None:
                continue
            out[family] = {(r.node, r.layer, r.metric): float(r.value)
                           for r in frame.itertuples(index=False)}
        out["loadings"] = {(v, L.layer, c): float(L.values[i, k])
                           for L in self.loadings.values()
                           for i, v in enumerate(L.nodes) for k, c in enumerate(L.communities)}
        return out


def _indices_for_layer(net: NetworkFit, partition: Partition, layers):
    bridge = (indices.bridge_indices(net, partition, layers)
              if partition.k >= 2 else indices._frame([]))
    excluded = indices.excluded_bridge_indices(net, partition, layers)
    return bridge, excluded


def analyse(dataset: Dataset, config: ModelConfig, layer_spec: LayerSpec | None = None,
            fixed: dict[str, Partition] | None = None) -> Analysis:
    """Estimate, detect communities, then compute indices and loadings.

    With ``fixed`` the bridge indices and loadings use those partitions
    instead of the detected ones, which is how bootstrap replicates keep
    every node x metric quantity defined with respect to the original
    communities. Detection still runs and is reported in ``detected``.
    """
    if layer_spec is None:
        net = estimate_network(dataset, config)
        layers = [SINGLE_LAYER] * net.p
        found = {SINGLE_LAYER: detect_from_config(net.weights, net.nodes, config)}
        used = fixed if fixed is not None else found
        part = used[SINGLE_LAYER]
        general = indices.general_indices(net, layers)
        bridge, excluded = _indices_for_layer(net, part, layers)
        loadings = {SINGLE_LAYER: network_loadings(net, part, SINGLE_LAYER)}
        return Analysis(net, None, (SINGLE_LAYER,), layers, used, found,
                        general, bridge, excluded, None, loadings)

    ml = estimate_multilayer(dataset, layer_spec, config)
    net = ml.network
    layers = ml.node_layers()
    general = indices.general_indices(net.subgraph(ml.intralayer_mask()), layers)
    found, used, bridges, excludeds, loadings = {}, {}, [], [], {}
    for label in ml.layer_labels:
        layer_net = ml.layer_network(label)
        found[label] = detect_from_config(layer_net.weights, net.nodes, config,
                                          universe=ml.layer_spec.nodes_in(label))
        part = fixed[label] if fixed is not None else found[label]
        used[label] = part
        b, e = _indices_for_layer(layer_net, part, layers)
        bridges.append(b)
        excludeds.append(e)
        loadings[label] = network_loadings(layer_net, part, label)
    inter = indices.interlayer_indices(ml) if len(ml.layer_labels) >= 2 else None
    return Analysis(net, ml, ml.layer_labels, layers, used, found, general,
                    _stack(bridges), _stack(excludeds), inter, loadings)


def _stack(frames: list[pd.DataFrame]) -> pd.DataFrame:
    # empty per-layer tables are skipped so dtypes come from the populated ones
    full = [f for f in frames if len(f)]
    return pd.concat(full, ignore_index=True) if full else frames[0].iloc[:0]


__all__ = ["Analysis", "analyse", "SINGLE_LAYER"]
