"""Layer-rule masks, multilayer estimation and intra/interlayer edge partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, LayerSpec, ModelConfig, validate_layers
from .mgm import NetworkFit, estimate_network


@dataclass
class MultilayerFit:
    network: NetworkFit
    layer_spec: LayerSpec
    intralayer_edges: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    interlayer_edges: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def layer_labels(self) -> tuple[str, ...]:
        return self.layer_spec.layer_labels

    def layer_of(self, node: str) -> str:
        return self.layer_spec.layer_of[node]

    def node_layers(self) -> list[str]:
        return [self.layer_of(v) for v in self.network.nodes]

    def intralayer_mask(self) -> np.ndarray:
        lay = np.array(self.node_layers())
        return lay[:, None] == lay[None, :]

    def layer_network(self, label: str) -> NetworkFit:
        """Whole-node network restricted to the intralayer edges of ``label``."""
        lay = np.array(self.node_layers())
        inside = lay == label
        return self.network.subgraph(inside[:, None] & inside[None, :])

    def interlayer_network(self) -> NetworkFit:
        return self.network.subgraph(~self.intralayer_mask())


def build_mask(layer_spec: LayerSpec) -> dict[str, frozenset]:
    """Allowed predictors per node: every other node in a layer the rules connect."""
    nodes = list(layer_spec.layer_of)
    return {
        s: frozenset(r for r in nodes
                     if r != s and layer_spec.allowed(layer_spec.layer_of[s], layer_spec.layer_of[r]))
        for s in nodes
    }


def partition_edges(network: NetworkFit, layer_spec: LayerSpec):
    intra = {lab: [] for lab in layer_spec.layer_labels}
    labels = layer_spec.layer_labels
    inter = {layer_spec.pair_key(a, b): []
             for ia, a in enumerate(labels) for b in labels[ia + 1:]}
    for i, j, _, _ in network.edges():
        a = layer_spec.layer_of[network.nodes[i]]
        b = layer_spec.layer_of[network.nodes[j]]
        if a == b:
            intra[a].append((i, j))
        else:
            inter[layer_spec.pair_key(a, b)].append((i, j))
    return intra, inter


def estimate_multilayer(dataset: Dataset, layer_spec: LayerSpec,
                        config: ModelConfig) -> MultilayerFit:
    spec = validate_layers(dataset, layer_spec, config.covariates)
    net = estimate_network(dataset, config, build_mask(spec))
    intra, inter = partition_edges(net, spec)
    return MultilayerFit(net, spec, intra, inter)
