"""Node-level indices: general, bridge, excluded-node bridge and interlayer.

Path-based indices run on the distance graph ``d_ij = 1 / |w_ij|``. Closeness
sums distances over reachable targets only and is 0 when no target is
reachable. Betweenness counts unordered pairs with fractional credit
``sigma_st(v) / sigma_st`` when shortest paths tie. Edges whose sign is
undefined count as positive in expected-influence metrics and the affected
nodes are flagged.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .community import Partition
from .errors import BridgeUndefinedError, MgmError
from .mgm import NetworkFit

GENERAL = ("strength", "expected_influence", "closeness", "betweenness")
BRIDGE = ("bridge_strength", "bridge_ei1", "bridge_ei2", "bridge_closeness", "bridge_betweenness")
EXCLUDED = tuple(f"{m}_excluded" for m in BRIDGE)
COLUMNS = ["node", "layer", "metric", "value", "undefined_sign"]

_REL_TIE = 1e-12


def distance_matrix(weights: np.ndarray, transform: str = "inverse") -> np.ndarray:
    """Edge lengths from absolute weights; ``inf`` where there is no edge."""
    W = np.abs(np.asarray(weights, dtype=float))
    with np.errstate(divide="ignore"):
        if transform == "inverse":
            D = np.where(W > 0, 1.0 / W, np.inf)
        elif transform == "one_minus":
            if np.any(W >= 1):
                raise ValueError("one_minus distances need |w| < 1")
            D = np.where(W > 0, 1.0 - W, np.inf)
        else:
            raise ValueError(f"unknown distance transform {transform!r}")
    np.fill_diagonal(D, np.inf)
    return D


@dataclass
class ShortestPaths:
    dist: np.ndarray
    sigma: np.ndarray
    preds: list[list[list[int]]]
    order: list[list[int]]


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _REL_TIE * max(abs(a), abs(b))


def shortest_paths(D: np.ndarray) -> ShortestPaths:
    """Dijkstra from every source with shortest-path counting."""
    n = D.shape[0]
    dist = np.full((n, n), np.inf)
    sigma = np.zeros((n, n))
    preds, orders = [], []
    nbrs = [np.flatnonzero(np.isfinite(D[i])) for i in range(n)]
    for s in range(n):
        ds = dist[s]
        sg = sigma[s]
        pred = [[] for _ in range(n)]
        ds[s] = 0.0
        sg[s] = 1.0
        done = np.zeros(n, dtype=bool)
        order = []
        heap = [(0.0, s)]
        while heap:
            d_v, v = heapq.heappop(heap)
            if done[v] or d_v > ds[v]:
                continue
            done[v] = True
            order.append(v)
            for w in nbrs[v]:
                if done[w]:
                    continue
                alt = d_v + D[v, w]
                if np.isfinite(ds[w]) and _close(alt, ds[w]):
                    sg[w] += sg[v]
                    pred[w].append(v)
                elif alt < ds[w]:
                    ds[w] = alt
                    sg[w] = sg[v]
                    pred[w] = [v]
                    heapq.heappush(heap, (alt, w))
        preds.append(pred)
        orders.append(order)
    return ShortestPaths(dist, sigma, preds, orders)


def betweenness(sp: ShortestPaths, pair_ok: Callable[[int, int], bool] | None = None) -> np.ndarray:
    """Brandes dependency sums over unordered pairs accepted by ``pair_ok``."""
    n = sp.dist.shape[0]
    bc = np.zeros(n)
    for s in range(n):
        delta = np.zeros(n)
        sg = sp.sigma[s]
        for w in reversed(sp.order[s]):
            if w == s:
                continue
            own = 1.0 if pair_ok is None or pair_ok(s, w) else 0.0
            for v in sp.preds[s][w]:
                delta[v] += sg[v] / sg[w] * (own + delta[w])
            bc[w] += delta[w]
    return bc / 2.0


def closeness(sp: ShortestPaths, v: int, targets: Sequence[int]) -> float:
    d = [sp.dist[v, u] for u in targets if u != v and np.isfinite(sp.dist[v, u])]
    total = float(np.sum(d)) if d else 0.0
    return 1.0 / total if total > 0 else 0.0


def _rows(nodes, layers, metric, values, flags=None):
    return [
        (nodes[i], layers[i], metric, float(values[i]), bool(flags[i]) if flags is not None else False)
        for i in range(len(nodes))
    ]


def _frame(rows) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=COLUMNS)


def _layers(network: NetworkFit, layers: Sequence[str] | None) -> list[str]:
    return list(layers) if layers is not None else ["1"] * network.p


def _undefined_flags(network: NetworkFit) -> np.ndarray:
    return np.any((network.signs == 0) & (network.weights > 0), axis=1)


def general_indices(network: NetworkFit, layers: Sequence[str] | None = None,
                    nodes: Sequence[str] | None = None, transform: str = "inverse") -> pd.DataFrame:
    """Strength, expected influence, closeness and betweenness for each node."""
    W = network.weights
    lay = _layers(network, layers)
    sp = shortest_paths(distance_matrix(W, transform))
    p = network.p
    strength = W.sum(axis=1)
    ei = network.signed_weights.sum(axis=1)
    clo = np.array([closeness(sp, v, range(p)) for v in range(p)])
    btw = betweenness(sp)
    flags = _undefined_flags(network)
    rows = []
    for metric, vals, fl in (("strength", strength, None), ("expected_influence", ei, flags),
                             ("closeness", clo, None), ("betweenness", btw, None)):
        rows += _rows(network.nodes, lay, metric, vals, fl)
    out = _frame(rows)
    if nodes is not None:
        out = out[out["node"].isin(set(nodes))].reset_index(drop=True)
    return out


def _labels(network: NetworkFit, partition: Partition) -> np.ndarray:
    return partition.labels_for(network.nodes)


def _ei2(S: np.ndarray, v: int, target: np.ndarray) -> float:
    """Two-step signed propagation from ``v`` into nodes flagged by ``target``."""
    total = 0.0
    for u in np.flatnonzero(S[v]):
        mask = target.copy()
        mask[v] = False
        total += S[v, u] * float(S[u, mask].sum())
    return total


def bridge_indices(network: NetworkFit, partition: Partition, layers: Sequence[str] | None = None,
                   transform: str = "inverse") -> pd.DataFrame:
    """Bridge indices for every assigned node of ``partition``."""
    if partition.k < 2:
        raise BridgeUndefinedError("bridge indices need at least two communities")
    lab = _labels(network, partition)
    W, S = network.weights, network.signed_weights
    lay = _layers(network, layers)
    sp = shortest_paths(distance_matrix(W, transform))
    bt = betweenness(sp, lambda s, t: lab[s] > 0 and lab[t] > 0 and lab[s] != lab[t])
    flags = _undefined_flags(network)
    rows = []
    for v in range(network.p):
        if lab[v] == 0 or network.nodes[v] not in partition.assignment:
            continue
        other = (lab > 0) & (lab != lab[v])
        ei1 = float(S[v, other].sum())
        vals = {
            "bridge_strength": float(W[v, other].sum()),
            "bridge_ei1": ei1,
            "bridge_ei2": ei1 + _ei2(S, v, other),
            "bridge_closeness": closeness(sp, v, np.flatnonzero(other)),
            "bridge_betweenness": bt[v],
        }
        for metric in BRIDGE:
            rows.append((network.nodes[v], lay[v], metric, float(vals[metric]),
                         bool(flags[v]) if metric in ("bridge_ei1", "bridge_ei2") else False))
    return _frame(rows)


def excluded_bridge_indices(network: NetworkFit, partition: Partition,
                            layers: Sequence[str] | None = None,
                            transform: str = "inverse") -> pd.DataFrame:
    """Bridge indices for excluded nodes with respect to the assigned communities."""
    lab = _labels(network, partition)
    excluded = [network.index(v) for v in partition.excluded]
    if not excluded or partition.k < 1:
        return _frame([])
    W, S = network.weights, network.signed_weights
    lay = _layers(network, layers)
    sp = shortest_paths(distance_matrix(W, transform))
    bt = None
    if partition.k >= 2:
        bt = betweenness(sp, lambda s, t: lab[s] > 0 and lab[t] > 0 and lab[s] != lab[t])
    flags = _undefined_flags(network)
    assigned = lab > 0
    rows = []
    for v in excluded:
        ei1 = float(S[v, assigned].sum())
        vals = {
            "bridge_strength_excluded": float(W[v, assigned].sum()),
            "bridge_ei1_excluded": ei1,
            "bridge_ei2_excluded": ei1 + _ei2(S, v, assigned),
            "bridge_closeness_excluded": closeness(sp, v, np.flatnonzero(assigned)),
        }
        if bt is not None:
            vals["bridge_betweenness_excluded"] = bt[v]
        for metric in EXCLUDED:
            if metric in vals:
                rows.append((network.nodes[v], lay[v], metric, float(vals[metric]),
                             bool(flags[v]) if "_ei" in metric else False))
    return _frame(rows)


def interlayer_indices(multilayer_fit, transform: str = "inverse") -> pd.DataFrame:
    """General indices on the graph that keeps only interlayer edges."""
    if len(multilayer_fit.layer_labels) < 2:
        raise MgmError("interlayer indices need at least two layers")
    net = multilayer_fit.interlayer_network()
    return general_indices(net, multilayer_fit.node_layers(), transform=transform)


@dataclass
class BridgeProfile:
    node: str
    overall: dict[str, float]
    contributions: pd.DataFrame

    def table(self, metric: str) -> pd.DataFrame:
        return self.contributions[self.contributions["metric"] == metric].reset_index(drop=True)


def find_bridge_communities(network: NetworkFit, partition: Partition, node: str) -> BridgeProfile:
    """Split the additive bridge metrics of ``node`` into per-community contributions."""
    if node not in partition.assignment:
        raise MgmError(f"unknown node {node!r}")
    lab = _labels(network, partition)
    v = network.index(node)
    W, S = network.weights, network.signed_weights
    own = partition.assignment[node]
    suffix = "" if own is not None else "_excluded"
    rows = []
    for c in partition.communities:
        if c == own:
            continue
        members = lab == c
        rows.append((f"bridge_strength{suffix}", c, float(W[v, members].sum())))
        rows.append((f"bridge_ei1{suffix}", c, float(S[v, members].sum())))
    contrib = pd.DataFrame(rows, columns=["metric", "community", "contribution"])
    foreign = (lab > 0) & (lab != (own or 0))
    overall = {f"bridge_strength{suffix}": float(W[v, foreign].sum()),
               f"bridge_ei1{suffix}": float(S[v, foreign].sum())}
    return BridgeProfile(node, overall, contrib)
