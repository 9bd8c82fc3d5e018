"""Community detection on absolute edge weights.

Louvain and Walktrap are implemented here. ``detect`` adds the exclusion and
singleton handling used by the rest of the pipeline and renumbers communities
1..K by first node appearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CommunityError, UnimplementedMethodError

USER_EXCLUDED = "user_excluded"
SINGLETON = "singleton"
UNSTABLE = "unstable"

IMPLEMENTED = ("louvain", "walktrap")
DECLARED = ("fast_greedy", "infomap", "edge_betweenness")


@dataclass
class Partition:
    """Node -> community id in 1..K, or ``None`` for excluded nodes."""

    nodes: tuple[str, ...]
    assignment: dict[str, int | None]
    method: str = ""
    excluded_reasons: dict[str, str] = field(default_factory=dict)

    @property
    def k(self) -> int:
        ids = {c for c in self.assignment.values() if c is not None}
        return len(ids)

    @property
    def communities(self) -> list[int]:
        return sorted({c for c in self.assignment.values() if c is not None})

    @property
    def assigned(self) -> list[str]:
        return [v for v in self.nodes if self.assignment.get(v) is not None]

    @property
    def excluded(self) -> list[str]:
        return [v for v in self.nodes if self.assignment.get(v) is None]

    def members(self, community: int) -> list[str]:
        return [v for v in self.nodes if self.assignment.get(v) == community]

    def labels_for(self, all_nodes: Sequence[str]) -> np.ndarray:
        """Integer labels aligned to ``all_nodes``; 0 marks excluded or absent nodes."""
        return np.array([self.assignment.get(v) or 0 for v in all_nodes], dtype=int)


def renumber(labels: Sequence[int]) -> np.ndarray:
    """Relabel to 1..K in order of first appearance; non-positive labels stay 0."""
    mapping = {}
    out = np.zeros(len(labels), dtype=int)
    for i, lab in enumerate(labels):
        if lab is None or lab < 0:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


def modularity(weights_abs: np.ndarray, labels: Sequence[int]) -> float:
    """Weighted Newman modularity; nodes labelled 0 or None are left out."""
    A = np.asarray(weights_abs, dtype=float)
    lab = np.array([0 if v is None else v for v in labels])
    keep = lab > 0
    A = A[np.ix_(keep, keep)]
    lab = lab[keep]
    two_m = A.sum()
    if two_m <= 0:
        return 0.0
    k = A.sum(axis=1)
    same = lab[:, None] == lab[None, :]
    return float(np.sum((A - np.outer(k, k) / two_m) * same) / two_m)


def _louvain_level(A: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    n = A.shape[0]
    comm = np.arange(n)
    k = A.sum(axis=1)
    two_m = A.sum()
    tot = k.copy()
    neighbours = [np.flatnonzero(A[i]) for i in range(n)]
    improved = False
    while True:
        moved = False
        for i in rng.permutation(n):
            ci = comm[i]
            links: dict[int, float] = {}
            for j in neighbours[i]:
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + A[i, j]
            tot[ci] -= k[i]
            best, best_gain = ci, links.get(ci, 0.0) - tot[ci] * k[i] / two_m
            for c, w in links.items():
                gain = w - tot[c] * k[i] / two_m
                if gain > best_gain + 1e-12:
                    best, best_gain = c, gain
            tot[best] += k[i]
            comm[i] = best
            if best != ci:
                moved = improved = True
        if not moved:
            return comm, improved


def louvain(weights_abs: np.ndarray, seed: int = 0) -> np.ndarray:
    """Two-phase Louvain; returns labels renumbered by first appearance."""
    A = np.abs(np.asarray(weights_abs, dtype=float))
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    if A.sum() <= 0:
        return np.arange(1, n + 1)
    rng = np.random.default_rng(seed)
    membership = np.arange(n)
    q = modularity(A, membership + 1)
    level = A
    while True:
        comm, improved = _louvain_level(level, rng)
        if not improved:
            break
        comm = renumber(comm) - 1
        membership = comm[membership]
        q_new = modularity(A, membership + 1)
        if q_new - q <= 1e-12:
            break
        q = q_new
        M = np.zeros((level.shape[0], comm.max() + 1))
        M[np.arange(level.shape[0]), comm] = 1.0
        level = M.T @ level @ M
    return renumber(membership)


def walktrap(weights_abs: np.ndarray, steps: int = 4) -> np.ndarray:
    """Pons-Latapy agglomeration, cut at the maximum-modularity level.

    Each vertex receives a self-loop weighted by its mean incident weight (1
    when isolated) so the walk is aperiodic. Only adjacent communities merge,
    which keeps connected components apart.
    """
    W = np.abs(np.asarray(weights_abs, dtype=float))
    np.fill_diagonal(W, 0.0)
    n = W.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    deg = (W > 0).sum(axis=1)
    loops = np.where(deg > 0, W.sum(axis=1) / np.maximum(deg, 1), 1.0)
    A = W + np.diag(loops)
    d = A.sum(axis=1)
    Pt = np.linalg.matrix_power(A / d[:, None], steps)

    size = {i: 1 for i in range(n)}
    prob = {i: Pt[i].copy() for i in range(n)}
    members = {i: [i] for i in range(n)}
    adj = {i: set(np.flatnonzero(W[i] > 0).tolist()) for i in range(n)}

    def delta(a, b):
        diff = prob[a] - prob[b]
        return size[a] * size[b] / (size[a] + size[b]) * float(np.sum(diff * diff / d)) / n

    labels = np.arange(n)
    best_labels, best_q = labels.copy(), modularity(W, labels + 1)
    next_id = n
    while True:
        pairs = [(delta(a, b), a, b) for a in adj for b in adj[a] if a < b]
        if not pairs:
            break
        _, a, b = min(pairs)
        c = next_id
        next_id += 1
        size[c] = size[a] + size[b]
        prob[c] = (size[a] * prob[a] + size[b] * prob[b]) / size[c]
        members[c] = members[a] + members[b]
        adj[c] = (adj[a] | adj[b]) - {a, b}
        for x in adj[c]:
            adj[x] -= {a, b}
            adj[x].add(c)
        for old in (a, b):
            del size[old], prob[old], members[old], adj[old]
        labels[members[c]] = c
        q = modularity(W, labels + 1)
        if q > best_q + 1e-12:
            best_q, best_labels = q, labels.copy()
    return renumber(best_labels)


def run_method(method: str, weights_abs: np.ndarray, seed: int = 0, steps: int = 4) -> np.ndarray:
    if method == "louvain":
        return louvain(weights_abs, seed)
    if method == "walktrap":
        return walktrap(weights_abs, steps)
    if method in DECLARED:
        raise UnimplementedMethodError(
            f"cluster_method {method!r} is a declared option without an implementation; "
            f"register one in community.run_method or use one of {IMPLEMENTED}")
    raise CommunityError(f"unknown cluster_method {method!r}")


def detect(weights: np.ndarray, nodes: Sequence[str], method: str = "louvain", *,
           exclude: Sequence[str] = (), singletons_as_excluded: bool = False,
           seed: int = 0, steps: int = 4, universe: Sequence[str] | None = None) -> Partition:
    """Detect communities among ``universe`` (default all ``nodes``).

    ``weights`` is the full node x node weight matrix aligned with ``nodes``;
    absolute values are used. Nodes in ``exclude`` keep their edges in the
    network but are removed, with their edges, before detection.
    """
    if method not in IMPLEMENTED:
        run_method(method, np.zeros((0, 0)))
    nodes = list(nodes)
    universe = list(nodes if universe is None else universe)
    excluded = set(exclude)
    eligible = [v for v in universe if v not in excluded]
    idx = [nodes.index(v) for v in eligible]
    W = np.abs(np.asarray(weights, dtype=float))[np.ix_(idx, idx)]
    raw = run_method(method, W, seed, steps) if eligible else np.zeros(0, dtype=int)
    reasons = {v: USER_EXCLUDED for v in universe if v in excluded}
    labels = raw.copy()
    if singletons_as_excluded and len(raw):
        counts = np.bincount(raw)
        for i, lab in enumerate(raw):
            if counts[lab] == 1:
                labels[i] = 0
                reasons[eligible[i]] = SINGLETON
    labels = renumber([lab if lab > 0 else -1 for lab in labels])
    assignment = {v: None for v in universe}
    for v, lab in zip(eligible, labels):
        assignment[v] = int(lab) if lab > 0 else None
    return Partition(tuple(universe), assignment, method, reasons)


def detect_from_config(weights: np.ndarray, nodes: Sequence[str], config,
                       universe: Sequence[str] | None = None) -> Partition:
    return detect(weights, nodes, config.cluster_method,
                  exclude=[v for v in config.exclude_from_cluster
                           if universe is None or v in universe],
                  singletons_as_excluded=config.treat_singletons_as_excluded,
                  seed=config.seed_model, steps=config.walktrap_steps, universe=universe)


def partition_from_mapping(nodes: Sequence[str], mapping: Mapping[str, int | None],
                           method: str = "", reasons: Mapping[str, str] | None = None) -> Partition:
    return Partition(tuple(nodes), {v: mapping.get(v) for v in nodes}, method, dict(reasons or {}))
