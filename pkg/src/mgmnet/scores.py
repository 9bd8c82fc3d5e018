"""Network loadings and subject-level community scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .community import Partition
from .data_model import Dataset, VariableKind
from .errors import DataError, ScoreError
from .mgm import NetworkFit

UNIT_SUM = "unit_sum"
RAW = "raw"


@dataclass
class LoadingsMatrix:
    """Loadings of ``nodes`` (rows) on ``communities`` (columns) of one layer."""

    layer: str
    nodes: tuple[str, ...]
    communities: tuple[int, ...]
    raw: np.ndarray
    values: np.ndarray
    membership: tuple[int, ...] = ()
    normalization: str = UNIT_SUM

    def column_labels(self, multilayer: bool) -> list[str]:
        return [f"{self.layer}:{c}" if multilayer else str(c) for c in self.communities]

    def to_frame(self) -> pd.DataFrame:
        rows = [(v, self.layer, c, float(self.raw[i, k]), float(self.values[i, k]))
                for i, v in enumerate(self.nodes) for k, c in enumerate(self.communities)]
        return pd.DataFrame(rows, columns=["node", "layer", "community", "raw", "loading"])


def network_loadings(network: NetworkFit, partition: Partition, layer: str = "1",
                     normalization: str = UNIT_SUM) -> LoadingsMatrix:
    """Intracommunity strength per node, zero outside the node's own community."""
    if normalization not in (UNIT_SUM, RAW):
        raise ValueError(f"unknown normalization {normalization!r}")
    nodes = partition.nodes
    comms = tuple(partition.communities)
    idx = [network.index(v) for v in nodes]
    W = network.weights[np.ix_(idx, idx)]
    lab = np.array([partition.assignment[v] or 0 for v in nodes])
    raw = np.zeros((len(nodes), len(comms)))
    for k, c in enumerate(comms):
        inside = lab == c
        raw[inside, k] = W[np.ix_(inside, inside)].sum(axis=1)
    values = raw.copy()
    if normalization == UNIT_SUM:
        sums = raw.sum(axis=0)
        values = np.divide(raw, sums, out=np.zeros_like(raw), where=sums > 0)
    return LoadingsMatrix(layer, tuple(nodes), comms, raw, values,
                          tuple(int(c) for c in lab), normalization)


def score_standardization(dataset: Dataset, nodes: Sequence[str]) -> dict[str, tuple[float, float]]:
    """Training (mean, sd) for every score-eligible node of the raw data."""
    out = {}
    for v in nodes:
        kind = dataset.kind(v)
        if kind.is_multilevel:
            continue
        x = dataset.column(v)
        out[v] = (float(x.mean()), float(x.std(ddof=1)))
    return out


def _coded(data: Dataset, node: str, kind: VariableKind) -> np.ndarray:
    try:
        col = data.column(node)
    except DataError:
        raise ScoreError(f"data lacks required column {node!r}") from None
    if not kind.is_categorical:
        return col
    ext = data.kind(node)
    ext_levels = ext.levels if ext.is_categorical else None
    lookup = {lev: i for i, lev in enumerate(kind.levels)}
    out = np.empty(len(col))
    for r, code in enumerate(col):
        label = ext_levels[int(code)] if ext_levels is not None else code
        if label not in lookup:
            raise ScoreError(f"column {node!r} has level {label!r} unknown to the fit")
        out[r] = lookup[label]
    return out


@dataclass
class ScoreResult:
    scores: pd.DataFrame
    loadings: pd.DataFrame
    loading_regions: pd.DataFrame | None = None
    score_lower: pd.DataFrame | None = None
    score_upper: pd.DataFrame | None = None
    standardization: dict = field(default_factory=dict)


def _score_matrix(loadings: Sequence[LoadingsMatrix], Z: Mapping[str, np.ndarray], n: int,
                  values_of=lambda L: L.values) -> np.ndarray:
    blocks = []
    for L in loadings:
        O = values_of(L)
        S = np.zeros((n, len(L.communities)))
        for i, v in enumerate(L.nodes):
            if v in Z and np.any(O[i] != 0):
                S += np.outer(Z[v], O[i])
        blocks.append(S)
    return np.hstack(blocks) if blocks else np.zeros((n, 0))


def community_scores(fit, data: Dataset | None = None,
                     quantile_level: float | None = None) -> ScoreResult:
    """Scores ``s_ic = sum_j z_ij o_jc`` for every community of ``fit``.

    ``fit`` needs ``loadings`` (layer -> LoadingsMatrix), ``kinds`` (node ->
    VariableKind), ``score_standardization`` and optionally ``data`` and
    ``replicate_loadings`` (list of layer -> aligned loading arrays) for
    bootstrap regions. External data are standardized with the training
    means and SDs.
    """
    from .bootstrap import quantile_region

    if data is None:
        data = fit.data
        if data is None:
            raise ScoreError("no data supplied and the fit did not store its data (save_data)")
    loadings = list(fit.loadings.values())
    multilayer = bool(getattr(fit, "is_multilayer", False))
    Z = {}
    for L in loadings:
        for v, c in zip(L.nodes, L.membership):
            kind = fit.kinds[v]
            if c and kind.is_multilevel:
                raise ScoreError(f"multilevel categorical {v!r} sits inside a scored community")
            if kind.is_multilevel or (not c and v not in data.column_names):
                # non-members only matter for bootstrap regions
                continue
            mean, sd = fit.score_standardization[v]
            Z[v] = (_coded(data, v, kind) - mean) / sd
    cols = [c for L in loadings for c in L.column_labels(multilayer)]
    S = _score_matrix(loadings, Z, data.n)
    scores = pd.DataFrame(S, columns=cols)
    load_frame = pd.concat([L.to_frame() for L in loadings], ignore_index=True) \
        if loadings else pd.DataFrame(columns=["node", "layer", "community", "raw", "loading"])
    result = ScoreResult(scores, load_frame, standardization=dict(fit.score_standardization))

    reps = getattr(fit, "replicate_loadings", None)
    if reps:
        q = quantile_level if quantile_level is not None else fit.config.quantile_level
        stack = np.stack([
            _score_matrix(loadings, Z, data.n, values_of=lambda L, r=r: r[L.layer]) for r in reps
        ])
        lower, upper = quantile_region(stack, q, axis=0)
        result.score_lower = pd.DataFrame(lower, columns=cols)
        result.score_upper = pd.DataFrame(upper, columns=cols)
        rows = []
        for L in loadings:
            vals = np.stack([r[L.layer] for r in reps])
            lo, hi = quantile_region(vals, q, axis=0)
            for i, v in enumerate(L.nodes):
                for k, c in enumerate(L.communities):
                    rows.append((v, L.layer, c, float(L.values[i, k]), float(vals[:, i, k].mean()),
                                 float(vals[:, i, k].std(ddof=1)) if np.ptp(vals[:, i, k]) > 0 else 0.0,
                                 float(lo[i, k]), float(hi[i, k])))
        result.loading_regions = pd.DataFrame(
            rows, columns=["node", "layer", "community", "estimated", "boot_mean", "boot_se",
                           "lower", "upper"])
    return result
