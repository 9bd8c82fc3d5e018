"""Nodewise mixed graphical model estimation with predictor masking.

Only pairwise interactions are modelled: every node is regressed on the dummy
coded remaining nodes it is allowed to use (plus covariates) with a penalized
GLM whose family follows the node's kind, and the two directed coefficient
blocks of each pair are combined into one symmetric signed edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import glm
from .data_model import (GAUSSIAN, POISSON, Dataset, ModelConfig, ScalingReport,
                         VariableKind, standardize)
from .errors import EstimationError, NodeFitError

_FAMILY = {GAUSSIAN: glm.GAUSSIAN, POISSON: glm.POISSON}


@dataclass
class NodeDesign:
    problem: glm.GlmProblem
    blocks: dict[str, np.ndarray]
    covariate_blocks: dict[str, np.ndarray]


@dataclass
class NodewiseFit:
    node: str
    allowed_predictors: tuple[str, ...]
    blocks: dict[str, np.ndarray]
    covariate_blocks: dict[str, np.ndarray]
    lam: float | None = None
    alpha: float | None = None
    intercepts: np.ndarray | None = None


@dataclass
class EdgeProvenance:
    """Per-direction magnitudes for one node pair; ``forward`` is ``i <- j``."""

    forward: float
    backward: float
    forward_sign: int
    backward_sign: int
    sign_conflict: bool
    combination: str


@dataclass
class NetworkFit:
    nodes: tuple[str, ...]
    kinds: tuple[VariableKind, ...]
    weights: np.ndarray
    signs: np.ndarray
    rule: str
    provenance: dict[tuple[int, int], EdgeProvenance] = field(default_factory=dict)
    covariates: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)
    scaling: ScalingReport = field(default_factory=ScalingReport)
    selection: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.nodes)

    def index(self, node: str) -> int:
        return self.nodes.index(node)

    @property
    def signed_weights(self) -> np.ndarray:
        """Weights times sign, with undefined signs counted as positive."""
        return self.weights * np.where(self.signs == 0, 1, self.signs)

    def edges(self):
        """Yield ``(i, j, weight, sign)`` for every nonzero edge with ``i < j``."""
        iu, ju = np.triu_indices(self.p, 1)
        for i, j in zip(iu, ju):
            if self.weights[i, j] > 0:
                yield int(i), int(j), float(self.weights[i, j]), int(self.signs[i, j])

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def subgraph(self, keep: np.ndarray) -> "NetworkFit":
        """Same nodes, with edges outside the boolean ``keep`` matrix removed."""
        keep = np.asarray(keep, dtype=bool)
        return NetworkFit(self.nodes, self.kinds, np.where(keep, self.weights, 0.0),
                          np.where(keep, self.signs, 0), self.rule,
                          {k: v for k, v in self.provenance.items() if keep[k]},
                          self.covariates, self.config, self.scaling, self.selection)


def dummy_columns(values: np.ndarray, kind: VariableKind) -> np.ndarray:
    """Numeric design columns for one variable; categorical drops the first level."""
    if not kind.is_categorical:
        return values[:, None]
    codes = values.astype(int)
    return np.column_stack([(codes == k).astype(float) for k in range(1, len(kind.levels))])


def build_design(dataset: Dataset, response_node: str, allowed_predictors: Sequence[str],
                 covariates: Sequence[str] = ()) -> NodeDesign:
    if response_node in covariates:
        raise EstimationError(f"response {response_node!r} is a covariate")
    allowed = set(allowed_predictors)
    predictors = [c for c in dataset.column_names
                  if c in allowed and c != response_node and c not in covariates]
    if not predictors and not covariates:
        raise EstimationError(f"node {response_node!r} has nothing to regress on")
    cols, blocks, cov_blocks, start = [], {}, {}, 0
    for names, target in ((predictors, blocks), (list(covariates), cov_blocks)):
        for name in names:
            block = dummy_columns(dataset.column(name), dataset.kind(name))
            cols.append(block)
            target[name] = np.arange(start, start + block.shape[1])
            start += block.shape[1]
    X = np.column_stack(cols)
    kind = dataset.kind(response_node)
    y = dataset.column(response_node)
    if kind.is_categorical:
        problem = glm.GlmProblem(y, X, glm.MULTINOMIAL, n_classes=len(kind.levels))
    else:
        problem = glm.GlmProblem(y, X, _FAMILY[kind.name])
    return NodeDesign(problem, blocks, cov_blocks)


def full_mask(nodes: Sequence[str]) -> dict[str, frozenset]:
    return {s: frozenset(r for r in nodes if r != s) for s in nodes}


def fit_nodewise(dataset: Dataset, config: ModelConfig,
                 mask: Mapping[str, frozenset]) -> list[NodewiseFit]:
    """One penalized GLM per network node; ``dataset`` is already standardized."""
    nodes = config.network_nodes(dataset)
    fits = []
    for idx, node in enumerate(nodes):
        allowed = tuple(r for r in nodes if r in mask[node])
        if not allowed and not config.covariates:
            fits.append(NodewiseFit(node, (), {}, {}))
            continue
        design = build_design(dataset, node, allowed, config.covariates)
        try:
            sel = glm.fit_select(design.problem, config.alpha_grid, config.lambda_selection,
                                 folds=config.folds, gamma=config.gamma,
                                 seed=config.seed_model ^ idx, n_lambda=config.n_lambda,
                                 ratio=config.lambda_ratio)
        except EstimationError as exc:
            raise NodeFitError(node, exc) from exc
        coefs = sel.coefs
        fits.append(NodewiseFit(
            node, allowed,
            {r: coefs[:, cols] for r, cols in design.blocks.items()},
            {c: coefs[:, cols] for c, cols in design.covariate_blocks.items()},
            sel.chosen_lambda, sel.chosen_alpha, sel.intercepts,
        ))
    return fits


def _direction(block: np.ndarray, response: VariableKind) -> tuple[float, int]:
    """Magnitude and raw sign of one directed coefficient block."""
    mag = float(np.mean(np.abs(block)))
    if block.shape[1] != 1 or response.is_multilevel:
        return mag, 1
    raw = block[1, 0] - block[0, 0] if response.is_binary else block[0, 0]
    return mag, int(np.sign(raw))


def aggregate_edges(fits: Sequence[NodewiseFit], rule: str,
                    kinds: Sequence[VariableKind]) -> NetworkFit:
    """Combine directed blocks into symmetric weights and signs under AND/OR."""
    if rule not in ("and", "or"):
        raise ValueError("rule must be 'and' or 'or'")
    nodes = tuple(f.node for f in fits)
    p = len(nodes)
    W = np.zeros((p, p))
    S = np.zeros((p, p), dtype=int)
    prov = {}
    by_name = {f.node: f for f in fits}
    for i in range(p):
        for j in range(i + 1, p):
            s, r = nodes[i], nodes[j]
            in_s = r in by_name[s].blocks
            in_r = s in by_name[r].blocks
            if in_s != in_r:
                raise EstimationError(f"asymmetric predictor mask for pair {s!r}-{r!r}")
            if not in_s:
                continue
            fwd, fsign = _direction(by_name[s].blocks[r], kinds[i])
            bwd, bsign = _direction(by_name[r].blocks[s], kinds[j])
            mags = [m for m in (fwd, bwd) if m > 0]
            if rule == "and":
                w = 0.5 * (fwd + bwd) if len(mags) == 2 else 0.0
                how = "mean"
            else:
                w = float(np.mean(mags)) if mags else 0.0
                how = "mean" if len(mags) == 2 else "single"
            conflict = False
            if w > 0:
                if kinds[i].is_multilevel or kinds[j].is_multilevel:
                    sign = 1
                else:
                    signs = {sg for m, sg in ((fwd, fsign), (bwd, bsign)) if m > 0}
                    conflict = len(signs) > 1
                    sign = 0 if conflict else signs.pop()
                W[i, j] = W[j, i] = w
                S[i, j] = S[j, i] = sign
            if fwd > 0 or bwd > 0:
                prov[(i, j)] = EdgeProvenance(fwd, bwd, fsign if fwd > 0 else 0,
                                              bsign if bwd > 0 else 0, conflict, how)
    return NetworkFit(nodes, tuple(kinds), W, S, rule, prov)


def estimate_network(dataset: Dataset, config: ModelConfig,
                     mask: Mapping[str, frozenset] | None = None) -> NetworkFit:
    """Standardize, fit every node and aggregate; ``mask`` defaults to the full graph."""
    nodes = config.network_nodes(dataset)
    data, scaling = standardize(dataset, config.scale)
    if mask is None:
        mask = full_mask(nodes)
    fits = fit_nodewise(data, config, mask)
    net = aggregate_edges(fits, config.rule, [dataset.kind(v) for v in nodes])
    net.covariates = tuple(config.covariates)
    net.config = config.echo()
    net.scaling = scaling
    net.selection = {f.node: (f.lam, f.alpha) for f in fits if f.lam is not None}
    return net
