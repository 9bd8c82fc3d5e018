"""Nonparametric bootstrap over subjects.

Every replicate refits the whole pipeline on rows drawn with replacement.
Row draws come from a generator keyed on ``(seed_boot, replicate, attempt)``,
so replicate ``r`` is the same whichever process runs it and in whatever
order; results are assembled by index before any summary is taken.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .analysis import Analysis, analyse
from .community import Partition, renumber
from .data_model import Dataset, LayerSpec, ModelConfig
from .errors import BootstrapError, DataError, EstimationError

MAX_ATTEMPTS = 10
MAX_FAILURE_SHARE = 0.2
FAMILIES = ("edges", "general_index", "interlayer_index", "bridge_index", "excluded_index",
            "loadings")
STAT_COLUMNS = ["estimated", "boot_mean", "boot_se", "lower", "upper", "n"]
KEY_COLUMNS = {
    "edges": ["node_a", "node_b", "layer"],
    "general_index": ["node", "layer", "metric"],
    "interlayer_index": ["node", "layer", "metric"],
    "bridge_index": ["node", "layer", "metric"],
    "excluded_index": ["node", "layer", "metric"],
    "loadings": ["node", "layer", "community"],
}


class DegenerateResample(DataError):
    pass


def replicate_generator(seed_boot: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    """Counter-based stream for one replicate draw."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed_boot, replicate, attempt])))


def _degenerate(dataset: Dataset, rows: np.ndarray) -> str | None:
    vals = dataset.values[rows]
    for j, (name, kind) in enumerate(zip(dataset.column_names, dataset.kinds)):
        col = vals[:, j]
        if kind.is_categorical:
            if len(np.unique(col)) < len(kind.levels):
                return f"categorical {name!r} lost a level"
        elif np.all(col == col[0]):
            return f"{name!r} is constant"
    return None


def resample_rows(dataset: Dataset, replicate: int, seed_boot: int) -> tuple[np.ndarray, int]:
    """Row indices for ``replicate`` and the number of attempts it took.

    A draw in which a categorical column loses a level or a numeric column
    becomes constant is redrawn with the next attempt key.
    """
    if dataset.n < 2:
        raise DataError("bootstrap needs at least two rows")
    reason = None
    for attempt in range(MAX_ATTEMPTS):
        rows = replicate_generator(seed_boot, replicate, attempt).integers(0, dataset.n, dataset.n)
        reason = _degenerate(dataset, rows)
        if reason is None:
            return rows, attempt + 1
    raise DegenerateResample(f"replicate {replicate}: {reason} in all {MAX_ATTEMPTS} draws")


def resample(dataset: Dataset, replicate: int, seed_boot: int) -> Dataset:
    rows, _ = resample_rows(dataset, replicate, seed_boot)
    return dataset.take_rows(rows)


@dataclass
class ReplicateResult:
    index: int
    attempts: int
    quantities: dict[str, dict[tuple, float]]
    detected: dict[str, dict[str, int | None]]


@dataclass
class ReplicateFailure:
    index: int
    reason: str


# Worker state, set once per process by the pool initializer.
_STATE: dict = {}


def _init_worker(dataset, config, layer_spec, fixed):
    _STATE.update(dataset=dataset, config=config, layer_spec=layer_spec, fixed=fixed)


def _run_one(r: int):
    dataset, config = _STATE["dataset"], _STATE["config"]
    try:
        rows, attempts = resample_rows(dataset, r, config.seed_boot)
        a = analyse(dataset.take_rows(rows), config, _STATE["layer_spec"], _STATE["fixed"])
    except (EstimationError, DataError) as exc:
        return ReplicateFailure(r, f"{type(exc).__name__}: {exc}")
    detected = {lab: dict(p.assignment) for lab, p in a.detected.items()}
    return ReplicateResult(r, attempts, a.quantities(), detected)


@dataclass
class BootstrapStore:
    reps: int
    seed_boot: int
    results: list[ReplicateResult]
    failures: list[ReplicateFailure] = field(default_factory=list)

    @property
    def n_success(self) -> int:
        return len(self.results)


def run_bootstrap(dataset: Dataset, config: ModelConfig, layer_spec: LayerSpec | None,
                  original: Analysis, workers: int | None = None) -> BootstrapStore:
    """Refit the pipeline ``config.reps`` times; replicates are ordered by index."""
    if config.reps < 1:
        raise BootstrapError("reps must be at least 1 to run the bootstrap")
    workers = workers or config.workers
    fixed = original.partitions
    args = (dataset, config, layer_spec, fixed)
    if workers <= 1:
        _init_worker(*args)
        out = [_run_one(r) for r in range(config.reps)]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=args) as pool:
            out = list(pool.map(_run_one, range(config.reps), chunksize=1))
    results = [o for o in out if isinstance(o, ReplicateResult)]
    failures = [o for o in out if isinstance(o, ReplicateFailure)]
    if not results:
        raise BootstrapError(f"all {config.reps} replicates failed; first: {failures[0].reason}")
    if len(failures) > MAX_FAILURE_SHARE * config.reps:
        raise BootstrapError(
            f"{len(failures)} of {config.reps} replicates failed (limit 20%); "
            f"first: {failures[0].reason}")
    return BootstrapStore(config.reps, config.seed_boot, results, failures)


def quantile_region(values, q: float, axis: int | None = None):
    """Empirical ``((1-q)/2, 1-(1-q)/2)`` quantiles with linear interpolation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("quantile_region needs at least one value")
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    lo, hi = np.quantile(v, [(1 - q) / 2, 1 - (1 - q) / 2], axis=axis, method="linear")
    return (float(lo), float(hi)) if np.ndim(lo) == 0 else (lo, hi)


def summarize_values(estimated: float, values: Sequence[float], q: float) -> tuple:
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return (estimated, np.nan, np.nan, np.nan, np.nan, 0)
    lo, hi = quantile_region(v, q)
    # constant values give an exact zero rather than rounding noise
    se = float(v.std(ddof=1)) if v.size > 1 and np.ptp(v) > 0 else 0.0
    return (estimated, float(v.mean()), se, lo, hi, int(v.size))


def summarize(original: Mapping[str, Mapping[tuple, float]], store: BootstrapStore,
              q: float) -> dict[str, pd.DataFrame]:
    """One table per quantity family, rows in the original key order.

    Edge rows include replicates where the edge is absent (value 0).
    """
    out = {}
    for family in FAMILIES:
        if family not in original:
            continue
        rows = []
        for key, est in original[family].items():
            vals = [r.quantities.get(family, {}).get(key, np.nan) for r in store.results]
            rows.append((*key, *summarize_values(est, vals, q)))
        out[family] = pd.DataFrame(rows, columns=KEY_COLUMNS[family] + STAT_COLUMNS)
    return out


def replicate_loadings(original: Analysis, store: BootstrapStore) -> list[dict[str, np.ndarray]]:
    """Per-replicate loading arrays shaped like the original loadings."""
    out = []
    for r in store.results:
        vals = r.quantities["loadings"]
        rep = {}
        for label, L in original.loadings.items():
            A = np.zeros_like(L.values)
            for i, v in enumerate(L.nodes):
                for k, c in enumerate(L.communities):
                    A[i, k] = vals.get((v, label, c), 0.0)
            rep[label] = A
        out.append(rep)
    return out


# ---- membership stability -------------------------------------------------

@dataclass
class StabilityReport:
    layer: str
    original: dict[str, int]
    proportions: dict[str, float]
    cutoff: float
    n_replicates: int

    @property
    def stable(self) -> dict[str, bool]:
        return {v: p >= self.cutoff for v, p in self.proportions.items()}

    @property
    def unstable_nodes(self) -> list[str]:
        return [v for v, ok in self.stable.items() if not ok]

    def with_cutoff(self, cutoff: float) -> "StabilityReport":
        return StabilityReport(self.layer, self.original, self.proportions, cutoff,
                               self.n_replicates)

    def to_frame(self) -> pd.DataFrame:
        stable = self.stable
        return pd.DataFrame(
            [(v, self.layer, self.original[v], p, stable[v], self.cutoff)
             for v, p in self.proportions.items()],
            columns=["node", "layer", "community", "proportion", "stable", "cutoff"])


def _best_total(C: np.ndarray, fixed: dict[int, int]) -> float:
    rows = [i for i in range(C.shape[0]) if i not in fixed]
    cols = [j for j in range(C.shape[1]) if j not in fixed.values()]
    total = float(sum(C[i, j] for i, j in fixed.items()))
    if rows and cols:
        sub = C[np.ix_(rows, cols)]
        ri, ci = linear_sum_assignment(sub, maximize=True)
        total += float(sub[ri, ci].sum())
    return total


def align(contingency: np.ndarray) -> dict[int, int]:
    """Maximum-overlap matching of original rows to replicate columns.

    Among optimal matchings, rows are settled in ascending original id, each
    taking its highest-overlap feasible column (lowest column on ties).
    """
    C = np.asarray(contingency, dtype=float)
    if C.size == 0:
        return {}
    best = _best_total(C, {})
    fixed: dict[int, int] = {}
    for i in range(C.shape[0]):
        for j in sorted(range(C.shape[1]), key=lambda j: (-C[i, j], j)):
            if j in fixed.values():
                continue
            trial = {**fixed, i: j}
            if _best_total(C, trial) >= best - 1e-9:
                fixed = trial
                break
    return fixed


def _canonical(assignment: Mapping[str, int | None], nodes: Sequence[str]) -> dict[str, int]:
    labels = renumber([assignment.get(v) or -1 for v in nodes])
    return {v: int(c) for v, c in zip(nodes, labels) if c > 0}


def membership_stability(original: Partition, replicates: Sequence[Mapping[str, int | None]],
                         cutoff: float = 0.7, layer: str = "1") -> StabilityReport:
    """Share of replicates placing each assigned node in its original community."""
    if not replicates:
        raise BootstrapError("membership stability needs at least one successful replicate")
    orig = {v: original.assignment[v] for v in original.assigned}
    orig_ids = sorted(set(orig.values()))
    same = dict.fromkeys(orig, 0)
    nodes = list(original.nodes)
    for assignment in replicates:
        rep = _canonical(assignment, nodes)
        rep_ids = sorted(set(rep.values()))
        C = np.zeros((len(orig_ids), len(rep_ids)))
        for v, c in orig.items():
            if v in rep:
                C[orig_ids.index(c), rep_ids.index(rep[v])] += 1
        match = {orig_ids[i]: rep_ids[j] for i, j in align(C).items()}
        for v, c in orig.items():
            if v in rep and match.get(c) == rep[v]:
                same[v] += 1
    n = len(replicates)
    return StabilityReport(layer, orig, {v: same[v] / n for v in orig}, cutoff, n)


def stability_reports(original: Analysis, store: BootstrapStore,
                      cutoff: float) -> dict[str, StabilityReport]:
    return {
        label: membership_stability(part, [r.detected[label] for r in store.results],
                                    cutoff, label)
        for label, part in original.partitions.items()
    }
