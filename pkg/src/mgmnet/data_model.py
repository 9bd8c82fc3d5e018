"""Typed input data, variable-kind inference, standardization and layer metadata."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, LayerError

GAUSSIAN = "gaussian"
POISSON = "poisson"
CATEGORICAL = "categorical"
KIND_NAMES = (GAUSSIAN, POISSON, CATEGORICAL)


@dataclass(frozen=True)
class VariableKind:
    name: str
    levels: tuple = ()

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise DataError(f"unknown variable kind {self.name!r}")
        if self.name == CATEGORICAL and len(self.levels) < 2:
            raise DataError("categorical variables need at least 2 levels")
        if self.name != CATEGORICAL and self.levels:
            raise DataError(f"{self.name} variables carry no levels")

    @property
    def is_categorical(self) -> bool:
        return self.name == CATEGORICAL

    @property
    def is_binary(self) -> bool:
        return self.is_categorical and len(self.levels) == 2

    @property
    def is_multilevel(self) -> bool:
        return self.is_categorical and len(self.levels) > 2

    @property
    def code(self) -> str:
        """One-letter code used in printed summaries."""
        return {GAUSSIAN: "g", POISSON: "p", CATEGORICAL: "c"}[self.name]

    def __str__(self):
        return self.name


def gaussian() -> VariableKind:
    return VariableKind(GAUSSIAN)


def poisson() -> VariableKind:
    return VariableKind(POISSON)


def categorical(levels: Sequence) -> VariableKind:
    return VariableKind(CATEGORICAL, tuple(levels))


@dataclass(frozen=True)
class InferenceReport:
    inferred_categorical: tuple[str, ...] = ()
    overridden: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p table of typed columns.

    Categorical columns hold the integer index of the level in ``kind.levels``;
    gaussian and poisson columns hold their numeric values.
    """

    column_names: tuple[str, ...]
    kinds: tuple[VariableKind, ...]
    values: np.ndarray
    inference: InferenceReport = field(default_factory=InferenceReport)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if values.ndim != 2 or values.shape[1] != len(self.column_names):
            raise DataError("values must be an n x p array matching column_names")
        if len(self.kinds) != len(self.column_names):
            raise DataError("one kind per column is required")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(values)):
            bad = self.column_names[int(np.where(~np.isfinite(values))[1][0])]
            raise DataError(f"column {bad!r} has missing or non-finite values", bad)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}", name) from None

    def kind(self, name: str) -> VariableKind:
        return self.kinds[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def take_rows(self, rows: np.ndarray) -> "Dataset":
        return replace(self, values=self.values[np.asarray(rows)])

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index(c) for c in names]
        return replace(
            self,
            column_names=tuple(names),
            kinds=tuple(self.kinds[i] for i in idx),
            values=self.values[:, idx],
        )

    def to_frame(self) -> pd.DataFrame:
        """Round-trip to a DataFrame whose dtypes re-infer to the same kinds."""
        cols = {}
        for j, (name, kind) in enumerate(zip(self.column_names, self.kinds)):
            v = self.values[:, j]
            if kind.is_categorical:
                labels = [kind.levels[int(k)] for k in v]
                cols[name] = pd.Categorical(labels, categories=list(kind.levels))
            elif kind.name == POISSON:
                cols[name] = v.astype(np.int64)
            else:
                cols[name] = v
        return pd.DataFrame(cols)


def _sorted_or_first_seen(values: pd.Series) -> list:
    uniq = list(pd.unique(values))
    if all(isinstance(u, (bool, np.bool_, int, float, np.integer, np.floating)) for u in uniq):
        return sorted(uniq)
    return uniq


def _py(v: Any) -> Any:
    return v.item() if isinstance(v, np.generic) else v


def _encode_categorical(series: pd.Series, levels: Sequence) -> np.ndarray:
    lookup = {lev: i for i, lev in enumerate(levels)}
    return np.array([lookup[_py(v)] for v in series], dtype=float)


def infer_types(raw: pd.DataFrame, overrides: Mapping[str, str] | None = None) -> Dataset:
    """Infer a kind for every column of ``raw`` and build a :class:`Dataset`.

    Float columns are gaussian, integer columns are poisson unless all values
    lie in {0, 1}; booleans, strings and pandas categoricals are categorical.
    ``overrides`` maps column names to kind names and bypasses inference.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(raw.columns)
    if unknown:
        raise ConfigError(f"type overrides name unknown columns: {sorted(unknown)}")
    if len(raw) < 2:
        raise DataError("at least 2 rows are required")

    names, kinds, columns = [], [], []
    inferred_cat, overridden, notes = [], [], []
    for name in raw.columns:
        s = raw[name]
        if len(s) == 0:
            raise DataError(f"column {name!r} is empty", name)
        if s.isna().any():
            raise DataError(f"column {name!r} has missing values", name)
        if s.nunique() < 2:
            raise DataError(f"column {name!r} has a single distinct value", name)
        dtype = s.dtype
        forced = overrides.get(name)
        if forced is not None:
            if forced not in KIND_NAMES:
                raise ConfigError(f"unknown kind {forced!r} for column {name!r}")
            overridden.append(name)
            kind_name = forced
        elif isinstance(dtype, pd.CategoricalDtype) or pd.api.types.is_bool_dtype(dtype):
            kind_name = CATEGORICAL
        elif pd.api.types.is_integer_dtype(dtype):
            kind_name = CATEGORICAL if set(s.unique()) <= {0, 1} else POISSON
        elif pd.api.types.is_float_dtype(dtype):
            kind_name = GAUSSIAN
        else:
            kind_name = CATEGORICAL

        if kind_name == CATEGORICAL:
            if isinstance(dtype, pd.CategoricalDtype):
                levels = [_py(c) for c in dtype.categories if (s == c).any()]
                if dtype.ordered:
                    notes.append(f"{name}: ordered categories treated as unordered")
            else:
                levels = [_py(v) for v in _sorted_or_first_seen(s)]
            kind = categorical(levels)
            col = _encode_categorical(s, levels)
            if forced is None:
                inferred_cat.append(name)
        else:
            try:
                col = s.to_numpy(dtype=float)
            except (TypeError, ValueError):
                raise DataError(f"column {name!r} is not numeric", name) from None
            if kind_name == POISSON and (np.any(col < 0) or np.any(col != np.round(col))):
                raise DataError(
                    f"column {name!r} is not a non-negative integer count; override its type",
                    name,
                )
            kind = VariableKind(kind_name)
        names.append(str(name))
        kinds.append(kind)
        columns.append(col)

    report = InferenceReport(tuple(inferred_cat), tuple(overridden), tuple(notes))
    return Dataset(tuple(names), tuple(kinds), np.column_stack(columns), report)


def read_csv(path, overrides: Mapping[str, str] | None = None,
             drop: Sequence[str] = ()) -> Dataset:
    try:
        raw = pd.read_csv(path, sep=",", decimal=".")
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in drop if c not in raw.columns]
    if missing:
        raise ConfigError(f"drop_columns names unknown columns: {missing}")
    return infer_types(raw.drop(columns=list(drop)), overrides)


@dataclass(frozen=True)
class ScalingReport:
    """Per-column (mean, sd) applied by :func:`standardize`."""

    columns: Mapping[str, tuple[float, float]] = field(default_factory=dict)


def standardize(dataset: Dataset, scale: bool) -> tuple[Dataset, ScalingReport]:
    """Center and scale gaussian columns to unit sample SD when ``scale`` is set."""
    if not scale:
        return dataset, ScalingReport({})
    values = np.array(dataset.values)
    stats = {}
    for j, (name, kind) in enumerate(zip(dataset.column_names, dataset.kinds)):
        if kind.name != GAUSSIAN:
            continue
        mean = float(values[:, j].mean())
        sd = float(values[:, j].std(ddof=1))
        if not sd > 0:
            raise DataError(f"gaussian column {name!r} has zero variance", name)
        values[:, j] = (values[:, j] - mean) / sd
        stats[name] = (mean, sd)
    return replace(dataset, values=values), ScalingReport(stats)


@dataclass(frozen=True, eq=False)
class LayerSpec:
    layer_of: Mapping[str, str]
    layer_labels: tuple[str, ...]
    rules: np.ndarray

    def __post_init__(self):
        rules = np.array(self.rules, dtype=float)
        rules.setflags(write=False)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "layer_labels", tuple(self.layer_labels))
        object.__setattr__(self, "layer_of", dict(self.layer_of))

    @property
    def n_layers(self) -> int:
        return len(self.layer_labels)

    def nodes_in(self, label: str) -> list[str]:
        return [v for v, lab in self.layer_of.items() if lab == label]

    def allowed(self, a: str, b: str) -> bool:
        i, j = self.layer_labels.index(a), self.layer_labels.index(b)
        return bool(self.rules[i, j])

    def pair_key(self, a: str, b: str) -> str:
        """Interlayer pair label, ordered by layer declaration ("bio_ant")."""
        i, j = sorted((self.layer_labels.index(a), self.layer_labels.index(b)))
        return f"{self.layer_labels[i]}_{self.layer_labels[j]}"

    @classmethod
    def single(cls, nodes: Sequence[str], label: str = "1") -> "LayerSpec":
        return cls({v: label for v in nodes}, (label,), np.ones((1, 1)))


def normalize_rules(rules, n_layers: int) -> np.ndarray:
    """Symmetrize a rules matrix: unspecified (None/NaN) -> 0, diagonal -> 1."""
    raw = np.array(
        [[np.nan if v is None else v for v in row] for row in np.asarray(rules, dtype=object)],
        dtype=float,
    ) if rules is not None else np.full((n_layers, n_layers), np.nan)
    if raw.shape != (n_layers, n_layers):
        raise LayerError(f"rules must be {n_layers}x{n_layers}, got {raw.shape}")
    specified = raw[~np.isnan(raw)]
    if np.any((specified != 0) & (specified != 1)):
        raise LayerError("rule entries must be 0 or 1")
    declared = np.nan_to_num(raw, nan=0.0) == 1
    out = (declared | declared.T).astype(float)
    np.fill_diagonal(out, 1.0)
    return out


def validate_layers(dataset: Dataset, layer_spec: LayerSpec,
                    covariates: Sequence[str] = ()) -> LayerSpec:
    labels = tuple(layer_spec.layer_labels)
    if len(set(labels)) != len(labels) or not labels:
        raise LayerError("layer labels must be non-empty and distinct")
    for node, lab in layer_spec.layer_of.items():
        if lab not in labels:
            raise LayerError(f"node {node!r} assigned to unknown layer {lab!r}")
        if node in covariates:
            raise LayerError(f"covariate {node!r} cannot be assigned to a layer")
        if node not in dataset.column_names:
            raise LayerError(f"layer assignment names unknown column {node!r}")
    for name in dataset.column_names:
        if name not in covariates and name not in layer_spec.layer_of:
            raise LayerError(f"network node {name!r} is not assigned to any layer")
    rules = normalize_rules(layer_spec.rules, len(labels))
    # keep dataset column order for determinism
    layer_of = {v: layer_spec.layer_of[v] for v in dataset.column_names if v in layer_spec.layer_of}
    return LayerSpec(layer_of, labels, rules)


@dataclass(frozen=True)
class ModelConfig:
    lambda_selection: str = "cv"
    folds: int = 10
    gamma: float = 0.25
    alpha_grid: tuple[float, ...] = (1.0,)
    rule: str = "and"
    scale: bool = True
    reps: int = 0
    quantile_level: float = 0.95
    seed_model: int = 1
    seed_boot: int = 1
    cluster_method: str = "louvain"
    covariates: tuple[str, ...] = ()
    exclude_from_cluster: tuple[str, ...] = ()
    treat_singletons_as_excluded: bool = False
    save_data: bool = False
    n_lambda: int = 50
    lambda_ratio: float | None = None
    walktrap_steps: int = 4
    stability_cutoff: float = 0.7
    workers: int = 1

    def __post_init__(self):
        for name in ("alpha_grid", "covariates", "exclude_from_cluster"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.lambda_selection not in ("cv", "ebic"):
            raise ConfigError("lambda_selection must be 'cv' or 'ebic'")
        if self.rule not in ("and", "or"):
            raise ConfigError("rule must be 'and' or 'or'")
        if not self.alpha_grid or any(not 0 <= a <= 1 for a in self.alpha_grid):
            raise ConfigError("alpha values must lie in [0, 1]")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.reps < 0:
            raise ConfigError("reps must be non-negative")
        if not 0 < self.quantile_level < 1:
            raise ConfigError("quantile_level must lie in (0, 1)")
        if not 0 <= self.stability_cutoff <= 1:
            raise ConfigError("stability_cutoff must lie in [0, 1]")
        if self.n_lambda < 2:
            raise ConfigError("n_lambda must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if set(self.covariates) & set(self.exclude_from_cluster):
            raise ConfigError("covariates cannot be excluded from clustering; they are not nodes")

    def network_nodes(self, dataset: Dataset) -> list[str]:
        missing = [c for c in self.covariates if c not in dataset.column_names]
        if missing:
            raise ConfigError(f"covariates not found in data: {missing}")
        return [c for c in dataset.column_names if c not in self.covariates]

    def echo(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

