import logging
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from miqubo.exceptions import (
    CellParseError,
    ConfigError,
    DataError,
    InfeasibleProfileError,
    RaggedRowError,
    TargetNotFoundError,
)
from miqubo.utils import derive_rng, write_frame

logger = logging.getLogger(__name__)

COLUMN_KINDS = ("numeric", "categorical")
CONCENTRATIONS = ("high", "low")
DEFAULT_BINS = 10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw named features (numeric or categorical) plus a numeric target."""

    features: pd.DataFrame
    target: pd.Series
    categorical: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n_samples = len(self.target)
        if n_samples < 1:
            raise DataError("A dataset needs at least one sample")
        if len(self.features) != n_samples:
            raise DataError(
                f"Feature columns have {len(self.features)} rows, target has {n_samples}"
            )
        names = [str(name) for name in self.features.columns]
        if any(name == "" for name in names):
            raise DataError("Feature names must be non-empty")
        if len(set(names)) != len(names):
            raise DataError("Feature names must be unique")
        unknown = set(self.categorical) - set(names)
        if unknown:
            raise DataError(f"Categorical columns not among the features: {sorted(unknown)}")

    @property
    def feature_names(self) -> List[str]:
        return [str(name) for name in self.features.columns]

    @property
    def columns(self) -> List[pd.Series]:
        return [self.features[name] for name in self.features.columns]

    @property
    def target_name(self) -> str:
        return str(self.target.name)

    @property
    def n_samples(self) -> int:
        return len(self.target)

    def is_categorical(self, name: str) -> bool:
        return name in self.categorical

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([self.features, self.target], axis=1)

    @classmethod
    def from_dataframe(
        cls,
        table: pd.DataFrame,
        target_name: str,
        categorical: Optional[Sequence[str]] = None,
    ):
        """Build a dataset from an in-memory frame.

        Object, string, categorical and boolean columns are categorical
        unless ``categorical`` lists the categorical columns explicitly.
        """
        if target_name not in table.columns:
            raise TargetNotFoundError(target_name, table.columns)
        features = table.drop(columns=[target_name]).reset_index(drop=True)
        if categorical is None:
            categorical = [
                name
                for name in features.columns
                if not pd.api.types.is_numeric_dtype(features[name])
                or pd.api.types.is_bool_dtype(features[name])
            ]
        features = features.copy()
        for name in features.columns:
            if name in categorical:
                features[name] = features[name].astype(str)
            else:
                features[name] = features[name].astype(float)
        target = table[target_name].reset_index(drop=True).astype(float)
        return cls(features=features, target=target, categorical=tuple(categorical))


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    """Real-valued design matrix after one-hot expansion."""

    feature_names: Tuple[str, ...]
    matrix: np.ndarray
    target: np.ndarray
    origin_map: Dict[str, str]
    target_name: str = "target"
    groups: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise DataError("Encoded matrix must be two-dimensional")
        if self.matrix.shape[0] != self.target.shape[0]:
            raise DataError("Encoded matrix and target lengths differ")
        if self.matrix.shape[1] != len(self.feature_names):
            raise DataError("Encoded matrix width does not match the feature names")

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def one_hot_groups(self) -> Dict[str, Tuple[int, ...]]:
        return dict(self.groups)

    def select(self, indices: Sequence[int]) -> "EncodedDataset":
        indices = [int(i) for i in indices]
        names = tuple(self.feature_names[i] for i in indices)
        position = {old: new for new, old in enumerate(indices)}
        groups = {}
        for source, members in self.groups.items():
            kept = tuple(position[i] for i in members if i in position)
            if kept:
                groups[source] = kept
        return EncodedDataset(
            feature_names=names,
            matrix=self.matrix[:, indices],
            target=self.target,
            origin_map={name: self.origin_map[name] for name in names},
            target_name=self.target_name,
            groups=groups,
        )

    def to_frame(self) -> pd.DataFrame:
        table = pd.DataFrame(self.matrix, columns=list(self.feature_names))
        table[self.target_name] = self.target
        return table


@dataclass(frozen=True, eq=False)
class DiscretizedTable:
    """Integer codes for every encoded column and the target."""

    codes: np.ndarray
    bin_counts: Tuple[int, ...]
    target_codes: np.ndarray
    target_bin_count: int
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.codes.ndim != 2:
            raise DataError("Codes must be a two-dimensional array")
        if self.codes.shape[0] != self.target_codes.shape[0]:
            raise DataError("Feature codes and target codes lengths differ")
        if len(self.bin_counts) != self.codes.shape[1]:
            raise DataError("One bin count per feature is required")
        if self.codes.size and (
            (self.codes < 0).any() or (self.codes >= np.asarray(self.bin_counts)).any()
        ):
            raise DataError("Feature codes fall outside their bin counts")
        if self.target_codes.size and (
            self.target_codes.min() < 0 or self.target_codes.max() >= self.target_bin_count
        ):
            raise DataError("Target codes fall outside the target bin count")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", tuple(f"x{i}" for i in range(self.codes.shape[1]))
            )

    @property
    def n_samples(self) -> int:
        return self.codes.shape[0]

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]

    @classmethod
    def from_codes(cls, codes, target_codes, feature_names: Sequence[str] = ()):
        """Wrap integer code arrays; each cardinality is max code + 1."""
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim == 1:
            codes = codes[:, None]
        target_codes = np.asarray(target_codes, dtype=np.int64)
        bin_counts = tuple(int(c.max()) + 1 if c.size else 1 for c in codes.T)
        return cls(
            codes=codes,
            bin_counts=bin_counts,
            target_codes=target_codes,
            target_bin_count=int(target_codes.max()) + 1 if target_codes.size else 1,
            feature_names=tuple(feature_names),
        )


def _ragged_line(error: Exception) -> int:
    found = re.search(r"line (\d+)", str(error))
    return int(found.group(1)) if found else -1


def _parse_numeric(values: pd.Series, name: str) -> pd.Series:
    parsed = pd.to_numeric(values.str.strip(), errors="coerce")
    bad = parsed.isna() | ~np.isfinite(parsed.fillna(0.0))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise CellParseError(row=row + 1, column=name, value=values.iloc[row])
    return parsed.astype(float)


def load_csv(
    path: Union[str, Path],
    target_name: str,
    schema: Optional[Mapping[str, str]] = None,
) -> Dataset:
    """Read a comma-separated, UTF-8 file with a header row.

    ``schema`` maps column names to ``"numeric"`` or ``"categorical"``.
    Without a hint a column is numeric when at least half of its cells parse as
    numbers; any remaining unparseable cell is then reported.
    """
    schema = dict(schema or {})
    bad_kinds = {k: v for k, v in schema.items() if v not in COLUMN_KINDS}
    if bad_kinds:
        raise ConfigError(f"Unknown column kinds in schema: {bad_kinds}")
    logger.info(f"Loading dataset {path}")
    try:
        raw = pd.read_csv(
            path,
            sep=",",
            dtype=str,
            encoding="utf-8",
            keep_default_na=False,
            na_filter=False,
            skip_blank_lines=True,
        )
    except pd.errors.ParserError as error:
        raise RaggedRowError(_ragged_line(error), str(error)) from error
    except pd.errors.EmptyDataError as error:
        raise DataError(f"{path} has no header row") from error

    short_rows = raw.isna().any(axis=1).to_numpy()
    if short_rows.any():
        # header is line 1
        raise RaggedRowError(int(np.flatnonzero(short_rows)[0]) + 2, "too few fields")
    if target_name not in raw.columns:
        raise TargetNotFoundError(target_name, raw.columns)
    if len(raw) < 1:
        raise DataError(f"{path} has no data rows")

    target = _parse_numeric(raw[target_name], target_name).rename(target_name)
    features = {}
    categorical = []
    for name in raw.columns:
        if name == target_name:
            continue
        values = raw[name]
        kind = schema.get(name)
        if kind is None:
            ratio = pd.to_numeric(values.str.strip(), errors="coerce").notna().mean()
            kind = "numeric" if ratio >= 0.5 else "categorical"
        if kind == "numeric":
            features[name] = _parse_numeric(values, name)
        else:
            features[name] = values.str.strip()
            categorical.append(name)
    table = pd.DataFrame(features, index=raw.index)
    logger.info(
        f"Loaded {len(raw)} samples, {table.shape[1]} features "
        f"({len(categorical)} categorical), target '{target_name}'"
    )
    return Dataset(features=table, target=target, categorical=tuple(categorical))


def write_csv(d: Dataset, path: Union[str, Path]) -> Path:
    return write_frame(d.to_frame(), path)


def one_hot_encode(d: Dataset) -> EncodedDataset:
    """Expand each categorical column into ``<feature>_<value>`` indicators."""
    blocks = []
    origin_map = {}
    groups = {}
    position = 0
    for name in d.feature_names:
        column = d.features[name]
        if d.is_categorical(name):
            block = pd.get_dummies(column, prefix=name, prefix_sep="_", dtype=float)
            groups[name] = tuple(range(position, position + block.shape[1]))
        else:
            block = column.astype(float).to_frame(name)
        for encoded in block.columns:
            origin_map[str(encoded)] = name
        position += block.shape[1]
        blocks.append(block)

    if blocks:
        encoded = pd.concat(blocks, axis=1)
        names = tuple(str(c) for c in encoded.columns)
        matrix = encoded.to_numpy(dtype=float)
    else:
        names = ()
        matrix = np.empty((d.n_samples, 0), dtype=float)
    logger.debug(f"One-hot encoding expanded {len(d.feature_names)} to {len(names)} features")
    return EncodedDataset(
        feature_names=names,
        matrix=matrix,
        target=d.target.to_numpy(dtype=float),
        origin_map=origin_map,
        target_name=d.target_name,
        groups=groups,
    )


def _discretize_column(values: np.ndarray, bins: int) -> Tuple[np.ndarray, int]:
    distinct = np.unique(values)
    if distinct.size <= bins:
        return np.searchsorted(distinct, values).astype(np.int64), int(distinct.size)
    edges = np.linspace(values.min(), values.max(), bins + 1)
    # right-closed bins, the lowest edge included
    binned = pd.cut(values, bins=edges, labels=False, include_lowest=True)
    occupied, codes = np.unique(np.asarray(binned, dtype=np.int64), return_inverse=True)
    return codes.astype(np.int64), int(occupied.size)


def discretize(e: EncodedDataset, bins: int = DEFAULT_BINS) -> DiscretizedTable:
    """Integer-code every column for histogram probability estimates.

    Columns with at most ``bins`` distinct values keep one code per value
    (so indicators stay binary); wider columns get equal-width bins over
    [min, max]. Empty bins are dropped so codes stay contiguous.
    """
    if int(bins) < 2:
        raise ConfigError(f"bins must be at least 2, got {bins}")
    bins = int(bins)
    codes = np.empty(e.matrix.shape, dtype=np.int64)
    bin_counts = []
    for j in range(e.n_features):
        codes[:, j], count = _discretize_column(e.matrix[:, j], bins)
        bin_counts.append(count)
    target_codes, target_count = _discretize_column(np.asarray(e.target, dtype=float), bins)
    return DiscretizedTable(
        codes=codes,
        bin_counts=tuple(bin_counts),
        target_codes=target_codes,
        target_bin_count=target_count,
        feature_names=tuple(e.feature_names),
    )


def standardize(e: EncodedDataset) -> EncodedDataset:
    """Zero mean, unit population standard deviation; constant columns become 0."""
    if e.n_features == 0:
        return e
    matrix = StandardScaler().fit_transform(e.matrix)
    return EncodedDataset(
        feature_names=e.feature_names,
        matrix=matrix,
        target=e.target,
        origin_map=dict(e.origin_map),
        target_name=e.target_name,
        groups=dict(e.groups),
    )


@dataclass(frozen=True, eq=False)
class SyntheticProfile:
    n_samples: int = 500
    n_informative: int = 2
    n_redundant: int = 0
    n_noise: int = 5
    categorical_spec: Tuple[int, ...] = ()
    mi_concentration: str = "high"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "categorical_spec", tuple(int(c) for c in self.categorical_spec))
        counts = (self.n_informative, self.n_redundant, self.n_noise)
        if any(int(c) < 0 for c in counts):
            raise ConfigError("Feature counts must be non-negative")
        if int(self.n_samples) < 10:
            raise ConfigError(f"n_samples must be at least 10, got {self.n_samples}")
        if any(c < 1 for c in self.categorical_spec):
            raise ConfigError("Every categorical column needs at least one category")
        if self.mi_concentration not in CONCENTRATIONS:
            raise ConfigError(
                f"mi_concentration must be one of {CONCENTRATIONS}, got {self.mi_concentration!r}"
            )

    @classmethod
    def from_dict(cls, payload: Mapping):
        allowed = {f.name for f in fields(cls)}
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"Unknown synthetic profile keys: {sorted(unknown)}")
        return cls(**dict(payload))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Nonlinear responses cycled over the informative features.
_RESPONSES = (
    lambda x: x,
    lambda x: 1.5 * np.sin(1.5 * x),
    lambda x: 0.5 * x**2 - 2.0 / 3.0,
    lambda x: 2.0 * np.tanh(x),
    lambda x: 1.5 * np.abs(x) - 1.5,
)

_GENERATOR_SETTINGS = {
    # initial noise scale, noise multiplier per retry, categorical effect size
    "high": (0.1, 0.5, 0.1),
    "low": (0.5, 2.0, 0.3),
}
_MAX_ATTEMPTS = 8


def _informative_weights(n_informative: int, concentration: str) -> np.ndarray:
    if concentration == "high":
        weights = np.full(n_informative, 0.05)
        weights[:2] = [1.0, 0.8][: min(2, n_informative)]
        return weights
    return np.linspace(1.0, 0.6, n_informative) if n_informative > 1 else np.ones(n_informative)


def _draw_synthetic(profile: SyntheticProfile, noise_scale: float, rng) -> Dataset:
    n = profile.n_samples
    _, _, effect_size = _GENERATOR_SETTINGS[profile.mi_concentration]
    columns = {}

    informative = rng.uniform(-2.0, 2.0, size=(n, profile.n_informative))
    weights = _informative_weights(profile.n_informative, profile.mi_concentration)
    signal = np.zeros(n)
    for i in range(profile.n_informative):
        columns[f"inf_{i}"] = informative[:, i]
        signal += weights[i] * _RESPONSES[i % len(_RESPONSES)](informative[:, i])

    for j in range(profile.n_redundant):
        if profile.n_informative == 0:
            source = rng.uniform(-2.0, 2.0, size=n)
        else:
            a = j % profile.n_informative
            b = (a + 1) % profile.n_informative
            lap = j // profile.n_informative
            # first pass: noisy copies, later passes: mixtures of neighbours
            mix = 0.0 if lap == 0 else 0.15
            source = (1.0 - mix) * informative[:, a] + mix * informative[:, b]
        columns[f"red_{j}"] = source + 0.05 * rng.standard_normal(n)

    for j in range(profile.n_noise):
        columns[f"noise_{j}"] = rng.uniform(-2.0, 2.0, size=n)

    categorical = []
    for m, n_categories in enumerate(profile.categorical_spec):
        popularity = 1.0 / np.arange(1, n_categories + 1)
        draws = rng.choice(n_categories, size=n, p=popularity / popularity.sum())
        effects = effect_size * rng.standard_normal(n_categories)
        signal += effects[draws]
        name = f"cat_{m}"
        columns[name] = np.array([f"v{c:02d}" for c in draws], dtype=object)
        categorical.append(name)

    spread = float(np.std(signal)) or 1.0
    target = signal + noise_scale * spread * rng.standard_normal(n)

    features = pd.DataFrame(columns, index=pd.RangeIndex(n))
    for name in features.columns:
        if name not in categorical:
            features[name] = features[name].astype(float)
        else:
            features[name] = features[name].astype(str)
    return Dataset(
        features=features,
        target=pd.Series(target, name="target"),
        categorical=tuple(categorical),
    )


def mi_shares(d: Dataset, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Share of the total feature-target MI held by each encoded feature."""
    from miqubo.infotheory import mi_report

    encoded = one_hot_encode(d)
    if encoded.n_features == 0:
        return np.zeros(0)
    report = mi_report(discretize(encoded, bins), list(encoded.feature_names))
    if report.total_mi <= 0:
        return np.zeros(report.mi.size)
    return report.mi / report.total_mi


def generate_synthetic(profile: Union[SyntheticProfile, Mapping], bins: int = DEFAULT_BINS) -> Dataset:
    """Synthetic regression data with a controlled MI concentration.

    ``high`` keeps at least 60% of the total feature-target MI in the top
    two features, ``low`` keeps every feature at or below 25%. The noise
    scale is adjusted and the draw repeated until the measured shares
    satisfy the regime.
    """
    if not isinstance(profile, SyntheticProfile):
        profile = SyntheticProfile.from_dict(profile)
    noise_scale, factor, _ = _GENERATOR_SETTINGS[profile.mi_concentration]
    shares = np.zeros(0)
    for attempt in range(_MAX_ATTEMPTS):
        rng = derive_rng(profile.seed, attempt)
        dataset = _draw_synthetic(profile, noise_scale, rng)
        shares = mi_shares(dataset, bins)
        ordered = np.sort(shares)[::-1]
        if profile.mi_concentration == "high":
            satisfied = ordered.size == 0 or ordered[:2].sum() >= 0.6 or ordered.sum() == 0
        else:
            satisfied = ordered.size > 0 and ordered.sum() > 0 and ordered[0] <= 0.25
        logger.debug(
            f"Synthetic attempt {attempt}: noise scale {noise_scale:.3g}, "
            f"top shares {np.round(ordered[:3], 3).tolist()}"
        )
        if satisfied:
            logger.info(
                f"Generated {profile.mi_concentration}-concentration dataset with "
                f"{dataset.features.shape[1]} features after {attempt + 1} attempt(s)"
            )
            return dataset
        noise_scale *= factor
    raise InfeasibleProfileError(
        f"Profile {profile.to_dict()} did not reach the {profile.mi_concentration} "
        f"MI-concentration regime after {_MAX_ATTEMPTS} attempts "
        f"(last top shares {np.round(np.sort(shares)[::-1][:3], 3).tolist()})"
    )
