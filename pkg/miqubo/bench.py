import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.preprocessing import StandardScaler
from statsmodels.stats.weightstats import DescrStatsW

from miqubo.data import DiscretizedTable, EncodedDataset
from miqubo.exceptions import ConfigError, SolverError, SvrConvergenceError
from miqubo.infotheory import CmiTensor, MiReport
from miqubo.solve import SelectionResult, select_features
from miqubo.svr import SvrConfig, SvrModel, predict, r2_score, train_with
from miqubo.utils import derive_rng

logger = logging.getLogger(__name__)

METHODS = ("MI", "CMI")


@dataclass(frozen=True)
class SplitConfig:
    count: int = 15
    test_ratio: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.count) < 1:
            raise ConfigError(f"Split count must be at least 1, got {self.count}")
        if not 0 < self.test_ratio < 1:
            raise ConfigError(f"test_ratio must lie in (0, 1), got {self.test_ratio}")

    def to_dict(self) -> dict:
        return {"count": int(self.count), "test_ratio": self.test_ratio, "seed": int(self.seed)}


def split_indices(n_samples: int, split: SplitConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Seeded train/test partitions; depend only on the split settings and n."""
    n_test = int(round(split.test_ratio * n_samples))
    n_test = min(max(n_test, 2), n_samples - 2)
    if n_test < 2:
        raise ConfigError(f"{n_samples} samples cannot be split into train and test sets")
    partitions = []
    for index in range(int(split.count)):
        order = derive_rng(split.seed, index).permutation(n_samples)
        partitions.append((np.sort(order[n_test:]), np.sort(order[:n_test])))
    return partitions


@dataclass(frozen=True, eq=False)
class SelectionMatrix:
    """Selected feature indices per k for one method."""

    method: str
    rows: Dict[int, Tuple[int, ...]]
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        rows = {}
        for k, indices in sorted(self.rows.items()):
            indices = tuple(sorted(int(i) for i in indices))
            if len(set(indices)) != int(k):
                raise ConfigError(f"{self.method} row k={k} holds {len(set(indices))} indices")
            rows[int(k)] = indices
        object.__setattr__(self, "rows", rows)

    @property
    def k_values(self) -> List[int]:
        return list(self.rows)

    def names(self, k: int) -> List[str]:
        if not self.feature_names:
            return [str(i) for i in self.rows[k]]
        return [self.feature_names[i] for i in self.rows[k]]

    def is_nested(self) -> bool:
        ks = self.k_values
        return all(set(self.rows[a]) <= set(self.rows[b]) for a, b in zip(ks, ks[1:]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "method": self.method,
                "k": k,
                "indices": " ".join(str(i) for i in self.rows[k]),
                "features": " ".join(self.names(k)),
            }
            for k in self.k_values
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rows": {str(k): list(v) for k, v in self.rows.items()},
            "feature_names": list(self.feature_names),
        }


def mi_selection(report: MiReport, k: int) -> Tuple[int, ...]:
    """Top-k features by MI, lowest index first on ties."""
    if not 1 <= int(k) <= report.mi.size:
        raise ConfigError(f"k must lie in [1, {report.mi.size}], got {k}")
    return tuple(sorted(int(i) for i in report.ranking()[: int(k)]))


def mi_selection_matrix(report: MiReport, k_values: Sequence[int]) -> SelectionMatrix:
    return SelectionMatrix(
        "MI", {int(k): mi_selection(report, k) for k in k_values}, tuple(report.feature_names)
    )


def cmi_selection_matrix(
    c: CmiTensor,
    k_values: Sequence[int],
    backend: str = "exhaustive",
    config=None,
) -> Tuple[SelectionMatrix, Dict[int, SelectionResult], Dict[int, str]]:
    """MIQUBO selections per k.

    A k whose solve fails is reported in the third element and left out of
    the matrix; the remaining k values still run.
    """
    results: Dict[int, SelectionResult] = {}
    failures: Dict[int, str] = {}
    for k in k_values:
        try:
            results[int(k)] = select_features(c, int(k), backend, config)
        except SolverError as error:
            logger.warning(f"k={k}: {error}")
            failures[int(k)] = str(error)
    rows = {k: result.selected for k, result in results.items()}
    return SelectionMatrix("CMI", rows, tuple(c.feature_names)), results, failures


def selection_divergence(mi_rows: SelectionMatrix, cmi_rows: SelectionMatrix) -> Dict[int, int]:
    """Symmetric-difference size between the two selections for every k."""
    if mi_rows.k_values != cmi_rows.k_values:
        raise ConfigError(
            f"k ranges differ: {mi_rows.k_values} and {cmi_rows.k_values}"
        )
    return {k: len(set(mi_rows.rows[k]) ^ set(cmi_rows.rows[k])) for k in mi_rows.k_values}


def prefilter_by_mi(report: MiReport, m: int) -> Tuple[int, ...]:
    """Indices of the ``m`` most informative features, in column order."""
    m = min(int(m), report.mi.size)
    if m < 1:
        raise ConfigError(f"Prefilter size must be at least 1, got {m}")
    return tuple(sorted(int(i) for i in report.ranking()[:m]))


def restrict_table(t: DiscretizedTable, indices: Sequence[int]) -> DiscretizedTable:
    indices = [int(i) for i in indices]
    return DiscretizedTable(
        codes=t.codes[:, indices],
        bin_counts=tuple(t.bin_counts[i] for i in indices),
        target_codes=t.target_codes,
        target_bin_count=t.target_bin_count,
        feature_names=tuple(t.feature_names[i] for i in indices),
    )


def evaluate_split(
    e: EncodedDataset,
    indices: Sequence[int],
    train: np.ndarray,
    test: np.ndarray,
    svr: SvrConfig,
) -> Optional[float]:
    """Test-split R2 for one feature subset, or None if training diverged.

    Scaling statistics come from the training rows only.
    """
    X = e.select(indices).matrix
    x_scaler = StandardScaler().fit(X[train])
    z_scaler = StandardScaler().fit(e.target[train, None])
    z_train = z_scaler.transform(e.target[train, None]).ravel()
    z_test = z_scaler.transform(e.target[test, None]).ravel()
    try:
        model = train_with(x_scaler.transform(X[train]), z_train, svr)
    except SvrConvergenceError as error:
        logger.warning(f"Split skipped for features {tuple(indices)}: {error}")
        return None
    return r2_score(z_test, predict(model, x_scaler.transform(X[test])))


@dataclass(frozen=True, eq=False)
class R2Sweep:
    """Per-split R2 for every (method, k); None marks a skipped split."""

    split: SplitConfig
    scores: Dict[Tuple[str, int], List[Optional[float]]]
    svr: SvrConfig = field(default_factory=SvrConfig)

    def values(self, method: str, k: int) -> np.ndarray:
        return np.array([v for v in self.scores[(method, k)] if v is not None], dtype=float)

    def mean(self, method: str, k: int) -> float:
        values = self.values(method, k)
        return float(values.mean()) if values.size else float("nan")

    def std(self, method: str, k: int) -> float:
        values = self.values(method, k)
        return float(values.std(ddof=1)) if values.size > 1 else 0.0

    def sem(self, method: str, k: int) -> float:
        values = self.values(method, k)
        return self.std(method, k) / np.sqrt(values.size) if values.size else float("nan")

    def skipped(self, method: str, k: int) -> List[int]:
        return [i for i, v in enumerate(self.scores[(method, k)]) if v is None]

    @property
    def methods(self) -> List[str]:
        return sorted({method for method, _ in self.scores}, key=_method_order)

    @property
    def k_values(self) -> List[int]:
        return sorted({k for _, k in self.scores})

    def to_frame(self) -> pd.DataFrame:
        records = []
        for (method, k), values in sorted(self.scores.items(), key=lambda kv: (_method_order(kv[0][0]), kv[0][1])):
            for index, value in enumerate(values):
                records.append(
                    {
                        "method": method,
                        "k": k,
                        "split": index,
                        "r2": np.nan if value is None else value,
                        "skipped": value is None,
                    }
                )
        return pd.DataFrame.from_records(records, columns=["method", "k", "split", "r2", "skipped"])

    def summary(self) -> pd.DataFrame:
        """One row per k comparing the methods on the paired splits."""
        records = []
        for k in self.k_values:
            record = {"k": k}
            for method in self.methods:
                if (method, k) not in self.scores:
                    continue
                tag = method.lower()
                record[f"mean_{tag}"] = self.mean(method, k)
                record[f"std_{tag}"] = self.std(method, k)
                record[f"sem_{tag}"] = self.sem(method, k)
                record[f"skipped_{tag}"] = len(self.skipped(method, k))
            if ("MI", k) in self.scores and ("CMI", k) in self.scores:
                record.update(self._gap(k))
            records.append(record)
        return pd.DataFrame.from_records(records)

    def _gap(self, k: int) -> dict:
        gap = self.mean("CMI", k) - self.mean("MI", k)
        pooled = float(np.sqrt((self.std("MI", k) ** 2 + self.std("CMI", k) ** 2) / 2.0))
        paired = [
            (a, b)
            for a, b in zip(self.scores[("MI", k)], self.scores[("CMI", k)])
            if a is not None and b is not None
        ]
        diff = np.array([b - a for a, b in paired], dtype=float)
        p_value = float("nan")
        if diff.size > 1 and diff.std() > 0:
            _, p_value, _ = DescrStatsW(diff).ttest_mean()
        return {
            "gap": gap,
            "pooled_std": pooled,
            "gap_flag": bool(gap > max(self.sem("MI", k), self.sem("CMI", k))),
            "within_pooled_std": bool(abs(gap) <= pooled),
            "p_value": float(p_value),
        }

    def to_dict(self) -> dict:
        return {
            "split": self.split.to_dict(),
            "svr": self.svr.to_dict(),
            "scores": [
                {
                    "method": method,
                    "k": k,
                    "r2": values,
                    "mean": self.mean(method, k),
                    "std": self.std(method, k),
                    "skipped": self.skipped(method, k),
                }
                for (method, k), values in sorted(
                    self.scores.items(), key=lambda kv: (_method_order(kv[0][0]), kv[0][1])
                )
            ],
            "summary": self.summary().to_dict(orient="records"),
        }


def _method_order(method: str):
    return (METHODS.index(method) if method in METHODS else len(METHODS), method)


def r2_sweep(
    e: EncodedDataset,
    selections: Sequence[SelectionMatrix],
    splits: Optional[SplitConfig] = None,
    svr: Optional[SvrConfig] = None,
    n_jobs: Optional[int] = 1,
) -> R2Sweep:
    """SVR test R2 for every selection row over the same random splits."""
    splits = splits or SplitConfig()
    svr = svr or SvrConfig()
    if not selections or not any(s.rows for s in selections):
        raise ConfigError("r2_sweep needs at least one non-empty selection")
    partitions = split_indices(e.n_samples, splits)
    # rows shared between methods (or k values) are fitted once per split
    subsets = sorted({indices for selection in selections for indices in selection.rows.values()})
    fitted = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(evaluate_split)(e, indices, train, test, svr)
        for indices in subsets
        for train, test in partitions
    )
    per_subset = {
        indices: fitted[position * len(partitions): (position + 1) * len(partitions)]
        for position, indices in enumerate(subsets)
    }
    logger.info(
        f"{len(subsets)} distinct feature subsets over {len(partitions)} splits "
        f"({len(subsets) * len(partitions)} SVR fits)"
    )
    scores: Dict[Tuple[str, int], List[Optional[float]]] = {}
    for selection in selections:
        for k, indices in selection.rows.items():
            scores[(selection.method, k)] = list(per_subset[indices])
            logger.info(
                f"{selection.method} k={k}: mean R2 "
                f"{np.nanmean([np.nan if v is None else v for v in scores[(selection.method, k)]]):.4f}"
            )
    return R2Sweep(split=splits, scores=scores, svr=svr)


@dataclass(frozen=True, eq=False)
class SelectionModel:
    """SVR fitted on every row for one selection, with its scaling statistics.

    ``predict`` takes the full encoded matrix and returns the target in its
    original units.
    """

    method: str
    k: int
    indices: Tuple[int, ...]
    x_mean: np.ndarray
    x_scale: np.ndarray
    z_mean: float
    z_scale: float
    model: SvrModel

    def predict(self, matrix) -> np.ndarray:
        X = (np.asarray(matrix, dtype=float)[:, list(self.indices)] - self.x_mean) / self.x_scale
        return predict(self.model, X) * self.z_scale + self.z_mean

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "indices": list(self.indices),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "z_mean": self.z_mean,
            "z_scale": self.z_scale,
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping):
        return cls(
            method=str(payload["method"]),
            k=int(payload["k"]),
            indices=tuple(int(i) for i in payload["indices"]),
            x_mean=np.asarray(payload["x_mean"], dtype=float),
            x_scale=np.asarray(payload["x_scale"], dtype=float),
            z_mean=float(payload["z_mean"]),
            z_scale=float(payload["z_scale"]),
            model=SvrModel.from_dict(payload["model"]),
        )


def fit_selection_models(
    e: EncodedDataset,
    selections: Sequence[SelectionMatrix],
    svr: Optional[SvrConfig] = None,
) -> List[SelectionModel]:
    """One model per (method, k) trained on all rows; diverging fits are left out."""
    svr = svr or SvrConfig()
    z_scaler = StandardScaler().fit(e.target[:, None])
    z = z_scaler.transform(e.target[:, None]).ravel()
    models = []
    for selection in selections:
        for k, indices in selection.rows.items():
            X = e.select(indices).matrix
            x_scaler = StandardScaler().fit(X)
            try:
                model = train_with(x_scaler.transform(X), z, svr)
            except SvrConvergenceError as error:
                logger.warning(f"No model for {selection.method} k={k}: {error}")
                continue
            models.append(
                SelectionModel(
                    method=selection.method,
                    k=int(k),
                    indices=tuple(indices),
                    x_mean=x_scaler.mean_,
                    x_scale=x_scaler.scale_,
                    z_mean=float(z_scaler.mean_[0]),
                    z_scale=float(z_scaler.scale_[0]),
                    model=model,
                )
            )
    return models


def sweep_from_frame(table: pd.DataFrame, split: SplitConfig, svr: Optional[SvrConfig] = None) -> R2Sweep:
    """Rebuild an :class:`R2Sweep` from its per-split CSV rows."""
    scores: Dict[Tuple[str, int], List[Optional[float]]] = {}
    for (method, k), group in table.sort_values("split").groupby(["method", "k"], sort=False):
        scores[(str(method), int(k))] = [
            None if skipped else float(value)
            for value, skipped in zip(group["r2"], group["skipped"].astype(bool))
        ]
    return R2Sweep(split=split, scores=scores, svr=svr or SvrConfig())


def selections_from_mapping(payload: Mapping, feature_names: Sequence[str] = ()) -> List[SelectionMatrix]:
    """SelectionMatrix objects from ``{"MI": {k: [...]}, "CMI": {...}}``."""
    return [
        SelectionMatrix(method, {int(k): v for k, v in rows.items()}, tuple(feature_names))
        for method, rows in payload.items()
    ]
